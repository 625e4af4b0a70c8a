import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopsim.engine import RunResult
from loopsim.metrics import (
    Summary,
    aggregate,
    aggregate_csv,
    aggregate_rows,
    cov,
    max_mean,
    metrics_csv,
    metrics_rows,
    parallel_cost,
    read_metrics_csv,
    run_metrics,
    summary_table,
)

times = st.lists(st.floats(0.1, 1e4), min_size=2, max_size=64)


def result(ft, technique="FAC", p=None):
    p = len(ft) if p is None else p
    return RunResult(technique, p, 0, 10, list(ft), max(ft), [max(ft)], [], 10)


def test_cov_examples():
    assert cov([10, 10, 10, 10]) == 0.0
    assert cov([1, 3]) == 0.5
    assert cov([1, 1, 1, 2]) == pytest.approx(np.sqrt(0.1875) / 1.25, rel=1e-12)
    assert cov([1, 1, 1, 2]) == pytest.approx(0.3464, abs=1e-4)


def test_max_mean_examples():
    assert max_mean([10, 10, 10]) == 1.0
    assert max_mean([1, 1, 1, 5]) == 2.5
    assert max_mean([1, 1, 1, 2]) == 1.6


def test_zero_mean():
    with pytest.raises(ValueError):
        cov([0.0, 0.0])
    with pytest.raises(ValueError):
        max_mean([0.0, 0.0])


def test_parallel_cost():
    assert parallel_cost(16, 2.0) == 32.0
    assert parallel_cost(32, 1.0) == parallel_cost(16, 2.0)
    with pytest.raises(ValueError):
        parallel_cost(0, 1.0)


@settings(max_examples=100, deadline=None)
@given(times, st.floats(1e-3, 1e3))
def test_scale_invariance(ft, c):
    scaled = [c * t for t in ft]
    assert cov(scaled) == pytest.approx(cov(ft), rel=1e-9, abs=1e-12)
    assert max_mean(scaled) == pytest.approx(max_mean(ft), rel=1e-9)
    a, b = run_metrics(result(ft)), run_metrics(result(scaled))
    assert b.parallel_cost == pytest.approx(c * a.parallel_cost, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(times)
def test_metric_invariants(ft):
    m = run_metrics(result(ft))
    assert m.cov >= 0
    assert m.max_mean >= 1 - 1e-12
    assert m.parallel_cost == len(ft) * m.t_par
    equal = len(set(ft)) == 1
    if equal:
        assert m.cov == 0 and m.max_mean == 1


def test_all_equal_iff():
    assert cov([2.0] * 5) == 0 and max_mean([2.0] * 5) == 1
    assert cov([2.0, 2.0, 2.1]) > 0 and max_mean([2.0, 2.0, 2.1]) > 1


def test_summary_examples():
    s = Summary.of([1, 2, 3, 4, 5])
    assert (s.median, s.q1, s.q3) == (3, 2, 4)
    assert (s.min, s.max, s.mean) == (1, 5, 3)
    assert s.stddev == pytest.approx(np.sqrt(2))
    assert s.whisker == pytest.approx(1.5 * np.sqrt(2))
    one = Summary.of([7.0])
    assert one.median == one.q1 == one.q3 == one.min == one.max == one.mean == 7.0
    assert Summary.of([4.2] * 20).stddev == 0.0


def test_aggregate():
    rs = [result([1.0, 2.0 + i]) for i in range(5)]
    a = aggregate(rs)
    assert a.n_reps == 5 and a.technique == "FAC" and a.p == 2
    assert a.t_par.median == 4.0
    single = aggregate([result([1.0, 3.0])])
    assert single.cov.min == single.cov.max == single.cov.median == 0.5
    with pytest.raises(ValueError):
        aggregate([result([1.0, 2.0]), result([1.0, 2.0], technique="GSS")])
    with pytest.raises(ValueError):
        aggregate([])


@settings(max_examples=50, deadline=None)
@given(st.lists(times.filter(lambda v: len(v) == 4), min_size=1, max_size=10), st.randoms())
def test_aggregate_permutation_invariant(fts, rnd):
    rs = [result(ft) for ft in fts]
    shuffled = rs[:]
    rnd.shuffle(shuffled)
    assert aggregate(rs) == aggregate(shuffled)
    a = aggregate(rs)
    for s in (a.t_par, a.cov, a.max_mean, a.parallel_cost):
        assert s.q1 <= s.median <= s.q3
        assert s.min <= s.mean <= s.max


def test_metrics_csv_round_trip():
    rs = [result([1.0, 3.0 + i / 7]) for i in range(3)] + [result([2.0, 2.0], technique="STATIC")]
    rows = metrics_rows(rs)
    text = metrics_csv(rows)
    assert text.splitlines()[0] == "technique,P,rep,t_par,cov,max_mean,parallel_cost"
    assert read_metrics_csv(text) == rows
    aggs = aggregate_rows(rows)
    # canonical technique order
    assert [a.technique for a in aggs] == ["STATIC", "FAC"]
    assert aggs[1] == aggregate(rs[:3])
    header = aggregate_csv(aggs).splitlines()[0].split(",")
    assert header[:3] == ["technique", "P", "n_reps"]
    assert "t_par_median" in header and "cov_q1" in header and "max_mean_whisker" in header
    table = summary_table(aggs)
    assert len(table.splitlines()) == 3
