import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopsim import rng as rngmod
from loopsim.workload import (
    Constant,
    EcdfPiecewise,
    EcdfSampled,
    ExactTrace,
    Generator,
    NegativeCostError,
    TaskTrace,
    TraceError,
    fit_ecdf,
    generate_low_variability,
    generate_mandelbrot,
    ks_distance,
    load_ecdf,
    load_trace,
    mandelbrot_iterations,
    realize_costs,
    sample_ecdf,
    save_ecdf,
    save_trace,
)

import oracles


def write(tmp_path, text, name="t.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# --- trace files ----------------------------------------------------------


def test_load_simple(tmp_path):
    t = load_trace(write(tmp_path, "0,100\n1,200"))
    assert t.n == 2
    np.testing.assert_array_equal(t.flops, [100, 200])


def test_load_header_order_and_scientific(tmp_path):
    t = load_trace(write(tmp_path, "task_id,flops\n2,3e2\n0,1.5E+2\n\n1,200\n"))
    np.testing.assert_array_equal(t.flops, [150, 200, 300])


def test_negative_cost_reports_line(tmp_path):
    with pytest.raises(NegativeCostError, match="line 1"):
        load_trace(write(tmp_path, "1,-5"))


@pytest.mark.parametrize(
    "text,match",
    [
        ("", "empty"),
        ("0,1\n0,2\n", "line 2"),
        ("0,1\n2,2\n", "line 2: task id 2 outside"),
        ("0,abc\n", "line 1"),
        ("0;1\n", "line 1"),
        ("0,0\n1,0\n", "positive|total"),
    ],
)
def test_malformed(tmp_path, text, match):
    with pytest.raises(TraceError, match=match):
        load_trace(write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_trace(tmp_path / "nope.csv")


def test_trace_round_trip(tmp_path):
    t = TaskTrace(np.array([0.0, 1.0 / 3.0, 1e300, 7.5]))
    for header in (False, True):
        save_trace(t, tmp_path / "r.csv", header=header)
        assert load_trace(tmp_path / "r.csv") == t


def test_large_trace(tmp_path):
    t = generate_low_variability(400_000, 1e6, 0.1, seed=3)
    save_trace(t, tmp_path / "big.csv")
    back = load_trace(tmp_path / "big.csv")
    assert back.n == 400_000
    assert back == t


@pytest.mark.parametrize("bad", [[], [1.0, -1.0], [0.0, 0.0], [np.inf], [np.nan]])
def test_trace_invariants(bad):
    with pytest.raises(ValueError):
        TaskTrace(np.array(bad, dtype=float))


def test_trace_is_read_only():
    t = TaskTrace(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        t.flops[0] = 5.0


# --- eCDF -------------------------------------------------------------------


def test_fit_uniform_grid():
    m = fit_ecdf(TaskTrace(np.arange(101, dtype=float)))
    assert m.n_segments == 100
    np.testing.assert_allclose(m.values, np.arange(101), atol=1e-12)
    np.testing.assert_allclose(m.quantiles, np.arange(101) / 100, atol=1e-15)


def test_fit_constant_is_degenerate():
    m = fit_ecdf(TaskTrace(np.full(50, 7.0)))
    assert m.is_degenerate
    assert np.all(m.values == 7.0)


def test_fit_exponential_median():
    data = np.random.default_rng(1).exponential(1.0, size=100_000)
    m = fit_ecdf(data)
    assert abs(m.values[50] - math.log(2)) <= 0.02


def test_fit_endpoints_are_extremes():
    data = np.random.default_rng(2).gamma(2.0, size=999)
    m = fit_ecdf(data)
    assert m.values[0] == data.min()
    assert m.values[-1] == data.max()
    assert np.all(np.diff(m.values) >= 0)


def test_ecdf_validation():
    q = np.linspace(0, 1, 101)
    with pytest.raises(ValueError):
        EcdfPiecewise(q[:-1], np.arange(100.0))
    with pytest.raises(ValueError):
        EcdfPiecewise(q, np.arange(101.0)[::-1])
    with pytest.raises(ValueError):
        EcdfPiecewise(q + 0.01, np.arange(101.0))


def test_ecdf_file_round_trip(tmp_path):
    m = fit_ecdf(np.random.default_rng(0).random(1000))
    save_ecdf(m, tmp_path / "m.json")
    data = json.loads((tmp_path / "m.json").read_text())
    assert data["n_segments"] == 100
    assert len(data["quantiles"]) == len(data["values"]) == 101
    back = load_ecdf(tmp_path / "m.json")
    np.testing.assert_array_equal(back.values, m.values)
    np.testing.assert_array_equal(back.quantiles, m.quantiles)


def test_sample_degenerate():
    m = fit_ecdf(np.full(10, 7.0))
    assert sample_ecdf(m, np.random.default_rng(5)) == 7.0


def test_sample_mean_uniform_grid():
    m = fit_ecdf(np.arange(101, dtype=float))
    assert m.mean == pytest.approx(50.0)
    s = sample_ecdf(m, rngmod.stream(0, "test"), size=1_000_000)
    assert abs(s.mean() - 50.0) <= 0.5


def test_sample_determinism():
    m = fit_ecdf(np.random.default_rng(0).random(100))
    a = sample_ecdf(m, rngmod.stream(9, "x"), size=5)
    b = sample_ecdf(m, rngmod.stream(9, "x"), size=5)
    np.testing.assert_array_equal(a, b)


def test_sample_formula():
    # with a known stream, the sample is x_k + u (x_{k+1} - x_k)
    m = fit_ecdf(np.random.default_rng(3).random(500))
    g = np.random.default_rng(11)
    k = g.integers(0, 100)
    u = g.random()
    expected = m.values[k] + u * (m.values[k + 1] - m.values[k])
    assert sample_ecdf(m, np.random.default_rng(11)) == expected


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e9, allow_nan=False), min_size=1, max_size=200).filter(lambda v: sum(v) > 0),
       st.integers(0, 2**31))
def test_samples_within_range(values, seed):
    t = TaskTrace(np.array(values))
    s = sample_ecdf(fit_ecdf(t), np.random.default_rng(seed), size=500)
    assert s.min() >= t.flops.min()
    assert s.max() <= t.flops.max()


def test_ks_distance_oracle():
    assert ks_distance([1, 2, 3], [1, 2, 3]) == 0.0
    assert ks_distance([0, 0], [1, 1]) == 1.0
    # hand evaluated: F_a jumps at 1,2; F_b at 1.5 ; sup |diff| = 0.5
    assert ks_distance([1, 2], [1.5]) == 0.5


def test_ks_small_for_large_trace():
    data = np.random.default_rng(8).lognormal(size=20_000)
    s = sample_ecdf(fit_ecdf(data), np.random.default_rng(9), size=100_000)
    assert ks_distance(s, data) <= 0.02


# --- cost models ------------------------------------------------------------


def test_realize_constant():
    t = realize_costs(Constant(10.0, 4), seed=123)
    np.testing.assert_array_equal(t.flops, [10, 10, 10, 10])


def test_realize_exact_ignores_seed():
    t = TaskTrace(np.array([1.0, 2.0, 3.0]))
    assert realize_costs(ExactTrace(t), 1) == realize_costs(ExactTrace(t), 2) == t


def test_realize_ecdf_deterministic_in_seed():
    m = fit_ecdf(np.random.default_rng(0).random(300) + 1)
    a = realize_costs(EcdfSampled(m, 1000), 42)
    assert a.n == 1000
    assert a == realize_costs(EcdfSampled(m, 1000), 42)
    assert a != realize_costs(EcdfSampled(m, 1000), 43)


def test_realize_generators():
    g = Generator("low_variability", {"n": 100, "mean_flops": 5.0, "cov": 0.2})
    assert g.n == 100
    assert realize_costs(g, 1) == realize_costs(g, 1)
    assert realize_costs(g, 1) != realize_costs(g, 2)
    m = Generator("mandelbrot", {"width": 8, "height": 4})
    assert m.n == 32
    assert realize_costs(m, 1) == realize_costs(m, 2)
    with pytest.raises(ValueError):
        Generator("psia")


# --- generators -------------------------------------------------------------


def test_mandelbrot_size(mandelbrot_trace):
    assert mandelbrot_trace.n == 262144


def test_mandelbrot_origin_never_escapes():
    t = generate_mandelbrot(1, 1, window=(0.0, 1.0, 0.0, 1.0), max_iter=50, flop_per_iter=3.0)
    assert t.flops[0] == 3.0 * 50


def test_mandelbrot_c_two_escapes_at_two():
    t = generate_mandelbrot(1, 1, window=(2.0, 3.0, 0.0, 1.0), max_iter=50, flop_per_iter=3.0)
    assert t.flops[0] == 2 * 3.0


def test_mandelbrot_matches_scalar_reference():
    w, h, mi = 24, 16, 300
    window = (-1.6, 0.6, -1.1, 1.1)
    got = mandelbrot_iterations(w, h, window, mi)
    dre, dim = (window[1] - window[0]) / w, (window[3] - window[2]) / h
    mismatches = 0
    for row in range(h):
        for col in range(w):
            c = complex(window[0] + col * dre, window[2] + row * dim)
            if got[row * w + col] != oracles.escape_count(c, mi):
                mismatches += 1
    # the reference uses complex pow; rounding may flip a boundary pixel
    assert mismatches <= 2


def test_mandelbrot_is_pure():
    a = generate_mandelbrot(32, 32, max_iter=256)
    b = generate_mandelbrot(32, 32, max_iter=256)
    assert a == b


@pytest.mark.parametrize("window", [(0, 0, 0, 1), (0, 1, 1, 1), (1, 0, 0, 1)])
def test_mandelbrot_degenerate_window(window):
    with pytest.raises(ValueError):
        generate_mandelbrot(4, 4, window=window)


def test_mandelbrot_bad_args():
    with pytest.raises(ValueError):
        generate_mandelbrot(0, 4)
    with pytest.raises(ValueError):
        generate_mandelbrot(4, 4, max_iter=0)
    with pytest.raises(ValueError):
        generate_mandelbrot(4, 4, flop_per_iter=0)


def test_low_variability_cov_zero():
    t = generate_low_variability(10, 5.0, 0.0, seed=1)
    assert np.all(t.flops == 5.0)


def test_low_variability_statistics():
    t = generate_low_variability(400_000, 1e6, 0.1, seed=7)
    cov = t.flops.std() / t.flops.mean()
    assert 0.095 <= cov <= 0.105
    assert t == generate_low_variability(400_000, 1e6, 0.1, seed=7)


def test_low_variability_no_negatives():
    t = generate_low_variability(10_000, 1.0, 0.9, seed=0)
    assert t.flops.min() >= 0
