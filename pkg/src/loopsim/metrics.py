"""Performance and load-imbalance metrics over PE finishing times."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .dls import TECHNIQUES

METRIC_NAMES = ("t_par", "cov", "max_mean", "parallel_cost")
METRICS_CSV_FIELDS = ("technique", "P", "rep") + METRIC_NAMES


def _times(finishing_times: Sequence[float]) -> np.ndarray:
    t = np.asarray(finishing_times, dtype=np.float64)
    if t.size == 0:
        raise ValueError("no finishing times")
    if not t.mean() > 0:
        raise ValueError("mean finishing time must be positive")
    return t


def cov(finishing_times: Sequence[float]) -> float:
    """Coefficient of variation: population standard deviation over mean."""
    t = _times(finishing_times)
    if t.min() == t.max():
        return 0.0  # exact, without summation round-off
    return float(t.std() / t.mean())


def max_mean(finishing_times: Sequence[float]) -> float:
    """Slowest PE's finishing time over the mean; 1 means no laggard."""
    t = _times(finishing_times)
    if t.min() == t.max():
        return 1.0
    return float(t.max() / t.mean())


def parallel_cost(p: int, t_par: float) -> float:
    if p < 1 or t_par < 0:
        raise ValueError("need P >= 1 and t_par >= 0")
    return p * t_par


@dataclass(frozen=True)
class RunMetrics:
    t_par: float
    cov: float
    max_mean: float
    parallel_cost: float


def run_metrics(result) -> RunMetrics:
    ft = result.finishing_times
    return RunMetrics(
        t_par=float(result.t_par_loop),
        cov=cov(ft) if len(ft) > 1 else 0.0,
        max_mean=max_mean(ft),
        parallel_cost=parallel_cost(result.p, result.t_par_loop),
    )


@dataclass(frozen=True)
class Summary:
    median: float
    q1: float
    q3: float
    min: float
    max: float
    mean: float
    stddev: float
    whisker: float  # 1.5 x stddev, the box-plot whisker half-length

    @classmethod
    def of(cls, values: Iterable[float]) -> "Summary":
        v = np.sort(np.asarray(list(values), dtype=np.float64))
        if v.size == 0:
            raise ValueError("cannot summarize an empty sample")
        q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
        if v[0] == v[-1]:
            sd, mean = 0.0, float(v[0])
        else:
            sd = float(v.std())
            # clamp so that round-off cannot push the mean outside [min, max]
            mean = float(min(max(v.mean(), v[0]), v[-1]))
        return cls(float(med), float(q1), float(q3), float(v[0]), float(v[-1]), mean, sd, 1.5 * sd)


@dataclass(frozen=True)
class AggregateMetrics:
    technique: str
    p: int
    n_reps: int
    t_par: Summary
    cov: Summary
    max_mean: Summary
    parallel_cost: Summary


def aggregate(results: Sequence) -> AggregateMetrics:
    """Box-plot statistics over replications of one (technique, P) cell."""
    if not results:
        raise ValueError("aggregate needs at least one result")
    keys = {(r.technique, r.p) for r in results}
    if len(keys) != 1:
        raise ValueError(f"results mix configurations: {sorted(keys)}")
    technique, p = keys.pop()
    rows = [run_metrics(r) for r in results]
    return AggregateMetrics(
        technique, p, len(rows),
        **{name: Summary.of(getattr(m, name) for m in rows) for name in METRIC_NAMES},
    )


def metrics_rows(results: Sequence, reps: Sequence[int] | None = None) -> list[dict]:
    reps = range(len(results)) if reps is None else reps
    rows = []
    for rep, r in zip(reps, results):
        m = run_metrics(r)
        rows.append({"technique": r.technique, "P": r.p, "rep": rep,
                     **{name: getattr(m, name) for name in METRIC_NAMES}})
    return rows


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def metrics_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_CSV_FIELDS)
    for row in rows:
        writer.writerow([_fmt(row[k]) for k in METRICS_CSV_FIELDS])
    return buf.getvalue()


def read_metrics_csv(text: str) -> list[dict]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {"technique": rec["technique"], "P": int(rec["P"]), "rep": int(rec["rep"])}
        row.update({name: float(rec[name]) for name in METRIC_NAMES})
        rows.append(row)
    return rows


def aggregate_rows(rows: Sequence[dict]) -> list[AggregateMetrics]:
    """Aggregate metrics-CSV rows per (technique, P), sorted by that key."""
    cells: dict[tuple, list[dict]] = {}
    for row in rows:
        cells.setdefault((row["technique"], row["P"]), []).append(row)
    out = []
    for (technique, p), cell in sorted(cells.items(), key=lambda kv: _order(*kv[0])):
        out.append(AggregateMetrics(
            technique, p, len(cell),
            **{name: Summary.of(r[name] for r in cell) for name in METRIC_NAMES},
        ))
    return out


def _order(technique: str, p: int) -> tuple:
    rank = TECHNIQUES.index(technique) if technique in TECHNIQUES else len(TECHNIQUES)
    return rank, technique, p


def aggregate_csv(aggs: Sequence[AggregateMetrics]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    stat_fields = [f.name for f in fields(Summary)]
    writer.writerow(["technique", "P", "n_reps"] + [f"{m}_{s}" for m in METRIC_NAMES for s in stat_fields])
    for a in aggs:
        row = [a.technique, a.p, a.n_reps]
        for m in METRIC_NAMES:
            summary = getattr(a, m)
            row.extend(repr(getattr(summary, s)) for s in stat_fields)
        writer.writerow(row)
    return buf.getvalue()


def summary_table(aggs: Sequence[AggregateMetrics]) -> str:
    lines = [f"{'technique':<10}{'P':>6}{'median t_par [s]':>20}{'median cov':>14}{'median max/mean':>18}"]
    for a in aggs:
        lines.append(f"{a.technique:<10}{a.p:>6}{a.t_par.median:>20.6g}{a.cov.median:>14.4g}{a.max_mean.median:>18.4f}")
    return "\n".join(lines)
