"""Per-task computational cost of a parallel loop.

A loop of ``N`` independent tasks is described by the FLOP count of each
task. Costs come from an exact trace file, from a piecewise-linear
approximation of the empirical CDF of such a trace, from a constant, or from
one of the synthetic generators below (a z**4 + c Mandelbrot image and a
low-variability normal workload).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numba
import numpy as np

from . import rng as rngmod

N_SEGMENTS = 100

# Seahorse-valley crop, configurable everywhere it is used.
DEFAULT_WINDOW = (-0.7905, -0.7305, 0.0992, 0.1592)
DEFAULT_MAX_ITER = 4096
DEFAULT_FLOP_PER_ITER = 8.0


class TraceError(ValueError):
    """A trace file or trace array violates the trace format."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class NegativeCostError(TraceError):
    pass


@dataclass(frozen=True, eq=False)
class TaskTrace:
    """FLOP count per task; index is the task id."""

    flops: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.flops, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise TraceError("trace must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(arr)):
            raise TraceError("trace contains non-finite values")
        if np.any(arr < 0):
            raise NegativeCostError(f"negative cost at task {int(np.argmax(arr < 0))}")
        if not arr.sum() > 0:
            raise TraceError("total FLOP must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "flops", arr)

    def __len__(self) -> int:
        return self.flops.size

    def __eq__(self, other):
        if not isinstance(other, TaskTrace):
            return NotImplemented
        return np.array_equal(self.flops, other.flops)

    @property
    def n(self) -> int:
        return self.flops.size

    @property
    def total(self) -> float:
        return float(self.flops.sum())


def load_trace(path: Union[str, os.PathLike]) -> TaskTrace:
    """Read a ``task_id,flops`` trace file.

    Records may appear in any order; they are re-sorted by id. Blank lines
    are skipped. Line numbers in errors are 1-based.
    """
    ids: list[int] = []
    values: list[float] = []
    lines: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if lineno == 1 and line.replace(" ", "") == "task_id,flops":
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise TraceError(f"expected '<task_id>,<flops>', got {line!r}", lineno)
            try:
                tid = int(parts[0])
                val = float(parts[1])
            except ValueError:
                raise TraceError(f"unparsable record {line!r}", lineno) from None
            if not math.isfinite(val):
                raise TraceError(f"non-finite FLOP value {parts[1]!r}", lineno)
            if val < 0:
                raise NegativeCostError(f"negative FLOP value {val!r}", lineno)
            ids.append(tid)
            values.append(val)
            lines.append(lineno)
    if not ids:
        raise TraceError(f"empty trace file {os.fspath(path)!r}")

    n = len(ids)
    flops = np.empty(n, dtype=np.float64)
    seen = np.zeros(n, dtype=bool)
    for tid, val, lineno in zip(ids, values, lines):
        if not 0 <= tid < n:
            raise TraceError(f"task id {tid} outside 0..{n - 1}", lineno)
        if seen[tid]:
            raise TraceError(f"duplicate task id {tid}", lineno)
        seen[tid] = True
        flops[tid] = val
    return TaskTrace(flops)


def save_trace(trace: TaskTrace, path: Union[str, os.PathLike], header: bool = False) -> None:
    ids = np.arange(trace.n)
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write("task_id,flops\n")
        for tid, val in zip(ids.tolist(), trace.flops.tolist()):
            fh.write(f"{tid},{val!r}\n")


@dataclass(frozen=True, eq=False)
class EcdfPiecewise:
    """Piecewise-linear inverse of an empirical CDF.

    ``quantiles[k]`` and ``values[k]`` are the breakpoints; there are
    ``n_segments + 1`` of each.
    """

    quantiles: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quantiles, dtype=np.float64)
        x = np.asarray(self.values, dtype=np.float64)
        if q.ndim != 1 or q.shape != x.shape or q.size < 2:
            raise ValueError("quantiles and values must be equal-length 1-d arrays")
        if q[0] != 0.0 or q[-1] != 1.0:
            raise ValueError("quantiles must span [0, 1]")
        if np.any(np.diff(q) < 0) or np.any(np.diff(x) < 0):
            raise ValueError("breakpoints must be non-decreasing")
        if not np.all(np.isfinite(x)):
            raise ValueError("breakpoint values must be finite")
        q.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "quantiles", q)
        object.__setattr__(self, "values", x)

    @property
    def n_segments(self) -> int:
        return self.values.size - 1

    @property
    def mean(self) -> float:
        """Mean of the sampling distribution (uniform segment, uniform offset)."""
        x = self.values
        return float(np.mean((x[:-1] + x[1:]) / 2.0))

    @property
    def is_degenerate(self) -> bool:
        return bool(self.values[0] == self.values[-1])

    def to_dict(self) -> dict:
        return {
            "n_segments": self.n_segments,
            "quantiles": self.quantiles.tolist(),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EcdfPiecewise":
        model = cls(data["quantiles"], data["values"])
        if int(data.get("n_segments", model.n_segments)) != model.n_segments:
            raise ValueError("n_segments does not match the breakpoint count")
        return model


def save_ecdf(model: EcdfPiecewise, path: Union[str, os.PathLike]) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_ecdf(path: Union[str, os.PathLike]) -> EcdfPiecewise:
    return EcdfPiecewise.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_ecdf(trace: TaskTrace | Sequence[float], n_segments: int = N_SEGMENTS) -> EcdfPiecewise:
    """Fit equi-quantile breakpoints to the task costs.

    Breakpoint ``k`` is the ``k / n_segments`` quantile obtained by linear
    interpolation between order statistics, so the first and last
    breakpoints are the data minimum and maximum.
    """
    data = trace.flops if isinstance(trace, TaskTrace) else np.asarray(trace, dtype=np.float64)
    if data.size == 0:
        raise ValueError("cannot fit an empty trace")
    q = np.linspace(0.0, 1.0, n_segments + 1)
    x = np.quantile(data, q, method="linear")
    # guard against last-ulp non-monotonicity from interpolation
    x = np.maximum.accumulate(x)
    return EcdfPiecewise(q, x)


def sample_ecdf(model: EcdfPiecewise, rng: np.random.Generator, size: int | None = None):
    """Draw costs: pick a segment uniformly, then a uniform point on it."""
    x = model.values
    k = rng.integers(0, model.n_segments, size=size)
    u = rng.random(size=size)
    out = x[k] + u * (x[k + 1] - x[k])
    if size is None:
        return float(out)
    return out


def ks_distance(samples: Sequence[float], reference: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a = np.sort(np.asarray(samples, dtype=np.float64))
    b = np.sort(np.asarray(reference, dtype=np.float64))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


# --------------------------------------------------------------------------
# generators


@numba.njit(cache=True)
def _escape_counts(width, height, re_min, re_max, im_min, im_max, max_iter):
    out = np.empty(width * height, dtype=np.int64)
    dre = (re_max - re_min) / width
    dim = (im_max - im_min) / height
    for row in range(height):
        ci = im_min + row * dim
        for col in range(width):
            cr = re_min + col * dre
            zr = 0.0
            zi = 0.0
            # exact recurrence of z means a periodic orbit that never escapes
            sr = 0.0
            si = 0.0
            window = 8
            n = 0
            while n < max_iter:
                # z**4 = (z**2)**2
                ar = zr * zr - zi * zi
                ai = 2.0 * zr * zi
                zr = ar * ar - ai * ai + cr
                zi = 2.0 * ar * ai + ci
                n += 1
                if zr * zr + zi * zi > 4.0:
                    break
                if zr == sr and zi == si:
                    n = max_iter
                    break
                if n == window:
                    sr = zr
                    si = zi
                    window *= 2
            out[row * width + col] = n
    return out


def mandelbrot_iterations(width: int, height: int, window=DEFAULT_WINDOW, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Escape-time iteration count of ``z <- z**4 + c`` per pixel, row-major.

    Pixel ``(row, col)`` maps to ``c = re_min + col*dre + 1j*(im_min + row*dim)``
    with ``dre = (re_max - re_min)/width`` and ``dim = (im_max - im_min)/height``.
    """
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    re_min, re_max, im_min, im_max = (float(v) for v in window)
    if not (re_max > re_min and im_max > im_min):
        raise ValueError(f"degenerate window {tuple(window)!r}")
    return _escape_counts(int(width), int(height), re_min, re_max, im_min, im_max, int(max_iter))


def generate_mandelbrot(
    width: int = 512,
    height: int = 512,
    window=DEFAULT_WINDOW,
    max_iter: int = DEFAULT_MAX_ITER,
    flop_per_iter: float = DEFAULT_FLOP_PER_ITER,
) -> TaskTrace:
    """One task per pixel; cost is ``flop_per_iter`` times the escape count."""
    if not flop_per_iter > 0:
        raise ValueError("flop_per_iter must be positive")
    counts = mandelbrot_iterations(width, height, window, max_iter)
    return TaskTrace(counts.astype(np.float64) * float(flop_per_iter))


def generate_low_variability(n: int, mean_flops: float, cov: float, seed: int) -> TaskTrace:
    """I.i.d. normal task costs truncated at zero (negative draws are redrawn)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not mean_flops > 0:
        raise ValueError("mean_flops must be positive")
    if not 0 <= cov < 1:
        raise ValueError("cov must lie in [0, 1)")
    if cov == 0:
        return TaskTrace(np.full(n, float(mean_flops)))
    gen = rngmod.stream(seed, rngmod.WORKLOAD)
    out = gen.normal(mean_flops, cov * mean_flops, size=n)
    bad = out < 0
    while bad.any():
        out[bad] = gen.normal(mean_flops, cov * mean_flops, size=int(bad.sum()))
        bad = out < 0
    return TaskTrace(out)


# --------------------------------------------------------------------------
# cost models


@dataclass(frozen=True)
class ExactTrace:
    trace: TaskTrace

    @property
    def n(self) -> int:
        return self.trace.n


@dataclass(frozen=True)
class EcdfSampled:
    model: EcdfPiecewise
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")


@dataclass(frozen=True)
class Constant:
    cost: float
    n: int

    def __post_init__(self):
        if self.n < 1 or not self.cost > 0:
            raise ValueError("constant model needs n >= 1 and cost > 0")


@dataclass(frozen=True)
class Generator:
    """Costs produced by a named generator.

    ``kind`` is ``"mandelbrot"`` (seed-independent) or ``"low_variability"``
    (drawn from the realization seed). ``params`` are keyword arguments of the
    corresponding ``generate_*`` function, without ``seed``.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("mandelbrot", "low_variability"):
            raise ValueError(f"unknown generator {self.kind!r}")

    @property
    def n(self) -> int:
        p = self.params
        if self.kind == "mandelbrot":
            return int(p.get("width", 512)) * int(p.get("height", 512))
        return int(p["n"])


TaskCostModel = Union[ExactTrace, EcdfSampled, Constant, Generator]


def realize_costs(model: TaskCostModel, seed: int) -> TaskTrace:
    """Materialize one realization of ``model``."""
    if isinstance(model, ExactTrace):
        return model.trace
    if isinstance(model, Constant):
        return TaskTrace(np.full(model.n, float(model.cost)))
    if isinstance(model, EcdfSampled):
        gen = rngmod.stream(seed, rngmod.WORKLOAD)
        return TaskTrace(sample_ecdf(model.model, gen, size=model.n))
    if isinstance(model, Generator):
        if model.kind == "mandelbrot":
            return generate_mandelbrot(**model.params)
        return generate_low_variability(seed=seed, **model.params)
    raise TypeError(f"not a task cost model: {model!r}")
