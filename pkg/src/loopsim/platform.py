"""Simulated machine description, core-speed calibration and system perturbation."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence, Union

import numpy as np


@dataclass(frozen=True)
class Link:
    bandwidth_bps: float
    latency_s: float

    def __post_init__(self):
        if not self.bandwidth_bps > 0:
            raise ValueError("link bandwidth must be positive")
        if not self.latency_s >= 0:
            raise ValueError("link latency must be non-negative")

    def transfer_time(self, nbytes: float) -> float:
        return self.latency_s + 8.0 * nbytes / self.bandwidth_bps


@dataclass(frozen=True)
class PerturbationModel:
    """Per-chunk slowdown ``PL ~ U[pl_min, pl_max]``; speed becomes ``speed * (1 - PL)``."""

    pl_min: float = 0.0
    pl_max: float = 0.0
    enabled: bool = False

    def __post_init__(self):
        if not 0 <= self.pl_min <= self.pl_max < 1:
            raise ValueError(f"need 0 <= pl_min <= pl_max < 1, got [{self.pl_min}, {self.pl_max}]")

    @property
    def mean_level(self) -> float:
        return (self.pl_min + self.pl_max) / 2.0


@dataclass(frozen=True)
class ExecutionBacklog:
    """Measured execution times of repeated runs of one application."""

    times: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if len(times) < 2:
            raise ValueError("a backlog needs at least two execution times")
        if any(not t > 0 for t in times):
            raise ValueError("execution times must be positive")
        object.__setattr__(self, "times", times)

    @property
    def mean(self) -> float:
        return float(np.mean(self.times))


def estimate_perturbation(backlog: Union[ExecutionBacklog, Sequence[float]]) -> PerturbationModel:
    """Bounds of the perturbation level from a backlog of execution times.

    ``pl_max`` and ``pl_min`` are the largest and smallest relative deviation
    ``|E_i - mean(E)| / mean(E)``. The returned model is enabled.

    Deviations are evaluated in exact rational arithmetic and rounded once,
    so a small ``pl_min`` does not suffer cancellation error.
    """
    if not isinstance(backlog, ExecutionBacklog):
        backlog = ExecutionBacklog(tuple(backlog))
    e = [Fraction(float(t)) for t in backlog.times]
    total = sum(e)
    n = len(e)
    # |E_i - mean| / mean == |n E_i - sum| / sum
    dev = [abs(n * x - total) / total for x in e]
    lo, hi = min(dev), max(dev)
    if hi >= 1:
        raise ValueError(
            f"relative deviation {float(hi):.4g} >= 1: a run took at least twice the mean time, "
            "which no slowdown factor (1 - PL) > 0 can represent"
        )
    return PerturbationModel(pl_min=float(lo), pl_max=float(hi), enabled=True)


def calibrate_core_speed(total_flops: float, sequential_seconds: float) -> float:
    """Core speed (FLOP/s) from a sequential run of the whole loop."""
    if not total_flops > 0 or not sequential_seconds > 0:
        raise ValueError("total_flops and sequential_seconds must be positive")
    return total_flops / sequential_seconds


@dataclass(frozen=True)
class Platform:
    """Homogeneous nodes of ``cores_per_node`` PEs; one PE per core.

    ``core_speed`` is either one FLOP/s value for every core or a sequence with
    one entry per PE. PE ``p`` lives on node ``p // cores_per_node``; PE 0 is
    the master.
    """

    nodes: int = 16
    cores_per_node: int = 16
    core_speed: Union[float, tuple] = 1.0e9
    intra_node: Link = field(default_factory=lambda: Link(500e6, 15e-6))
    inter_node: Link = field(default_factory=lambda: Link(100e9, 100e-9))
    master_overhead: float = 0.0
    perturbation: PerturbationModel = field(default_factory=PerturbationModel)

    def __post_init__(self):
        if self.nodes < 1 or self.cores_per_node < 1:
            raise ValueError("nodes and cores_per_node must be >= 1")
        if isinstance(self.core_speed, (list, tuple, np.ndarray)):
            speeds = tuple(float(s) for s in self.core_speed)
            if len(speeds) != self.n_pes:
                raise ValueError(f"need {self.n_pes} per-core speeds, got {len(speeds)}")
            object.__setattr__(self, "core_speed", speeds)
        else:
            speeds = (float(self.core_speed),)
            object.__setattr__(self, "core_speed", float(self.core_speed))
        if any(not s > 0 for s in speeds):
            raise ValueError("core speeds must be positive")
        if not self.master_overhead >= 0:
            raise ValueError("master_overhead must be non-negative")

    @property
    def n_pes(self) -> int:
        return self.nodes * self.cores_per_node

    def speed(self, pe: int) -> float:
        self._check(pe)
        if isinstance(self.core_speed, tuple):
            return self.core_speed[pe]
        return self.core_speed

    def node_of(self, pe: int) -> int:
        self._check(pe)
        return pe // self.cores_per_node

    def _check(self, pe: int) -> None:
        if not 0 <= pe < self.n_pes:
            raise ValueError(f"PE {pe} out of range 0..{self.n_pes - 1}")

    def with_pes(self, p: int) -> "Platform":
        """The first ``p // cores_per_node`` nodes of this platform."""
        if p < 1 or p % self.cores_per_node or p > self.n_pes:
            raise ValueError(
                f"P={p} is not a multiple of {self.cores_per_node} cores per node up to {self.n_pes}"
            )
        speed = self.core_speed
        if isinstance(speed, tuple):
            speed = speed[:p]
        return replace(self, nodes=p // self.cores_per_node, core_speed=speed)

    def to_dict(self) -> dict:
        speed = self.core_speed
        return {
            "nodes": self.nodes,
            "cores_per_node": self.cores_per_node,
            "core_speed_flops": list(speed) if isinstance(speed, tuple) else speed,
            "intra_node": asdict(self.intra_node),
            "inter_node": asdict(self.inter_node),
            "master_overhead_s": self.master_overhead,
            "perturbation": asdict(self.perturbation),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Platform":
        speed = data["core_speed_flops"]
        if isinstance(speed, list):
            speed = tuple(speed)
        pert = data.get("perturbation", {})
        return cls(
            nodes=int(data["nodes"]),
            cores_per_node=int(data["cores_per_node"]),
            core_speed=speed,
            intra_node=Link(**data["intra_node"]),
            inter_node=Link(**data["inter_node"]),
            master_overhead=float(data.get("master_overhead_s", 0.0)),
            perturbation=PerturbationModel(
                pl_min=float(pert.get("pl_min", 0.0)),
                pl_max=float(pert.get("pl_max", 0.0)),
                enabled=bool(pert.get("enabled", False)),
            ),
        )


def message_time(platform: Platform, from_pe: int, to_pe: int, nbytes: float) -> float:
    """Affine transfer time, no contention; intra-node link when PEs share a node."""
    a, b = platform.node_of(from_pe), platform.node_of(to_pe)
    if from_pe == to_pe:
        return 0.0
    link = platform.intra_node if a == b else platform.inter_node
    return link.transfer_time(nbytes)


def sample_effective_speed(platform: Platform, model: PerturbationModel, pe: int, rng: np.random.Generator) -> float:
    """Speed of ``pe`` for one chunk; draws one perturbation level when enabled."""
    speed = platform.speed(pe)
    if not model.enabled:
        return speed
    level = rng.uniform(model.pl_min, model.pl_max)
    return speed * (1.0 - level)


PRESETS = {
    "miniHPC-PSIA": Platform(core_speed=0.95e9),
    "miniHPC-Mandelbrot": Platform(core_speed=1.85e9),
}


def ideal_platform(p: int, speed: float = 1.0e9, cores_per_node: int | None = None) -> Platform:
    """Zero-latency, infinite-bandwidth platform with ``p`` PEs."""
    cpn = p if cores_per_node is None else cores_per_node
    free = Link(float("inf"), 0.0)
    return Platform(nodes=p // cpn, cores_per_node=cpn, core_speed=speed, intra_node=free, inter_node=free)


def load_platform(source: Union[str, os.PathLike]) -> Platform:
    """A preset name or a path to a platform JSON file."""
    if isinstance(source, str) and source in PRESETS:
        return PRESETS[source]
    return Platform.from_dict(json.loads(Path(source).read_text(encoding="utf-8")))


def save_platform(platform: Platform, path: Union[str, os.PathLike]) -> None:
    Path(path).write_text(json.dumps(platform.to_dict(), indent=2) + "\n", encoding="utf-8")
