"""Dynamic loop self-scheduling (DLS) chunk calculators.

The scheduler is a request-driven state machine: a PE asks for work with
:meth:`ChunkScheduler.next_chunk` and reports the outcome with
:meth:`ChunkScheduler.record_completion`. It knows nothing about time or
messages, so the same object drives simulated runs and can be called
directly as a library.

Techniques
----------
STATIC  one block of ``ceil(N/P)`` tasks per PE, PE ``p`` gets block ``p``.
GSS     ``ceil(R/P)`` per request, ``R`` the unscheduled task count.
FAC     batches of ``P`` equal chunks of ``ceil(ceil(R/2)/P)``.
mFSC    fixed chunk ``ceil(N/C)``, ``C`` the number of chunks FAC issues.
AWF     weighted FAC batches; weights change only at time-step ends.
AWF-B   weighted FAC batches; weights relearned at every batch boundary.
AWF-C   ``floor(w_p*ceil(R/2)/P)`` per request; weights relearned after
        every chunk.
AWF-D   AWF-B, timing includes scheduling overhead.
AWF-E   AWF-C, timing includes scheduling overhead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np


class Technique(str, Enum):
    STATIC = "STATIC"
    MFSC = "mFSC"
    GSS = "GSS"
    FAC = "FAC"
    AWF = "AWF"
    AWF_B = "AWF-B"
    AWF_C = "AWF-C"
    AWF_D = "AWF-D"
    AWF_E = "AWF-E"

    @classmethod
    def parse(cls, name: "str | Technique") -> "Technique":
        if isinstance(name, cls):
            return name
        key = str(name).strip()
        for tech in cls:
            if key == tech.value or key.upper().replace("_", "-") == tech.value.upper():
                return tech
        raise ValueError(f"unknown scheduling technique {name!r}")

    @property
    def adaptive(self) -> bool:
        return self.value.startswith("AWF")

    def __str__(self) -> str:
        return self.value


TECHNIQUES = tuple(t.value for t in Technique)

_WITH_OVERHEAD = (Technique.AWF_D, Technique.AWF_E)


class SchedulingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LoopDescriptor:
    n: int
    p: int
    technique: Technique
    min_chunk: int = 1

    def __post_init__(self):
        object.__setattr__(self, "technique", Technique.parse(self.technique))
        if self.n < 1:
            raise ValueError(f"loop needs at least one task, got N={self.n}")
        if self.p < 1:
            raise ValueError(f"loop needs at least one PE, got P={self.p}")
        if self.min_chunk < 1:
            raise ValueError("min_chunk must be >= 1")


class ChunkAssignment(NamedTuple):
    pe: int
    start: int
    size: int

    @property
    def stop(self) -> int:
        return self.start + self.size


# skips the Python-level NamedTuple constructor
_new_chunk = tuple.__new__


@dataclass(frozen=True)
class StepRecord:
    step: int
    times: np.ndarray
    iterations: np.ndarray


def fac_chunk_sizes(n: int, p: int, min_chunk: int = 1) -> list[int]:
    """Chunk sizes the practical FAC rule issues for ``n`` tasks on ``p`` PEs."""
    sizes = []
    remaining = n
    while remaining > 0:
        chunk = max(min_chunk, -(-(-(-remaining // 2)) // p))
        for _ in range(p):
            if remaining == 0:
                break
            size = min(remaining, chunk)
            sizes.append(size)
            remaining -= size
    return sizes


def fac_chunk_count(n: int, p: int, min_chunk: int = 1) -> int:
    """``len(fac_chunk_sizes(n, p, min_chunk))`` in one step per batch."""
    count, remaining = 0, n
    while remaining > 0:
        chunk = max(min_chunk, -(-(-(-remaining // 2)) // p))
        if chunk * p >= remaining:
            return count + -(-remaining // chunk)
        count += p
        remaining -= chunk * p
    return count


class ChunkScheduler:
    """Mutable scheduling state for one loop.

    Not thread-safe; the caller serializes access (the simulated master is a
    single logical process).
    """

    def __init__(self, desc: LoopDescriptor):
        self.desc = desc
        self.technique = desc.technique
        p = desc.p
        # hot-path copies of the descriptor
        self._n, self._p, self._min = desc.n, p, desc.min_chunk
        self._static = self.technique is Technique.STATIC
        self._per_chunk = self.technique in (Technique.AWF_C, Technique.AWF_E)
        self._chunk_size = {
            Technique.GSS: self._gss_size,
            Technique.MFSC: self._mfsc_size,
            Technique.FAC: self._fac_size,
            Technique.AWF_C: self._per_chunk_size,
            Technique.AWF_E: self._per_chunk_size,
        }.get(self.technique, self._weighted_batch_size)
        self.weights = np.ones(p)
        self.executed = np.zeros(p, dtype=np.int64)
        self.compute_time = np.zeros(p)
        self.sched_time = np.zeros(p)
        self.step_history: list[StepRecord] = []
        self._step_mark_n = np.zeros(p, dtype=np.int64)
        self._step_mark_t = np.zeros(p)
        if self.technique is Technique.MFSC:
            self.fixed_chunk = -(-desc.n // fac_chunk_count(desc.n, p, desc.min_chunk))
        else:
            self.fixed_chunk = None
        self.start_loop()

    def start_loop(self) -> None:
        """Reset loop progress; learned weights and per-PE history survive."""
        self.remaining = self.desc.n
        self.batch_remaining = 0
        self.batch_chunk = 0
        self._batch_size = 0
        self._batch_left = 0
        # chunk starts are unique, so they key the chunks still in flight
        self._outstanding: dict[int, ChunkAssignment] = {}
        self._static_served: set[int] = set()
        self.chunks_issued = 0

    @property
    def next_index(self) -> int:
        return self._n - self.remaining

    @property
    def done(self) -> bool:
        return self.remaining == 0

    def _check_pe(self, pe: int) -> None:
        if not 0 <= pe < self._p:
            raise ValueError(f"unknown PE {pe} (P={self._p})")

    # ------------------------------------------------------------------

    def next_chunk(self, pe: int) -> ChunkAssignment | None:
        """Serve a work request from ``pe``; ``None`` means no more work."""
        if not 0 <= pe < self._p:
            self._check_pe(pe)
        if self._static:
            return self._next_static(pe)
        r = self.remaining
        if r == 0:
            return None
        size = self._chunk_size(pe)
        if size < self._min:
            size = self._min
        if size > r:
            size = r
        # inlined _issue: this is the hot path of every simulation
        start = self._n - r
        self.remaining = r - size
        self.chunks_issued += 1
        chunk = self._outstanding[start] = _new_chunk(ChunkAssignment, (pe, start, size))
        return chunk

    def _issue(self, pe: int, start: int, size: int) -> ChunkAssignment:
        self.remaining -= size
        self.chunks_issued += 1
        chunk = self._outstanding[start] = _new_chunk(ChunkAssignment, (pe, start, size))
        return chunk

    def _next_static(self, pe: int) -> ChunkAssignment | None:
        # one block per PE; min_chunk does not apply to a block partition
        if pe in self._static_served:
            return None
        self._static_served.add(pe)
        block = -(-self._n // self._p)
        start = pe * block
        if start >= self._n:
            return None
        return self._issue(pe, start, min(block, self._n - start))

    def _gss_size(self, pe: int) -> int:
        return -(-self.remaining // self._p)

    def _mfsc_size(self, pe: int) -> int:
        return self.fixed_chunk

    def _fac_size(self, pe: int) -> int:
        if self.batch_remaining == 0:
            self.batch_chunk = -(-(-(-self.remaining // 2)) // self._p)
            self.batch_remaining = self._p
        self.batch_remaining -= 1
        return self.batch_chunk

    def _per_chunk_size(self, pe: int) -> int:
        return math.floor(self._w[pe] * -(-self.remaining // 2) / self._p)

    def _weighted_batch_size(self, pe: int) -> int:
        p = self._p
        if self.batch_remaining == 0:
            if self.technique is not Technique.AWF:
                self.recompute_weights()
            self._batch_size = -(-self.remaining // 2)
            self._batch_left = self._batch_size
            self.batch_remaining = p
            self.batch_chunk = self._batch_size // p
        if self.batch_remaining == 1:
            # last chunk of the batch absorbs the rounding shortfall
            k = self._batch_left
        else:
            k = math.floor(self._w[pe] * self._batch_size / p)
            if k > self._batch_left:
                k = self._batch_left
        if k < self._min:
            k = self._min
        if k > self.remaining:
            k = self.remaining
        self.batch_remaining -= 1
        self._batch_left -= k
        if self._batch_left <= 0:
            self.batch_remaining = 0
        return k

    # ------------------------------------------------------------------

    def record_completion(self, pe: int, chunk: ChunkAssignment, compute_seconds: float, sched_seconds: float) -> None:
        """Account a finished chunk; AWF-C/E relearn weights immediately."""
        self._check_pe(pe)
        if chunk.pe != pe or self._outstanding.get(chunk.start) != chunk:
            raise SchedulingError(f"chunk ({chunk.start}, {chunk.size}) is not outstanding on PE {pe}")
        if compute_seconds < 0 or sched_seconds < 0:
            raise ValueError("times must be non-negative")
        del self._outstanding[chunk.start]
        self.executed[pe] += chunk.size
        self.compute_time[pe] += compute_seconds
        self.sched_time[pe] += sched_seconds
        if self._per_chunk:
            self.recompute_weights()

    def _timing(self) -> np.ndarray:
        if self.technique in _WITH_OVERHEAD:
            return self.compute_time + self.sched_time
        return self.compute_time

    def recompute_weights(self) -> np.ndarray:
        """Relative weights ``w_p = P * rate_p / sum(rate)``.

        ``rate_p`` is executed iterations per second of the technique's timing
        base. PEs without history take the mean rate of those with history; if
        no PE has history the weights are left alone.
        """
        rates = _fill_missing(self.executed, self._timing())
        if rates is not None:
            self.weights = _normalize(rates)
        return self.weights.copy()

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @weights.setter
    def weights(self, value) -> None:
        self._weights = np.asarray(value, dtype=np.float64)
        # plain floats for the per-request chunk formula
        self._w = self._weights.tolist()

    def record_step_end(self) -> np.ndarray:
        """Close a time step (AWF only) and relearn weights.

        Each PE's rate is averaged over past steps with weight equal to the
        step index, so recent steps count more.
        """
        if self.technique is not Technique.AWF:
            raise SchedulingError(f"record_step_end is only defined for AWF, not {self.technique}")
        dn = self.executed - self._step_mark_n
        dt = self.compute_time - self._step_mark_t
        self._step_mark_n = self.executed.copy()
        self._step_mark_t = self.compute_time.copy()
        self.step_history.append(StepRecord(len(self.step_history) + 1, dt, dn))

        p = self.desc.p
        num = np.zeros(p)
        den = np.zeros(p)
        for rec in self.step_history:
            ok = (rec.iterations > 0) & (rec.times > 0)
            num[ok] += rec.step * rec.iterations[ok] / rec.times[ok]
            den[ok] += rec.step
        have = den > 0
        if have.any():
            wap = np.where(have, num / np.where(have, den, 1.0), 0.0)
            wap[~have] = wap[have].mean()
            self.weights = _normalize(wap)
        return self.weights.copy()


def _fill_missing(n: np.ndarray, t: np.ndarray) -> np.ndarray | None:
    have = (n > 0) & (t > 0)
    if not have.any():
        return None
    rates = np.zeros(n.size)
    rates[have] = n[have] / t[have]
    rates[~have] = rates[have].mean()
    return rates


def _normalize(rates: np.ndarray) -> np.ndarray:
    return rates.size * rates / rates.sum()
