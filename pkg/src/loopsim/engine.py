"""Discrete-event simulation of master-worker self-scheduling.

PE 0 is the master. It serves work requests one at a time, FIFO by
``(arrival time, PE id)``, and also executes chunks itself whenever its
request queue is empty. A worker's request carries the timing of its
previous chunk, so the scheduler learns about a completion when the next
request from that PE is served.

Message sizes are fixed: 8 bytes for a request, 16 for a grant
(start index and size).
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np

from . import rng as rngmod
from .dls import ChunkAssignment, ChunkScheduler, LoopDescriptor, Technique
from .platform import Platform, message_time, sample_effective_speed
from .workload import TaskCostModel, TaskTrace, realize_costs

REQUEST_BYTES = 8
GRANT_BYTES = 16

# event kinds
_WAKE = 0
_REQUEST = 1
_GRANT = 2
_COMPLETE = 3

CHUNK_CSV_FIELDS = ("pe", "start", "size", "t_request", "t_grant", "t_compute_start", "t_compute_end")


@dataclass(frozen=True)
class TimeStepPlan:
    steps: int = 1

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


@dataclass(frozen=True)
class ChunkRecord:
    pe: int
    start: int
    size: int
    t_request: float
    t_grant: float
    t_compute_start: float
    t_compute_end: float
    effective_speed: float
    step: int = 0


@dataclass
class RunResult:
    technique: str
    p: int
    seed: int
    n: int
    finishing_times: list
    t_par_loop: float
    step_times: list
    chunk_log: list = field(repr=False)
    total_tasks_executed: int

    @property
    def chunk_sizes(self) -> list[int]:
        return [c.size for c in self.chunk_log]

    def to_dict(self, include_chunks: bool = False) -> dict:
        out = {
            "technique": self.technique,
            "P": self.p,
            "N": self.n,
            "seed": self.seed,
            "t_par_loop": self.t_par_loop,
            "step_times": list(self.step_times),
            "finishing_times": list(self.finishing_times),
            "total_tasks_executed": self.total_tasks_executed,
            "n_chunks": len(self.chunk_log),
        }
        if include_chunks:
            out["chunk_log"] = [asdict(c) for c in self.chunk_log]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunResult":
        return cls(
            technique=data["technique"],
            p=int(data["P"]),
            seed=int(data["seed"]),
            n=int(data["N"]),
            finishing_times=list(data["finishing_times"]),
            t_par_loop=float(data["t_par_loop"]),
            step_times=list(data["step_times"]),
            chunk_log=[ChunkRecord(**c) for c in data.get("chunk_log", [])],
            total_tasks_executed=int(data["total_tasks_executed"]),
        )

    def to_json(self, include_chunks: bool = False) -> str:
        return json.dumps(self.to_dict(include_chunks), indent=1) + "\n"

    def chunk_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CHUNK_CSV_FIELDS)
        for c in self.chunk_log:
            writer.writerow([c.pe, c.start, c.size, repr(c.t_request), repr(c.t_grant),
                             repr(c.t_compute_start), repr(c.t_compute_end)])
        return buf.getvalue()


class _Master:
    def __init__(self):
        self.queue: list = []
        self.serving_until = -np.inf
        self.computing = False
        self.current: ChunkRecord | None = None
        self.current_order = -1
        self.version = 0
        self.done = False


class _LoopRun:
    """One sweep over the loop, from a common start time ``t0``."""

    def __init__(self, sim: "_Simulation", scheduler: ChunkScheduler, t0: float, step: int):
        self.sim = sim
        self.sched = scheduler
        self.t0 = t0
        self.step = step
        self.events: list = []
        self.seq = 0
        self.master = _Master()
        self.pending: dict[int, ChunkRecord] = {}
        self.last_end: dict[int, float] = {}
        self.finish: dict[int, float] = {}
        self.log: dict[int, ChunkRecord] = {}
        self.grants = 0

    def push(self, time: float, kind: int, pe: int, payload=None) -> None:
        heapq.heappush(self.events, (time, self.seq, kind, pe, payload))
        self.seq += 1

    def run(self) -> None:
        sim = self.sim
        for pe in range(1, sim.p):
            self.push(self.t0 + message_time(sim.platform, pe, 0, REQUEST_BYTES), _REQUEST, pe, self.t0)
        self.push(self.t0, _WAKE, 0)
        events = self.events
        while events:
            now = events[0][0]
            while events and events[0][0] == now:
                t, _, kind, pe, payload = heapq.heappop(events)
                self.dispatch(t, kind, pe, payload)
            self.master_act(now)
        if len(self.finish) != sim.p:
            raise RuntimeError("simulation ended before every PE received Done")

    def dispatch(self, t: float, kind: int, pe: int, payload) -> None:
        if kind == _REQUEST:
            heapq.heappush(self.master.queue, (t, pe, payload))
        elif kind == _GRANT:
            chunk, t_request, t_grant, speed, order = payload
            if chunk is None:
                self.finish[pe] = self.last_end.get(pe, t)
                return
            self.start_chunk(pe, chunk, t_request, t_grant, t, speed, order)
        elif kind == _COMPLETE:
            version, rec = payload
            if pe == 0:
                if version != self.master.version:
                    return
                self.master.computing = False
                self.master.current = None
                self.pending[0] = rec
                self.last_end[0] = t
                return
            self.pending[pe] = rec
            self.last_end[pe] = t
            self.push(t + message_time(self.sim.platform, pe, 0, REQUEST_BYTES), _REQUEST, pe, t)

    def start_chunk(self, pe, chunk, t_request, t_grant, t_start, speed, order) -> ChunkRecord:
        flops = float(self.sim.prefix[chunk.stop] - self.sim.prefix[chunk.start])
        rec = ChunkRecord(pe, chunk.start, chunk.size, t_request, t_grant, t_start,
                          t_start + flops / speed, speed, self.step)
        self.log[order] = rec
        self.push(rec.t_compute_end, _COMPLETE, pe, (self.master.version if pe == 0 else 0, rec))
        return rec

    def _record_previous(self, pe: int) -> None:
        rec = self.pending.pop(pe, None)
        if rec is None:
            return
        chunk = ChunkAssignment(pe, rec.start, rec.size)
        self.sched.record_completion(pe, chunk, rec.t_compute_end - rec.t_compute_start,
                                     rec.t_compute_start - rec.t_request)

    def _grant(self, pe: int) -> tuple:
        chunk = self.sched.next_chunk(pe)
        speed = None
        if chunk is not None:
            speed = sample_effective_speed(self.sim.platform, self.sim.perturbation, pe, self.sim.pert_rng)
        order = self.grants
        self.grants += 1
        return chunk, speed, order

    def master_act(self, t: float) -> None:
        m = self.master
        overhead = self.sim.platform.master_overhead
        while True:
            if m.serving_until > t:
                return
            if m.computing and not self.sim.master_preempts:
                return
            if m.queue:
                _, pe, t_request = heapq.heappop(m.queue)
                self._record_previous(pe)
                chunk, speed, order = self._grant(pe)
                t_grant = t + overhead
                if overhead > 0:
                    m.serving_until = t_grant
                    self.push(t_grant, _WAKE, 0)
                    if m.computing:
                        self._delay_master(overhead)
                arrival = t_grant + message_time(self.sim.platform, 0, pe, GRANT_BYTES)
                self.push(arrival, _GRANT, pe, (chunk, t_request, t_grant, speed, order))
                continue
            if m.computing or m.done:
                return
            self._record_previous(0)
            chunk, speed, order = self._grant(0)
            if chunk is None:
                m.done = True
                self.finish[0] = self.last_end.get(0, t)
                return
            t_grant = t + overhead
            if overhead > 0:
                m.serving_until = t_grant
                self.push(t_grant, _WAKE, 0)
            m.computing = True
            m.current = self.start_chunk(0, chunk, t, t_grant, t_grant, speed, order)
            m.current_order = order

    def _delay_master(self, dt: float) -> None:
        # the master's own chunk is suspended while it serves a request
        m = self.master
        old = m.current
        m.version += 1
        rec = ChunkRecord(old.pe, old.start, old.size, old.t_request, old.t_grant,
                          old.t_compute_start, old.t_compute_end + dt, old.effective_speed, old.step)
        self.log[m.current_order] = rec
        m.current = rec
        self.push(rec.t_compute_end, _COMPLETE, 0, (m.version, rec))


class _Simulation:
    def __init__(self, desc: LoopDescriptor, trace: TaskTrace, platform: Platform, seed: int,
                 master_preempts: bool):
        self.desc = desc
        self.p = desc.p
        self.platform = platform
        self.perturbation = platform.perturbation
        self.prefix = np.concatenate([[0.0], np.cumsum(trace.flops)])
        self.pert_rng = rngmod.stream(seed, rngmod.PERTURBATION)
        self.master_preempts = master_preempts


def simulate(
    desc: LoopDescriptor,
    costs: Union[TaskCostModel, TaskTrace],
    platform: Platform,
    steps: Union[int, TimeStepPlan] = 1,
    seed: int = 0,
    *,
    master_preempts: bool = True,
    make_scheduler: Callable[[LoopDescriptor], ChunkScheduler] = ChunkScheduler,
) -> RunResult:
    """Simulate one run of the loop and return per-PE finishing times and the chunk log.

    With ``master_preempts`` the master suspends its own chunk to serve an
    arriving request; otherwise requests wait until that chunk completes.
    With several time steps all PEs restart together when the previous step
    ends; only plain AWF keeps its learned weights across steps.
    """
    plan = steps if isinstance(steps, TimeStepPlan) else TimeStepPlan(int(steps))
    if desc.p != platform.n_pes:
        raise ValueError(f"descriptor has P={desc.p} but the platform has {platform.n_pes} PEs")
    trace = costs if isinstance(costs, TaskTrace) else realize_costs(costs, seed)
    if trace.n != desc.n:
        raise ValueError(f"cost model yields {trace.n} tasks, descriptor expects N={desc.n}")

    sim = _Simulation(desc, trace, platform, seed, master_preempts)
    scheduler = make_scheduler(desc)
    t0 = 0.0
    step_times = []
    chunk_log: list[ChunkRecord] = []
    finish: dict[int, float] = {}
    for step in range(plan.steps):
        if step > 0:
            if desc.technique is Technique.AWF:
                scheduler.record_step_end()
                scheduler.start_loop()
            else:
                scheduler = make_scheduler(desc)
        loop = _LoopRun(sim, scheduler, t0, step)
        loop.run()
        finish = loop.finish
        end = max(finish.values())
        step_times.append(end - t0)
        chunk_log.extend(loop.log[order] for order in sorted(loop.log))
        t0 = end

    finishing = [finish[pe] for pe in range(desc.p)]
    return RunResult(
        technique=desc.technique.value,
        p=desc.p,
        seed=int(seed),
        n=desc.n,
        finishing_times=finishing,
        t_par_loop=float(max(finishing)),
        step_times=step_times,
        chunk_log=chunk_log,
        total_tasks_executed=sum(c.size for c in chunk_log),
    )


def replicate(
    desc: LoopDescriptor,
    costs: Union[TaskCostModel, TaskTrace],
    platform: Platform,
    steps: Union[int, TimeStepPlan] = 1,
    n_reps: int = 20,
    master_seed: int = 0,
    **kwargs,
) -> list[RunResult]:
    """``n_reps`` independent runs; run ``r`` uses ``replication_seed(master_seed, r)``."""
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    return [
        simulate(desc, costs, platform, steps, rngmod.replication_seed(master_seed, rep), **kwargs)
        for rep in range(n_reps)
    ]


def write_result(result: RunResult, path: Union[str, os.PathLike], include_chunks: bool = False) -> None:
    Path(path).write_text(result.to_json(include_chunks), encoding="utf-8")
