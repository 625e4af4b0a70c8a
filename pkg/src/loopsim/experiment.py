"""Declarative experiment grids: technique x P x replication."""

from __future__ import annotations

import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

from . import metrics
from .dls import TECHNIQUES, LoopDescriptor, Technique
from .engine import replicate
from .platform import Platform, load_platform
from .workload import (
    Constant,
    EcdfSampled,
    ExactTrace,
    TaskCostModel,
    fit_ecdf,
    generate_low_variability,
    generate_mandelbrot,
    load_ecdf,
    load_trace,
)

log = logging.getLogger(__name__)

COST_MODES = ("flop_file", "flop_dist", "constant")
WORKLOAD_KINDS = ("trace", "ecdf", "mandelbrot", "low_variability", "constant")
DEFAULT_PE_COUNTS = [16, 32, 64, 128, 256]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    workload: dict = field(default_factory=lambda: {"kind": "mandelbrot", "params": {}})
    cost_mode: str = "flop_file"
    techniques: list = field(default_factory=lambda: list(TECHNIQUES))
    pe_counts: list = field(default_factory=lambda: list(DEFAULT_PE_COUNTS))
    replications: int = 20
    platform: str = "miniHPC-Mandelbrot"
    steps: int = 1
    seed: int = 0
    out: str = "results"
    master_preempts: bool = True
    min_chunk: int = 1
    chunk_log: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, assignments: Sequence[str]) -> "ExperimentConfig":
        """Apply ``key=value`` overrides; dotted keys reach into nested dicts.

        Values are parsed as JSON when possible and kept as strings otherwise.
        """
        data = self.to_dict()
        for item in assignments:
            key, sep, raw = item.partition("=")
            if not sep or not key:
                raise ConfigError(f"override {item!r} is not key=value")
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            target = data
            *parents, leaf = key.split(".")
            for part in parents:
                target = target.setdefault(part, {})
                if not isinstance(target, dict):
                    raise ConfigError(f"cannot set {key!r}: {part!r} is not a mapping")
            target[leaf] = value
        return ExperimentConfig.from_dict(data)

    def validate(self, platform: Platform | None = None) -> None:
        if not self.techniques:
            raise ConfigError("techniques must not be empty")
        if not self.pe_counts:
            raise ConfigError("pe_counts must not be empty")
        for t in self.techniques:
            try:
                Technique.parse(t)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if int(self.replications) < 1:
            raise ConfigError("replications must be >= 1")
        if int(self.steps) < 1:
            raise ConfigError("steps must be >= 1")
        if self.cost_mode not in COST_MODES:
            raise ConfigError(f"cost_mode must be one of {COST_MODES}, got {self.cost_mode!r}")
        kind = self.workload.get("kind")
        if kind not in WORKLOAD_KINDS:
            raise ConfigError(f"workload.kind must be one of {WORKLOAD_KINDS}, got {kind!r}")
        if platform is None:
            platform = self.load_platform()
        for p in self.pe_counts:
            p = int(p)
            if p < 1 or p % platform.cores_per_node or p > platform.n_pes:
                raise ConfigError(
                    f"P={p} is not realizable: need a multiple of {platform.cores_per_node} "
                    f"up to {platform.n_pes}"
                )

    def load_platform(self) -> Platform:
        try:
            return load_platform(self.platform)
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"cannot load platform {self.platform!r}: {exc}") from None


def grid_config(**overrides) -> ExperimentConfig:
    """The full grid: all 9 techniques, P = 16..256, 20 reps."""
    cfg = ExperimentConfig()
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


def build_cost_model(cfg: ExperimentConfig) -> TaskCostModel:
    """Turn the workload section and cost mode into a task cost model."""
    w = cfg.workload
    kind = w.get("kind")
    params = dict(w.get("params", {}))
    path = w.get("path")

    if cfg.cost_mode == "constant" or kind == "constant":
        if cfg.cost_mode != "constant" or kind != "constant":
            raise ConfigError("a constant workload needs cost_mode 'constant' and vice versa")
        return Constant(float(params["cost"]), int(params["n"]))

    if kind == "ecdf":
        if cfg.cost_mode != "flop_dist":
            raise ConfigError("an eCDF workload only supports cost_mode 'flop_dist'")
        if "n" not in params:
            raise ConfigError("an eCDF workload needs workload.params.n")
        return EcdfSampled(load_ecdf(path), int(params["n"]))

    if kind == "trace":
        if not path:
            raise ConfigError("a trace workload needs workload.path")
        trace = load_trace(path)
    elif kind == "mandelbrot":
        if "window" in params:
            params["window"] = tuple(params["window"])
        trace = generate_mandelbrot(**params)
    else:
        params.setdefault("seed", cfg.seed)
        trace = generate_low_variability(**params)

    if cfg.cost_mode == "flop_file":
        return ExactTrace(trace)
    return EcdfSampled(fit_ecdf(trace), trace.n)


@dataclass
class CellOutcome:
    technique: str
    p: int
    results: list
    error: str | None = None


def run_cell(cfg: ExperimentConfig, model: TaskCostModel, platform: Platform, technique: str, p: int) -> CellOutcome:
    try:
        desc = LoopDescriptor(model.n, int(p), Technique.parse(technique), int(cfg.min_chunk))
        results = replicate(
            desc, model, platform.with_pes(int(p)), int(cfg.steps),
            n_reps=int(cfg.replications), master_seed=int(cfg.seed),
            master_preempts=bool(cfg.master_preempts),
        )
        return CellOutcome(desc.technique.value, int(p), results)
    except Exception as exc:  # a failed cell must not abort the sweep
        log.exception("cell %s P=%s failed", technique, p)
        return CellOutcome(str(technique), int(p), [], f"{type(exc).__name__}: {exc}")


def _run_cell_star(args):
    return run_cell(*args)


def _cell_key(technique: str, p: int) -> tuple:
    try:
        order = TECHNIQUES.index(Technique.parse(technique).value)
    except ValueError:
        order = len(TECHNIQUES)
    return order, int(p)


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class SweepOutcome:
    cells: list
    rows: list
    aggregates: list
    errors: list

    @property
    def ok(self) -> bool:
        return not self.errors


def run_sweep(cfg: ExperimentConfig, jobs: int = 1, out: str | os.PathLike | None = None) -> SweepOutcome:
    """Run every (technique, P) cell and write results under ``out``.

    Outputs are ordered by (technique, P, rep) and so do not depend on
    ``jobs``.
    """
    platform = cfg.load_platform()
    cfg.validate(platform)
    model = build_cost_model(cfg)
    grid = [(t, int(p)) for t in cfg.techniques for p in cfg.pe_counts]
    args = [(cfg, model, platform, t, p) for t, p in grid]
    if jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell_star, args))
    else:
        cells = [run_cell(*a) for a in args]
    cells.sort(key=lambda c: _cell_key(c.technique, c.p))

    rows = []
    for cell in cells:
        rows.extend(metrics.metrics_rows(cell.results))
    aggregates = metrics.aggregate_rows(rows)
    errors = [{"technique": c.technique, "P": c.p, "error": c.error} for c in cells if c.error]
    outcome = SweepOutcome(cells, rows, aggregates, errors)
    if out is not None:
        write_sweep(outcome, cfg, Path(out))
    return outcome


def write_sweep(outcome: SweepOutcome, cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "config.json", json.dumps(cfg.to_dict(), indent=2) + "\n")
    for cell in outcome.cells:
        for rep, result in enumerate(cell.results):
            stem = f"{cell.technique}_P{cell.p}_rep{rep:02d}"
            atomic_write(out / "runs" / f"{stem}.json", result.to_json())
            if cfg.chunk_log:
                atomic_write(out / "chunks" / f"{stem}.csv", result.chunk_csv())
    atomic_write(out / "metrics.csv", metrics.metrics_csv(outcome.rows))
    atomic_write(out / "aggregate.csv", metrics.aggregate_csv(outcome.aggregates))
    errors_path = out / "errors.json"
    if outcome.errors:
        atomic_write(errors_path, json.dumps(outcome.errors, indent=2) + "\n")
    elif errors_path.exists():
        errors_path.unlink()
