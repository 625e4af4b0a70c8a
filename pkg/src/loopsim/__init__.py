"""Simulate dynamic loop self-scheduling on a master-worker cluster."""

from .dls import ChunkScheduler, LoopDescriptor, Technique, TECHNIQUES
from .engine import RunResult, replicate, simulate
from .metrics import aggregate, run_metrics
from .platform import Link, Platform, PerturbationModel, load_platform
from .workload import (
    Constant,
    EcdfSampled,
    ExactTrace,
    TaskTrace,
    fit_ecdf,
    generate_low_variability,
    generate_mandelbrot,
    load_trace,
    sample_ecdf,
    save_trace,
)

__version__ = "0.1.0"

__all__ = [
    "ChunkScheduler", "LoopDescriptor", "Technique", "TECHNIQUES",
    "RunResult", "replicate", "simulate", "aggregate", "run_metrics",
    "Link", "Platform", "PerturbationModel", "load_platform",
    "Constant", "EcdfSampled", "ExactTrace", "TaskTrace", "fit_ecdf", "generate_low_variability",
    "generate_mandelbrot", "load_trace", "sample_ecdf", "save_trace",
]
