"""One clustering run from a flat parameter record, shared by ``fit`` and ``grid``."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import baselines as bl
from .core import FitResult, build_kernel_instance, fit
from .errors import MFPCError, MissingFile, UnknownDataset, ValidationError
from .generators import GENERATORS, generate
from .io import BENCHMARKS, load_benchmark, load_csv
from .metrics import ari, nmi
from .types import ClusterState, Dataset, KernelSpec, SolverConfig

METHODS = ("mfpc", "kpc", "kppc", "lkppc", "kfc", "lkfc", "kmeans")
INITS = ("nng", "random", "file")

# parameters each method actually reads; the rest are left blank in reports
USES = {
    "mfpc": {"c1", "c2", "p", "mu"},
    "kpc": {"mu"},
    "kppc": {"c1", "mu"},
    "lkppc": {"c1", "c2", "mu"},
    "kfc": {"p", "mu"},
    "lkfc": {"c1", "p", "mu"},
    "kmeans": {"seed"},
}


def resolve_data(ref: str, seed: int = 0, labeled: bool = True) -> tuple[str, Dataset]:
    """Dataset from a CSV path, a generator name or a benchmark name.

    ``labeled`` only applies to CSV paths: whether the last column holds labels.
    """
    path = Path(ref)
    if path.is_file():
        return path.stem, load_csv(path, labeled=labeled)
    key = ref.lower()
    if key in GENERATORS:
        return key, generate(key, seed)
    if key in BENCHMARKS:
        return key, load_benchmark(key)
    if path.suffix or "/" in ref or "\\" in ref:
        raise MissingFile(f"no such file: {ref}")
    names = ", ".join(list(GENERATORS) + list(BENCHMARKS))
    raise UnknownDataset(f"unknown dataset {ref!r}; use a CSV path or one of {names}")


@dataclass(frozen=True)
class RunSpec:
    method: str
    k: int
    c1: float = 1.0
    c2: float = 1.0
    sigma: float = 100.0
    p: int = 1
    kernel: str = "linear"
    mu: Optional[float] = None
    reduced_size: Optional[int] = None
    init: str = "nng"
    seed: int = 0
    neighbors: int = 5

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; choose one of {', '.join(METHODS)}")
        if self.init not in INITS:
            raise ValidationError(f"unknown init {self.init!r}")

    def kernel_spec(self) -> KernelSpec:
        if self.kernel == "linear":
            return KernelSpec()
        return KernelSpec("gaussian", self.mu, self.reduced_size)

    def solver_config(self, **overrides: Any) -> SolverConfig:
        return SolverConfig(
            c1=self.c1, c2=self.c2, sigma=self.sigma, p=self.p,
            seed=self.seed, kernel=self.kernel_spec(), **overrides,
        )


@dataclass
class RunOutcome:
    labels: np.ndarray
    model: Any
    runtime: float
    extra: dict[str, Any] = field(default_factory=dict)
    fit_result: Optional[FitResult] = None


def initial_state(
    spec: RunSpec, X: np.ndarray, init_labels: Optional[np.ndarray] = None
) -> ClusterState:
    if spec.init == "nng":
        return bl.nng_init(X, spec.k, spec.neighbors)
    if spec.init == "random":
        return bl.random_init(X.shape[1], spec.k, spec.seed)
    if init_labels is None:
        raise ValidationError("init 'file' needs an initial label file")
    return ClusterState(init_labels, spec.k)


def execute(
    spec: RunSpec,
    data: Dataset,
    init_labels: Optional[np.ndarray] = None,
    solver_overrides: Optional[dict] = None,
) -> RunOutcome:
    """Run one method; ``runtime`` covers initialization and fitting."""
    t0 = time.perf_counter()
    X = data.features
    kernel = spec.kernel_spec()
    if spec.method == "mfpc":
        init = initial_state(spec, X, init_labels)
        res = fit(data, spec.k, spec.solver_config(**(solver_overrides or {})), init)
        return RunOutcome(
            res.state.labels, res.model, time.perf_counter() - t0,
            {"outer_iterations": res.outer_iterations}, res,
        )
    if spec.method == "kmeans":
        state = bl.kmeans_fit(X, spec.k, spec.seed)
        extra = {"inertia": bl.kmeans_inertia(X, state)}
        return RunOutcome(state.labels, state.centers(X), time.perf_counter() - t0, extra)
    F = X if kernel.is_linear else build_kernel_instance(X, kernel, spec.seed)[0]
    init = initial_state(spec, X, init_labels)
    res = bl.fit_baseline(spec.method, F, init, c1=spec.c1, c2=spec.c2, p_flat=spec.p)
    return RunOutcome(
        res.state.labels, res.model, time.perf_counter() - t0, {"outer_iterations": res.iterations}
    )


def report_row(
    spec: RunSpec,
    dataset: str,
    outcome: Optional[RunOutcome],
    truth: Optional[np.ndarray],
    *,
    status: str = "ok",
    timing: bool = False,
) -> dict[str, Any]:
    """Flat record in results-CSV column order; unused parameters are blank."""
    used = USES[spec.method]
    kernel_mu = spec.mu if spec.kernel == "gaussian" else None
    row: dict[str, Any] = {
        "method": spec.method,
        "dataset": dataset,
        "c1": spec.c1 if "c1" in used else None,
        "c2": spec.c2 if "c2" in used else None,
        "mu": kernel_mu if "mu" in used else None,
        "p": spec.p if "p" in used else None,
        "seed": spec.seed,
        "ari": None,
        "nmi": None,
        "runtime_seconds": None,
        "status": status,
    }
    if outcome is not None:
        if truth is not None:
            row["ari"] = ari(truth, outcome.labels)
            row["nmi"] = nmi(truth, outcome.labels)
        if timing:
            row["runtime_seconds"] = outcome.runtime
    return row


def run_row(args: tuple[RunSpec, str, Dataset, Optional[np.ndarray], bool]) -> dict[str, Any]:
    """Grid worker: never raises for solver failures, marks the row instead."""
    spec, dataset, data, init_labels, timing = args
    try:
        out = execute(spec, data, init_labels)
    except MFPCError as exc:
        return report_row(spec, dataset, None, None, status=f"failed: {type(exc).__name__}")
    return report_row(spec, dataset, out, data.labels, timing=timing)
