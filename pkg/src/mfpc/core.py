"""The multiple-flat-projections estimator.

Each cluster ``i`` gets a projection matrix ``W_i`` (``d x p``) built one
column at a time: a column is the solution of the penalized single-column
problem (see :mod:`mfpc.cccp`), after which every sample and the center lose
their component along that column and the next column is solved on the
deflated data. Samples are then relabeled by their distance to each projected
center, and the two steps alternate.

In kernel mode the effective feature of a sample ``x`` is the vector
``K(x, X_r)`` over a reduced basis ``X_r`` of samples; the center of cluster
``i`` is ``K(mean_i, X_r)`` with ``mean_i`` taken in input space.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numpy.typing import ArrayLike

from .cccp import CccpTrace, SubproblemInstance, solve_column
from .errors import EmptyClusterUnrecoverable, ValidationError, ZeroColumn
from .linalg import deflate, kernel_map, range_basis, scatter_matrix
from .types import (
    ClusterState,
    Dataset,
    FlatModel,
    FloatArray,
    KernelSpec,
    SolverConfig,
    orthogonality_defect,
)

log = logging.getLogger(__name__)

DEFAULT_REDUCED_SIZE = 200
ZERO_COLUMN_NORM = 1e-12


def _features(X: Union[Dataset, ArrayLike]) -> FloatArray:
    return X.features if isinstance(X, Dataset) else np.asarray(X, dtype=np.float64)


def linear_p_grid(n_features: int) -> list[int]:
    return list(range(1, min(n_features - 1, 10) + 1))


def kernel_p_grid() -> list[int]:
    return [1, 2]


def build_kernel_instance(
    X: Union[Dataset, ArrayLike], spec: KernelSpec, seed: int = 0
) -> tuple[FloatArray, FloatArray]:
    """Effective kernel features and the reduced basis they are taken against.

    Returns ``(features, basis)`` with ``features`` of shape ``(r, m)`` and
    ``basis`` of shape ``(n, r)``. The basis is a uniformly drawn subset of
    ``min(m, reduced_size)`` samples (kept in sample order); when that covers
    every sample the full sample matrix is used.
    """
    if spec.is_linear:
        raise ValidationError("reduced kernel instances need a gaussian kernel")
    F = _features(X)
    m = F.shape[1]
    size = spec.reduced_size if spec.reduced_size is not None else DEFAULT_REDUCED_SIZE
    r = min(m, int(size))
    if r >= m:
        basis = F.copy()
    else:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(m, size=r, replace=False))
        basis = F[:, idx]
    return kernel_map(F, basis, spec), basis


def effective_centers(
    X_input: FloatArray,
    state: ClusterState,
    kernel: KernelSpec,
    basis: Optional[FloatArray],
) -> FloatArray:
    """``(d, k)`` cluster centers in the effective feature space."""
    means = state.centers(X_input)
    if kernel.is_linear:
        return means
    return kernel_map(means, basis, kernel)


@dataclass
class FlatSolution:
    """Output of the recursive column construction for one cluster."""

    W: FloatArray
    traces: list[CccpTrace]
    unit_ball_defects: list[float]


def solve_flat_detailed(
    X_eff: ArrayLike,
    members: ArrayLike,
    config: SolverConfig,
    center: Optional[ArrayLike] = None,
) -> FlatSolution:
    """Recursive construction of ``W`` with per-column traces.

    Each column problem is posed in coordinates of the span of the current
    (deflated) samples and center. Every term of the objective except
    ``||w||^2`` sees ``w`` only through inner products with those vectors, so
    the minimizer lies in that span; solving there keeps the columns exactly
    orthogonal and starts the iteration from a direction that actually
    touches the data.
    """
    X = np.asarray(X_eff, dtype=np.float64)
    idx = np.asarray(members, dtype=np.int64).ravel()
    d, m = X.shape
    mask = np.zeros(m, dtype=bool)
    mask[idx] = True
    c = X[:, mask].mean(axis=1) if center is None else np.asarray(center, dtype=np.float64)
    if config.kernel.is_linear and config.p >= d:
        raise ValidationError(f"p must be below the feature dimension ({config.p} >= {d})")

    cols, traces, defects = [], [], []
    for l in range(config.p):
        Q = range_basis(np.column_stack([X, c]))
        Xr = X if Q is None else Q.T @ X
        cr = c if Q is None else Q.T @ c
        S = scatter_matrix(Xr, np.flatnonzero(mask), cr)
        inst = SubproblemInstance.from_config(Xr[:, ~mask] - cr[:, None], Xr @ Xr.T, S, config)
        u, trace = solve_column(inst)
        w = u if Q is None else Q @ u
        if np.linalg.norm(w) < ZERO_COLUMN_NORM:
            raise ZeroColumn(f"column {l + 1} collapsed to zero", column=l)
        cols.append(w)
        traces.append(trace)
        defects.append(abs(float(np.sum((w @ X) ** 2)) - 1.0))
        if l + 1 < config.p:
            X = deflate(X, w)
            c = deflate(c, w)
    return FlatSolution(np.column_stack(cols), traces, defects)


def solve_flat(
    X_eff: ArrayLike,
    members: ArrayLike,
    config: SolverConfig,
    center: Optional[ArrayLike] = None,
) -> FloatArray:
    """Projection matrix ``W`` (``d x p``) for one cluster."""
    return solve_flat_detailed(X_eff, members, config, center).W


def decision_values(X: Union[Dataset, ArrayLike], model: FlatModel) -> FloatArray:
    """``(k, m)`` distances ``||W_i^T phi(x_j) - W_i^T c_i||``."""
    F = _features(X)
    if not model.kernel.is_linear:
        F = kernel_map(F, model.reduced_basis, model.kernel)
    proj = np.einsum("kdp,dm->kpm", model.W, F)
    return np.linalg.norm(proj - model.center_projection[:, :, None], axis=1)


def assign_labels(X: Union[Dataset, ArrayLike], model: FlatModel) -> ClusterState:
    """Nearest projected center; ties go to the smallest cluster index."""
    dist = decision_values(X, model)
    return ClusterState(np.argmin(dist, axis=0), model.k)


def _objective_terms(
    F: FloatArray, centers: FloatArray, labels: np.ndarray, W: FloatArray, c1: float, c2: float
) -> float:
    total = 0.0
    for i in range(W.shape[0]):
        proj = np.linalg.norm(W[i].T @ (F - centers[:, i : i + 1]), axis=0)
        own = labels == i
        total += 0.5 * float(np.sum(W[i] ** 2))
        total += 0.5 * c1 * float(np.sum(proj[own] ** 2))
        total += c2 * float(np.sum(np.maximum(1.0 - proj[~own], 0.0)))
    return total


def overall_objective(
    X: Union[Dataset, ArrayLike],
    state: ClusterState,
    model: FlatModel,
    config: SolverConfig,
) -> float:
    """Sum over clusters of the per-cluster objective with optimal slacks."""
    Xin = _features(X)
    if model.kernel.is_linear:
        F = Xin
    else:
        F = kernel_map(Xin, model.reduced_basis, model.kernel)
    centers = effective_centers(Xin, state, model.kernel, model.reduced_basis)
    return _objective_terms(F, centers, state.labels, model.W, config.c1, config.c2)


@dataclass
class FitResult:
    """Everything produced by :func:`fit`.

    ``per_column_traces`` maps ``(outer_iteration, cluster, column)`` to the
    CCCP trace of that solve.
    """

    model: FlatModel
    state: ClusterState
    outer_iterations: int
    overall_objective_history: list[float]
    per_column_traces: dict[tuple[int, int, int], CccpTrace] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    converged: bool = False


def refill_empty_clusters(
    labels: np.ndarray, dist: FloatArray, k: int
) -> tuple[np.ndarray, list[int]]:
    """Give each empty cluster the most ambiguous sample from a non-singleton cluster.

    Ambiguity of sample ``j`` towards empty cluster ``e`` is
    ``dist[e, j] - dist[y_j, j]``; the smallest value wins, ties by index.
    """
    labels = labels.copy()
    refilled = []
    for e in range(k):
        if np.any(labels == e):
            continue
        sizes = np.bincount(labels, minlength=k)
        donors = np.flatnonzero(sizes[labels] >= 2)
        if donors.size == 0:
            raise EmptyClusterUnrecoverable(f"no sample can be moved into cluster {e + 1}")
        gap = dist[e, donors] - dist[labels[donors], donors]
        labels[donors[int(np.argmin(gap))]] = e
        refilled.append(e)
    return labels, refilled


def _fit_flats(
    F: FloatArray,
    centers: FloatArray,
    state: ClusterState,
    config: SolverConfig,
) -> tuple[FloatArray, list[FlatSolution]]:
    k = state.k
    sols = []
    for i in range(k):
        try:
            sol = solve_flat_detailed(F, state.members(i), config, centers[:, i])
        except ZeroColumn as exc:
            # fewer usable columns for this cluster: retry with p reduced and pad with zeros
            if exc.column == 0:
                raise
            reduced = SolverConfig(**{**_config_fields(config), "p": exc.column})
            sol = solve_flat_detailed(F, state.members(i), reduced, centers[:, i])
            pad = np.zeros((F.shape[0], config.p - exc.column))
            sol = FlatSolution(np.hstack([sol.W, pad]), sol.traces, sol.unit_ball_defects)
        sols.append(sol)
    return np.stack([s.W for s in sols]), sols


def _config_fields(config: SolverConfig) -> dict:
    return {f: getattr(config, f) for f in config.__dataclass_fields__}


def fit(
    X: Union[Dataset, ArrayLike],
    k: int,
    config: SolverConfig,
    init: ClusterState,
    *,
    stop_on_increase: bool = False,
) -> FitResult:
    """Alternate flat construction and relabeling from ``init``.

    Stops when the labels repeat (the next round would rebuild the same
    model, so the objective cannot decrease further) or after
    ``max_outer_iters`` rounds. Relabeling changes the problem each round, so
    the objective history is not monotone in general. With
    ``stop_on_increase`` the loop also stops at the first round whose
    objective exceeds the previous one and keeps the earlier model, which
    makes the history non-increasing.

    The returned labels are always those that :func:`assign_labels`
    produces for the returned model.
    """
    Xin = _features(X)
    m = Xin.shape[1]
    if k < 2:
        raise ValidationError("k must be at least 2")
    if init.k != k or init.n_samples != m:
        raise ValidationError("initial state does not match k or the sample count")
    if init.empty_clusters().size:
        raise ValidationError("initial state has empty clusters")
    kernel = config.kernel
    if kernel.is_linear:
        F, basis = Xin, None
    else:
        F, basis = build_kernel_instance(Xin, kernel, config.seed)

    labels = init.labels.copy()
    history: list[float] = []
    traces: dict[tuple[int, int, int], CccpTrace] = {}
    previous: Optional[tuple[FlatModel, list[FlatSolution]]] = None
    last_refilled: set[int] = set()
    converged = False
    outer = 0
    model = sols = None
    while outer < config.max_outer_iters:
        state = ClusterState(labels, k)
        centers = effective_centers(Xin, state, kernel, basis)
        W, sols = _fit_flats(F, centers, state, config)
        proj_centers = np.einsum("kdp,dk->kp", W, centers)
        model = FlatModel(W, proj_centers, kernel, basis, tol_orth=config.tol_orth)
        obj = _objective_terms(F, centers, labels, W, config.c1, config.c2)
        if stop_on_increase and history and obj > history[-1]:
            log.debug("outer objective rose (%.6g -> %.6g); keeping previous model", history[-1], obj)
            model, sols = previous
            converged = True
            break
        for i, sol in enumerate(sols):
            for l, tr in enumerate(sol.traces):
                traces[(outer, i, l)] = tr
        history.append(obj)
        outer += 1
        dist = decision_values(F if kernel.is_linear else Xin, model)
        new_labels = np.argmin(dist, axis=0)
        if np.array_equal(new_labels, labels):
            converged = True
            break
        new_labels, refilled = refill_empty_clusters(new_labels, dist, k)
        again = last_refilled.intersection(refilled)
        if again:
            raise EmptyClusterUnrecoverable(
                f"cluster(s) {sorted(e + 1 for e in again)} emptied twice in a row"
            )
        last_refilled = set(refilled)
        previous = (model, sols)
        labels = new_labels

    final = assign_labels(Xin, model)
    diagnostics = {
        "orthogonality_defect": [orthogonality_defect(model.W[i]) for i in range(k)],
        "unit_ball_defect": [s.unit_ball_defects for s in sols],
        "matrix_unit_ball_defect": [
            abs(float(np.sum((model.W[i].T @ F) ** 2)) - config.p) for i in range(k)
        ],
    }
    return FitResult(
        model=model,
        state=final,
        outer_iterations=outer,
        overall_objective_history=history,
        per_column_traces=traces,
        diagnostics=diagnostics,
        converged=converged,
    )
