"""Eigenvalue-based flat clustering baselines, k-means and the NNG initializer.

kPC, kPPC and LkPPC describe each cluster by a plane ``w^T x + b = 0`` with
``||w|| = 1``; kFC and LkFC use a flat ``W^T x = gamma`` with orthonormal
``W``. All five share one alternating loop: refit every cluster prototype on
its members, then relabel, until the labels repeat.

Every function here works on an effective feature matrix (``d x m``), so the
kernelized variants only differ in how that matrix was built.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.typing import ArrayLike
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .core import refill_empty_clusters
from .errors import EmptyMemberSet, ValidationError, ZeroDirection
from .linalg import fix_sign, scatter_matrix, smallest_eigenvectors
from .types import ClusterState, FloatArray

MAX_OUTER_ITERS = 100
_NORM_TOL = 1e-10
_EPS = 1e-300

METHODS = ("kpc", "kppc", "lkppc", "kfc", "lkfc", "kmeans")


def _members(X: FloatArray, idx: ArrayLike) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64).ravel()
    if idx.size == 0:
        raise EmptyMemberSet("cluster has no members")
    return idx


@dataclass(frozen=True)
class PlaneModel:
    """Planes ``w_i^T x + b_i = 0``, optionally with center points ``nu_i``.

    Attributes:
        w: ``(k, d)`` unit normals.
        b: ``(k,)`` offsets.
        nu: ``(k, d)`` center points, or ``None``.
    """

    w: FloatArray
    b: FloatArray
    nu: Optional[FloatArray] = None

    def __post_init__(self) -> None:
        w = np.atleast_2d(np.array(self.w, dtype=np.float64))
        b = np.array(self.b, dtype=np.float64).ravel()
        if b.shape != (w.shape[0],):
            raise ValidationError("one offset per plane required")
        dev = np.abs(np.linalg.norm(w, axis=1) - 1.0)
        if np.any(dev > _NORM_TOL):
            raise ValidationError(f"plane normals must have unit norm (off by {dev.max():.2e})")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)
        if self.nu is not None:
            nu = np.atleast_2d(np.array(self.nu, dtype=np.float64))
            if nu.shape != w.shape:
                raise ValidationError("nu must have the same shape as w")
            object.__setattr__(self, "nu", nu)

    @property
    def k(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class GeneralFlatModel:
    """Flats given by orthonormal ``W_i`` (``d x q``) and offsets.

    ``gamma`` is ``(k, q)`` for kFC (``W_i^T x = gamma_i``) and ``(k, d)`` for
    LkFC, where it is a point on the flat.
    """

    W: FloatArray
    gamma: FloatArray

    def __post_init__(self) -> None:
        W = np.array(self.W, dtype=np.float64)
        if W.ndim != 3:
            raise ValidationError("W must have shape (k, d, q)")
        q = W.shape[2]
        for i in range(W.shape[0]):
            if np.max(np.abs(W[i].T @ W[i] - np.eye(q))) > 1e-8:
                raise ValidationError(f"W_{i + 1} is not orthonormal")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "gamma", np.atleast_2d(np.array(self.gamma, dtype=np.float64)))

    @property
    def k(self) -> int:
        return self.W.shape[0]


# --- per-cluster updates ---------------------------------------------------


def kpc_update(X: ArrayLike, members: ArrayLike) -> tuple[FloatArray, float]:
    """Plane through the member mean along the least-scatter normal."""
    X = np.asarray(X, dtype=np.float64)
    idx = _members(X, members)
    mean = X[:, idx].mean(axis=1)
    w = smallest_eigenvectors(scatter_matrix(X, idx, mean), 1)[:, 0]
    return w, -float(w @ mean)


def _augmented_gram(X: FloatArray, idx: np.ndarray) -> FloatArray:
    Xh = np.vstack([X[:, idx], np.ones(idx.size)])
    return Xh @ Xh.T


def kppc_update(
    X: ArrayLike, members: ArrayLike, others: ArrayLike, c: float
) -> tuple[FloatArray, float]:
    """Minimize ``sum_in (w.x + b)^2 - c sum_out (w.x + b)^2`` with ``||w|| = 1``.

    With ``M = A - cB`` on augmented vectors ``(x; 1)``, the offset enters
    through ``M_bb = |members| - c |others|``. When that is positive the
    optimal ``b`` is eliminated exactly and ``w`` is the least eigenvector of
    the Schur complement. Otherwise the objective is unbounded in ``b``; the
    least eigenvector of ``M`` over ``(w, b)`` is used and rescaled so that
    ``||w|| = 1``.
    """
    X = np.asarray(X, dtype=np.float64)
    idx = _members(X, members)
    oth = _members(X, others)
    d = X.shape[0]
    M = _augmented_gram(X, idx) - c * _augmented_gram(X, oth)
    M = 0.5 * (M + M.T)
    Mww, mwb, Mbb = M[:d, :d], M[:d, d], M[d, d]
    if Mbb > 0:
        w = smallest_eigenvectors(Mww - np.outer(mwb, mwb) / Mbb, 1)[:, 0]
        return w, -float(mwb @ w) / Mbb
    v = smallest_eigenvectors(M, 1)[:, 0]
    nrm = np.linalg.norm(v[:d])
    if nrm < 1e-12:
        raise ZeroDirection("augmented eigenvector has no normal component")
    w = fix_sign(v[:d] / nrm)
    return w, float(v[d] / nrm) * (1.0 if np.dot(w, v[:d]) > 0 else -1.0)


def kppc_objective(X: ArrayLike, members, others, c: float, w, b: float) -> float:
    X = np.asarray(X, dtype=np.float64)
    r = np.asarray(w) @ X + b
    return float(np.sum(r[np.asarray(members)] ** 2) - c * np.sum(r[np.asarray(others)] ** 2))


def lkppc_update(
    X: ArrayLike, members: ArrayLike, others: ArrayLike, c1: float, c2: float
) -> tuple[FloatArray, float, FloatArray]:
    """kPPC plane plus the member mean as center point.

    The center term does not involve ``(w, b)`` and is minimized by the mean,
    so the two parts decouple. ``c2`` is accepted for symmetry with the
    assignment rule.
    """
    X = np.asarray(X, dtype=np.float64)
    idx = _members(X, members)
    w, b = kppc_update(X, idx, others, c1)
    return w, b, X[:, idx].mean(axis=1)


def lkppc_objective(X: ArrayLike, members, others, c1: float, c2: float, w, b, nu) -> float:
    X = np.asarray(X, dtype=np.float64)
    idx = np.asarray(members)
    spread = np.sum((X[:, idx] - np.asarray(nu)[:, None]) ** 2)
    return kppc_objective(X, members, others, c1, w, b) + c2 * float(spread)


def kfc_update(X: ArrayLike, members: ArrayLike, p_flat: int) -> tuple[FloatArray, FloatArray]:
    """``W``: the ``p_flat`` least-scatter directions; ``gamma = W^T mean``."""
    X = np.asarray(X, dtype=np.float64)
    idx = _members(X, members)
    if not 1 <= p_flat < X.shape[0]:
        raise ValidationError(f"p_flat must lie in 1..{X.shape[0] - 1}")
    mean = X[:, idx].mean(axis=1)
    W = smallest_eigenvectors(scatter_matrix(X, idx, mean), p_flat)
    return W, W.T @ mean


def kfc_objective(X: ArrayLike, members, W, gamma) -> float:
    X = np.asarray(X, dtype=np.float64)
    R = np.asarray(W).T @ X[:, np.asarray(members)] - np.asarray(gamma).reshape(-1, 1)
    return float(np.sum(R**2))


def lkfc_update(
    X: ArrayLike, members: ArrayLike, c: float, p_flat: int
) -> tuple[FloatArray, FloatArray]:
    """``gamma`` is the member mean and ``W`` the least-scatter directions.

    For any ``W`` the objective is a convex quadratic in ``gamma`` minimized
    at the mean, after which only the scatter term depends on ``W``.
    """
    X = np.asarray(X, dtype=np.float64)
    idx = _members(X, members)
    if not 1 <= p_flat < X.shape[0]:
        raise ValidationError(f"p_flat must lie in 1..{X.shape[0] - 1}")
    mean = X[:, idx].mean(axis=1)
    return smallest_eigenvectors(scatter_matrix(X, idx, mean), p_flat), mean


def lkfc_objective(X: ArrayLike, members, c: float, W, gamma) -> float:
    X = np.asarray(X, dtype=np.float64)
    D = X[:, np.asarray(members)] - np.asarray(gamma)[:, None]
    return float(np.sum((np.asarray(W).T @ D) ** 2) + c * np.sum(D**2))


# --- assignment rules ------------------------------------------------------


def plane_distances(X: ArrayLike, model: PlaneModel) -> FloatArray:
    """``(k, m)`` values ``|w_i^T x + b_i|``."""
    return np.abs(model.w @ np.asarray(X, dtype=np.float64) + model.b[:, None])


def lkppc_distances(X: ArrayLike, model: PlaneModel, c2: float) -> FloatArray:
    X = np.asarray(X, dtype=np.float64)
    return plane_distances(X, model) ** 2 + c2 * cdist(model.nu, X.T, "sqeuclidean")


def kfc_distances(X: ArrayLike, model: GeneralFlatModel) -> FloatArray:
    X = np.asarray(X, dtype=np.float64)
    P = np.einsum("kdq,dm->kqm", model.W, X)
    return np.linalg.norm(P - model.gamma[:, :, None], axis=1)


def lkfc_distances(X: ArrayLike, model: GeneralFlatModel, c: float) -> FloatArray:
    X = np.asarray(X, dtype=np.float64)
    proj = np.einsum("kdq,dm->kqm", model.W, X) - np.einsum("kdq,kd->kq", model.W, model.gamma)[:, :, None]
    return np.sum(proj**2, axis=1) + c * cdist(model.gamma, X.T, "sqeuclidean")


def _argmin(dist: FloatArray, k: int) -> ClusterState:
    return ClusterState(np.argmin(dist, axis=0), k)


def kpc_assign(X, model: PlaneModel) -> ClusterState:
    return _argmin(plane_distances(X, model), model.k)


def lkppc_assign(X, model: PlaneModel, c2: float) -> ClusterState:
    return _argmin(lkppc_distances(X, model, c2), model.k)


def kfc_assign(X, model: GeneralFlatModel) -> ClusterState:
    return _argmin(kfc_distances(X, model), model.k)


def lkfc_assign(X, model: GeneralFlatModel, c: float) -> ClusterState:
    return _argmin(lkfc_distances(X, model, c), model.k)


# --- alternating loop ------------------------------------------------------


@dataclass
class BaselineResult:
    method: str
    model: object
    state: ClusterState
    iterations: int
    converged: bool


def _prototypes(
    method: str, X: FloatArray, state: ClusterState, c1: float, c2: float, p_flat: int
) -> tuple[object, Callable[[FloatArray], FloatArray]]:
    k = state.k
    if method == "kpc":
        parts = [kpc_update(X, state.members(i)) for i in range(k)]
        model = PlaneModel(np.array([w for w, _ in parts]), np.array([b for _, b in parts]))
        return model, lambda F: plane_distances(F, model)
    if method == "kppc":
        parts = [kppc_update(X, state.members(i), state.others(i), c1) for i in range(k)]
        model = PlaneModel(np.array([w for w, _ in parts]), np.array([b for _, b in parts]))
        return model, lambda F: plane_distances(F, model)
    if method == "lkppc":
        parts = [lkppc_update(X, state.members(i), state.others(i), c1, c2) for i in range(k)]
        model = PlaneModel(
            np.array([p[0] for p in parts]), np.array([p[1] for p in parts]), np.array([p[2] for p in parts])
        )
        return model, lambda F: lkppc_distances(F, model, c2)
    if method == "kfc":
        parts = [kfc_update(X, state.members(i), p_flat) for i in range(k)]
        model = GeneralFlatModel(np.stack([W for W, _ in parts]), np.stack([g for _, g in parts]))
        return model, lambda F: kfc_distances(F, model)
    if method == "lkfc":
        parts = [lkfc_update(X, state.members(i), c1, p_flat) for i in range(k)]
        model = GeneralFlatModel(np.stack([W for W, _ in parts]), np.stack([g for _, g in parts]))
        return model, lambda F: lkfc_distances(F, model, c1)
    raise ValidationError(f"unknown baseline {method!r}")


def fit_baseline(
    method: str,
    X: ArrayLike,
    init: ClusterState,
    *,
    c1: float = 1.0,
    c2: float = 1.0,
    p_flat: int = 1,
    max_iters: int = MAX_OUTER_ITERS,
) -> BaselineResult:
    """Update-then-assign until the labels repeat or ``max_iters`` rounds.

    ``c1`` is the kPPC/LkPPC repulsion weight and the LkFC center weight;
    ``c2`` is the LkPPC center weight. Empty clusters are refilled with the
    rule used by :func:`mfpc.core.fit`.
    """
    X = np.asarray(X, dtype=np.float64)
    method = method.lower()
    if init.empty_clusters().size:
        raise ValidationError("initial state has empty clusters")
    state = init
    model = None
    for it in range(1, max_iters + 1):
        model, dist_fn = _prototypes(method, X, state, c1, c2, p_flat)
        dist = dist_fn(X)
        labels = np.argmin(dist, axis=0)
        if np.array_equal(labels, state.labels):
            return BaselineResult(method, model, state, it, True)
        labels, _ = refill_empty_clusters(labels, dist, state.k)
        state = ClusterState(labels, state.k)
    return BaselineResult(method, model, state, max_iters, False)


# --- k-means and initializers ---------------------------------------------


def kmeans_fit(X: ArrayLike, k: int, seed: int = 0, max_iter: int = 300) -> ClusterState:
    """Lloyd iterations from a k-means++ start (scikit-learn), one run."""
    from sklearn.cluster import KMeans

    X = np.asarray(X, dtype=np.float64)
    if not 1 <= k <= X.shape[1]:
        raise ValidationError(f"k must lie in 1..{X.shape[1]}")
    km = KMeans(
        n_clusters=k, init="k-means++", n_init=1, max_iter=max_iter,
        algorithm="lloyd", random_state=np.random.RandomState(seed % 2**32),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        labels = km.fit_predict(X.T)
    return ClusterState(labels, k)


def kmeans_inertia(X: ArrayLike, state: ClusterState) -> float:
    X = np.asarray(X, dtype=np.float64)
    C = state.centers(X)
    return float(np.sum((X - C[:, state.labels]) ** 2))


def _canonical(labels: np.ndarray) -> np.ndarray:
    """Renumber so clusters appear in order of their first sample."""
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty(labels.max() + 1, dtype=np.int64)
    remap[np.unique(labels)[order]] = np.arange(order.size)
    return remap[labels]


def nng_init(X: ArrayLike, k: int, neighbors: int = 5) -> ClusterState:
    """Deterministic labels from the mutual nearest-neighbor graph.

    Samples ``i`` and ``j`` are linked when each is among the other's
    ``neighbors`` nearest (distance ties broken by index). Connected
    components are then merged, closest centroids first, or the largest one
    is halved at the median of its principal direction, until exactly ``k``
    remain.
    """
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[1]
    if not 1 <= k <= m:
        raise ValidationError(f"k must lie in 1..{m}")
    nb = min(neighbors, m - 1)
    if nb > 0:
        D = cdist(X.T, X.T, "sqeuclidean")
        np.fill_diagonal(D, np.inf)
        knn = np.argsort(D, axis=1, kind="stable")[:, :nb]
        rows = np.repeat(np.arange(m), nb)
        A = coo_matrix((np.ones(rows.size), (rows, knn.ravel())), shape=(m, m)).tocsr()
        A = A.multiply(A.T)
        _, labels = connected_components(A, directed=False)
    else:
        labels = np.zeros(m, dtype=np.int64)
    labels = _canonical(labels.astype(np.int64))

    while labels.max() + 1 > k:
        C = np.column_stack([X[:, labels == c].mean(axis=1) for c in range(labels.max() + 1)])
        Dc = cdist(C.T, C.T, "sqeuclidean")
        Dc[np.tril_indices_from(Dc)] = np.inf
        a, b = np.unravel_index(np.argmin(Dc), Dc.shape)
        labels[labels == b] = a
        labels = _canonical(labels)

    while labels.max() + 1 < k:
        sizes = np.bincount(labels)
        big = int(np.argmax(sizes))
        idx = np.flatnonzero(labels == big)
        mean = X[:, idx].mean(axis=1)
        S = scatter_matrix(X, idx, mean)
        _, V = np.linalg.eigh(S)
        proj = fix_sign(V[:, -1]) @ (X[:, idx] - mean[:, None])
        order = np.lexsort((idx, proj))
        labels[idx[order[idx.size // 2 :]]] = labels.max() + 1
        labels = _canonical(labels)
    return ClusterState(labels, k)


def random_init(m: int, k: int, seed: int = 0) -> ClusterState:
    """Uniform random labels with every cluster non-empty."""
    if not 1 <= k <= m:
        raise ValidationError(f"k must lie in 1..{m}")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, k, size=m)
    labels[rng.permutation(m)[:k]] = np.arange(k)
    return ClusterState(labels, k)
