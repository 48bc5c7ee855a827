"""Domain types shared by every module.

Samples are stored column-major: ``features`` has shape ``(n_features,
n_samples)`` so that sample ``j`` is the column ``features[:, j]``. Cluster
labels are 0-based everywhere inside the package; the 1-based convention used
in files and on the command line is converted at the I/O boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    EmptyMatrix,
    EmptyMemberSet,
    LabelOutOfRange,
    NonFiniteEntry,
    ValidationError,
)

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_labels(labels: np.ndarray, k: int, *, require_all: bool) -> None:
    if labels.ndim != 1:
        raise LabelOutOfRange("labels must be a 1-D vector")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in 1..{k}")
    if require_all:
        missing = np.setdiff1d(np.arange(k), labels)
        if missing.size:
            raise LabelOutOfRange(
                f"label(s) {', '.join(str(int(i) + 1) for i in missing)} never occur"
            )


@dataclass(frozen=True)
class Dataset:
    """A finite sample matrix with optional ground truth.

    Attributes:
        features: ``(n, m)`` array, one sample per column.
        labels: optional 0-based integer vector of length ``m``.
        feature_names: optional names, one per feature row.
    """

    features: FloatArray
    labels: Optional[IntArray] = None
    feature_names: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        X = np.array(self.features, dtype=np.float64, copy=True)
        if X.ndim != 2 or X.size == 0:
            raise EmptyMatrix("feature matrix must be a non-empty 2-D array")
        if not np.all(np.isfinite(X)):
            raise NonFiniteEntry("feature matrix contains NaN or Inf")
        object.__setattr__(self, "features", _frozen(X))
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.dtype.kind not in "iu":
                if not np.all(np.isfinite(y)) or not np.all(y == np.round(y)):
                    raise LabelOutOfRange("labels must be integers")
            y = np.array(y, dtype=np.int64)
            if y.shape != (X.shape[1],):
                raise LabelOutOfRange(
                    f"expected {X.shape[1]} labels, got shape {y.shape}"
                )
            if y.min() < 0:
                raise LabelOutOfRange("labels must lie in 1..k")
            _check_labels(y, int(y.max()) + 1, require_all=True)
            object.__setattr__(self, "labels", _frozen(y))
        if self.feature_names is not None:
            names = tuple(str(s) for s in self.feature_names)
            if len(names) != X.shape[0]:
                raise ValidationError("one feature name per feature row required")
            object.__setattr__(self, "feature_names", names)

    @property
    def n_features(self) -> int:
        return self.features.shape[0]

    @property
    def n_samples(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> Optional[int]:
        return None if self.labels is None else int(self.labels.max()) + 1

    @classmethod
    def from_rows(
        cls,
        rows: ArrayLike,
        labels: Optional[ArrayLike] = None,
        feature_names: Optional[Sequence[str]] = None,
    ) -> "Dataset":
        """Build from a row-per-sample matrix with optional 1-based labels."""
        R = np.asarray(rows, dtype=np.float64)
        if R.ndim == 1:
            R = R[None, :]
        return validate_dataset(R.T, labels, feature_names)


def validate_dataset(
    raw: ArrayLike,
    labels: Optional[ArrayLike] = None,
    feature_names: Optional[Sequence[str]] = None,
) -> Dataset:
    """Validate a ``(n_features, n_samples)`` matrix and 1-based labels.

    Raises:
        EmptyMatrix, NonFiniteEntry, LabelOutOfRange
    """
    X = np.asarray(raw, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.size == 0:
        raise EmptyMatrix("feature matrix must be a non-empty 2-D array")
    y = None
    if labels is not None:
        y = np.asarray(labels)
        if y.size and y.dtype.kind in "iuf":
            if not np.all(np.isfinite(y)) or np.any(y < 1):
                raise LabelOutOfRange("labels must lie in 1..k")
        y = y - 1
    return Dataset(X, y, tuple(feature_names) if feature_names is not None else None)


@dataclass(frozen=True)
class ClusterState:
    """A hard partition of ``m`` samples into ``k`` clusters (0-based labels)."""

    labels: IntArray
    k: int

    def __post_init__(self) -> None:
        y = np.array(self.labels, dtype=np.int64, copy=True)
        if self.k < 1:
            raise ValidationError("k must be at least 1")
        _check_labels(y, self.k, require_all=False)
        object.__setattr__(self, "labels", _frozen(y))

    @property
    def n_samples(self) -> int:
        return self.labels.size

    def members(self, i: int) -> IntArray:
        return np.flatnonzero(self.labels == i)

    def others(self, i: int) -> IntArray:
        return np.flatnonzero(self.labels != i)

    def sizes(self) -> IntArray:
        return np.bincount(self.labels, minlength=self.k)

    def empty_clusters(self) -> IntArray:
        return np.flatnonzero(self.sizes() == 0)

    def center(self, X: FloatArray, i: int) -> FloatArray:
        idx = self.members(i)
        if idx.size == 0:
            raise EmptyMemberSet(f"cluster {i + 1} has no members")
        return X[:, idx].mean(axis=1)

    def centers(self, X: FloatArray) -> FloatArray:
        """``(n, k)`` matrix of cluster means."""
        return np.column_stack([self.center(X, i) for i in range(self.k)])

    @classmethod
    def from_external(cls, labels: ArrayLike, k: Optional[int] = None) -> "ClusterState":
        y = np.asarray(labels, dtype=np.int64) - 1
        return cls(y, int(y.max()) + 1 if k is None else k)


@dataclass(frozen=True)
class KernelSpec:
    """Linear kernel, or Gaussian ``exp(-mu * ||a - b||^2)`` with optional reduced basis."""

    kind: Literal["linear", "gaussian"] = "linear"
    mu: Optional[float] = None
    reduced_size: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "gaussian"):
            raise ValidationError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian":
            if self.mu is None or not np.isfinite(self.mu) or self.mu <= 0:
                raise ValidationError("gaussian kernel requires mu > 0")
            object.__setattr__(self, "mu", float(self.mu))
        if self.reduced_size is not None and int(self.reduced_size) < 1:
            raise ValidationError("reduced_size must be a positive integer")

    @property
    def is_linear(self) -> bool:
        return self.kind == "linear"

    @classmethod
    def gaussian(cls, mu: float, reduced_size: Optional[int] = None) -> "KernelSpec":
        return cls("gaussian", mu, reduced_size)


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one MFPC fit.

    ``sigma`` is the penalty weight on the unit-ball equality; the rest follow
    the usual names. ``tol_cccp`` stops the concave-convex iteration once two
    successive iterates differ by less than it in Euclidean norm.
    """

    c1: float = 1.0
    c2: float = 1.0
    sigma: float = 100.0
    p: int = 1
    tol_cccp: float = 1e-3
    tol_qp: float = 1e-6
    tol_orth: float = 1e-6
    max_cccp_iters: int = 200
    max_outer_iters: int = 50
    seed: int = 0
    kernel: KernelSpec = field(default_factory=KernelSpec)

    def __post_init__(self) -> None:
        for name in ("c1", "c2", "sigma"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValidationError(f"{name} must be a positive real, got {v}")
        for name in ("tol_cccp", "tol_qp", "tol_orth"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValidationError(f"{name} must be positive, got {v}")
        for name in ("p", "max_cccp_iters", "max_outer_iters"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be at least 1")
        if not -(2**63) <= int(self.seed) < 2**64:
            raise ValidationError("seed must fit in 64 bits")

    def as_dict(self) -> dict:
        return {
            "c1": self.c1,
            "c2": self.c2,
            "sigma": self.sigma,
            "p": self.p,
            "tol_cccp": self.tol_cccp,
            "tol_qp": self.tol_qp,
            "tol_orth": self.tol_orth,
            "max_cccp_iters": self.max_cccp_iters,
            "max_outer_iters": self.max_outer_iters,
            "seed": self.seed,
            "kernel": self.kernel.kind,
            "mu": self.kernel.mu,
            "reduced_size": self.kernel.reduced_size,
        }


def orthogonality_defect(W: FloatArray) -> float:
    """Largest ``|w_a . w_b| / (||w_a|| ||w_b||)`` over distinct nonzero columns."""
    norms = np.linalg.norm(W, axis=0)
    keep = norms > 0
    if keep.sum() < 2:
        return 0.0
    U = W[:, keep] / norms[keep]
    C = np.abs(U.T @ U)
    np.fill_diagonal(C, 0.0)
    return float(C.max())


@dataclass(frozen=True)
class FlatModel:
    """Per-cluster projection matrices and projected centers.

    Attributes:
        W: ``(k, d, p)`` stack of projection matrices.
        center_projection: ``(k, p)``, row ``i`` is ``W_i^T c_i`` with ``c_i``
            the cluster center in the effective feature space.
        kernel: kernel used to build the effective features.
        reduced_basis: ``(n, r)`` basis samples for kernel mode.
        tol_orth: tolerance on the off-diagonal of ``W_i^T W_i``.
    """

    W: FloatArray
    center_projection: FloatArray
    kernel: KernelSpec = field(default_factory=KernelSpec)
    reduced_basis: Optional[FloatArray] = None
    tol_orth: float = 1e-6

    def __post_init__(self) -> None:
        W = np.array(self.W, dtype=np.float64, copy=True)
        if W.ndim != 3:
            raise ValidationError("W must have shape (k, d, p)")
        k, d, p = W.shape
        if p < 1 or k < 1:
            raise ValidationError("need at least one cluster and one column")
        if self.kernel.is_linear and p >= d:
            raise ValidationError(f"linear mode requires p < n (p={p}, n={d})")
        cp = np.array(self.center_projection, dtype=np.float64, copy=True)
        if cp.shape != (k, p):
            raise ValidationError(f"center_projection must have shape {(k, p)}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(cp))):
            raise NonFiniteEntry("model contains NaN or Inf")
        for i in range(k):
            defect = orthogonality_defect(W[i])
            if defect > self.tol_orth:
                raise ValidationError(
                    f"W_{i + 1} columns not orthogonal (defect {defect:.2e})"
                )
        object.__setattr__(self, "W", _frozen(W))
        object.__setattr__(self, "center_projection", _frozen(cp))
        if not self.kernel.is_linear:
            if self.reduced_basis is None:
                raise ValidationError("kernel mode requires a reduced basis")
            B = np.array(self.reduced_basis, dtype=np.float64, copy=True)
            if B.ndim != 2 or B.shape[1] != d:
                raise ValidationError("reduced basis must have one column per model row")
            object.__setattr__(self, "reduced_basis", _frozen(B))

    @property
    def k(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @property
    def p(self) -> int:
        return self.W.shape[2]
