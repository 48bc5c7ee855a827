"""Partition agreement scores and the metric record emitted by the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from sklearn import metrics as skm

from .errors import LengthMismatch, ValidationError


def _first_seen(y: np.ndarray) -> np.ndarray:
    """Renumber labels in order of first appearance.

    Scores are sums over the contingency table, whose row and column order
    follows the label values; fixing that order makes renamed labels give
    bit-identical results.
    """
    _, first, inverse = np.unique(y, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse.ravel()]


def _pair(y_true: ArrayLike, y_pred: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y_true).ravel()
    b = np.asarray(y_pred).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"label vectors differ in length ({a.size} vs {b.size})")
    if a.size < 2:
        raise LengthMismatch("at least two samples are needed to compare partitions")
    return _first_seen(a), _first_seen(b)


def ari(y_true: ArrayLike, y_pred: ArrayLike) -> float:
    """Adjusted Rand index (Hubert and Arabie)."""
    a, b = _pair(y_true, y_pred)
    return float(skm.adjusted_rand_score(a, b))


def nmi(y_true: ArrayLike, y_pred: ArrayLike) -> float:
    """Mutual information over the arithmetic mean of the two entropies.

    Two single-cluster partitions score 1; a single cluster against anything
    finer scores 0.
    """
    a, b = _pair(y_true, y_pred)
    return float(skm.normalized_mutual_info_score(a, b, average_method="arithmetic"))


@dataclass(frozen=True)
class MetricReport:
    """Scores of one run plus the parameters that produced it."""

    ari: float
    nmi: float
    runtime_seconds: float = 0.0
    method: str = "mfpc"
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not -1.0 - 1e-12 <= self.ari <= 1.0 + 1e-12:
            raise ValidationError(f"ari out of range: {self.ari}")
        if not -1e-12 <= self.nmi <= 1.0 + 1e-12:
            raise ValidationError(f"nmi out of range: {self.nmi}")

    @classmethod
    def compare(cls, y_true: ArrayLike, y_pred: ArrayLike, **kwargs: Any) -> "MetricReport":
        return cls(ari(y_true, y_pred), nmi(y_true, y_pred), **kwargs)
