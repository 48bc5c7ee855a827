"""Dense linear-algebra primitives: scatter, eigenvectors, deflation, kernels."""

from __future__ import annotations

from typing import Optional

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg as sla
from scipy.spatial.distance import cdist

from .errors import ConvergenceFailure, EmptyMemberSet, ValidationError, ZeroDirection
from .types import FloatArray, KernelSpec

# Full eigendecomposition up to this dimension, inverse iteration above.
EIGH_MAX_DIM = 512
_SIGN_ZERO = 1e-12


def fix_sign(v: FloatArray) -> FloatArray:
    """Flip ``v`` so its first component that is not (numerically) zero is positive."""
    scale = np.max(np.abs(v), initial=0.0)
    if scale == 0.0:
        return v
    nz = np.flatnonzero(np.abs(v) > _SIGN_ZERO * scale)
    return -v if v[nz[0]] < 0 else v


def scatter_matrix(X: ArrayLike, members: ArrayLike, center: ArrayLike) -> FloatArray:
    """Sum of ``(x_j - c)(x_j - c)^T`` over the member columns of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    idx = np.asarray(members, dtype=np.int64).ravel()
    if idx.size == 0:
        raise EmptyMemberSet("scatter matrix of an empty member set")
    c = np.asarray(center, dtype=np.float64).ravel()
    if c.size != X.shape[0]:
        raise ValidationError("center length differs from feature dimension")
    D = X[:, idx] - c[:, None]
    S = D @ D.T
    return 0.5 * (S + S.T)


def _inverse_iteration(S: FloatArray, max_iter: int, tol: float) -> FloatArray:
    d = S.shape[0]
    shift = 1e-12 * max(float(np.trace(S)), 1.0)
    factor = sla.cho_factor(S + shift * np.eye(d))
    v = np.ones(d) / np.sqrt(d)
    for _ in range(max_iter):
        u = sla.cho_solve(factor, v)
        u /= np.linalg.norm(u)
        u = fix_sign(u)
        if np.linalg.norm(u - v) <= tol:
            return u
        v = u
    raise ConvergenceFailure(f"inverse iteration did not converge in {max_iter} steps")


def smallest_eigenvectors(
    S: ArrayLike,
    count: int = 1,
    *,
    max_iter: int = 1000,
    tol: float = 1e-12,
) -> FloatArray:
    """Unit eigenvectors of the ``count`` smallest eigenvalues, as columns.

    Each column follows the sign convention of :func:`fix_sign`.
    """
    S = np.asarray(S, dtype=np.float64)
    d = S.shape[0]
    if d <= EIGH_MAX_DIM or count > 1:
        _, vecs = np.linalg.eigh(0.5 * (S + S.T))
        V = vecs[:, :count]
    else:
        V = _inverse_iteration(S, max_iter, tol)[:, None]
    return np.column_stack([fix_sign(V[:, j]) for j in range(count)])


def smallest_eigenvector(S: ArrayLike, **kwargs) -> FloatArray:
    """Unit vector minimizing ``v^T S v`` on the sphere (sign fixed)."""
    return smallest_eigenvectors(S, 1, **kwargs)[:, 0]


def deflate(X: ArrayLike, w: ArrayLike) -> FloatArray:
    """Remove from every column of ``X`` its component along ``w``."""
    X = np.asarray(X, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64).ravel()
    nrm = np.linalg.norm(w)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise ZeroDirection("cannot deflate along a zero direction")
    if w.size != X.shape[0]:
        raise ValidationError("direction length differs from feature dimension")
    u = w / nrm
    if X.ndim == 1:
        return X - u * (u @ X)
    return X - np.outer(u, u @ X)


def kernel_map(X_query: ArrayLike, basis: ArrayLike, spec: KernelSpec) -> FloatArray:
    """``(r, q)`` matrix with entry ``(a, b) = K(basis_a, query_b)``."""
    Q = np.asarray(X_query, dtype=np.float64)
    B = np.asarray(basis, dtype=np.float64)
    if Q.ndim == 1:
        Q = Q[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if Q.shape[0] != B.shape[0]:
        raise ValidationError("query and basis feature dimensions differ")
    if spec.is_linear:
        return B.T @ Q
    D2 = cdist(B.T, Q.T, metric="sqeuclidean")
    return np.exp(-spec.mu * D2)


def range_basis(X: ArrayLike, rtol: float = 1e-9) -> Optional[FloatArray]:
    """Orthonormal basis of the column space of ``X``.

    Returns ``None`` when ``X`` has full row rank, i.e. when the basis would be
    the whole space.
    """
    X = np.asarray(X, dtype=np.float64)
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((X.shape[0], 0))
    rank = int(np.sum(s > rtol * s[0]))
    if rank == X.shape[0]:
        return None
    return U[:, :rank]
