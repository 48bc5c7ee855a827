"""Penalized single-column subproblem and its concave-convex solver.

For one cluster and one projection column ``w`` the penalized objective is

    f(w) = 1/2 ||w||^2 + c1/2 w'Sw + c2 sum_j (1 - |w'a_j|)_+ + sigma/2 |w'Gw - 1|

where ``a_j`` are the other-cluster samples shifted by the cluster center,
``S`` is the within-cluster scatter and ``G = sum_j x_j x_j'`` over all
samples. ``f`` splits as ``f = F_vex + F_cav + c2*M + sigma/2`` with

    F_vex(w) = 1/2 ||w||^2 + c1/2 w'Sw + c2 sum_j (|w'a_j| - 1)_+ + sigma (w'Gw - 1)_+
    F_cav(w) = -c2 sum_j |w'a_j| - sigma/2 w'Gw

and each CCCP step minimizes ``F_vex(w) + g'w`` with ``g`` a subgradient of
``F_cav`` at the current iterate.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg as sla
from scipy.optimize import brentq

from .errors import InnerSolverStall, ValidationError
from .linalg import smallest_eigenvector
from .types import FloatArray, SolverConfig

log = logging.getLogger(__name__)

# Breakpoint tolerance on |a_j'w| = 1 for the active-set hinge solver.
_KINK_EPS = 1e-9
_DEPENDENT_TOL = 1e-10


def _is_psd(M: np.ndarray) -> bool:
    if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12 * (1.0 + np.abs(M).max())):
        return False
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    return bool(ev[0] >= -1e-10 * max(1.0, float(np.trace(M))))


@dataclass(frozen=True)
class SubproblemInstance:
    """Data of one column subproblem.

    ``A`` holds one difference vector ``x_j - center`` per other-cluster
    sample (as columns). ``c1``, ``c2`` and ``sigma`` are allowed to be zero
    here so that degenerate smooth cases can be exercised directly.
    """

    A: FloatArray
    G: FloatArray
    S: FloatArray
    c1: float = 1.0
    c2: float = 1.0
    sigma: float = 100.0
    tol_cccp: float = 1e-3
    tol_qp: float = 1e-6
    max_cccp_iters: int = 200

    def __post_init__(self) -> None:
        A = np.asarray(self.A, dtype=np.float64)
        if A.ndim == 1:
            A = A[:, None]
        G = np.asarray(self.G, dtype=np.float64)
        S = np.asarray(self.S, dtype=np.float64)
        d = A.shape[0]
        if A.ndim != 2 or A.shape[1] < 1:
            raise ValidationError("A needs at least one column")
        if G.shape != (d, d) or S.shape != (d, d):
            raise ValidationError("G and S must be square with A's row count")
        if not (_is_psd(G) and _is_psd(S)):
            raise ValidationError("G and S must be symmetric positive semidefinite")
        for name in ("c1", "c2", "sigma"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"{name} must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "G", 0.5 * (G + G.T))
        object.__setattr__(self, "S", 0.5 * (S + S.T))

    @classmethod
    def from_config(
        cls, A: ArrayLike, G: ArrayLike, S: ArrayLike, config: SolverConfig
    ) -> "SubproblemInstance":
        return cls(
            A,
            G,
            S,
            c1=config.c1,
            c2=config.c2,
            sigma=config.sigma,
            tol_cccp=config.tol_cccp,
            tol_qp=config.tol_qp,
            max_cccp_iters=config.max_cccp_iters,
        )

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def n_others(self) -> int:
        return self.A.shape[1]

    @cached_property
    def hinge_terms(self) -> tuple[FloatArray, FloatArray]:
        """Columns of ``A`` merged up to sign, with multiplicity weights.

        ``(|t| - 1)_+`` is even in ``t``, so ``a`` and ``-a`` give the same
        term; zero columns give a constant and are dropped.
        """
        A = self.A
        keep = np.any(A != 0.0, axis=0)
        A = A[:, keep]
        if A.shape[1] == 0:
            return np.zeros((self.dim, 0)), np.zeros(0)
        first = np.argmax(A != 0.0, axis=0)
        signs = np.sign(A[first, np.arange(A.shape[1])])
        A = A * signs
        uniq, inverse, counts = np.unique(A.T, axis=0, return_inverse=True, return_counts=True)
        # np.unique sorts rows; keep first-occurrence order for reproducible pivoting
        first_pos = np.full(uniq.shape[0], A.shape[1])
        np.minimum.at(first_pos, inverse.ravel(), np.arange(A.shape[1]))
        order = np.argsort(first_pos, kind="stable")
        return np.ascontiguousarray(uniq[order].T), counts[order].astype(np.float64)


@dataclass
class CccpTrace:
    """Iterates of one concave-convex run.

    ``iterates`` holds ``(w, objective, violation)`` triples starting at the
    warm start; ``violation`` is ``|w'Gw - 1|``.
    """

    iterates: list[tuple[FloatArray, float, float]] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    @property
    def objectives(self) -> FloatArray:
        return np.array([f for _, f, _ in self.iterates])

    @property
    def max_iters_reached(self) -> bool:
        return not self.converged

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("iteration,objective,constraint_violation\n")
        for t, (_, f, v) in enumerate(self.iterates):
            buf.write(f"{t},{f:.17g},{v:.17g}\n")
        return buf.getvalue()


def penalty_objective(w: ArrayLike, inst: SubproblemInstance) -> float:
    w = np.asarray(w, dtype=np.float64)
    z = inst.A.T @ w
    q = w @ inst.G @ w
    return float(
        0.5 * (w @ w)
        + 0.5 * inst.c1 * (w @ inst.S @ w)
        + inst.c2 * np.maximum(1.0 - np.abs(z), 0.0).sum()
        + 0.5 * inst.sigma * abs(q - 1.0)
    )


def convex_part(w: ArrayLike, inst: SubproblemInstance) -> float:
    w = np.asarray(w, dtype=np.float64)
    z = inst.A.T @ w
    q = w @ inst.G @ w
    return float(
        0.5 * (w @ w)
        + 0.5 * inst.c1 * (w @ inst.S @ w)
        + inst.c2 * np.maximum(np.abs(z) - 1.0, 0.0).sum()
        + inst.sigma * max(q - 1.0, 0.0)
    )


def concave_part(w: ArrayLike, inst: SubproblemInstance) -> float:
    w = np.asarray(w, dtype=np.float64)
    return float(-inst.c2 * np.abs(inst.A.T @ w).sum() - 0.5 * inst.sigma * (w @ inst.G @ w))


def split_offset(inst: SubproblemInstance) -> float:
    """Constant ``c`` with ``penalty_objective = convex_part + concave_part + c``."""
    return inst.c2 * inst.n_others + 0.5 * inst.sigma


def concave_subgradient(w: ArrayLike, inst: SubproblemInstance) -> FloatArray:
    """Subgradient of ``F_cav`` at ``w`` using ``sign(0) = 0``."""
    w = np.asarray(w, dtype=np.float64)
    s = np.sign(inst.A.T @ w)
    return -inst.c2 * (inst.A @ s) - inst.sigma * (inst.G @ w)


def hinge_qp(
    H: FloatArray,
    b: FloatArray,
    A: FloatArray,
    weights: FloatArray,
    w0: FloatArray,
    *,
    max_iter: Optional[int] = None,
    mult_tol: float = 1e-9,
) -> FloatArray:
    """Minimize ``1/2 w'Hw + b'w + sum_j weights_j (|a_j'w| - 1)_+`` exactly.

    Primal active-set method for the piecewise quadratic objective. Kinks
    ``a_j'w = +-1`` that bind at the current point are held in a working set
    as equality constraints; every iteration either solves the equality
    constrained quadratic on the current pieces and releases a kink with a
    wrong-signed multiplier, or moves by an exact line search along the
    piecewise quadratic until the next optimum or kink. ``H`` must be
    positive definite.
    """
    d = H.shape[0]
    M = A.shape[1]
    chol = sla.cho_factor(H)
    Hb = sla.cho_solve(chol, b)
    if M == 0:
        return -Hb
    B = sla.cho_solve(chol, A)
    if max_iter is None:
        max_iter = 100 + 20 * (M + d)
    w = np.array(w0, dtype=np.float64, copy=True)
    a_norm = np.linalg.norm(A, axis=0)
    work: list[int] = []
    signs: list[float] = []
    pref = np.zeros(M)
    in_work = np.zeros(M, dtype=bool)

    def independent(j: int) -> bool:
        # a_j must not lie in the span of the working-set columns (H^-1 metric)
        own = float(A[:, j] @ B[:, j])
        if not work:
            return own > 0.0
        K = np.array(work)
        cross = A[:, K].T @ B[:, j]
        coef, *_ = np.linalg.lstsq(A[:, K].T @ B[:, K], cross, rcond=None)
        return own - float(cross @ coef) > _DEPENDENT_TOL * own

    for _ in range(max_iter):
        z = A.T @ w
        absz = np.abs(z)
        at_kink = np.abs(absz - 1.0) <= _KINK_EPS
        region = np.where(z > 1.0, 1.0, np.where(z < -1.0, -1.0, 0.0))
        region[at_kink] = pref[at_kink]
        region[in_work] = 0.0
        u = Hb + B @ (weights * region)
        if work:
            K = np.array(work)
            sK = np.array(signs)
            gram = A[:, K].T @ B[:, K]
            try:
                theta = -np.linalg.solve(gram, sK + A[:, K].T @ u)
            except np.linalg.LinAlgError as exc:
                raise InnerSolverStall("degenerate working set in hinge QP") from exc
            w_star = -(u + B[:, K] @ theta)
        else:
            theta = np.zeros(0)
            w_star = -u
        step = w_star - w
        # a full working set pins w down, so any step left is round-off
        stationary = len(work) >= d or np.linalg.norm(step) <= 1e-12 * (1.0 + np.linalg.norm(w))
        if not stationary:
            delta = A.T @ step
            delta[in_work] = 0.0
            moving = np.abs(delta) > 1e-12 * a_norm * np.linalg.norm(step)
            moving &= ~in_work
            curv = float(step @ H @ step)
            # right-derivative slopes of each hinge along the step
            right = np.where(absz > 1.0 + _KINK_EPS, np.sign(z), 0.0)
            outward = at_kink & moving & (z * delta > 0)
            right[outward] = np.sign(z[outward])
            right[at_kink & ~moving] = region[at_kink & ~moving]
            right[in_work] = 0.0
            slope0 = float((H @ w + b) @ step + np.sum(weights * delta * right))
            if slope0 >= 0.0:
                mismatch = at_kink & moving & (right != region)
                cand = [int(c) for c in np.flatnonzero(mismatch) if independent(c)]
                if cand:
                    cand = np.array(cand)
                    j = int(cand[np.argmax(weights[cand] * np.abs(delta[cand]))])
                    work.append(j)
                    signs.append(float(np.sign(z[j])))
                    in_work[j] = True
                    continue
                # no descent left on the current pieces: the step is round-off
                stationary = True

        if stationary:
            if not work:
                return w_star
            wk = weights[K]
            # multiplier ranges: [0, wk] at +1 kinks, [-wk, 0] at -1 kinks
            lo = np.where(sK > 0, 0.0, -wk)
            hi = np.where(sK > 0, wk, 0.0)
            viol = np.maximum(lo - theta, theta - hi)
            tol = mult_tol * max(1.0, float(wk.max()))
            worst = int(np.argmax(viol))
            if viol[worst] <= tol:
                return w_star
            j = work.pop(worst)
            s = signs.pop(worst)
            in_work[j] = False
            # leave the kink towards the side the multiplier points to
            pref[j] = s if s * theta[worst] > weights[j] else 0.0
            w = w_star
            continue

        idx = np.flatnonzero(moving)
        dz = delta[idx]
        alphas = np.concatenate([(1.0 - z[idx]) / dz, (-1.0 - z[idx]) / dz])
        owners = np.concatenate([idx, idx])
        thresh = _KINK_EPS / np.abs(np.concatenate([dz, dz]))
        ok = alphas > thresh
        alphas, owners = alphas[ok], owners[ok]
        order = np.lexsort((owners, alphas))
        alphas, owners = alphas[order], owners[order]
        jumps = weights[owners] * np.abs(delta[owners])
        before = np.concatenate([[0.0], np.cumsum(jumps)[:-1]])
        slope_before = slope0 + curv * alphas + before
        slope_after = slope_before + jumps
        hit_interior = slope_before >= 0.0
        hit_kink = slope_after >= 0.0
        i_int = int(np.argmax(hit_interior)) if hit_interior.any() else alphas.size
        i_kink = int(np.argmax(hit_kink)) if hit_kink.any() else alphas.size
        if i_int <= i_kink:
            acc = before[i_int] if i_int < alphas.size else float(jumps.sum())
            alpha = -(slope0 + acc) / curv
            w = w + alpha * step
        else:
            alpha = alphas[i_kink]
            j = int(owners[i_kink])
            w = w + alpha * step
            if not independent(j):
                continue
            work.append(j)
            signs.append(1.0 if z[j] + alpha * delta[j] > 0 else -1.0)
            in_work[j] = True
            pref[j] = 0.0
    raise InnerSolverStall(f"hinge QP active set exceeded {max_iter} iterations")


def surrogate_objective(w: ArrayLike, g: ArrayLike, inst: SubproblemInstance) -> float:
    """``F_vex(w) + g'w``: the convex model minimized by one CCCP step."""
    return convex_part(w, inst) + float(np.dot(g, w))


def solve_convex_subproblem(
    g: ArrayLike, warm: ArrayLike, inst: SubproblemInstance
) -> FloatArray:
    """Minimize ``F_vex(w) + g'w``; never returns a point worse than ``warm``.

    The one-sided penalty ``sigma (w'Gw - 1)_+`` is written as
    ``max_{0 <= lam <= sigma} lam (w'Gw - 1)``. For fixed ``lam`` the problem
    is a strongly convex hinge QP solved exactly by :func:`hinge_qp`; the
    optimal ``lam`` is found by a scalar root search on ``w_lam'G w_lam = 1``
    (the dual function is concave in ``lam`` with that derivative).
    """
    g = np.asarray(g, dtype=np.float64)
    warm = np.asarray(warm, dtype=np.float64)
    d = inst.dim
    A, counts = inst.hinge_terms
    weights = inst.c2 * counts
    H0 = np.eye(d) + inst.c1 * inst.S
    G = inst.G
    state = {"w": warm}

    def solve_at(lam: float) -> FloatArray:
        w = hinge_qp(H0 + 2.0 * lam * G, g, A, weights, state["w"])
        state["w"] = w
        return w

    w = solve_at(0.0)
    if inst.sigma > 0 and w @ G @ w > 1.0:
        w_hi = solve_at(inst.sigma)
        if w_hi @ G @ w_hi >= 1.0:
            w = w_hi
        else:

            def gap(lam: float) -> float:
                wl = solve_at(lam)
                q = float(wl @ G @ wl)
                return 1e300 if q <= 0.0 else 1.0 / np.sqrt(q) - 1.0

            lam = brentq(gap, 0.0, inst.sigma, xtol=1e-14 * inst.sigma, rtol=1e-14, maxiter=200)
            w = solve_at(lam)
    if surrogate_objective(w, g, inst) > surrogate_objective(warm, g, inst):
        return warm.copy()
    return w


def solve_column(
    inst: SubproblemInstance, w0: Optional[ArrayLike] = None
) -> tuple[FloatArray, CccpTrace]:
    """Concave-convex iteration for one projection column.

    Starts from the smallest-eigenvalue eigenvector of the within-cluster
    scatter unless ``w0`` is given, and stops when two successive iterates
    are within ``tol_cccp`` or after ``max_cccp_iters`` steps.
    """
    w = smallest_eigenvector(inst.S) if w0 is None else np.asarray(w0, dtype=np.float64)
    trace = CccpTrace()

    def record(v: FloatArray) -> None:
        viol = abs(float(v @ inst.G @ v) - 1.0)
        trace.iterates.append((v.copy(), penalty_objective(v, inst), viol))

    record(w)
    for t in range(1, inst.max_cccp_iters + 1):
        g = concave_subgradient(w, inst)
        w_new = solve_convex_subproblem(g, w, inst)
        record(w_new)
        trace.iterations = t
        moved = float(np.linalg.norm(w_new - w))
        w = w_new
        if moved <= inst.tol_cccp:
            trace.converged = True
            break
    if not trace.converged:
        log.debug("CCCP stopped at the iteration cap (%d)", inst.max_cccp_iters)
    return w, trace
