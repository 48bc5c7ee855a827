"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np


def surrogate_value(w, g, A, G, S, c1, c2, sigma):
    """F_vex(w) + g'w written out term by term (w may be a batch of rows)."""
    w = np.atleast_2d(w)
    z = w @ A
    q = np.einsum("bi,ij,bj->b", w, G, w)
    return (
        0.5 * np.sum(w**2, axis=1)
        + 0.5 * c1 * np.einsum("bi,ij,bj->b", w, S, w)
        + c2 * np.sum(np.maximum(np.abs(z) - 1.0, 0.0), axis=1)
        + sigma * np.maximum(q - 1.0, 0.0)
        + w @ g
    )


def strong_convexity(S, c1):
    """Modulus of the quadratic part ``I + c1 S``."""
    return float(np.linalg.eigvalsh(np.eye(S.shape[0]) + c1 * S)[0])


def projected_subgradient(g, A, G, S, c1, c2, sigma, iters=100_000, w0=None):
    """Minimize F_vex(w) + g'w by projected subgradient steps 1/(mu (t+1)).

    The objective is mu-strongly convex (mu from ``I + c1 S``) and its minimizer lies in the ball of
    radius 2||g|| (every other term is nonnegative and vanishes at 0), so the
    iterates are projected onto that ball. Returns the best value seen.
    """
    d = A.shape[0]
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=float)
    radius = 2.0 * np.linalg.norm(g) + 1e-12
    mod = strong_convexity(S, c1)
    best = float(surrogate_value(w, g, A, G, S, c1, c2, sigma)[0])
    best_w = w.copy()
    for t in range(iters):
        z = A.T @ w
        q = w @ G @ w
        sub = (
            w
            + c1 * (S @ w)
            + c2 * (A @ (np.sign(z) * (np.abs(z) > 1.0)))
            + (2.0 * sigma * (G @ w) if q > 1.0 else 0.0)
            + g
        )
        w = w - sub / (mod * (t + 1.0))
        nrm = np.linalg.norm(w)
        if nrm > radius:
            w *= radius / nrm
        val = float(surrogate_value(w, g, A, G, S, c1, c2, sigma)[0])
        if val < best:
            best, best_w = val, w.copy()
    return best, best_w


def batched_projected_subgradient(problems, iters=100_000):
    """Same scheme run on many small problems at once (zero-padded).

    Padding rows/columns with zeros adds only ``w_pad^2 / 2`` and constant
    hinge terms, so the padded coordinates stay at zero.
    """
    B = len(problems)
    d = max(p["A"].shape[0] for p in problems)
    M = max(p["A"].shape[1] for p in problems)
    A = np.zeros((B, d, M)); G = np.zeros((B, d, d)); S = np.zeros((B, d, d)); g = np.zeros((B, d))
    c1 = np.zeros(B); c2 = np.zeros(B); sig = np.zeros(B); mod = np.ones(B)
    for b, p in enumerate(problems):
        n, m = p["A"].shape
        A[b, :n, :m] = p["A"]; G[b, :n, :n] = p["G"]; S[b, :n, :n] = p["S"]; g[b, :n] = p["g"]
        c1[b], c2[b], sig[b] = p["c1"], p["c2"], p["sigma"]
        mod[b] = strong_convexity(p["S"], p["c1"])
    radius = 2.0 * np.linalg.norm(g, axis=1) + 1e-12

    def value(w):
        z = np.einsum("bd,bdm->bm", w, A)
        q = np.einsum("bi,bij,bj->b", w, G, w)
        return (
            0.5 * np.sum(w**2, axis=1)
            + 0.5 * c1 * np.einsum("bi,bij,bj->b", w, S, w)
            + c2 * np.sum(np.maximum(np.abs(z) - 1.0, 0.0) * (np.abs(A).sum(axis=1) > 0), axis=1)
            + sig * np.maximum(q - 1.0, 0.0)
            + np.sum(w * g, axis=1)
        )

    w = np.zeros((B, d))
    best = value(w)
    for t in range(iters):
        z = np.einsum("bd,bdm->bm", w, A)
        q = np.einsum("bi,bij,bj->b", w, G, w)
        sub = (
            w
            + c1[:, None] * np.einsum("bij,bj->bi", S, w)
            + c2[:, None] * np.einsum("bdm,bm->bd", A, np.sign(z) * (np.abs(z) > 1.0))
            + (2.0 * sig * (q > 1.0))[:, None] * np.einsum("bij,bj->bi", G, w)
            + g
        )
        w = w - sub / (mod[:, None] * (t + 1.0))
        nrm = np.linalg.norm(w, axis=1)
        scale = np.where(nrm > radius, radius / np.maximum(nrm, 1e-300), 1.0)
        w *= scale[:, None]
        best = np.minimum(best, value(w))
    return best


def random_subproblem_data(rng, sigma_choices=(1.0, 10.0, 100.0)):
    """Arrays and weights of a random column subproblem built like a real one.

    Own-cluster samples give the scatter ``S``; other-cluster samples shifted
    by the own center give ``A``; ``G`` is the Gram matrix of all samples.
    """
    n = int(rng.integers(2, 6))
    M = int(rng.integers(3, 11))
    m = M + int(rng.integers(2, 8))
    X = rng.normal(size=(n, m)) * rng.uniform(0.2, 1.5)
    own = X[:, M:]
    center = own.mean(axis=1, keepdims=True)
    A = X[:, :M] - center
    S = (own - center) @ (own - center).T
    G = X @ X.T
    c1, c2 = (float(v) for v in 2.0 ** rng.integers(-3, 4, size=2))
    sigma = float(rng.choice(sigma_choices))
    return dict(A=A, G=G, S=S, c1=c1, c2=c2, sigma=sigma)


def penalty_literal(w, A, G, S, c1, c2, sigma):
    """Penalized column objective, one loop iteration per hinge."""
    total = 0.5 * sum(x * x for x in w)
    total += 0.5 * c1 * float(np.dot(w, S @ w))
    for j in range(A.shape[1]):
        total += c2 * max(1.0 - abs(float(np.dot(w, A[:, j]))), 0.0)
    total += 0.5 * sigma * abs(float(np.dot(w, G @ w)) - 1.0)
    return total


def random_unit(rng, d, count):
    v = rng.normal(size=(count, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_orthonormal(rng, d, p, count):
    return [np.linalg.qr(rng.normal(size=(d, p)))[0] for _ in range(count)]


def baseline_probe_values(method, X, members, others, rng, *, c1=1.0, c2=1.0, p_flat=1, probes=1000):
    """Objective values of random feasible parameters, written out directly."""
    Xin, Xout = X[:, members], X[:, others]
    d = X.shape[0]
    mean = Xin.mean(axis=1)
    scale = float(np.std(X)) + 1.0
    vals = np.empty(probes)
    if method in ("kpc", "kppc", "lkppc"):
        W = random_unit(rng, d, probes)
        b = -(W @ mean)
        if method != "kpc":
            b = b + scale * rng.normal(size=probes)
        for t in range(probes):
            r_in = W[t] @ Xin + b[t]
            v = np.sum(r_in**2)
            if method != "kpc":
                v -= c1 * np.sum((W[t] @ Xout + b[t]) ** 2)
            if method == "lkppc":
                nu = mean + scale * rng.normal(size=d)
                v += c2 * np.sum((Xin - nu[:, None]) ** 2)
            vals[t] = v
        return vals
    for t, W in enumerate(random_orthonormal(rng, d, p_flat, probes)):
        if method == "kfc":
            gamma = W.T @ mean + scale * rng.normal(size=p_flat)
            vals[t] = np.sum((W.T @ Xin - gamma[:, None]) ** 2)
        else:
            gamma = mean + scale * rng.normal(size=d)
            D = Xin - gamma[:, None]
            vals[t] = np.sum((W.T @ D) ** 2) + c1 * np.sum(D**2)
    return vals


def pair_counting_ari(a, b) -> float:
    """Adjusted Rand index from explicit pair enumeration."""
    m = len(a)
    pairs = list(itertools.combinations(range(m), 2))
    same_a = np.array([a[i] == a[j] for i, j in pairs])
    same_b = np.array([b[i] == b[j] for i, j in pairs])
    index = float(np.sum(same_a & same_b))
    n_pairs = len(pairs)
    expected = same_a.sum() * same_b.sum() / n_pairs
    maximum = 0.5 * (same_a.sum() + same_b.sum())
    if maximum == expected:
        return 1.0
    return (index - expected) / (maximum - expected)


def entropy_nmi(a, b) -> float:
    """NMI with arithmetic-mean normalization from the entropy formulas."""
    m = len(a)
    pa = {x: a.count(x) / m for x in set(a)}
    pb = {y: b.count(y) / m for y in set(b)}
    pab = {}
    for x, y in zip(a, b):
        pab[(x, y)] = pab.get((x, y), 0) + 1 / m
    mi = sum(p * math.log(p / (pa[x] * pb[y])) for (x, y), p in pab.items())
    ha = -sum(p * math.log(p) for p in pa.values())
    hb = -sum(p * math.log(p) for p in pb.values())
    if ha == 0 and hb == 0:
        return 1.0
    if ha == 0 or hb == 0:
        return 0.0
    return mi / (0.5 * (ha + hb))
