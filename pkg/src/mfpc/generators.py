"""Synthetic cross-manifold datasets.

Every generator is deterministic in its seed and returns samples in class
order with 0-based labels. Curve and segment parameters are drawn one per
equal-width bin, which keeps the density uniform without leaving long gaps. Manifold samples are exact (no noise), so each
class satisfies its defining equation to rounding error.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import UnknownDataset
from .types import Dataset


def _sphere(rng: np.random.Generator, count: int, center, radii) -> np.ndarray:
    g = rng.standard_normal((3, count))
    g /= np.linalg.norm(g, axis=0)
    return np.asarray(radii, dtype=float)[:, None] * g + np.asarray(center, dtype=float)[:, None]


def _jittered(rng: np.random.Generator, lo: float, hi: float, count: int) -> np.ndarray:
    """One uniform draw in each of ``count`` equal bins of ``[lo, hi]``."""
    edges = np.linspace(lo, hi, count + 1)
    return edges[:-1] + (edges[1] - edges[0]) * rng.uniform(size=count)


def _stack(parts: list[np.ndarray]) -> Dataset:
    labels = np.concatenate([np.full(p.shape[1], i) for i, p in enumerate(parts)])
    return Dataset(np.hstack(parts), labels)


def gen_haws(seed: int = 0) -> Dataset:
    """A segment on the z-axis from -2 to 2 through two unit spheres.

    The spheres are centered at ``(0, 0, -1)`` and ``(0, 0, 1)``, so both touch
    the origin and the segment crosses each of them twice. Sizes 123/100/100.
    """
    rng = np.random.default_rng(seed)
    z = _jittered(rng, -2.0, 2.0, 123)
    line = np.vstack([np.zeros_like(z), np.zeros_like(z), z])
    return _stack([line, _sphere(rng, 100, (0, 0, -1), (1, 1, 1)), _sphere(rng, 100, (0, 0, 1), (1, 1, 1))])


def gen_lpe(seed: int = 0) -> Dataset:
    """A z-axis segment crossed by a square patch and by an ellipsoid.

    The segment runs over ``z`` in ``[-2, 2]``. The patch is
    ``|x|, |y| <= 2`` at ``z = -1``; the ellipsoid is centered at
    ``(0, 0, 1)`` with semi-axes ``(1.5, 1, 0.75)``, so the segment pierces it
    at its poles while it stays clear of the patch. Ellipsoid points are
    scaled normalized Gaussians. 100 samples each.
    """
    rng = np.random.default_rng(seed)
    z = _jittered(rng, -2.0, 2.0, 100)
    line = np.vstack([np.zeros_like(z), np.zeros_like(z), z])
    xy = rng.uniform(-2.0, 2.0, (2, 100))
    plane = np.vstack([xy, np.full(100, -1.0)])
    return _stack([line, plane, _sphere(rng, 100, (0, 0, 1), (1.5, 1.0, 0.75))])


def gen_sine2(seed: int = 0) -> Dataset:
    """``y = sin(x)`` and ``y = -sin(x)`` on ``[0, 2 pi]``, 61 samples each."""
    rng = np.random.default_rng(seed)
    parts = []
    for sign in (1.0, -1.0):
        x = _jittered(rng, 0.0, 2.0 * np.pi, 61)
        parts.append(np.vstack([x, sign * np.sin(x)]))
    return _stack(parts)


def gen_spiral(seed: int = 0) -> Dataset:
    """Two interleaved unit-radius helices and their common axis.

    Helix points are ``(cos t, sin t, t / pi)`` and the same shifted by half a
    turn, ``t`` in ``[0, 4 pi]``; the axis runs over ``z`` in ``[0, 4]``.
    Sizes 41/41/40.
    """
    rng = np.random.default_rng(seed)
    parts = []
    for phase in (0.0, np.pi):
        t = _jittered(rng, 0.0, 4.0 * np.pi, 41)
        parts.append(np.vstack([np.cos(t + phase), np.sin(t + phase), t / np.pi]))
    z = _jittered(rng, 0.0, 4.0, 40)
    parts.append(np.vstack([np.zeros_like(z), np.zeros_like(z), z]))
    return _stack(parts)


GENERATORS: dict[str, Callable[[int], Dataset]] = {
    "haws": gen_haws,
    "lpe": gen_lpe,
    "sine2": gen_sine2,
    "spiral": gen_spiral,
}


def generate(name: str, seed: int = 0) -> Dataset:
    try:
        gen = GENERATORS[name.lower()]
    except KeyError:
        raise UnknownDataset(
            f"unknown dataset {name!r}; choose one of {', '.join(GENERATORS)}"
        ) from None
    return gen(seed)
