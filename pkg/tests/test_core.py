from __future__ import annotations

import numpy as np
import pytest

from mfpc.baselines import nng_init
from mfpc.cccp import SubproblemInstance, solve_column
from mfpc.core import (
    assign_labels,
    build_kernel_instance,
    decision_values,
    fit,
    kernel_p_grid,
    linear_p_grid,
    overall_objective,
    refill_empty_clusters,
    solve_flat,
    solve_flat_detailed,
)
from mfpc.errors import EmptyClusterUnrecoverable, ValidationError
from mfpc.generators import generate
from mfpc.linalg import kernel_map, scatter_matrix
from mfpc.metrics import ari
from mfpc.types import ClusterState, FlatModel, KernelSpec, SolverConfig, orthogonality_defect


def random_model(rng, k, d, p):
    W = np.stack([np.linalg.qr(rng.normal(size=(d, p)))[0] * rng.uniform(0.2, 2, size=p) for _ in range(k)])
    return FlatModel(W, rng.normal(size=(k, p)))


def three_lines(rng, per=30):
    t = rng.uniform(-1, 1, size=(3, per))
    X = np.hstack([
        np.vstack([t[0], 0.01 * rng.normal(size=per), 2 + 0.01 * rng.normal(size=per)]),
        np.vstack([0.01 * rng.normal(size=per), t[1], -2 + 0.01 * rng.normal(size=per)]),
        np.vstack([3 + 0.01 * rng.normal(size=per), 0.01 * rng.normal(size=per), t[2]]),
    ])
    return X, np.repeat(np.arange(3), per)


# ---------------------------------------------------------------- grids and kernel instance


def test_p_grids():
    assert linear_p_grid(4) == [1, 2, 3]
    assert linear_p_grid(60) == list(range(1, 11))
    assert kernel_p_grid() == [1, 2]


def test_kernel_instance_full_when_reduced_size_covers_m(rng):
    X = rng.normal(size=(3, 20))
    F, B = build_kernel_instance(X, KernelSpec.gaussian(1.0, 20), seed=0)
    np.testing.assert_array_equal(B, X)
    np.testing.assert_allclose(F, kernel_map(X, X, KernelSpec.gaussian(1.0)))


def test_kernel_instance_single_basis_sample(rng):
    X = rng.normal(size=(3, 20))
    F, B = build_kernel_instance(X, KernelSpec.gaussian(1.0, 1), seed=0)
    assert F.shape == (1, 20) and B.shape == (3, 1)
    assert np.all((F > 0) & (F <= 1))


def test_kernel_instance_deterministic_subset(rng):
    X = rng.normal(size=(2, 200))
    spec = KernelSpec.gaussian(0.5, 50)
    _, B1 = build_kernel_instance(X, spec, seed=9)
    _, B2 = build_kernel_instance(X, spec, seed=9)
    np.testing.assert_array_equal(B1, B2)
    assert B1.shape == (2, 50)


def test_kernel_instance_rejects_linear(rng):
    with pytest.raises(ValidationError):
        build_kernel_instance(rng.normal(size=(2, 5)), KernelSpec(), 0)


# ---------------------------------------------------------------- flats


def test_single_column_flat_equals_column_solver(rng):
    X, y = three_lines(rng)
    cfg = SolverConfig(c1=2.0, c2=0.5)
    members = np.flatnonzero(y == 1)
    W = solve_flat(X, members, cfg)
    mask = y == 1
    c = X[:, mask].mean(axis=1)
    inst = SubproblemInstance.from_config(X[:, ~mask] - c[:, None], X @ X.T, scatter_matrix(X, members, c), cfg)
    w, _ = solve_column(inst)
    np.testing.assert_allclose(W[:, 0], w, atol=1e-12)


def test_flat_columns_orthogonal(rng):
    for _ in range(5):
        X = rng.normal(size=(6, 40))
        W = solve_flat(X, np.arange(15), SolverConfig(p=4, c1=rng.uniform(0.5, 8), c2=rng.uniform(0.5, 8)))
        assert orthogonality_defect(W) <= 1e-6


def test_haws_line_flat_is_orthogonal_to_line():
    D = generate("haws", 0)
    line = np.flatnonzero(D.labels == 0)
    assert np.allclose(D.features[:2, line], 0)
    for c1 in (1.0, 4.0):
        W = solve_flat(D.features, line, SolverConfig(p=2, c1=c1))
        cosines = np.abs(W[2]) / np.linalg.norm(W, axis=0)
        assert np.all(cosines <= 5e-2)


def test_flat_reports_unit_ball_defects(rng):
    X, y = three_lines(rng)
    sol = solve_flat_detailed(X, np.flatnonzero(y == 0), SolverConfig(p=2))
    assert len(sol.traces) == len(sol.unit_ball_defects) == 2
    assert min(sol.unit_ball_defects) >= 0.0
    assert sol.unit_ball_defects[0] == pytest.approx(abs(np.sum((sol.W[:, 0] @ X) ** 2) - 1))


def test_flat_rejects_p_at_dimension(rng):
    with pytest.raises(ValidationError):
        solve_flat(rng.normal(size=(2, 10)), np.arange(5), SolverConfig(p=2))


# ---------------------------------------------------------------- assignment


def test_sample_at_center_gets_its_cluster(rng):
    model = random_model(rng, 3, 4, 2)
    # a point projecting exactly onto cluster 2's center
    W = model.W[2]
    x = W @ np.linalg.solve(W.T @ W, model.center_projection[2])
    dist = decision_values(x[:, None], model)
    assert dist[2, 0] < 1e-12
    if np.all(dist[:2, 0] > 0):
        assert assign_labels(x[:, None], model).labels[0] == 2


def test_identical_flats_tie_to_smallest_index(rng):
    W = np.linalg.qr(rng.normal(size=(3, 1)))[0]
    model = FlatModel(np.stack([W, W, W]), np.zeros((3, 1)))
    assert np.all(assign_labels(rng.normal(size=(3, 25)), model).labels == 0)


def test_assign_matches_brute_force(rng):
    for _ in range(20):
        model = random_model(rng, 4, 5, 2)
        X = rng.normal(size=(5, 50))
        got = assign_labels(X, model).labels
        for j in range(50):
            dists = [np.linalg.norm(model.W[i].T @ X[:, j] - model.center_projection[i]) for i in range(4)]
            assert got[j] == int(np.argmin(dists))


# ---------------------------------------------------------------- overall objective


def test_objective_with_zero_flats_counts_outside_samples(rng):
    X = rng.normal(size=(3, 12))
    y = np.array([0] * 5 + [1] * 4 + [2] * 3)
    cfg = SolverConfig(c2=2.5)
    model = FlatModel(np.zeros((3, 3, 1)), np.zeros((3, 1)))
    assert overall_objective(X, ClusterState(y, 3), model, cfg) == pytest.approx(2.5 * (7 + 8 + 9))


def test_objective_single_cluster(rng):
    X = rng.normal(size=(3, 10))
    W = np.linalg.qr(rng.normal(size=(3, 2)))[0] * 0.7
    cfg = SolverConfig(c1=3.0)
    xbar = X.mean(axis=1, keepdims=True)
    expected = 0.5 * np.sum(W**2) + 1.5 * np.sum((W.T @ (X - xbar)) ** 2)
    model = FlatModel(W[None], (W.T @ xbar).T)
    assert overall_objective(X, ClusterState(np.zeros(10, int), 1), model, cfg) == pytest.approx(expected, abs=1e-12)


def test_objective_matches_transcription(rng):
    for _ in range(20):
        k, d, p, m = 3, 4, 2, 18
        X = rng.normal(size=(d, m))
        y = np.r_[np.arange(k), rng.integers(0, k, size=m - k)]
        model = random_model(rng, k, d, p)
        cfg = SolverConfig(c1=rng.uniform(0.1, 5), c2=rng.uniform(0.1, 5))
        total = 0.0
        for i in range(k):
            c = X[:, y == i].mean(axis=1)
            W = model.W[i]
            total += 0.5 * np.sum(W * W)
            for j in range(m):
                r = np.linalg.norm(W.T @ (X[:, j] - c))
                total += 0.5 * cfg.c1 * r * r if y[j] == i else cfg.c2 * max(0.0, 1.0 - r)
        got = overall_objective(X, ClusterState(y, k), model, cfg)
        assert got == pytest.approx(total, abs=1e-12 * max(1.0, abs(total)))


# ---------------------------------------------------------------- empty-cluster refill


def test_refill_moves_most_ambiguous_sample():
    labels = np.array([0, 0, 0, 2, 2])
    dist = np.array([
        [0.0, 0.1, 0.2, 5.0, 5.0],
        [3.0, 0.3, 9.0, 5.0, 0.1],
        [9.0, 9.0, 9.0, 0.0, 1.0],
    ])
    new, refilled = refill_empty_clusters(labels, dist, 3)
    # gaps: 3.0, 0.2, 8.8, 5.0, -0.9 -> sample 4
    assert refilled == [1] and new.tolist() == [0, 0, 0, 2, 1]


def test_refill_fails_when_every_cluster_is_a_singleton():
    with pytest.raises(EmptyClusterUnrecoverable):
        refill_empty_clusters(np.array([0, 1]), np.zeros((3, 2)), 3)


# ---------------------------------------------------------------- fit


def test_fit_two_samples():
    X = np.array([[0.0, 1.0], [0.0, 0.0]])
    res = fit(X, 2, SolverConfig(p=1), ClusterState(np.array([0, 1]), 2))
    assert res.outer_iterations <= 2
    assert res.state.labels.tolist() == [0, 1]


def test_fit_labels_agree_with_model(rng):
    X, y = three_lines(rng)
    res = fit(X, 3, SolverConfig(p=1, c1=4.0), ClusterState(rng.permutation(y), 3))
    np.testing.assert_array_equal(res.state.labels, assign_labels(X, res.model).labels)
    for i in range(3):
        assert orthogonality_defect(res.model.W[i]) <= 1e-6
    assert len(res.overall_objective_history) == res.outer_iterations


def test_fit_is_deterministic(rng):
    X, y = three_lines(rng)
    init = ClusterState(rng.permutation(y), 3)
    a = fit(X, 3, SolverConfig(p=2), init)
    b = fit(X, 3, SolverConfig(p=2), init)
    np.testing.assert_array_equal(a.model.W, b.model.W)
    assert a.overall_objective_history == b.overall_objective_history


def test_stop_on_increase_gives_monotone_history(rng):
    for seed in range(5):
        r = np.random.default_rng(seed)
        X, y = three_lines(r)
        res = fit(X, 3, SolverConfig(p=1), ClusterState(r.permutation(y), 3), stop_on_increase=True)
        h = np.array(res.overall_objective_history)
        assert np.all(np.diff(h) <= 1e-8)


def test_fit_recovers_three_lines(rng):
    X, y = three_lines(rng)
    res = fit(X, 3, SolverConfig(p=2, c1=4.0), ClusterState(y, 3))
    assert ari(y, res.state.labels) == 1.0


def test_fit_validates_inputs(rng):
    X = rng.normal(size=(3, 6))
    with pytest.raises(ValidationError):
        fit(X, 1, SolverConfig(), ClusterState(np.zeros(6, int), 1))
    with pytest.raises(ValidationError):
        fit(X, 2, SolverConfig(), ClusterState(np.zeros(6, int), 2))
    with pytest.raises(ValidationError):
        fit(X, 3, SolverConfig(), ClusterState(np.array([0, 1] * 3), 2))


def test_rank_deficient_cluster_pads_zero_columns():
    t = np.r_[np.linspace(-2, -1, 5), np.linspace(1, 2, 5)]
    X = np.vstack([t, 2 * t, np.zeros(10)])
    y = np.r_[np.zeros(5, int), np.ones(5, int)]
    res = fit(X, 2, SolverConfig(p=2), ClusterState(y, 2))
    assert np.all(res.model.W[:, :, 1] == 0.0)
    assert np.all(np.linalg.norm(res.model.W[:, :, 0], axis=1) > 0)


@pytest.mark.slow
def test_haws_from_ground_truth_reaches_perfect_ari():
    """Best parameters of a full linear sweep from the true labels."""
    D = generate("haws", 0)
    res = fit(D, 3, SolverConfig(c1=128.0, c2=64.0, p=2), ClusterState(D.labels, 3))
    score = ari(D.labels, res.state.labels)
    assert score == 1.0, f"ARI {score:.4f}"


@pytest.mark.slow
def test_spiral_kernel_best_parameters_reach_perfect_ari():
    D = generate("spiral", 0)
    cfg = SolverConfig(c1=16.0, c2=2.0**-8, p=2, kernel=KernelSpec.gaussian(4.0))
    res = fit(D, 3, cfg, nng_init(D.features, 3))
    score = ari(D.labels, res.state.labels)
    assert score == 1.0, f"ARI {score:.4f}"
