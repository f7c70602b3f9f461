import itertools
import warnings

import numpy as np
import pytest

from phyhsl.errors import ConfigError
from phyhsl.temporal_graph import (
    ConvergenceWarning,
    StaticGraph,
    build_temporal_adjacency,
    normalized_laplacian,
    power_iteration,
    power_iteration_lambda_max,
)


def random_graph(n, p, seed, weighted=True):
    rng = np.random.default_rng(seed)
    edges = []
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() < p:
            edges.append((i, j, float(rng.uniform(0.1, 2.0)) if weighted else 1.0))
    return StaticGraph(n, tuple(edges))


def brute_force_A(g, T):
    """Direct transcription of the piecewise temporal adjacency."""
    W = g.adjacency()
    n = g.n_nodes
    A = np.zeros((n * T, n * T))
    for i, t, j, t2 in itertools.product(range(n), range(T), range(n), range(T)):
        if t2 == t:
            A[i * T + t, j * T + t2] = W[i, j]
        elif i == j and t2 == t + 1:
            A[i * T + t, j * T + t2] = 1.0
    return A


# -- StaticGraph ------------------------------------------------------------------

@pytest.mark.parametrize("edges", [((0, 0, 1.0),), ((0, 5, 1.0),), ((0, 1, -1.0),),
                                   ((0, 1, float("nan")),), ((0, 1, 1.0), (1, 0, 2.0))])
def test_static_graph_rejects_invalid(edges):
    with pytest.raises(ConfigError):
        StaticGraph(3, edges)


def test_csv_roundtrip(tmp_path):
    g = random_graph(7, 0.5, 1)
    g.to_csv(tmp_path / "e.csv")
    assert StaticGraph.from_csv(tmp_path / "e.csv") == g
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "src,dst,weight"


def test_csv_node_count_inferred_as_max_index_plus_one(tmp_path):
    StaticGraph(9, ((0, 3, 1.0),)).to_csv(tmp_path / "e.csv")
    assert StaticGraph.from_csv(tmp_path / "e.csv").n_nodes == 4
    assert StaticGraph.from_csv(tmp_path / "e.csv", n_nodes=9).n_nodes == 9


# -- temporal adjacency -----------------------------------------------------------

def test_two_node_example():
    tg = build_temporal_adjacency(StaticGraph(2, ((0, 1, 0.5),)), 2)
    assert tg.weight(0, 0, 1, 0) == 0.5
    assert tg.weight(0, 0, 0, 1) == 1.0
    assert tg.weight(0, 0, 1, 1) == 0.0


def test_edgeless_only_temporal_chain():
    tg = build_temporal_adjacency(StaticGraph(4, ()), 3)
    A = tg.dense()
    assert A.sum() == 4 * 2
    for i in range(4):
        assert A[i * 3, i * 3 + 1] == 1 and A[i * 3 + 1, i * 3 + 2] == 1


def test_k4_census_matches_brute_force():
    g = StaticGraph(4, tuple((i, j, 1.0) for i, j in itertools.combinations(range(4), 2)))
    tg = build_temporal_adjacency(g, 2)
    A = tg.dense()
    oracle = brute_force_A(g, 2)
    np.testing.assert_array_equal(A, oracle)
    # 6 undirected edges per step, stored in both directions, plus 4 temporal
    assert tg.n_spatial_arcs == 2 * 2 * 6
    assert tg.n_temporal_edges == 4
    assert np.count_nonzero(A) == 2 * 2 * 6 + 4
    for i, t in itertools.product(range(4), range(2)):
        row = {(j, t2) for (j, t2), _ in tg.out_neighbors(i, t)}
        assert row == {(j, t2) for j in range(4) for t2 in range(2) if oracle[i * 2 + t, j * 2 + t2]}


@pytest.mark.parametrize("seed", range(5))
def test_random_graph_matches_brute_force(seed):
    g = random_graph(6, 0.4, seed)
    T = 4
    tg = build_temporal_adjacency(g, T)
    np.testing.assert_array_equal(tg.dense(), brute_force_A(g, T))
    assert tg.n_temporal_edges == g.n_nodes * (T - 1)
    for t in range(T):
        block = tg.dense()[t::T, t::T]
        np.testing.assert_array_equal(block, block.T)


def test_in_neighbors_are_column_of_A():
    g = random_graph(5, 0.5, 3)
    T = 3
    tg = build_temporal_adjacency(g, T)
    A = tg.dense()
    for i, t in itertools.product(range(5), range(T)):
        got = sorted((j * T + t2, w) for (j, t2), w in tg.in_neighbors(i, t))
        col = A[:, i * T + t]
        assert got == [(k, col[k]) for k in np.nonzero(col)[0]]


def test_permutation_maps_neighbor_lists():
    g = random_graph(7, 0.4, 2)
    perm = np.random.default_rng(0).permutation(7)
    tg, tgp = build_temporal_adjacency(g, 3), build_temporal_adjacency(g.permute(perm), 3)
    for i, t in itertools.product(range(7), range(3)):
        mapped = sorted(((int(perm[j]), t2), w) for (j, t2), w in tg.out_neighbors(i, t))
        assert sorted(tgp.out_neighbors(int(perm[i]), t)) == mapped


def test_build_rejects_T_zero():
    with pytest.raises(ConfigError):
        build_temporal_adjacency(StaticGraph(2, ()), 0)


def test_step_weight_override():
    g = StaticGraph(2, ((0, 1, 1.0),))
    tg = build_temporal_adjacency(g, 2, step_weights=[[1.0, 1.0], [0.0, 0.0]])
    assert tg.weight(0, 1, 1, 1) == 0.0 and tg.weight(0, 0, 1, 0) == 1.0
    with pytest.raises(ConfigError):
        build_temporal_adjacency(g, 2, step_weights=[[1.0, 1.0]])


# -- Laplacian and power iteration ------------------------------------------------

def test_single_edge_laplacian():
    lb = normalized_laplacian(StaticGraph(2, ((0, 1, 1.0),)))
    np.testing.assert_allclose(lb.L, [[1, -1], [-1, 1]], atol=1e-15)
    assert abs(lb.lambda_max - 2.0) < 1e-6
    np.testing.assert_allclose(lb.L_scaled, [[0, -1], [-1, 0]], atol=1e-6)


def test_edgeless_laplacian_fallback():
    with pytest.warns(UserWarning, match="isolated"):
        lb = normalized_laplacian(StaticGraph(3, ()))
    np.testing.assert_array_equal(lb.L, np.zeros((3, 3)))
    assert lb.lambda_max == 2.0
    np.testing.assert_array_equal(lb.L_scaled, -np.eye(3))


def test_isolated_node_row_is_zero():
    with pytest.warns(UserWarning):
        lb = normalized_laplacian(StaticGraph(3, ((0, 1, 1.0),)))
    assert np.all(lb.L[2] == 0) and np.all(lb.L[:, 2] == 0)


@pytest.mark.parametrize("seed", range(6))
def test_laplacian_spectrum_and_lambda_max(seed):
    g = random_graph(10, 0.4, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        lb = normalized_laplacian(g)
    np.testing.assert_allclose(lb.L, lb.L.T, atol=1e-15)
    eig = np.linalg.eigvalsh(lb.L)
    assert eig.min() > -1e-12 and eig.max() < 2 + 1e-12
    assert abs(lb.lambda_max - eig.max()) < 1e-6
    np.testing.assert_allclose(lb.L_scaled, 2 * lb.L / lb.lambda_max - np.eye(10), atol=1e-15)


def test_laplacian_matches_textbook_formula():
    g = random_graph(8, 0.6, 11)
    A = g.adjacency()
    d = A.sum(1)
    assert np.all(d > 0)
    Dm = np.diag(d ** -0.5)
    np.testing.assert_allclose(normalized_laplacian(g).L, np.eye(8) - Dm @ A @ Dm, atol=1e-14)


def test_directed_rejected():
    with pytest.raises(ConfigError):
        normalized_laplacian(StaticGraph(2, ((0, 1, 1.0),), directed=True))


def test_power_iteration_examples():
    assert abs(power_iteration_lambda_max(np.diag([3.0, 1.0, 0.5])) - 3.0) < 1e-9
    assert power_iteration_lambda_max(np.zeros((4, 4))) == 0.0
    path = StaticGraph(5, tuple((i, i + 1, 1.0) for i in range(4)))
    L = np.diag(path.degrees()) - path.adjacency()
    est = power_iteration_lambda_max(L, iters=5000)
    assert abs(est - np.linalg.eigvalsh(L).max()) < 1e-6


def test_power_iteration_non_convergence_warns():
    M = np.diag([1.0, 0.999999, 0.1])
    res = power_iteration(M, iters=3, tol=1e-12)
    assert not res.converged and res.iterations == 3
    with pytest.warns(ConvergenceWarning):
        power_iteration_lambda_max(M, iters=3, tol=1e-12)


def test_laplacian_arrays_read_only():
    lb = normalized_laplacian(StaticGraph(2, ((0, 1, 1.0),)))
    with pytest.raises(ValueError):
        lb.L[0, 0] = 5.0
