import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from outagree.graph import (
    NetworkGraph,
    build_incidence,
    centering,
    comm_laplacian,
    cycle_space_dim,
    extract_spanning_tree,
    kron_identity,
    moore_penrose,
    weighted_laplacian,
)

from conftest import FIG2_Q, connected_graphs


def penrose_residuals(M, X):
    f = lambda a: np.linalg.norm(a)  # noqa: E731
    return (
        f(M @ X @ M - M) / max(f(M), 1e-300),
        f(X @ M @ X - X) / max(f(X), 1e-300),
        f((M @ X).T - M @ X) / max(f(M @ X), 1e-300),
        f((X @ M).T - X @ M) / max(f(X @ M), 1e-300),
    )


class TestConstruction:
    def test_rejects_self_loop(self):
        with pytest.raises(ValueError):
            NetworkGraph(2, [(0, 0), (0, 1)])

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            NetworkGraph(2, [(0, 2)])

    def test_rejects_disconnected(self):
        with pytest.raises(ValueError):
            NetworkGraph(4, [(0, 1), (2, 3)])

    def test_m(self, fig2):
        assert fig2.m == 5


class TestIncidence:
    def test_single_edge(self):
        assert build_incidence(NetworkGraph(2, [(0, 1)])).tolist() == [[1.0], [-1.0]]

    def test_triangle(self, triangle):
        assert build_incidence(triangle).tolist() == [[1, 0, 1], [-1, 1, 0], [0, -1, -1]]

    def test_fig2_columns(self, fig2):
        B = build_incidence(fig2)
        assert B.shape == (4, 5)
        assert np.all(B.sum(axis=0) == 0)
        assert B[:, 3].tolist() == [0, 1, 0, -1]

    @given(connected_graphs())
    def test_column_sums_exactly_zero(self, g):
        assert np.all(np.ones(g.n) @ g.incidence == 0)


class TestCycleSpace:
    def test_examples(self, fig2, triangle):
        assert cycle_space_dim(NetworkGraph(2, [(0, 1)])) == 0
        assert cycle_space_dim(triangle) == 1
        assert cycle_space_dim(fig2) == 2

    @given(connected_graphs())
    def test_matches_numerical_nullspace(self, g):
        rank = np.linalg.matrix_rank(g.incidence)
        assert g.m - rank == cycle_space_dim(g)
        assert g.is_acyclic() == (cycle_space_dim(g) == 0)


class TestSpanningTree:
    def test_tree_input_returns_all_edges(self):
        g = NetworkGraph(4, [(0, 1), (1, 2), (3, 1)])
        assert extract_spanning_tree(g)[0] == [0, 1, 2]

    def test_triangle(self, triangle):
        idx, BT = extract_spanning_tree(triangle)
        assert len(idx) == 2
        M = BT.T @ BT
        assert np.allclose(np.diag(M), 2) and abs(M[0, 1]) == 1
        assert abs(np.linalg.det(M)) > 0

    def test_fig2_bfs(self, fig2):
        idx, BT = extract_spanning_tree(fig2)
        assert idx == [0, 1, 3]
        assert abs(np.linalg.det(BT.T @ BT)) > 1e-9

    @given(connected_graphs())
    def test_is_spanning(self, g):
        idx, BT = extract_spanning_tree(g)
        assert len(idx) == g.n - 1
        assert np.linalg.matrix_rank(BT) == g.n - 1


class TestWeightedLaplacian:
    def test_unit_and_half(self):
        B = np.array([[1.0], [-1.0]])
        assert np.allclose(weighted_laplacian(B, [1.0]), [[1, -1], [-1, 1]])
        assert np.allclose(weighted_laplacian(B, np.diag([2.0])), [[0.5, -0.5], [-0.5, 0.5]])

    def test_fig2(self, fig2):
        L = weighted_laplacian(fig2.incidence, FIG2_Q)
        assert np.allclose(L, L.T)
        assert np.abs(L.sum(axis=1)).max() < 1e-15
        ev = np.linalg.eigvalsh(L)
        assert ev.min() >= -1e-12 and np.sum(ev > 1e-10) == 3

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_rejects_nonpositive_weight(self, fig2, bad):
        with pytest.raises(ValueError):
            weighted_laplacian(fig2.incidence, [1, 1, bad, 1, 1])


class TestPseudoinverse:
    def test_identity(self):
        assert np.allclose(moore_penrose(np.eye(3)), np.eye(3))

    def test_path_laplacian(self):
        X = moore_penrose(np.array([[1.0, -1.0], [-1.0, 1.0]]))
        assert np.allclose(X, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-15)

    def test_zero(self):
        assert np.all(moore_penrose(np.zeros((2, 3))) == 0)

    def test_fig2_laplacian(self, fig2):
        L = weighted_laplacian(fig2.incidence, FIG2_Q)
        X = moore_penrose(L)
        assert max(penrose_residuals(L, X)) < 1e-10
        assert np.abs(X @ np.ones(4)).max() < 1e-12
        assert np.abs(X @ L - centering(4)).max() < 1e-10

    @given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 6), st.integers(0, 10_000))
    @settings(max_examples=60)
    def test_penrose_identities(self, r, c, k, seed):
        rng = np.random.default_rng(seed)
        k = min(k, r, c)
        M = rng.normal(size=(r, k)) @ rng.normal(size=(k, c)) if k else np.zeros((r, c))
        X = moore_penrose(M)
        if k:
            assert max(penrose_residuals(M, X)) < 1e-10

    def test_agrees_with_numpy(self):
        M = np.random.default_rng(3).normal(size=(5, 3))
        assert np.allclose(moore_penrose(M), np.linalg.pinv(M))


class TestKron:
    def test_p1_identity(self):
        M = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(kron_identity(M, 1), M)

    def test_block_layout(self):
        K = kron_identity(np.array([[1.0], [-1.0]]), 2)
        assert K.tolist() == [[1, 0], [0, 1], [-1, 0], [0, -1]]

    def test_mixed_product(self):
        B = np.random.default_rng(0).normal(size=(4, 6))
        K = kron_identity(B, 3)
        assert np.allclose(K.T @ K, kron_identity(B.T @ B, 3))

    def test_rejects_p0(self):
        with pytest.raises(ValueError):
            kron_identity(np.eye(2), 0)


class TestCommLaplacian:
    def test_single_edge(self):
        assert comm_laplacian(NetworkGraph(2, [(0, 1)])).tolist() == [[0.0]]

    def test_path(self):
        assert comm_laplacian(NetworkGraph(3, [(0, 1), (1, 2)])).tolist() == [[1, -1], [-1, 1]]

    def test_fig2_adjacency(self, fig2):
        L = comm_laplacian(fig2)
        for k, (a, b) in enumerate(fig2.edges):
            for j, (c, d) in enumerate(fig2.edges):
                if k != j:
                    assert (L[k, j] == -1) == bool({a, b} & {c, d})
        assert np.all(L.sum(axis=1) == 0) and np.linalg.eigvalsh(L).min() > -1e-12
