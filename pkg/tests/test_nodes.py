import numpy as np
import pytest

from outagree.nodes import (
    DroopNode,
    GradientFlowNode,
    InventoryNode,
    LinearNode,
    incremental_supply_check,
    node_output,
    node_vector_field,
    passivity_certificate,
    simulate_node,
)


def sinusoid_input(rng, dim, k=3):
    amp, freq, phase = rng.normal(size=(k, dim)), rng.uniform(0.2, 3.0, (k, dim)), rng.uniform(0, 6.3, (k, dim))
    return lambda t: np.sum(amp * np.sin(freq * t + phase), axis=0)


class TestVectorFields:
    def test_linear_affine(self):
        nd = LinearNode([[0.0]], [[1.0]], [[1.0]], [[1.0]])
        assert node_vector_field(nd, [0.0], [2.0], [3.0]).tolist() == [5.0]

    def test_inventory_balanced(self):
        assert node_vector_field(InventoryNode([[1.0]]), [3.0], [-1.0], [1.0]).tolist() == [0.0]

    def test_droop_equilibrium(self):
        assert node_vector_field(DroopNode(2.0, 1.0), [0.3], [-1.0], None).tolist() == [0.0]

    def test_gradient(self):
        nd = GradientFlowNode(lambda x: -x, np.eye(2), np.eye(2))
        assert np.allclose(node_vector_field(nd, [1.0, 2.0], [0.5, 0.5], [1.0, 0.0]), [0.5, -1.5])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            node_vector_field(InventoryNode([[1.0, 0.0]]), [0.0], [1.0], [1.0])


class TestOutputs:
    def test_linear_identity_output(self):
        nd = LinearNode(-np.eye(2), np.eye(2), np.zeros((2, 0)), np.eye(2))
        assert node_output(nd, [1.0, -2.0]).tolist() == [1.0, -2.0]

    def test_inventory(self):
        assert node_output(InventoryNode(), [4.2]).tolist() == [4.2]

    def test_droop_needs_rate(self):
        nd = DroopNode(1.0, 0.0)
        assert node_output(nd, [0.0], xdot=np.array([0.5])).tolist() == [0.5]
        with pytest.raises(ValueError):
            node_output(nd, [0.0])

    def test_droop_rejects_nonpositive_gain(self):
        with pytest.raises(ValueError):
            DroopNode(0.0, 1.0)


class TestLinearCertificate:
    def test_lag_certificate(self):
        Q = passivity_certificate(np.array([[-1.0]]), np.array([[2.0]]), np.array([[1.0]]))
        assert Q is not None and Q[0, 0] == pytest.approx(0.5, rel=1e-6)

    def test_mass_spring_damper(self):
        # position/velocity with velocity output; storage is the physical energy
        A = np.array([[0.0, 1.0], [-2.0, -0.5]])
        G = np.array([[0.0], [1.0]])
        C = np.array([[0.0, 1.0]])
        Q = passivity_certificate(A, G, C)
        assert Q is not None
        assert np.allclose(Q @ G, C.T, atol=1e-7)
        assert np.linalg.eigvalsh(A.T @ Q + Q @ A).max() < 1e-7

    def test_non_passive_rejected(self):
        with pytest.raises(ValueError):
            LinearNode([[1.0]], [[1.0]], [[0.0]], [[1.0]], passive=True)

    def test_wrong_sign_output_rejected(self):
        assert passivity_certificate(np.array([[-1.0]]), np.array([[1.0]]), np.array([[-1.0]])) is None

    def test_storage_requires_certificate(self):
        with pytest.raises(ValueError):
            LinearNode([[-1.0]], [[1.0]], [[0.0]], [[1.0]]).storage(np.ones((1, 1)))


class TestGradientChecks:
    def test_rank_deficient_G(self):
        with pytest.raises(ValueError, match="full column rank"):
            GradientFlowNode(lambda x: -x, np.array([[1.0, 1.0], [1.0, 1.0]]), np.zeros((2, 0)))

    def test_P_outside_range(self):
        with pytest.raises(ValueError, match="range"):
            GradientFlowNode(lambda x: -x, np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))

    def test_convex_potential_rejected(self):
        with pytest.raises(ValueError, match="monotone"):
            GradientFlowNode(lambda x: x, np.eye(2), np.zeros((2, 0)), monotonicity_samples=100)


class TestSupplyCheck:
    def test_identical_trajectories(self):
        nd = InventoryNode([[1.0]])
        rng = np.random.default_rng(0)
        u = sinusoid_input(rng, 1)
        a = simulate_node(nd, [0.0], u, lambda t: [np.sin(t)], 0.01, 5.0)
        rep = incremental_supply_check(nd, a, a, 0.01)
        assert rep.passed and np.all(nd.storage(a.x - a.x) == 0)

    def test_gradient_quadratic(self):
        nd = GradientFlowNode(lambda x: -x, np.eye(2), np.zeros((2, 0)))
        rng = np.random.default_rng(1)
        a = simulate_node(nd, rng.normal(size=2), sinusoid_input(rng, 2), None, 1e-3, 5.0)
        b = simulate_node(nd, rng.normal(size=2), sinusoid_input(rng, 2), None, 1e-3, 5.0)
        assert incremental_supply_check(nd, a, b, 1e-3).passed

    def test_droop_exact_identity(self):
        nd = DroopNode(1.7, 0.4)
        rng = np.random.default_rng(2)
        a = simulate_node(nd, [0.0], sinusoid_input(rng, 1), None, 1e-3, 3.0)
        b = simulate_node(nd, [0.5], sinusoid_input(rng, 1), None, 1e-3, 3.0)
        rep = incremental_supply_check(nd, a, b, 1e-3)
        assert rep.passed and rep.exact_identity_error < 1e-12

    def test_detects_active_node(self):
        # an unstable lag with the plain quadratic storage is not dissipative
        nd = LinearNode([[1.0]], [[1.0]], [[0.0]], [[1.0]], Q=np.eye(1))
        a = simulate_node(nd, [1.0], lambda t: [0.0], None, 1e-3, 1.0)
        b = simulate_node(nd, [0.0], lambda t: [0.0], None, 1e-3, 1.0)
        assert not incremental_supply_check(nd, a, b, 1e-3).passed

    def test_grid_mismatch(self):
        nd = InventoryNode()
        a = simulate_node(nd, [0.0], lambda t: [0.0], None, 0.1, 1.0)
        b = simulate_node(nd, [0.0], lambda t: [0.0], None, 0.1, 2.0)
        with pytest.raises(ValueError):
            incremental_supply_check(nd, a, b, 0.1)
