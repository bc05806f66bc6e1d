"""Closed-loop assembly, fixed-step integration and convergence/dissipation metrics.

The loop is ``z = (B^T x I_p) y``, ``v = -z``, ``nu = v`` (feedthrough) or 0,
``lambda = psi(eta) + nu`` and ``u = (B x I_p) lambda``. The integrated state
is ``(w, x, eta)``; for droop networks the edge state is the derived angle
difference ``eta = -B^T theta`` and only ``(w, theta)`` is integrated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .controllers import (
    CommAugmentedController,
    DroopEdgeController,
    InternalModelController,
    MonotoneIntegratorController,
    OptimalDistributionController,
    StaticCoupling,
    design_tree_feedforward,
)
from .exosystem import Exosystem, exo_trajectory, exo_vector_field
from .feasibility import droop_design_check, inventory_steady_state
from .graph import NetworkGraph
from .nodes import DroopNode, InventoryNode, LinearNode
from .rk4 import step_count

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e9


class IncompatibleFamilies(ValueError):
    pass


class SimulationDiverged(RuntimeError):
    def __init__(self, t):
        super().__init__(f"state exceeded {DIVERGENCE_LIMIT:g} in magnitude at t={t:.6g}")
        self.t = t


def controller_family(ctrl) -> str:
    return {
        InternalModelController: "internal_model",
        CommAugmentedController: "comm_augmented",
        StaticCoupling: "static",
        MonotoneIntegratorController: "monotone_integrator",
        OptimalDistributionController: "optimal_distribution",
        DroopEdgeController: "droop_edge",
    }[type(ctrl)]


@dataclass(eq=False)
class ClosedLoopSystem:
    graph: NetworkGraph
    nodes: tuple
    controller: object
    exo: Exosystem
    p: int = 1

    def __post_init__(self):
        self.nodes = tuple(self.nodes)
        g, n = self.graph, self.graph.n
        if len(self.nodes) != n:
            raise ValueError(f"{len(self.nodes)} node models for a graph with {n} nodes")
        droop = [isinstance(nd, DroopNode) for nd in self.nodes]
        if any(droop) and not all(droop):
            raise IncompatibleFamilies("droop nodes cannot be mixed with other node families")
        self.droop = all(droop)
        if self.droop != isinstance(self.controller, DroopEdgeController):
            raise IncompatibleFamilies("droop nodes require the droop edge controller and vice versa")
        if self.droop and not g.is_acyclic():
            raise IncompatibleFamilies("droop closed loops are restricted to acyclic networks")
        if any(isinstance(nd, InventoryNode) for nd in self.nodes) and self.p != 1:
            raise IncompatibleFamilies("inventory networks have scalar outputs (p = 1)")
        if any(nd.p != self.p for nd in self.nodes):
            raise ValueError(f"all nodes must have output dimension p={self.p}")
        if self.controller.mp != g.m * self.p:
            raise ValueError(f"controller acts on {self.controller.mp} edge signals, expected {g.m * self.p}")
        if self.controller.feedthrough and any(nd.needs_xdot for nd in self.nodes):
            raise IncompatibleFamilies("feedthrough with rate outputs would create an algebraic loop")
        qs = [nd.q for nd in self.nodes]
        if self.exo.q == 0:
            if any(qs):
                raise ValueError("nodes expect disturbances but the exosystem is empty")
            self.w_slices = [slice(0, 0)] * n
        else:
            if qs != self.exo.dims:
                raise ValueError(f"node disturbance dims {qs} do not match exosystem blocks {self.exo.dims}")
            self.w_slices = self.exo.slices()
        rs = np.concatenate([[0], np.cumsum([nd.r for nd in self.nodes])]).astype(int)
        self.x_slices = [slice(rs[i], rs[i + 1]) for i in range(n)]
        self.r = int(rs[-1])
        self.q = self.exo.q
        self.Bp = np.kron(g.incidence, np.eye(self.p))
        self.eta_dim = 0 if self.droop else self.controller.state_dim
        self.edge_dim = self.controller.state_dim
        self.dim = self.q + self.r + self.eta_dim
        self._fast = self._vectorise()

    def _vectorise(self):
        from scipy.linalg import block_diag

        kinds = {type(nd) for nd in self.nodes}
        if kinds == {InventoryNode}:
            P = block_diag(*[nd.P for nd in self.nodes]) if self.q else np.zeros((self.r, 0))
            return ("affine", np.zeros((self.r, self.r)), np.eye(self.r), P, np.eye(self.r))
        if kinds == {LinearNode}:
            A = block_diag(*[nd.A for nd in self.nodes])
            G = block_diag(*[nd.G for nd in self.nodes])
            C = block_diag(*[nd.C for nd in self.nodes])
            P = block_diag(*[nd.P for nd in self.nodes]) if self.q else np.zeros((self.r, 0))
            return ("affine", A, G, P, C)
        if kinds == {DroopNode}:
            D = np.array([nd.D for nd in self.nodes])
            Ps = np.array([nd.P_star for nd in self.nodes])
            return ("droop", D, Ps)
        return None

    def split(self, state):
        q, r = self.q, self.r
        return state[:q], state[q : q + r], state[q + r :]

    def _node_field(self, x, u, w):
        if self._fast is not None and self._fast[0] == "affine":
            _, A, G, P, _ = self._fast
            return A @ x + G @ u + P @ w
        if self._fast is not None:
            _, D, Ps = self._fast
            return (Ps + u) / D
        ps = self.p
        return np.concatenate([
            nd.vector_field(x[xs], u[i * ps : (i + 1) * ps], w[ws])
            for i, (nd, xs, ws) in enumerate(zip(self.nodes, self.x_slices, self.w_slices))
        ])

    def _outputs(self, x, w):
        if self._fast is not None and self._fast[0] == "affine":
            return self._fast[4] @ x
        return np.concatenate([nd.output(x[xs], w[ws]) for nd, xs, ws in zip(self.nodes, self.x_slices, self.w_slices)])

    def signals(self, state) -> dict:
        """Every loop signal at one state, including the state derivative ``dstate``."""
        w, x, eta = self.split(state)
        ctrl = self.controller
        if self.droop:
            eta = -self.graph.incidence.T @ x
            lam = ctrl.psi(eta)
            u = self.Bp @ lam
            xdot = self._node_field(x, u, w)
            y = xdot
            z = self.Bp.T @ y
            v = -z
            nu = np.zeros_like(v)
            etadot = np.zeros(0)
        else:
            y = self._outputs(x, w)
            z = self.Bp.T @ y
            v = -z
            nu = v if ctrl.feedthrough else np.zeros_like(v)
            lam = ctrl.output(eta, nu if ctrl.feedthrough else None)
            u = self.Bp @ lam
            xdot = self._node_field(x, u, w)
            etadot = ctrl.vector_field(eta, v)
        wdot = exo_vector_field(self.exo, w) if self.q else np.zeros(0)
        return dict(w=w, x=x, eta=eta, y=y, z=z, v=v, nu=nu, lam=lam, u=u, dstate=np.concatenate([wdot, xdot, etadot]))

    def field(self, state) -> np.ndarray:
        return self.signals(state)["dstate"]

    def initial_state(self, w0, x0, eta0=None) -> np.ndarray:
        eta0 = np.zeros(self.eta_dim) if eta0 is None or self.droop else np.asarray(eta0, float)
        parts = [np.asarray(w0, float).ravel(), np.asarray(x0, float).ravel(), eta0.ravel()]
        state = np.concatenate(parts)
        if state.shape != (self.dim,):
            raise ValueError(f"initial state has {state.size} entries, expected {self.dim}")
        if not np.all(np.isfinite(state)):
            raise ValueError("initial state is not finite")
        return state


def assemble(nodes, controller, exo: Exosystem, graph: NetworkGraph, p: int = 1) -> ClosedLoopSystem:
    return ClosedLoopSystem(graph=graph, nodes=tuple(nodes), controller=controller, exo=exo, p=p)


@dataclass
class Trace:
    t: np.ndarray
    w: np.ndarray
    x: np.ndarray
    eta: np.ndarray
    y: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    z: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.size


def integrate(sys: ClosedLoopSystem, state0, dt: float, T: float, stride: int = 1, meta=None) -> Trace:
    """Classical RK4 at fixed ``dt`` up to ``T``; every ``stride``-th grid point is recorded."""
    n_steps = step_count(dt, T)
    state = np.asarray(state0, dtype=float).copy()
    if not np.all(np.isfinite(state)):
        raise ValueError("initial state is not finite")
    keep = list(range(0, n_steps + 1, stride))
    if keep[-1] != n_steps:
        keep.append(n_steps)
    n_rec = len(keep)
    rec = {k: [] for k in ("w", "x", "eta", "y", "u", "lam", "z")}
    nxt = 0
    for k in range(n_steps + 1):
        sig = sys.signals(state)
        if k == keep[nxt]:
            for key in rec:
                rec[key].append(sig[key])
            nxt += 1
        if k == n_steps:
            break
        k1 = sig["dstate"]
        k2 = sys.field(state + 0.5 * dt * k1)
        k3 = sys.field(state + 0.5 * dt * k2)
        k4 = sys.field(state + dt * k3)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.abs(state) < DIVERGENCE_LIMIT):
            raise SimulationDiverged((k + 1) * dt)
    t = dt * np.asarray(keep, dtype=float)
    arrays = {key: np.array(val).reshape(n_rec, -1) for key, val in rec.items()}
    info = dict(dt=dt, T=T, stride=stride, n=sys.graph.n, m=sys.graph.m, p=sys.p, controller=controller_family(sys.controller))
    info.update(meta or {})
    return Trace(t=t, meta=info, **arrays)


# metrics --------------------------------------------------------------------------


def agreement_error(trace: Trace) -> np.ndarray:
    """``|(B^T x I_p) y(t)|_2`` per recorded step."""
    return np.linalg.norm(trace.z, axis=1)


def agreement_error_from_outputs(graph: NetworkGraph, y: np.ndarray, p: int = 1) -> np.ndarray:
    Bp = np.kron(graph.incidence, np.eye(p))
    return np.linalg.norm(np.atleast_2d(y) @ Bp, axis=1)


def controller_sync_error(trace: Trace, m: int | None = None) -> np.ndarray:
    """Largest pairwise distance between per-edge controller states at each step."""
    if trace.meta.get("controller") != "comm_augmented":
        raise ValueError("controller synchronisation is defined for the communicating controller only")
    m = m or trace.meta["m"]
    E = trace.eta.reshape(len(trace), m, -1)
    diff = E[:, :, None, :] - E[:, None, :, :]
    return np.linalg.norm(diff, axis=3).max(axis=(1, 2))


@dataclass
class Reference:
    """Steady-state pair ``(x_w, eta_w)`` on a trace grid, plus ``y_w`` when outputs are rates."""

    x: np.ndarray
    eta: np.ndarray
    y: np.ndarray | None = None


def steady_state_reference(sys: ClosedLoopSystem, trace: Trace, w0=None, x0_w=None) -> Reference | None:
    """Steady state used by the storage metric, or ``None`` when the family has none.

    Inventory networks use the balanced closed form with ``x0_w`` defaulting to
    the mean initial level (the value the closed loop actually converges to)
    and the controller copy ``eta_w = w`` per edge; droop networks use the
    synchronous frequency and the designed line angles.
    """
    ctrl, g = sys.controller, sys.graph
    if sys.droop:
        nodes = sys.nodes
        design = droop_design_check(g, ctrl.a, [nd.D for nd in nodes], [nd.P_star for nd in nodes])
        if not design.feasible:
            log.warning("droop design infeasible; no steady state for the storage metric")
            return None
        N = len(trace)
        eta = np.repeat(design.eta_w[None, :], N, axis=0)
        y = np.full((N, g.n), design.y_w)
        return Reference(x=trace.x.copy(), eta=eta, y=y)
    if not all(isinstance(nd, InventoryNode) for nd in sys.nodes):
        log.warning("no closed-form steady state for %s nodes; storage metric skipped", type(sys.nodes[0]).__name__)
        return None
    w0 = trace.w[0] if w0 is None else np.asarray(w0, float)
    x0_w = float(np.mean(trace.x[0])) if x0_w is None else x0_w
    from scipy.linalg import block_diag

    P = block_diag(*[nd.P for nd in sys.nodes]) if sys.q else np.zeros((g.n, 0))
    ss = inventory_steady_state(P, sys.exo, w0, trace.t, x0_w=x0_w)
    W = exo_trajectory(sys.exo, w0, trace.t) if sys.q else np.zeros((len(trace), 0))
    if isinstance(ctrl, OptimalDistributionController):
        eta = W
    elif isinstance(ctrl, (InternalModelController, CommAugmentedController)):
        eta = np.tile(W, (1, ctrl.m))
    elif isinstance(ctrl, MonotoneIntegratorController):
        if np.any(sys.exo.matrix):
            log.warning("monotone integrator reference needs constant disturbances")
            return None
        lam_w = design_tree_feedforward(g, P) @ w0
        eta = np.repeat(ctrl.inverse_psi(lam_w)[None, :], len(trace), axis=0)
    elif isinstance(ctrl, StaticCoupling):
        eta = np.zeros((len(trace), 0))
    else:
        return None
    return Reference(x=ss.x, eta=eta)


@dataclass
class StorageReport:
    steps: int
    violations: int
    max_excess: float
    U: np.ndarray
    rate: np.ndarray
    bound: np.ndarray

    @property
    def fraction_ok(self) -> float:
        return 1.0 - self.violations / self.steps if self.steps else 1.0


def storage_monotonicity(sys: ClosedLoopSystem, trace: Trace, ref: Reference | None, rel_tol: float = 1e-4) -> StorageReport:
    """Finite-difference check of ``dU/dt <= -(dissipation)`` with ``U = V(x, x_w) + W(eta, eta_w)``.

    The dissipation is ``|z|^2`` for controllers with feedthrough plus
    ``sum_i D_i |y_i - y_w|^2`` for droop nodes. Each step is allowed an
    excess of ``rel_tol * (1 + dissipation)``.
    """
    if ref is None:
        raise ValueError("no steady-state reference available for this closed loop")
    dx = trace.x - ref.x
    V = np.zeros(len(trace))
    if not sys.droop:
        for nd, xs in zip(sys.nodes, sys.x_slices):
            V += nd.storage(dx[:, xs])
    W = np.asarray(sys.controller.storage(trace.eta, ref.eta), dtype=float) if trace.eta.shape[1] else np.zeros(len(trace))
    U = V + W
    diss = np.zeros(len(trace))
    if sys.controller.feedthrough:
        diss += np.sum(trace.z**2, axis=1)
    if sys.droop:
        D = np.array([nd.D for nd in sys.nodes])
        diss += np.sum(D * (trace.y - ref.y) ** 2, axis=1)
    dt = np.diff(trace.t)
    rate = np.diff(U) / dt
    bound = -0.5 * (diss[:-1] + diss[1:])
    excess = rate - bound
    viol = int(np.sum(excess > rel_tol * (1.0 - bound)))
    return StorageReport(
        steps=rate.size,
        violations=viol,
        max_excess=float(excess.max()) if excess.size else 0.0,
        U=U,
        rate=rate,
        bound=bound,
    )
