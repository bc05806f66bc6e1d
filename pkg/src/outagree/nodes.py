"""Node dynamics ``x' = f(x, u, w), y = h(x, w)`` and incremental passivity checks.

Four families are provided: linear state-space nodes, gradient flows of a
concave potential, scalar inventories and frequency-droop inverters. Every
family carries the incremental storage function used to certify it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .rk4 import rk4_solve

log = logging.getLogger(__name__)


def _mat(a, name):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def passivity_certificate(A, G, C, tol=1e-7):
    """Search for ``Q = Q^T > 0`` with ``A^T Q + Q A <= 0`` and ``Q G = C^T``.

    Solved as a small semidefinite program that maximises the smallest
    eigenvalue of ``Q`` under a trace bound. Returns ``None`` when no
    certificate is found; the result is re-verified numerically before it
    is returned.
    """
    import cvxpy as cp

    r = A.shape[0]
    Q = cp.Variable((r, r), symmetric=True)
    t = cp.Variable()
    bound = 1e3 * r * (1.0 + np.abs(C).max() / max(np.abs(G).max(), 1e-12))
    cons = [
        Q >> t * np.eye(r),
        A.T @ Q + Q @ A << 0,
        Q @ G == C.T,
        cp.trace(Q) <= bound,
    ]
    prob = cp.Problem(cp.Maximize(t), cons)
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.SolverError:
        return None
    if Q.value is None or prob.status not in ("optimal", "optimal_inaccurate"):
        return None
    Qv = 0.5 * (Q.value + Q.value.T)
    scale = max(1.0, np.abs(Qv).max())
    if np.linalg.eigvalsh(Qv).min() <= tol * scale:
        return None
    if np.linalg.eigvalsh(A.T @ Qv + Qv @ A).max() > tol * scale:
        return None
    if np.abs(Qv @ G - C.T).max() > tol * scale:
        return None
    return Qv


@dataclass(frozen=True, eq=False)
class LinearNode:
    A: np.ndarray
    G: np.ndarray
    P: np.ndarray
    C: np.ndarray
    passive: bool = False
    Q: np.ndarray | None = None

    def __post_init__(self):
        A, G, P, C = (_mat(getattr(self, k), k) for k in "AGPC")
        r = A.shape[0]
        if A.shape != (r, r):
            raise ValueError(f"A must be square, got {A.shape}")
        if G.shape[0] != r or C.shape != (G.shape[1], r):
            raise ValueError(f"inconsistent shapes A{A.shape} G{G.shape} C{C.shape}")
        if P.size == 0:
            P = np.zeros((r, 0))
        if P.shape[0] != r:
            raise ValueError(f"P must have {r} rows, got {P.shape}")
        for k, v in zip("AGPC", (A, G, P, C)):
            object.__setattr__(self, k, v)
        if self.passive and self.Q is None:
            Q = passivity_certificate(A, G, C)
            if Q is None:
                raise ValueError("node flagged passive but no storage matrix certifies it")
            object.__setattr__(self, "Q", Q)

    r = property(lambda self: self.A.shape[0])
    p = property(lambda self: self.G.shape[1])
    q = property(lambda self: self.P.shape[1])
    needs_xdot = False

    def vector_field(self, x, u, w):
        return self.A @ x + self.G @ u + self.P @ w

    def output(self, x, w=None, xdot=None):
        return self.C @ x

    def storage(self, dx):
        if self.Q is None:
            raise ValueError("linear node has no passivity certificate; construct with passive=True")
        return 0.5 * np.einsum("...i,ij,...j->...", dx, self.Q, dx)

    def transfer(self, s):
        """``C (sI - A)^{-1} G`` at a complex frequency."""
        return self.C @ np.linalg.solve(s * np.eye(self.r) - self.A, self.G)


@dataclass(frozen=True, eq=False)
class GradientFlowNode:
    """``x' = grad F(x) + G u + P w``, ``y = G^T x`` with ``F`` concave.

    Concavity is not checked symbolically; ``monotonicity_samples`` random
    pairs in ``[-box, box]`` must satisfy ``(x - x')^T (f(x) - f(x')) <= 0``.
    """

    grad: Callable[[np.ndarray], np.ndarray]
    G: np.ndarray
    P: np.ndarray
    monotonicity_samples: int = 10_000
    box: float = 2.0
    seed: int = 0

    def __post_init__(self):
        G, P = _mat(self.G, "G"), _mat(self.P, "P")
        if P.size == 0:
            P = np.zeros((G.shape[0], 0))
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "P", P)
        if np.linalg.matrix_rank(G) != G.shape[1]:
            raise ValueError("G must have full column rank")
        if P.shape[0] != G.shape[0]:
            raise ValueError(f"P must have {G.shape[0]} rows, got {P.shape}")
        if P.shape[1]:
            coef = np.linalg.lstsq(G, P, rcond=None)[0]
            if np.abs(G @ coef - P).max() > 1e-10 * max(1.0, np.abs(P).max()):
                raise ValueError("columns of P are not in the range of G")
        worst = self.monotonicity(self.monotonicity_samples, self.seed)
        if worst > 1e-12:
            raise ValueError(f"gradient map is not monotone decreasing (witness value {worst:.3e})")

    r = property(lambda self: self.G.shape[0])
    p = property(lambda self: self.G.shape[1])
    q = property(lambda self: self.P.shape[1])
    needs_xdot = False

    @property
    def C(self):
        return self.G.T

    def monotonicity(self, samples, seed=0):
        """Largest sampled ``(x - x')^T (f(x) - f(x'))``."""
        if samples <= 0:
            return -np.inf
        rng = np.random.default_rng(seed)
        X1 = rng.uniform(-self.box, self.box, (samples, self.r))
        X2 = rng.uniform(-self.box, self.box, (samples, self.r))
        return max(float((a - b) @ (self.grad(a) - self.grad(b))) for a, b in zip(X1, X2))

    def vector_field(self, x, u, w):
        return np.asarray(self.grad(x), dtype=float) + self.G @ u + self.P @ w

    def output(self, x, w=None, xdot=None):
        return self.G.T @ x

    def storage(self, dx):
        return 0.5 * np.sum(dx * dx, axis=-1)


@dataclass(frozen=True, eq=False)
class InventoryNode:
    """Scalar storage level, ``x' = u + P w``, ``y = x``."""

    P: np.ndarray = field(default_factory=lambda: np.zeros((1, 0)))

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float).reshape(1, -1)
        object.__setattr__(self, "P", P)

    r = 1
    p = 1
    q = property(lambda self: self.P.shape[1])
    needs_xdot = False

    def vector_field(self, x, u, w):
        return u + self.P @ w

    def output(self, x, w=None, xdot=None):
        return np.asarray(x, dtype=float)

    def storage(self, dx):
        return 0.5 * np.sum(dx * dx, axis=-1)


@dataclass(frozen=True)
class DroopNode:
    """Inverter phase angle, ``D x' = P* + u``, output frequency ``y = x'``."""

    D: float
    P_star: float

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError(f"droop coefficient must be positive, got {self.D}")

    r = 1
    p = 1
    q = 0
    needs_xdot = True

    def vector_field(self, x, u, w=None):
        return (self.P_star + np.asarray(u, dtype=float)) / self.D

    def output(self, x, w=None, xdot=None):
        if xdot is None:
            raise ValueError("droop node output is the frequency; xdot is required")
        return np.asarray(xdot, dtype=float)

    def storage(self, dx):
        return np.zeros(np.shape(dx)[:-1])

    def strictness(self, dy):
        """Output-strict dissipation ``D |y - y'|^2``."""
        return self.D * np.sum(dy * dy, axis=-1)


def node_vector_field(model, x, u, w) -> np.ndarray:
    x, u = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(u, float))
    w = np.atleast_1d(np.asarray(w, float)) if w is not None else np.zeros(0)
    if x.shape != (model.r,) or u.shape != (model.p,) or w.shape != (model.q,):
        raise ValueError(
            f"expected x({model.r}), u({model.p}), w({model.q}); got {x.shape}, {u.shape}, {w.shape}"
        )
    return model.vector_field(x, u, w)


def node_output(model, x, w=None, xdot=None) -> np.ndarray:
    return model.output(np.atleast_1d(np.asarray(x, float)), w, xdot)


@dataclass
class NodeTrajectory:
    """Sampled open-loop run of one node: arrays of shape ``(N, dim)``."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    w: np.ndarray


def simulate_node(model, x0, u_fn, w_fn, dt, T) -> NodeTrajectory:
    """Drive one node with input ``u_fn(t)`` and disturbance ``w_fn(t)`` using RK4."""
    zero_w = np.zeros(model.q)

    def wt(t):
        return zero_w if w_fn is None else np.atleast_1d(w_fn(t))

    def f(t, x):
        return model.vector_field(x, np.atleast_1d(u_fn(t)), wt(t))

    t, X = rk4_solve(f, np.atleast_1d(np.asarray(x0, float)), dt, T)
    U = np.stack([np.atleast_1d(u_fn(s)) for s in t])
    W = np.stack([wt(s) for s in t])
    Y = np.stack(
        [model.output(x, w, model.vector_field(x, u, w) if model.needs_xdot else None) for x, u, w in zip(X, U, W)]
    )
    return NodeTrajectory(t=t, x=X, u=U, y=Y, w=W)


@dataclass
class SupplyReport:
    steps: int
    violations: list[int]
    max_excess: float
    exact_identity_error: float | None = None

    @property
    def passed(self) -> bool:
        return not self.violations


def incremental_supply_check(model, a: NodeTrajectory, b: NodeTrajectory, dt: float, rel_tol: float = 1e-6) -> SupplyReport:
    """Check ``dV/dt <= (y - y')^T (u - u') - rho(y - y')`` along a trajectory pair.

    ``dV/dt`` is a forward difference and the supply is averaged over each
    step by the trapezoid rule with endpoint derivative correction, so the
    residual is fourth order in ``dt`` for smooth trajectories. The allowed
    excess is ``rel_tol * (1 + |x'|)`` per step. ``rho`` is nonzero only for
    droop nodes, which are additionally checked against the exact identity
    ``(y - y')(u - u') = D |y - y'|^2``.
    """
    if a.x.shape != b.x.shape or not np.allclose(a.t, b.t):
        raise ValueError("trajectories must share the same time grid and shape")
    dx, dy, du = a.x - b.x, a.y - b.y, a.u - b.u
    V = model.storage(dx)
    supply = np.sum(dy * du, axis=1)
    exact_err = None
    if isinstance(model, DroopNode):
        rho = model.strictness(dy)
        exact_err = float(np.abs(supply - rho).max())
        supply = supply - rho
    rate = np.diff(V) / dt
    bound = 0.5 * (supply[:-1] + supply[1:])
    if supply.size > 2:
        ds = np.gradient(supply, dt, edge_order=2)
        bound = bound + dt / 12.0 * (ds[:-1] - ds[1:])
    speed = np.maximum(np.linalg.norm(np.diff(a.x, axis=0), axis=1), np.linalg.norm(np.diff(b.x, axis=0), axis=1)) / dt
    excess = rate - bound - rel_tol * (1.0 + speed)
    viol = np.flatnonzero(excess > 0).tolist()
    return SupplyReport(
        steps=rate.size,
        violations=viol,
        max_excess=float((rate - bound).max()) if rate.size else 0.0,
        exact_identity_error=exact_err,
    )
