"""Edge controllers ``eta' = phi(eta, v), lambda = psi(eta) + nu`` and feedforward designs.

Sign convention, fixed here once: every controller is written in terms of
its input ``v = -z``, where ``z = (B^T x I_p) y`` are the relative outputs.
A controller with ``feedthrough=True`` uses ``nu = v``; otherwise ``nu = 0``.
So the z-form ``eta' = s(eta) - H^T z, lambda = H eta - z`` is
``eta' = s(eta) + H^T v, lambda = H eta + v`` below.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exosystem import Exosystem, stacked_field
from .graph import NetworkGraph, centering, extract_spanning_tree, moore_penrose, weighted_laplacian


def _check_dims(eta, v, n_eta, n_v):
    if np.shape(eta) != (n_eta,) or np.shape(v) != (n_v,):
        raise ValueError(f"expected eta({n_eta}) and v({n_v}); got {np.shape(eta)} and {np.shape(v)}")


class _Controller:
    feedthrough = False

    def vector_field(self, eta, v):
        raise NotImplementedError

    def psi(self, eta):
        raise NotImplementedError

    def output(self, eta, nu=None):
        """``psi(eta) + nu``; ``nu`` must be given iff the feedthrough flag is set."""
        if self.feedthrough and nu is None:
            raise ValueError("controller has feedthrough; nu is required")
        if not self.feedthrough and nu is not None and np.any(nu):
            raise ValueError("controller has no feedthrough; nu must be omitted or zero")
        lam = self.psi(np.asarray(eta, dtype=float))
        return lam + nu if self.feedthrough else lam

    def internal_model(self, eta):
        return self.vector_field(eta, np.zeros(self.mp))


@dataclass(frozen=True, eq=False)
class InternalModelController(_Controller):
    """Per-edge copies ``eta_k`` of a common internal model ``s`` with linear outputs.

    ``eta_k' = s(eta_k) + M_k^T v_k``, ``lambda_k = M_k eta_k``; ``M`` has shape
    ``(m, p, d)``. With ``W = |eta - eta'|^2 / 2`` this is incrementally passive
    from ``v`` to ``lambda`` whenever ``s`` is monotone.
    """

    model: Exosystem
    M: np.ndarray
    feedthrough: bool = True

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        if M.ndim != 3 or M.shape[2] != self.model.q:
            raise ValueError(f"M must have shape (m, p, {self.model.q}), got {M.shape}")
        object.__setattr__(self, "M", M)

    m = property(lambda self: self.M.shape[0])
    p = property(lambda self: self.M.shape[1])
    d = property(lambda self: self.M.shape[2])
    mp = property(lambda self: self.m * self.p)
    state_dim = property(lambda self: self.m * self.d)

    def vector_field(self, eta, v):
        _check_dims(eta, v, self.state_dim, self.mp)
        E = eta.reshape(self.m, self.d)
        V = v.reshape(self.m, self.p)
        return (stacked_field(self.model, E) + np.einsum("kpd,kp->kd", self.M, V)).ravel()

    def psi(self, eta):
        return np.einsum("kpd,kd->kp", self.M, eta.reshape(self.m, self.d)).ravel()

    def storage(self, eta, eta_ref):
        d = np.asarray(eta) - np.asarray(eta_ref)
        return 0.5 * np.sum(d * d, axis=-1)


@dataclass(frozen=True, eq=False)
class CommAugmentedController(_Controller):
    """Internal model controllers with diffusive coupling over a communication Laplacian.

    ``eta' = s(eta) - (L_comm x I_d) eta + M^T v``. The literal form has no
    feedthrough; set ``feedthrough=True`` to add ``nu = v``.
    """

    base: InternalModelController
    L_comm: np.ndarray
    feedthrough: bool = False

    def __post_init__(self):
        L = np.asarray(self.L_comm, dtype=float)
        m = self.base.m
        if L.shape != (m, m):
            raise ValueError(f"communication Laplacian must be {m}x{m}, got {L.shape}")
        if np.abs(L - L.T).max() > 1e-12 or np.abs(L.sum(axis=1)).max() > 1e-12:
            raise ValueError("communication Laplacian must be symmetric with zero row sums")
        if np.linalg.eigvalsh(L).min() < -1e-10:
            raise ValueError("communication Laplacian must be positive semidefinite")
        object.__setattr__(self, "L_comm", L)

    m = property(lambda self: self.base.m)
    p = property(lambda self: self.base.p)
    d = property(lambda self: self.base.d)
    mp = property(lambda self: self.base.mp)
    state_dim = property(lambda self: self.base.state_dim)
    model = property(lambda self: self.base.model)

    def vector_field(self, eta, v):
        coupling = (self.L_comm @ eta.reshape(self.m, self.d)).ravel()
        return self.base.vector_field(eta, v) - coupling

    def psi(self, eta):
        return self.base.psi(eta)

    def storage(self, eta, eta_ref):
        return self.base.storage(eta, eta_ref)


@dataclass(frozen=True)
class StaticCoupling(_Controller):
    """No state; ``lambda = nu = v`` which realises ``u = -(L x I_p) y``."""

    m: int
    p: int = 1
    feedthrough = True

    mp = property(lambda self: self.m * self.p)
    state_dim = 0

    def vector_field(self, eta, v):
        _check_dims(eta, v, 0, self.mp)
        return np.zeros(0)

    def psi(self, eta):
        return np.zeros(self.mp)

    def storage(self, eta, eta_ref):
        return np.zeros(np.shape(eta)[:-1])


def default_psi(c=1.0):
    return lambda eta: c * eta + np.tanh(eta)


def default_potential(c=1.0):
    return lambda eta: 0.5 * c * eta * eta + np.logaddexp(eta, -eta) - np.log(2.0)


@dataclass(frozen=True, eq=False)
class MonotoneIntegratorController(_Controller):
    """``eta' = v``, ``lambda = psi(eta) + nu`` with an elementwise strongly monotone ``psi``.

    ``potential`` is a convex primitive of ``psi``; it defines the Bregman
    storage ``Psi(eta) - Psi(eta_w) - psi(eta_w)^T (eta - eta_w)``.
    """

    m: int
    p: int = 1
    c: float = 1.0
    psi_fn: Callable | None = None
    potential: Callable | None = None
    feedthrough: bool = True
    samples: int = 2000

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"monotonicity constant must be positive, got {self.c}")
        if self.psi_fn is None:
            object.__setattr__(self, "psi_fn", default_psi(self.c))
            object.__setattr__(self, "potential", default_potential(self.c))
        if self.potential is None:
            raise ValueError("a custom psi needs its convex potential for the storage function")
        rng = np.random.default_rng(0)
        a, b = rng.uniform(-5, 5, (2, self.samples, self.mp))
        lhs = np.sum((self.psi_fn(a) - self.psi_fn(b)) * (a - b), axis=1)
        if np.any(lhs < self.c * np.sum((a - b) ** 2, axis=1) - 1e-12):
            raise ValueError("psi fails the sampled strong monotonicity test")

    mp = property(lambda self: self.m * self.p)
    state_dim = property(lambda self: self.m * self.p)

    def vector_field(self, eta, v):
        _check_dims(eta, v, self.state_dim, self.mp)
        return np.array(v, dtype=float)

    def psi(self, eta):
        return self.psi_fn(eta)

    def inverse_psi(self, lam, tol=1e-14):
        """Solve ``psi(eta) = lam`` elementwise by bisection (psi is strictly increasing)."""
        lam = np.asarray(lam, dtype=float)
        lo = np.full_like(lam, -1.0)
        hi = np.full_like(lam, 1.0)
        while np.any(self.psi_fn(lo) > lam):
            lo = np.where(self.psi_fn(lo) > lam, 2 * lo, lo)
        while np.any(self.psi_fn(hi) < lam):
            hi = np.where(self.psi_fn(hi) < lam, 2 * hi, hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            low = self.psi_fn(mid) < lam
            lo, hi = np.where(low, mid, lo), np.where(low, hi, mid)
            if np.all(hi - lo < tol * (1 + np.abs(mid))):
                break
        return 0.5 * (lo + hi)

    def storage(self, eta, eta_ref):
        return bregman(self.potential, self.psi_fn, eta, eta_ref)


def bregman(potential, grad, eta, eta_ref):
    eta, eta_ref = np.asarray(eta, float), np.asarray(eta_ref, float)
    return np.sum(
        potential(eta) - potential(eta_ref) - grad(eta_ref) * (eta - eta_ref),
        axis=-1,
    )


@dataclass(frozen=True, eq=False)
class OptimalDistributionController(_Controller):
    """Single copy of the exosystem, ``eta' = s(eta) + H^T v``, ``lambda = H eta + nu``."""

    H: np.ndarray
    model: Exosystem
    feedthrough: bool = True

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if H.shape[1] != self.model.q:
            raise ValueError(f"H must have {self.model.q} columns, got {H.shape}")
        object.__setattr__(self, "H", H)

    mp = property(lambda self: self.H.shape[0])
    state_dim = property(lambda self: self.H.shape[1])

    def vector_field(self, eta, v):
        _check_dims(eta, v, self.state_dim, self.mp)
        return stacked_field(self.model, eta[None, :])[0] + self.H.T @ v

    def psi(self, eta):
        return self.H @ eta

    def storage(self, eta, eta_ref):
        d = np.asarray(eta) - np.asarray(eta_ref)
        return 0.5 * np.sum(d * d, axis=-1)


@dataclass(frozen=True, eq=False)
class DroopEdgeController(_Controller):
    """Line power flow as an edge controller: ``eta' = v``, ``lambda = a * sin(eta)``."""

    a: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if np.any(a <= 0):
            raise ValueError(f"line coefficients must be positive, got {a.tolist()}")
        object.__setattr__(self, "a", a)

    feedthrough = False
    mp = property(lambda self: self.a.size)
    state_dim = property(lambda self: self.a.size)

    def vector_field(self, eta, v):
        _check_dims(eta, v, self.state_dim, self.mp)
        return np.array(v, dtype=float)

    def psi(self, eta):
        return self.a * np.sin(eta)

    def potential(self, eta):
        return self.a * (1.0 - np.cos(eta))

    def storage(self, eta, eta_ref):
        return bregman(self.potential, self.psi, eta, eta_ref)


def controller_vector_field(ctrl, eta, v) -> np.ndarray:
    return ctrl.vector_field(np.asarray(eta, dtype=float), np.asarray(v, dtype=float))


def controller_output(ctrl, eta, nu=None) -> np.ndarray:
    return ctrl.output(np.asarray(eta, dtype=float), None if nu is None else np.asarray(nu, dtype=float))


def per_edge_internal_model(H, model: Exosystem, p: int = 1, feedthrough: bool = True) -> InternalModelController:
    """Split a feedforward ``lambda_w = H w`` into per-edge controllers with ``M_k = H_k``."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    m = H.shape[0] // p
    return InternalModelController(model, H.reshape(m, p, H.shape[1]), feedthrough=feedthrough)


# feedforward designs ---------------------------------------------------------------


def design_tree_feedforward(graph: NetworkGraph, P) -> np.ndarray:
    """Route the balanced supply along the BFS spanning tree; chords carry no flow."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    tree, BT = extract_spanning_tree(graph)
    H = np.zeros((graph.m, P.shape[1]))
    H[tree] = -np.linalg.solve(BT.T @ BT, BT.T @ P)
    return H


def design_optimal_feedforward(graph: NetworkGraph, Q, P) -> np.ndarray:
    """``H = -Q^{-1} B^T L_Q^+ P``: the flow ``H w`` minimises ``lambda^T Q lambda / 2``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    q = np.diag(Q) if np.ndim(Q) == 2 else np.asarray(Q, dtype=float)
    B = graph.incidence
    H_zeta = -moore_penrose(weighted_laplacian(B, q)) @ P
    return (B.T @ H_zeta) / q[:, None]


def design_identical_feedforward(graph: NetworkGraph, G, P_bar) -> np.ndarray:
    """Feedforward for identical gradient-flow nodes sharing ``G``.

    ``u_w = (I x G^+)((11^T/n - I) x I_r) P_bar w`` and ``lambda_w = (B^+ x I_p) u_w``.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    r, p = G.shape
    n = graph.n
    Y = np.full((n, n), 1.0 / n) - np.eye(n)
    u_map = np.kron(np.eye(n), moore_penrose(G)) @ np.kron(Y, np.eye(r)) @ np.asarray(P_bar, dtype=float)
    return np.kron(moore_penrose(graph.incidence), np.eye(p)) @ u_map


def feedforward_residual(graph: NetworkGraph, H, P) -> float:
    """``|B H + Delta_n P|_max``, zero when ``H w`` balances every supply."""
    return float(np.abs(graph.incidence @ H + centering(graph.n) @ np.atleast_2d(P)).max())
