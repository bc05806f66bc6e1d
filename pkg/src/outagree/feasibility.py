"""Solvability checks and steady-state computations.

Linear networks: regulator (Sylvester) equations, the rank test at every
exosystem eigenvalue, the two structural obstructions (cycles, and a
transfer matrix rotating the range of ``B`` into the agreement subspace),
and a per-frequency positive-real test. Inventory networks: balanced steady
state, accumulated imbalance, the optimal-flow QP and the distance to its
solution. Droop networks: steady frequency and line-angle design.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import block_diag, null_space, subspace_angles

from .exosystem import Exosystem, LinearSkewBlock, StaticBlock, exo_integral, exo_trajectory, exo_vector_field
from .graph import NetworkGraph, centering, cycle_space_dim
from .nodes import LinearNode
from .rk4 import rk4_solve

RANK_TOL = 1e-8
ANGLE_TOL = 1e-8


def _linear_data(nodes, exo: Exosystem, P_bar=None):
    if not all(isinstance(nd, LinearNode) for nd in nodes):
        raise TypeError("linear analysis needs LinearNode models on every node")
    ps = {nd.p for nd in nodes}
    if len(ps) != 1:
        raise ValueError(f"all nodes must share the output dimension, got {sorted(ps)}")
    A = block_diag(*[nd.A for nd in nodes])
    G = block_diag(*[nd.G for nd in nodes])
    C = block_diag(*[nd.C for nd in nodes])
    if P_bar is None:
        if [nd.q for nd in nodes] != exo.dims:
            raise ValueError(f"node disturbance dims {[nd.q for nd in nodes]} do not match exosystem {exo.dims}")
        P = block_diag(*[nd.P for nd in nodes]) if exo.q else np.zeros((A.shape[0], 0))
    else:
        P = np.atleast_2d(np.asarray(P_bar, dtype=float))
        if P.shape != (A.shape[0], exo.q):
            raise ValueError(f"P_bar must be {A.shape[0]}x{exo.q}, got {P.shape}")
    return A, G, C, P, ps.pop()


def _eigenvalues(S, tol=1e-9):
    out = []
    for s in np.linalg.eigvals(S) if S.size else []:
        s = complex(round(s.real, 12), round(s.imag, 12))
        if all(abs(s - t) > tol for t in out):
            out.append(s)
    return sorted(out, key=lambda z: (z.imag, z.real))


# regulator equations --------------------------------------------------------------


@dataclass
class RegulatorSolution:
    """``x_w = Pi w`` and ``lambda_w = Gamma w`` with the residuals of both equation blocks."""

    Pi: np.ndarray
    Gamma: np.ndarray
    residual_dynamics: float
    residual_agreement: float
    feasible: bool


def solve_sylvester_regulator(nodes, exo: Exosystem, graph: NetworkGraph, P_bar=None, tol=1e-6) -> RegulatorSolution:
    """Least-squares solution of

    ``Pi S = A Pi + G (B x I_p) Gamma + P`` and ``(B^T x I_p) C Pi = 0``

    by vectorisation. ``P_bar`` overrides the block-diagonal disturbance
    matrix assembled from the nodes (for networks where nodes share signals).
    Infeasible iff a residual exceeds ``tol * max(1, |P|)``.
    """
    A, G, C, P, p = _linear_data(nodes, exo, P_bar)
    S = exo.matrix
    r, q = A.shape[0], exo.q
    Bp = np.kron(graph.incidence, np.eye(p))
    mp = Bp.shape[1]
    Ir, Iq = np.eye(r), np.eye(q)
    top = np.hstack([np.kron(S.T, Ir) - np.kron(Iq, A), -np.kron(Iq, G @ Bp)])
    bot = np.hstack([np.kron(Iq, Bp.T @ C), np.zeros((mp * q, mp * q))])
    lhs = np.vstack([top, bot])
    rhs = np.concatenate([P.ravel(order="F"), np.zeros(mp * q)])
    if lhs.size == 0:
        sol = np.zeros(lhs.shape[1])
    else:
        sol = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    Pi = sol[: r * q].reshape((r, q), order="F")
    Gamma = sol[r * q :].reshape((mp, q), order="F")
    res1 = float(np.linalg.norm(Pi @ S - A @ Pi - G @ Bp @ Gamma - P))
    res2 = float(np.linalg.norm(Bp.T @ C @ Pi))
    scale = max(1.0, float(np.linalg.norm(P)))
    return RegulatorSolution(Pi, Gamma, res1, res2, bool(res1 <= tol * scale and res2 <= tol * scale))


# rank condition and obstructions --------------------------------------------------


@dataclass
class RankResult:
    s: complex
    rows: int
    rank: int
    sigma_min_rel: float
    witness_x: np.ndarray | None = None
    witness_lambda: np.ndarray | None = None

    @property
    def passed(self) -> bool:
        return self.rank == self.rows


@dataclass
class IntersectionResult:
    s: complex
    smallest_angle: float
    intersects: bool
    witness_y: np.ndarray | None = None
    witness_x: np.ndarray | None = None
    witness_lambda: np.ndarray | None = None


@dataclass
class FeasibilityReport:
    rank: list[RankResult] = field(default_factory=list)
    cycle_dim: int | None = None
    intersections: list[IntersectionResult] = field(default_factory=list)
    nonresonance_violations: list[tuple[int, complex]] = field(default_factory=list)
    skipped_frequencies: list[complex] = field(default_factory=list)

    @property
    def cycle_obstruction(self) -> bool:
        return bool(self.cycle_dim)

    @property
    def range_obstruction(self) -> bool:
        return any(r.intersects for r in self.intersections)

    @property
    def rank_passed(self) -> bool:
        return all(r.passed for r in self.rank)

    @property
    def passed(self) -> bool:
        return self.rank_passed and not self.cycle_obstruction and not self.range_obstruction


def regulator_matrix(A, G, C, Bp, s):
    r, mp = A.shape[0], Bp.shape[1]
    return np.block([
        [A - s * np.eye(r), G @ Bp],
        [Bp.T @ C, np.zeros((mp, mp))],
    ]).astype(complex)


def _phase_normalise(v):
    k = int(np.argmax(np.abs(v)))
    return v * (abs(v[k]) / v[k]) if v[k] != 0 else v


def rank_condition(nodes, exo: Exosystem, graph: NetworkGraph, tol=RANK_TOL) -> FeasibilityReport:
    """Rank of ``[[A - sI, G(B x I)], [(B x I)^T C, 0]]`` at every eigenvalue of ``S``.

    Ranks are taken over the complex field with threshold ``tol * sigma_max``.
    On failure the right singular vector of the smallest singular value is a
    nullspace witness ``(x0, lambda0)``.
    """
    A, G, C, _, p = _linear_data(nodes, exo)
    Bp = np.kron(graph.incidence, np.eye(p))
    r = A.shape[0]
    report = FeasibilityReport(cycle_dim=cycle_space_dim(graph))
    for s in _eigenvalues(exo.matrix):
        M = regulator_matrix(A, G, C, Bp, s)
        _, sv, Vh = np.linalg.svd(M)
        rel = sv / sv[0] if sv[0] > 0 else np.zeros_like(sv)
        rank = int(np.sum(rel > tol))
        res = RankResult(s=s, rows=M.shape[0], rank=rank, sigma_min_rel=float(rel[-1]))
        if rank < M.shape[0]:
            if report.cycle_dim:
                # a cycle flow is always in the kernel, with x0 = 0
                lam0 = null_space(Bp)[:, 0].astype(complex)
                res.witness_x, res.witness_lambda = np.zeros(r, dtype=complex), _phase_normalise(lam0)
            else:
                vec = _phase_normalise(Vh[-1].conj())
                res.witness_x, res.witness_lambda = vec[:r], vec[r:]
        report.rank.append(res)
    return report


def _nonresonance(nodes, s):
    bad = []
    for i, nd in enumerate(nodes):
        M = np.block([[nd.A - s * np.eye(nd.r), nd.G], [nd.C, np.zeros((nd.p, nd.p))]])
        if np.linalg.matrix_rank(M, tol=RANK_TOL * max(1.0, np.linalg.norm(M, 2))) != nd.r + nd.p:
            bad.append((i, s))
    return bad


def obstruction_check(nodes, exo: Exosystem, graph: NetworkGraph, tol=ANGLE_TOL) -> FeasibilityReport:
    """Cycle obstruction and range-intersection obstruction at every eigenvalue of ``S``.

    The second one tests whether ``range(H(s)(B x I))`` meets the agreement
    subspace ``null((B x I)^T) = span(1 x I_p)`` via the smallest principal
    angle. Frequencies that are poles of some node are skipped and listed.
    """
    A, G, C, _, p = _linear_data(nodes, exo)
    n = graph.n
    Bp = np.kron(graph.incidence, np.eye(p))
    report = FeasibilityReport(cycle_dim=cycle_space_dim(graph))
    agree = np.kron(np.ones((n, 1)), np.eye(p)) / np.sqrt(n)
    for s in _eigenvalues(exo.matrix):
        report.nonresonance_violations += _nonresonance(nodes, s)
        if A.size and np.min(np.abs(np.linalg.eigvals(A) - s)) < 1e-9:
            report.skipped_frequencies.append(s)
            continue
        resolvent_G = np.linalg.solve(s * np.eye(A.shape[0]) - A, G.astype(complex))
        HB = C @ resolvent_G @ Bp
        U, sv, _ = np.linalg.svd(HB)
        basis = U[:, : int(np.sum(sv > RANK_TOL * sv[0]))] if sv.size and sv[0] > 0 else U[:, :0]
        if basis.shape[1] == 0:
            report.intersections.append(IntersectionResult(s, np.pi / 2, False))
            continue
        angle = float(np.min(subspace_angles(basis, agree.astype(complex))))
        res = IntersectionResult(s, angle, angle < tol)
        if res.intersects:
            # vector of the agreement subspace closest to the range
            resid = agree - basis @ (basis.conj().T @ agree)
            _, _, Vh = np.linalg.svd(resid)
            y = agree @ Vh[-1].conj()
            lam0 = _phase_normalise(np.linalg.lstsq(HB, y, rcond=None)[0])
            res.witness_lambda = lam0
            res.witness_y = HB @ lam0
            res.witness_x = resolvent_G @ Bp @ lam0
        report.intersections.append(res)
    return report


@dataclass
class SprVerdict:
    passed: bool
    frequencies: list[float]
    min_eigenvalues: list[float]


def spr_check(nodes, exo: Exosystem, tol=1e-10) -> SprVerdict:
    """Positive definiteness of ``H(jw) + H(jw)^H`` at the exosystem frequencies only.

    This is a per-frequency test, weaker than strict positive realness on the
    whole axis; a pass is a sufficient condition for feasibility on trees.
    """
    A, G, C, _, _ = _linear_data(nodes, exo)
    evals = _eigenvalues(exo.matrix)
    if any(abs(s.real) > 1e-9 for s in evals):
        raise ValueError("exosystem has eigenvalues off the imaginary axis")
    omegas, mins = [], []
    for s in evals:
        if A.size and np.min(np.abs(np.linalg.eigvals(A) - s)) < 1e-9:
            raise ValueError(f"transfer matrix undefined: {s} is a pole of the plant")
        H = C @ np.linalg.solve(s * np.eye(A.shape[0]) - A, G.astype(complex))
        omegas.append(float(s.imag))
        mins.append(float(np.linalg.eigvalsh(H + H.conj().T).min()))
    return SprVerdict(all(v > tol for v in mins), omegas, mins)


# inventory networks ---------------------------------------------------------------


@dataclass
class SteadyState:
    t: np.ndarray
    w: np.ndarray
    x: np.ndarray
    u: np.ndarray
    lam: np.ndarray | None


def inventory_steady_state(P, exo: Exosystem, w0, t_grid, x0_w: float = 0.0, H=None) -> SteadyState:
    """Balanced inventory steady state along the exosystem solution from ``w0``.

    ``x_w(t) = 1 (x0_w + int_0^t 1^T P w / n)``, ``u_w = -Delta_n P w`` and,
    when a feedforward ``H`` is given, ``lambda_w = H w``.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    n = P.shape[0]
    t = np.asarray(t_grid, dtype=float)
    W = exo_trajectory(exo, w0, t)
    mean_supply = P.sum(axis=0) / n
    level = x0_w + exo_integral(exo, w0, t) @ mean_supply
    X = np.repeat(level[:, None], n, axis=1)
    U = -(W @ P.T) @ centering(n)
    lam = None if H is None else W @ np.asarray(H).T
    return SteadyState(t, W, X, U, lam)


def imbalance_boundedness(P, exo: Exosystem, w0, horizon: float, dt: float) -> tuple[float, str]:
    """Largest ``|int_0^t 1^T P w / n|`` on the horizon and a boundedness verdict.

    Verdicts: for a linear exosystem the oscillating modes integrate to
    bounded terms, so the verdict is ``unbounded (linear drift)`` when the
    constant modes excited by ``w0`` carry a nonzero mean supply and
    ``bounded (certified analytically)`` otherwise. Nonlinear exosystems get
    ``bounded on horizon only``.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    n = P.shape[0]
    mean_supply = P.sum(axis=0) / n
    n_steps = int(round(horizon / dt))
    t = dt * np.arange(n_steps + 1)
    if exo.is_linear:
        W = exo_trajectory(exo, w0, t)
    else:
        _, W = rk4_solve(lambda _t, w: exo_vector_field(exo, w), np.asarray(w0, float), dt, horizon)
    wbar = cumulative_trapezoid(W @ mean_supply, t, initial=0.0)
    peak = float(np.abs(wbar).max())
    if not exo.is_linear:
        return peak, "bounded on horizon only"
    w0 = np.asarray(w0, float)
    drift = 0.0
    for b, sl in zip(exo.blocks, exo.slices()):
        if isinstance(b, StaticBlock):
            drift += mean_supply[sl] @ w0[sl]
        elif isinstance(b, LinearSkewBlock):
            # the constant part of a skew block is the projection of w0 onto ker S
            K = null_space(b.S, rcond=1e-12)
            if K.size:
                drift += mean_supply[sl] @ (K @ (K.T @ w0[sl]))
    if abs(drift) > 1e-12:
        return peak, "unbounded (linear drift)"
    return peak, "bounded (certified analytically)"


def optimal_flow_oracle(Q, graph: NetworkGraph, P, w) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``min lambda^T Q lambda / 2  s.t.  B lambda + Delta_n P w = 0`` through its KKT system.

    The KKT matrix is singular (the constraint rows sum to zero), so the system
    is solved in the least-squares sense; the flow is unique, the multiplier
    is the minimum-norm one.
    """
    q = np.diag(Q) if np.ndim(Q) == 2 else np.asarray(Q, dtype=float)
    B = graph.incidence
    n, m = B.shape
    K = np.block([[np.diag(q), B.T], [B, np.zeros((n, n))]])
    rhs = np.concatenate([np.zeros(m), -centering(n) @ (np.atleast_2d(P) @ np.asarray(w, float))])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:m], sol[m:]


def optimal_flow_map(Q, graph: NetworkGraph, P) -> np.ndarray:
    """The linear map ``w -> lambda*(w)``, assembled column by column from the KKT oracle."""
    q_dim = np.atleast_2d(P).shape[1]
    return np.column_stack([optimal_flow_oracle(Q, graph, P, e)[0] for e in np.eye(q_dim)])


def gamma_distance(Q, graph: NetworkGraph, P, lam, w) -> float:
    """Distance from ``lambda`` to the optimal flow for the supply ``P w``."""
    return float(np.linalg.norm(np.asarray(lam, float) - optimal_flow_oracle(Q, graph, P, w)[0]))


# droop networks -------------------------------------------------------------------


@dataclass
class DroopDesign:
    y_w: float
    u_w: np.ndarray
    lambda_w: np.ndarray
    sine_ratio: np.ndarray
    feasible: bool
    eta_w: np.ndarray | None = None
    offending_edge: int | None = None


def droop_design_check(graph: NetworkGraph, a, D, P_star) -> DroopDesign:
    """Steady frequency, injections and line angles of an acyclic droop network.

    Feasible iff ``|A^{-1} (B^T B)^{-1} B^T u_w|_inf < 1``.
    """
    if not graph.is_acyclic():
        raise ValueError("droop analysis is restricted to acyclic networks")
    a, D, P_star = (np.asarray(v, dtype=float) for v in (a, D, P_star))
    if np.any(a <= 0) or np.any(D <= 0):
        raise ValueError("line coefficients and droop coefficients must be positive")
    B = graph.incidence
    y_w = float(P_star.sum() / D.sum())
    u_w = D * y_w - P_star
    lam_w = np.linalg.solve(B.T @ B, B.T @ u_w)
    ratio = lam_w / a
    k = int(np.argmax(np.abs(ratio))) if ratio.size else None
    feasible = bool(ratio.size == 0 or np.abs(ratio).max() < 1.0)
    return DroopDesign(
        y_w=y_w,
        u_w=u_w,
        lambda_w=lam_w,
        sine_ratio=ratio,
        feasible=feasible,
        eta_w=np.arcsin(ratio) if feasible else None,
        offending_edge=None if feasible else k,
    )
