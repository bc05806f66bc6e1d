"""Disturbance generators ``w' = s(w)``, one block per node."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

SKEW_TOL = 1e-12


@dataclass(frozen=True)
class StaticBlock:
    """Constant disturbance, ``s(w) = 0``."""

    dim: int
    box: tuple[float, ...] | None = None

    def field(self, w):
        return np.zeros(self.dim)


@dataclass(frozen=True, eq=False)
class LinearSkewBlock:
    S: np.ndarray
    box: tuple[float, ...] | None = None

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        if S.shape[0] != S.shape[1]:
            raise ValueError(f"generator matrix must be square, got {S.shape}")
        if np.linalg.norm(S + S.T) >= SKEW_TOL:
            raise ValueError("generator matrix is not skew-symmetric")
        object.__setattr__(self, "S", S)

    @property
    def dim(self) -> int:
        return self.S.shape[0]

    def field(self, w):
        return self.S @ w


@dataclass(frozen=True, eq=False)
class GeneralBlock:
    """User vector field. ``monotone`` is the caller's claim, checked by sampling."""

    fn: Callable[[np.ndarray], np.ndarray]
    dim: int
    monotone: bool = True
    box: tuple[float, ...] | None = None

    def field(self, w):
        return np.asarray(self.fn(w), dtype=float)


def rotation_block(frequency: float, box=None) -> LinearSkewBlock:
    """2x2 oscillator ``[[0, -f], [f, 0]]``."""
    f = float(frequency)
    return LinearSkewBlock(np.array([[0.0, -f], [f, 0.0]]), box=box)


@dataclass(frozen=True, eq=False)
class Exosystem:
    blocks: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        offsets = np.concatenate([[0], np.cumsum([b.dim for b in self.blocks])]).astype(int)
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "_S", self._stacked_matrix())

    @property
    def dims(self) -> list[int]:
        return [b.dim for b in self.blocks]

    @property
    def q(self) -> int:
        return int(self._offsets[-1])

    def slices(self) -> list[slice]:
        o = self._offsets
        return [slice(o[i], o[i + 1]) for i in range(len(self.blocks))]

    @property
    def is_linear(self) -> bool:
        return all(not isinstance(b, GeneralBlock) for b in self.blocks)

    def _stacked_matrix(self):
        if not self.is_linear:
            return None
        S = np.zeros((self.q, self.q))
        for b, sl in zip(self.blocks, self.slices()):
            if isinstance(b, LinearSkewBlock):
                S[sl, sl] = b.S
        return S

    @property
    def matrix(self) -> np.ndarray:
        """Block-diagonal generator; only defined for linear exosystems."""
        if self._S is None:
            raise ValueError("exosystem has a general block and no generator matrix")
        return self._S

    def box(self) -> np.ndarray:
        """Half-widths of the initial-condition box, default 1 per coordinate."""
        parts = [np.ones(b.dim) if b.box is None else np.asarray(b.box, float) for b in self.blocks]
        return np.concatenate(parts) if parts else np.zeros(0)


def exo_vector_field(exo: Exosystem, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (exo.q,):
        raise ValueError(f"exosystem state has dimension {exo.q}, got shape {w.shape}")
    if exo._S is not None:
        return exo._S @ w
    return np.concatenate([b.field(w[sl]) for b, sl in zip(exo.blocks, exo.slices())])


def stacked_field(exo: Exosystem, W: np.ndarray) -> np.ndarray:
    """Vector field applied row-wise to a ``(k, q)`` array of exosystem copies."""
    if exo._S is not None:
        return W @ exo._S.T
    return np.stack([exo_vector_field(exo, row) for row in W])


def check_incremental_monotonicity(exo: Exosystem, sample_count: int = 1000, seed: int = 0) -> dict:
    """Sample ``(w - w')^T (s(w) - s(w'))`` over the initial-condition box of every block.

    Returns ``{"max_value", "passed", "witness", "per_block"}``; the witness is
    the worst pair found when the check fails.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    worst, witness, per_block = -np.inf, None, []
    for i, b in enumerate(exo.blocks):
        half = np.ones(b.dim) if b.box is None else np.asarray(b.box, float)
        w1 = rng.uniform(-half, half, size=(sample_count, b.dim))
        w2 = rng.uniform(-half, half, size=(sample_count, b.dim))
        vals = np.array([(a - c) @ (b.field(a) - b.field(c)) for a, c in zip(w1, w2)])
        k = int(np.argmax(vals))
        per_block.append(float(vals[k]))
        if vals[k] > worst:
            worst = float(vals[k])
            witness = (i, w1[k], w2[k])
    passed = worst <= SKEW_TOL
    return {
        "max_value": worst,
        "passed": passed,
        "witness": None if passed else witness,
        "per_block": per_block,
    }


def _rotation_parts(S, t):
    """Closed form of ``exp(S t)`` for a 2x2 skew block ``[[0, -f], [f, 0]]``."""
    f = S[1, 0]
    c, s = np.cos(f * t), np.sin(f * t)
    return np.array([[c, -s], [s, c]])


def exo_closed_form(exo: Exosystem, w0, t: float) -> np.ndarray:
    """Exact ``w(t) = exp(S t) w0`` computed block by block."""
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (exo.q,):
        raise ValueError(f"initial condition has dimension {w0.shape}, expected {exo.q}")
    out = np.empty_like(w0)
    for b, sl in zip(exo.blocks, exo.slices()):
        if isinstance(b, GeneralBlock):
            raise ValueError("no closed form for a general exosystem block")
        if isinstance(b, StaticBlock):
            out[sl] = w0[sl]
        elif b.dim == 2:
            out[sl] = _rotation_parts(b.S, t) @ w0[sl]
        else:
            out[sl] = expm(b.S * t) @ w0[sl]
    return out


def exo_trajectory(exo: Exosystem, w0, times: Sequence[float]) -> np.ndarray:
    """Closed-form solution on a time grid, shape ``(len(times), q)``."""
    times = np.asarray(times, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    out = np.empty((times.size, exo.q))
    for b, sl in zip(exo.blocks, exo.slices()):
        if isinstance(b, GeneralBlock):
            raise ValueError("no closed form for a general exosystem block")
        if isinstance(b, StaticBlock):
            out[:, sl] = w0[sl]
        elif b.dim == 2:
            f = b.S[1, 0]
            c, s = np.cos(f * times), np.sin(f * times)
            a0, a1 = w0[sl]
            out[:, sl] = np.column_stack([c * a0 - s * a1, s * a0 + c * a1])
        else:
            out[:, sl] = np.stack([expm(b.S * t) @ w0[sl] for t in times])
    return out


def exo_integral(exo: Exosystem, w0, times: Sequence[float]) -> np.ndarray:
    """Exact ``int_0^t w(s) ds`` on a time grid, shape ``(len(times), q)``."""
    times = np.asarray(times, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    out = np.empty((times.size, exo.q))
    for b, sl in zip(exo.blocks, exo.slices()):
        if isinstance(b, GeneralBlock):
            raise ValueError("no closed form for a general exosystem block")
        if isinstance(b, StaticBlock) or not np.any(b.S):
            out[:, sl] = np.outer(times, w0[sl])
        elif b.dim == 2:
            f = b.S[1, 0]
            si, om = np.sin(f * times) / f, (1.0 - np.cos(f * times)) / f
            a0, a1 = w0[sl]
            out[:, sl] = np.column_stack([si * a0 - om * a1, om * a0 + si * a1])
        else:
            d = b.dim
            aug = np.zeros((2 * d, 2 * d))
            aug[:d, :d] = b.S
            aug[:d, d:] = np.eye(d)
            out[:, sl] = np.stack([expm(aug * t)[:d, d:] @ w0[sl] for t in times])
    return out
