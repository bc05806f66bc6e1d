"""Classical fixed-step fourth-order Runge-Kutta."""

import numpy as np


def rk4_step(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_count(dt: float, T: float) -> int:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if T < dt:
        raise ValueError(f"horizon T={T} is shorter than one step dt={dt}")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    return n


def rk4_solve(f, y0, dt, T):
    """Integrate ``y' = f(t, y)``; returns the grid and the states, shape ``(N+1, dim)``."""
    n = step_count(dt, T)
    t = dt * np.arange(n + 1)
    Y = np.empty((n + 1, np.size(y0)))
    Y[0] = y0
    y = np.asarray(y0, dtype=float)
    for k in range(n):
        y = rk4_step(f, t[k], y, dt)
        Y[k + 1] = y
    return t, Y
