"""Adaptive Dormand-Prince 5(4) integration of the Legendre equation.

The equation is written as the first-order system

    x' = v
    v' = (2 t v - a(a+1) x) / (1 - t^2)

and a whole batch of realizations is advanced with one shared step size,
controlled by the worst local error estimate in the batch. Each output time
is hit exactly.
"""
from __future__ import annotations

import numpy as np

T_GUARD = 0.95

# Dormand & Prince (1980), RK5(4)7M
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array(_A[6] + [0.0])
# difference between the 5th- and embedded 4th-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


class StepSizeError(RuntimeError):
    def __init__(self, message, t_reached):
        super().__init__(f"{message} (reached t={t_reached!r})")
        self.t_reached = t_reached


def _rhs(t, y, lam):
    x, v = y[:, 0], y[:, 1]
    out = np.empty_like(y)
    out[:, 0] = v
    out[:, 1] = (2.0 * t * v - lam * x) / (1.0 - t * t)
    return out


def _integrate_one_direction(lam, y, targets, rel_tol, abs_tol, h0, max_steps):
    """Advance ``y`` from t=0 through ``targets`` (all same sign, sorted by |t|)."""
    direction = 1.0 if targets[-1] > 0 else -1.0
    out = np.empty((len(y), len(targets)))
    t = 0.0
    h = direction * h0
    k1 = _rhs(t, y, lam)
    steps = 0
    for j, target in enumerate(targets):
        while direction * (target - t) > 0:
            if steps >= max_steps:
                raise StepSizeError(f"exceeded {max_steps} steps", t)
            last = direction * (t + h - target) >= 0
            if last:
                h = target - t
            if abs(h) < 16 * np.finfo(float).eps * max(abs(t), 1.0):
                raise StepSizeError("step size underflow", t)

            k = [k1]
            for s in range(1, 7):
                ys = y + h * sum(coef * kk for coef, kk in zip(_A[s], k))
                k.append(_rhs(t + _C[s] * h, ys, lam))
            y_new = y + h * sum(b * kk for b, kk in zip(_B[:6], k[:6]))
            err_vec = h * sum(e * kk for e, kk in zip(_E, k))
            scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.max(np.sqrt(np.mean((err_vec / scale) ** 2, axis=1)))) if len(y) else 0.0
            steps += 1

            if err <= 1.0:
                t = target if last else t + h
                y = y_new
                k1 = k[6]  # first-same-as-last
                factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            else:
                factor = max(0.2, 0.9 * err ** -0.2)
                last = False
            h = h * factor
        out[:, j] = y[:, 0]
    return out


def integrate_batch(
    a,
    x0,
    x1,
    t_out,
    rel_tol: float = 1e-10,
    abs_tol: float = None,
    h0: float = 1e-3,
    max_steps: int = 1_000_000,
) -> np.ndarray:
    """``X(t)`` for each realization and each output time; shape ``(n, len(t_out))``.

    ``abs_tol`` defaults to ``rel_tol``. Output times must satisfy
    ``|t| <= 0.95``.
    """
    t_out = np.atleast_1d(np.asarray(t_out, dtype=float))
    if np.any(np.abs(t_out) > T_GUARD):
        raise ValueError(f"ODE oracle is restricted to |t| <= {T_GUARD}, got {t_out}")
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    abs_tol = rel_tol if abs_tol is None else abs_tol
    a = np.asarray(a, dtype=float)
    lam = a * (a + 1.0)
    y0 = np.column_stack([np.asarray(x0, dtype=float), np.asarray(x1, dtype=float)])
    result = np.empty((len(a), len(t_out)))

    for sign in (1.0, -1.0):
        idx = np.flatnonzero(sign * t_out > 0)
        if len(idx) == 0:
            continue
        order = idx[np.argsort(np.abs(t_out[idx]), kind="stable")]
        result[:, order] = _integrate_one_direction(
            lam, y0.copy(), t_out[order], rel_tol, abs_tol, h0, max_steps
        )
    result[:, t_out == 0] = y0[:, :1]
    return result


def ode_solve(r, t_end: float, rel_tol: float = 1e-10) -> float:
    """Integrate one realization from 0 to ``t_end`` and return ``X(t_end)``."""
    if t_end == 0:
        return float(r.x0)
    return float(integrate_batch([r.a], [r.x0], [r.x1], [t_end], rel_tol=rel_tol)[0, 0])
