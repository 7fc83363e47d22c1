"""Truncated Frobenius series for the Legendre equation at a fixed realization.

For a realized coefficient ``a`` the solution with ``X(0) = x0`` and
``X'(0) = x1`` is ``x0 * even(t) + x1 * odd(t)`` where both fundamental
series share the two-term recurrence

    c[n+2] = c[n] * (n(n+1) - a(a+1)) / ((n+1)(n+2)),   c[0] = c[1] = 1.

Truncating at order ``M`` keeps even indices ``2m`` for ``m <= M // 2`` and
odd indices ``2m+1`` for ``m <= (M-1) // 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised when an evaluation point lies outside the open interval (-1, 1)."""


@dataclass(frozen=True)
class Realization:
    """One draw of the random inputs ``(A, X0, X1)``."""

    a: float
    x0: float
    x1: float

    def __post_init__(self):
        for name in ("a", "x0", "x1"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"realization field {name!r} must be finite")
        if self.a < 0:
            raise ValueError(f"coefficient a must be nonnegative, got {self.a}")


@dataclass(frozen=True)
class CoefficientSequence:
    a: float
    even: np.ndarray  # c0, c2, c4, ...
    odd: np.ndarray  # c1, c3, c5, ...


def n_even(M: int) -> int:
    """Number of even-index terms kept at truncation order ``M``."""
    return M // 2 + 1


def n_odd(M: int) -> int:
    """Number of odd-index terms kept at truncation order ``M``."""
    return (M - 1) // 2 + 1 if M >= 1 else 0


def _check_order(M) -> int:
    if isinstance(M, bool) or int(M) != M or M < 0:
        raise ValueError(f"truncation order must be a nonnegative integer, got {M!r}")
    return int(M)


def _check_t(t) -> None:
    if np.any(np.abs(np.asarray(t, dtype=float)) >= 1.0):
        raise DomainError(f"series is only evaluated on |t| < 1, got t={t}")


def product_P1(a: float, m: int) -> float:
    """Direct product prod_{k=1..m} (a - 2k + 2)(a + 2k - 1).

    Only meant as an oracle for small ``m``; the production path is the
    recurrence in :func:`coefficients`.
    """
    out = 1.0
    for k in range(1, m + 1):
        out *= (a - 2 * k + 2) * (a + 2 * k - 1)
    if not math.isfinite(out):
        raise OverflowError(f"P1({a}, {m}) overflows double precision")
    return out


def product_P2(a: float, m: int) -> float:
    """Direct product prod_{k=1..m} (a - 2k + 1)(a + 2k)."""
    out = 1.0
    for k in range(1, m + 1):
        out *= (a - 2 * k + 1) * (a + 2 * k)
    if not math.isfinite(out):
        raise OverflowError(f"P2({a}, {m}) overflows double precision")
    return out


def coefficient_arrays(a, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized recurrence: even/odd coefficient arrays for every ``a``.

    Returns arrays of shape ``a.shape + (n_even(M),)`` and
    ``a.shape + (n_odd(M),)``.
    """
    M = _check_order(M)
    a = np.asarray(a, dtype=float)
    lam = a * (a + 1.0)
    ne, no = n_even(M), n_odd(M)
    even = np.empty(a.shape + (ne,))
    odd = np.empty(a.shape + (no,))
    even[..., 0] = 1.0
    for m in range(1, ne):
        n = 2 * m - 2
        even[..., m] = even[..., m - 1] * ((n * (n + 1) - lam) / ((n + 1) * (n + 2)))
    if no:
        odd[..., 0] = 1.0
    for m in range(1, no):
        n = 2 * m - 1
        odd[..., m] = odd[..., m - 1] * ((n * (n + 1) - lam) / ((n + 1) * (n + 2)))
    return even, odd


def coefficients(a: float, M: int) -> CoefficientSequence:
    if not math.isfinite(a) or a < 0:
        raise ValueError(f"coefficient a must be finite and nonnegative, got {a}")
    even, odd = coefficient_arrays(a, M)
    return CoefficientSequence(a=float(a), even=even, odd=odd)


def _horner(coef: np.ndarray, s) -> np.ndarray:
    # coef[..., k] multiplies s**k; s broadcasts against coef[..., 0]
    out = np.zeros(np.broadcast_shapes(coef.shape[:-1], np.shape(s)))
    for k in range(coef.shape[-1] - 1, -1, -1):
        out = out * s + coef[..., k]
    return out


def eval_batch(a, x0, x1, t, M: int) -> np.ndarray:
    """Evaluate ``X^M(t)`` for arrays of realizations.

    ``a``, ``x0`` and ``x1`` are 1-D arrays of equal length; ``t`` is a scalar
    or 1-D array. The result has shape ``(len(a), len(t))`` (or ``(len(a),)``
    for scalar ``t``).
    """
    _check_t(t)
    even, odd = coefficient_arrays(a, M)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if t_arr.ndim:
        even, odd = even[:, None, :], odd[:, None, :]
        x0, x1 = x0[:, None], x1[:, None]
    s = t_arr * t_arr
    return x0 * _horner(even, s) + x1 * (t_arr * _horner(odd, s))


def eval_truncated(r: Realization, t: float, M: int) -> float:
    """``x0 * sum c_2m t^2m + x1 * sum c_2m+1 t^2m+1`` via Horner in ``t**2``."""
    _check_t(t)
    seq = coefficients(r.a, M)
    s = t * t
    return float(r.x0 * _horner(seq.even, s) + r.x1 * (t * _horner(seq.odd, s)))


def full_polynomial(r: Realization, M: int) -> np.ndarray:
    """Power-basis coefficients (lowest degree first) of ``X^M`` for ``r``."""
    seq = coefficients(r.a, M)
    poly = np.zeros(max(M, 0) + 1)
    poly[0::2][: len(seq.even)] = r.x0 * seq.even
    poly[1::2][: len(seq.odd)] = r.x1 * seq.odd
    return poly


def residual(r: Realization, t: float, M: int) -> float:
    """Legendre operator applied to the truncation, with exact derivatives."""
    _check_t(t)
    poly = full_polynomial(r, M)
    P = np.polynomial.polynomial
    x = P.polyval(t, poly)
    dx = P.polyval(t, P.polyder(poly)) if len(poly) > 1 else 0.0
    ddx = P.polyval(t, P.polyder(poly, 2)) if len(poly) > 2 else 0.0
    return float((1.0 - t * t) * ddx - 2.0 * t * dx + r.a * (r.a + 1.0) * x)
