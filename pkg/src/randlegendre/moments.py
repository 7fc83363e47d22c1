"""Expectation and variance of the truncated random series.

With ``c_n(a)`` the series coefficients (see :mod:`randlegendre.series`),

    E[X^M(t)]   = sum_m E[X0 c_2m(A)] t^2m + sum_m E[X1 c_2m+1(A)] t^2m+1
    E[X^M(t)^2] = sum_mn E[X0^2 c_2m c_2n] t^2(m+n)
                + sum_mn E[X1^2 c_2m+1 c_2n+1] t^2(m+n)+2
                + 2 sum_mn E[X0 X1 c_2m c_2n+1] t^2(m+n)+1

The five families of mixed moments depend on ``(m, n)`` but not on ``t``.
Every moment is a weighted sum over quadrature nodes (or atoms) ``a_k``, so
the double sums factor node by node:

    sum_mn E[X0^2 c_2m c_2n] t^2(m+n) = sum_k w20_k (sum_m c_2m(a_k) t^2m)^2

and likewise for the other two. Tables are assembled in this factored form,
with the coefficient vectors of every node computed once at the largest
order requested. Contracting with ``t`` before summing over nodes keeps the
roundoff proportional to the size of each node's series, not its square,
which matters near ``|t| = 1`` where the terms grow large and cancel.
:class:`MixedMoments` keeps the unfactored pair-moment matrices.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .distributions import JointInputModel, QuadratureError, require_valid
from .series import _check_order, _check_t, _horner, coefficient_arrays, n_even, n_odd

NEGATIVE_VARIANCE_CLAMP = 1e-9
_EPS = float(np.finfo(float).eps)
DEFAULT_STABILIZATION_TOL = 1e-6

_quadrature_memo: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _quadrature(model: JointInputModel, level: int):
    per_model = _quadrature_memo.setdefault(model, {})
    if level not in per_model:
        per_model[level] = model.quadrature(level)
    return per_model[level]


@dataclass(frozen=True, eq=False)
class MixedMoments:
    """Mixed moments with the series weights folded in.

    ``even[m] = E[X0 c_2m(A)]``, ``odd[m] = E[X1 c_2m+1(A)]``,
    ``even_even[m, n] = E[X0^2 c_2m c_2n]``, ``odd_odd[m, n] = E[X1^2 c_2m+1 c_2n+1]``,
    ``even_odd[m, n] = E[X0 X1 c_2m c_2n+1]``.
    """

    order: int
    even: np.ndarray
    odd: np.ndarray
    even_even: np.ndarray
    odd_odd: np.ndarray
    even_odd: np.ndarray

    def cell(self, t: float, M: int) -> tuple[float, float]:
        """Mean and second moment of ``X^M(t)``; ``M`` must not exceed ``order``."""
        if M > self.order:
            raise ValueError(f"moments were built up to order {self.order}, asked for {M}")
        ne, no = n_even(M), n_odd(M)
        s = t * t
        te = s ** np.arange(ne)
        to = t * s ** np.arange(no)
        mean = self.even[:ne] @ te + self.odd[:no] @ to
        second = (
            te @ self.even_even[:ne, :ne] @ te
            + to @ self.odd_odd[:no, :no] @ to
            + 2.0 * (te @ self.even_odd[:ne, :no] @ to)
        )
        return float(mean), float(second)


def _pair(w: np.ndarray, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    # reduce over nodes row by row so every entry is summed in the same
    # order regardless of how many columns are requested
    return (w[:, None, None] * left[:, :, None] * right[:, None, :]).sum(axis=0)


def mixed_moments_from_quadrature(q, M: int) -> MixedMoments:
    even, odd = coefficient_arrays(q.a, M)
    w = q.weights
    return MixedMoments(
        order=M,
        even=(w[(1, 0)][:, None] * even).sum(axis=0),
        odd=(w[(0, 1)][:, None] * odd).sum(axis=0),
        even_even=_pair(w[(2, 0)], even, even),
        odd_odd=_pair(w[(0, 2)], odd, odd),
        even_odd=_pair(w[(1, 1)], even, odd),
    )


def mixed_moments(model: JointInputModel, M: int, level: int = 0) -> MixedMoments:
    return mixed_moments_from_quadrature(_quadrature(model, level), _check_order(M))


@dataclass(frozen=True, eq=False)
class NodeSeries:
    """Series coefficients at every quadrature node, with the moment weights."""

    order: int
    even: np.ndarray  # (nodes, n_even(order))
    odd: np.ndarray  # (nodes, n_odd(order))
    weights: dict

    def _series(self, t, M, absolute=False):
        if M > self.order:
            raise ValueError(f"moments were built up to order {self.order}, asked for {M}")
        even, odd = self.even[:, : n_even(M)], self.odd[:, : n_odd(M)]
        if absolute:
            even, odd, t = np.abs(even), np.abs(odd), abs(t)
        s = t * t
        return _horner(even, s), t * _horner(odd, s)

    def cell(self, t: float, M: int) -> tuple[float, float]:
        """Mean and second moment of ``X^M(t)``; ``M`` must not exceed ``order``."""
        e, o = self._series(t, M)
        w = self.weights
        mean = np.sum(w[(1, 0)] * e + w[(0, 1)] * o)
        second = np.sum(w[(2, 0)] * e * e + w[(0, 2)] * o * o + 2.0 * w[(1, 1)] * e * o)
        return float(mean), float(second)

    def roundoff(self, t: float, M: int) -> tuple[float, float]:
        """Bounds on the floating-point error of the mean and variance from :meth:`cell`."""
        e, o = self._series(t, M)
        abs_e, abs_o = self._series(t, M, absolute=True)
        n = n_even(M) + n_odd(M)
        # Horner error per node is at most ~n eps times the absolute series
        de, do = n * _EPS * abs_e, n * _EPS * abs_o
        w = {k: np.abs(v) for k, v in self.weights.items()}
        ae, ao = np.abs(e), np.abs(o)
        mean_terms = w[(1, 0)] * ae + w[(0, 1)] * ao
        second_terms = w[(2, 0)] * ae * ae + w[(0, 2)] * ao * ao + 2 * w[(1, 1)] * ae * ao
        mean_err = np.sum(w[(1, 0)] * de + w[(0, 1)] * do)
        second_err = np.sum(
            2 * w[(2, 0)] * ae * de + 2 * w[(0, 2)] * ao * do + 2 * w[(1, 1)] * (ae * do + ao * de)
        )
        # summing over nodes
        mean_err += len(e) * _EPS * np.sum(mean_terms)
        second_err += len(e) * _EPS * np.sum(second_terms)
        mean, _ = self.cell(t, M)
        return 4 * float(mean_err), 4 * float(second_err + 2 * abs(mean) * mean_err)


def node_series(model: JointInputModel, M: int, level: int = 0) -> NodeSeries:
    q = _quadrature(model, level)
    even, odd = coefficient_arrays(q.a, _check_order(M))
    return NodeSeries(order=M, even=even, odd=odd, weights=q.weights)


@dataclass
class MomentCell:
    mean: float
    variance: float
    second_moment: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.diagnostics.get("converged", True)


@dataclass
class MomentTable:
    t_grid: list
    M_list: list
    cells: dict  # (t, M) -> MomentCell

    def cell(self, t: float, M: int) -> MomentCell:
        return self.cells[(t, M)]

    def grid(self, quantity: str) -> np.ndarray:
        """Rows follow ``t_grid``, columns follow ``M_list``."""
        return np.array(
            [[getattr(self.cells[(t, M)], quantity) for M in self.M_list] for t in self.t_grid]
        )

    def unconverged(self) -> list:
        return [key for key, c in self.cells.items() if not c.converged]


def _finish_cell(mean, second, diagnostics) -> MomentCell:
    variance = second - mean * mean
    if variance < 0:
        if variance >= -NEGATIVE_VARIANCE_CLAMP:
            diagnostics["clamped_variance"] = variance
            variance = 0.0
        else:
            diagnostics["negative_variance"] = variance
    return MomentCell(mean=mean, variance=variance, second_moment=second, diagnostics=diagnostics)


def moment_table(
    model: JointInputModel,
    t_grid,
    M_list,
    override_unbounded: bool = False,
) -> MomentTable:
    """Fill the ``(t, M)`` grid of means and variances.

    For quadrature-based models each cell is also computed with the refined
    rule; cells whose coarse and refined values differ by more than
    ``model.tol`` (relative to the natural scale of the cell) carry
    ``converged=False`` in their diagnostics instead of raising.
    """
    t_grid = [float(t) for t in t_grid]
    M_list = [_check_order(M) for M in M_list]
    if not t_grid or not M_list:
        raise ValueError("t grid and M list must be nonempty")
    _check_t(t_grid)
    require_valid(model, override_unbounded)

    M_max = max(M_list)
    fine = node_series(model, M_max, level=0 if model.exact else 1)
    coarse = None if model.exact else node_series(model, M_max, level=0)

    cells = {}
    for t in t_grid:
        for M in M_list:
            mean, second = fine.cell(t, M)
            diag = {}
            if coarse is not None:
                c_mean, c_second = coarse.cell(t, M)
                c_var = c_second - c_mean * c_mean
                mean_err = abs(c_mean - mean)
                var_err = abs(c_var - (second - mean * mean))
                scale = max(abs(second), 1e-300)
                # cancellation in the t-sums limits what refinement can resolve
                mean_floor, var_floor = fine.roundoff(t, M)
                diag = {
                    "mean_quadrature_error": mean_err,
                    "variance_quadrature_error": var_err,
                    "mean_roundoff_floor": mean_floor,
                    "variance_roundoff_floor": var_floor,
                    "converged": bool(
                        mean_err <= max(model.tol * math.sqrt(scale), mean_floor)
                        and var_err <= max(model.tol * scale, var_floor)
                    ),
                }
            cells[(t, M)] = _finish_cell(mean, second, diag)
    return MomentTable(t_grid=t_grid, M_list=M_list, cells=cells)


def _single(model, t, M, override_unbounded) -> MomentCell:
    table = moment_table(model, [t], [M], override_unbounded)
    cell = table.cell(float(t), int(M))
    if not cell.converged:
        raise QuadratureError(
            f"moments at t={t}, M={M} did not converge under refinement",
            cell.diagnostics.get("mean_quadrature_error"),
            cell.diagnostics.get("variance_quadrature_error"),
        )
    return cell


def expectation(model: JointInputModel, t: float, M: int, override_unbounded: bool = False) -> float:
    """``E[X^M(t)]``."""
    return _single(model, t, M, override_unbounded).mean


def variance(model: JointInputModel, t: float, M: int, override_unbounded: bool = False) -> float:
    """``V[X^M(t)] = E[X^M(t)^2] - E[X^M(t)]^2``."""
    return _single(model, t, M, override_unbounded).variance


def _rel_close(new: float, old: float, tol: float) -> bool:
    return abs(new - old) <= tol * abs(new)


def stabilization_check(
    model: JointInputModel,
    t: float,
    M_schedule,
    tol: float = DEFAULT_STABILIZATION_TOL,
    override_unbounded: bool = False,
) -> Optional[int]:
    """First order in ``M_schedule`` after which mean and variance move by at
    most ``tol`` (relative) at the next entry; ``None`` if there is none."""
    schedule = [_check_order(M) for M in M_schedule]
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("M schedule must be strictly increasing")
    if tol < 0:
        raise ValueError("tolerance must be nonnegative")
    table = moment_table(model, [t], schedule, override_unbounded)
    t = float(t)
    for cur, nxt in zip(schedule, schedule[1:]):
        a, b = table.cell(t, cur), table.cell(t, nxt)
        if _rel_close(b.mean, a.mean, tol) and _rel_close(b.variance, a.variance, tol):
            return cur
    return None
