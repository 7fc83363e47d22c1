"""Monte Carlo estimators used to check the moment engine.

Two evaluators share one sampling path: the truncated series at a high
order, and the adaptive ODE integrator from :mod:`randlegendre.ode`.
Realizations are processed in fixed-size chunks written into one array and
reduced in a fixed order, so the report does not depend on the worker count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .distributions import JointInputModel, require_valid, sample
from .ode import T_GUARD, integrate_batch
from .series import _check_t, eval_batch

CHUNK = 32768
DEFAULT_M_EVAL = 120


@dataclass(eq=False)
class McReport:
    t_grid: list
    mean: np.ndarray
    variance: np.ndarray
    se_mean: np.ndarray
    se_variance: np.ndarray
    n: int
    seed: int
    generator: str
    evaluator: str  # "series" or "ode"
    settings: dict

    def to_dict(self) -> dict:
        return {
            "t_grid": list(self.t_grid),
            "mean": self.mean.tolist(),
            "variance": self.variance.tolist(),
            "se_mean": self.se_mean.tolist(),
            "se_variance": self.se_variance.tolist(),
            "n": self.n,
            "seed": self.seed,
            "generator": self.generator,
            "evaluator": self.evaluator,
            "settings": dict(self.settings),
        }


def summarize(values: np.ndarray) -> tuple[np.ndarray, ...]:
    """Mean, unbiased variance and their standard errors, column by column."""
    n = values.shape[0]
    mean = values.mean(axis=0)
    centered = values - mean
    m2 = (centered**2).mean(axis=0)
    m4 = (centered**4).mean(axis=0)
    var = m2 * n / (n - 1)
    se_mean = np.sqrt(var / n)
    se_var = np.sqrt(np.maximum(m4 - m2 * m2, 0.0) / n)
    return mean, var, se_mean, se_var


def _evaluate(rows: np.ndarray, fn, workers: int, dedupe: bool) -> np.ndarray:
    if dedupe:
        uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
        return _evaluate(uniq, fn, workers, dedupe=False)[inverse.reshape(-1)]
    starts = range(0, len(rows), CHUNK)
    chunks = [rows[s : s + CHUNK] for s in starts]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, chunks))
    else:
        parts = [fn(c) for c in chunks]
    return np.concatenate(parts, axis=0)


def _report(model, t_grid, n, seed, evaluator, settings, fn, workers, override_unbounded):
    if n < 2:
        raise ValueError("Monte Carlo needs at least 2 samples")
    require_valid(model, override_unbounded)
    batch = sample(model, n, seed)
    values = _evaluate(batch.values, fn, workers, dedupe=model.exact)
    mean, var, se_mean, se_var = summarize(values)
    return McReport(
        t_grid=list(t_grid),
        mean=mean,
        variance=var,
        se_mean=se_mean,
        se_variance=se_var,
        n=n,
        seed=int(seed),
        generator=batch.generator,
        evaluator=evaluator,
        settings=settings,
    )


def mc_estimate(
    model: JointInputModel,
    t_grid,
    n: int,
    M_eval: int = DEFAULT_M_EVAL,
    seed: int = 0,
    workers: int = 1,
    override_unbounded: bool = False,
) -> McReport:
    """Sample ``n`` realizations and evaluate the order-``M_eval`` series at each ``t``."""
    t_grid = [float(t) for t in t_grid]
    _check_t(t_grid)
    t_arr = np.array(t_grid)

    def fn(rows):
        return eval_batch(rows[:, 0], rows[:, 1], rows[:, 2], t_arr, M_eval)

    return _report(
        model, t_grid, n, seed, "series", {"M_eval": M_eval}, fn, workers, override_unbounded
    )


def mc_ode_estimate(
    model: JointInputModel,
    t_grid,
    n: int,
    rel_tol: float = 1e-10,
    seed: int = 0,
    workers: int = 1,
    override_unbounded: bool = False,
) -> McReport:
    """As :func:`mc_estimate`, but each realization is integrated numerically."""
    t_grid = [float(t) for t in t_grid]
    if any(abs(t) > T_GUARD for t in t_grid):
        raise ValueError(f"ODE evaluator is restricted to |t| <= {T_GUARD}")
    t_arr = np.array(t_grid)

    def fn(rows):
        return integrate_batch(rows[:, 0], rows[:, 1], rows[:, 2], t_arr, rel_tol=rel_tol)

    return _report(
        model, t_grid, n, seed, "ode", {"rel_tol": rel_tol}, fn, workers, override_unbounded
    )
