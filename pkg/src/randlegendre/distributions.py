"""Joint laws of ``(A, X0, X1)`` and the mixed moments the series needs.

Every model reduces the integrals ``E[X0^p0 X1^p1 f(A)]`` to a weighted sum
over nodes in ``a``:

    E[X0^p0 X1^p1 f(A)] ~= sum_k w[p0, p1][k] * f(a[k])

which is all the moment engine needs, since the series coefficients depend
on the realization only through ``a``. Discrete models give this exactly;
continuous ones marginalize a tensor Gauss-Legendre rule over ``(x0, x1)``;
the truncated Gaussian uses the closed-form conditional moments of
``(X0, X1)`` given ``A = a``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln, ndtr

GENERATOR_ID = "numpy.random.Philox"
MOMENT_KINDS = ((0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1))


class QuadratureError(RuntimeError):
    """Refined and unrefined quadrature disagree beyond tolerance."""

    def __init__(self, message, coarse, fine):
        super().__init__(f"{message} (coarse={coarse!r}, refined={fine!r})")
        self.coarse = coarse
        self.fine = fine


class HypothesisError(ValueError):
    """The model violates the hypotheses required by the series solution."""


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class MomentQuadrature:
    """Nodes in ``a`` plus one weight vector per moment kind ``(p0, p1)``."""

    a: np.ndarray
    weights: dict
    exact: bool = False

    def integrate(self, p0: int, p1: int, values: np.ndarray) -> float:
        return float(np.sum(self.weights[(p0, p1)] * values))


def make_rng(seed: int) -> np.random.Generator:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.Philox(seed))


def _gauss_legendre(n: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return half * x + 0.5 * (hi + lo), half * w


class JointInputModel:
    """Common surface of the three model variants."""

    kind = "abstract"
    exact = False
    tol = 0.0

    def quadrature(self, level: int = 0) -> MomentQuadrature:
        raise NotImplementedError

    def support_bound(self) -> float:
        """Essential supremum of ``|A|`` (``inf`` if unbounded)."""
        raise NotImplementedError

    def support_min(self) -> float:
        """Infimum of ``A`` over the support."""
        raise NotImplementedError

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


@dataclass(eq=False)
class DiscreteFinite(JointInputModel):
    """Finite set of atoms: rows ``(a, x0, x1, probability)``."""

    atoms: np.ndarray
    kind: str = "discrete"
    params: dict = field(default_factory=dict)
    exact = True

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim != 2 or atoms.shape[1] != 4 or len(atoms) == 0:
            raise ValueError("atoms must be a nonempty (k, 4) array of (a, x0, x1, p)")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        p = atoms[:, 3]
        if np.any(p < 0):
            raise ValueError("atom probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {p.sum()!r}, not 1")
        atoms.setflags(write=False)
        self.atoms = atoms

    @property
    def probabilities(self) -> np.ndarray:
        return self.atoms[:, 3]

    def quadrature(self, level: int = 0) -> MomentQuadrature:
        a, x0, x1, p = self.atoms.T
        weights = {(i, j): p * x0**i * x1**j for i, j in MOMENT_KINDS}
        return MomentQuadrature(a=a.copy(), weights=weights, exact=True)

    def support_bound(self) -> float:
        return float(np.max(np.abs(self.atoms[:, 0])))

    def support_min(self) -> float:
        return float(np.min(self.atoms[:, 0]))

    def draw(self, rng, n):
        cdf = np.cumsum(self.probabilities)
        idx = np.searchsorted(cdf, rng.random(n), side="right")
        idx = np.minimum(idx, len(cdf) - 1)
        return self.atoms[idx, :3].copy()

    def describe(self) -> dict:
        if self.params:
            return {"kind": self.kind, **self.params}
        return {"kind": self.kind, "atoms": self.atoms.tolist()}


@dataclass(eq=False)
class ContinuousDensity(JointInputModel):
    """Absolutely continuous law given by a vectorized density ``f(a, x0, x1)``.

    ``support`` is either ``"simplex"`` (``a, x0, x1 > 0``, ``a + x0 + x1 < 1``)
    or a box ``((a_lo, a_hi), (x0_lo, x0_hi), (x1_lo, x1_hi))``. The simplex
    is mapped to the unit cube by ``a = u``, ``x0 = (1-u) v``,
    ``x1 = (1-u)(1-v) w``.
    """

    density: Callable
    support: object = "simplex"
    nodes: int = 64
    refinement: int = 2
    tol: float = 1e-10
    sampler: Optional[Callable] = None
    params: dict = field(default_factory=dict)
    kind: str = "density"

    def __post_init__(self):
        if self.support != "simplex":
            box = np.asarray(self.support, dtype=float)
            if box.shape != (3, 2) or np.any(box[:, 0] >= box[:, 1]):
                raise ValueError("box support must be ((lo, hi),) * 3 with lo < hi")
            if not np.all(np.isfinite(box)):
                raise ValueError("box support must be finite; use a truncated model")
        if self.nodes < 2 or self.refinement < 2:
            raise ValueError("need at least 2 nodes per axis and refinement >= 2")

    def quadrature(self, level: int = 0) -> MomentQuadrature:
        n = self.nodes * self.refinement**level
        if self.support == "simplex":
            u, wu = _gauss_legendre(n, 0.0, 1.0)
            v, wv = u, wu
            w, ww = u, wu
        else:
            (alo, ahi), (blo, bhi), (clo, chi) = self.support
            u, wu = _gauss_legendre(n, alo, ahi)
            v, wv = _gauss_legendre(n, blo, bhi)
            w, ww = _gauss_legendre(n, clo, chi)

        weights = {k: np.empty(n) for k in MOMENT_KINDS}
        wvw = wv[:, None] * ww[None, :]
        for i, ui in enumerate(u):
            if self.support == "simplex":
                x0 = (1.0 - ui) * v[:, None] * np.ones_like(w)[None, :]
                x1 = (1.0 - ui) * (1.0 - v)[:, None] * w[None, :]
                jac = (1.0 - ui) ** 2 * (1.0 - v)[:, None]
            else:
                x0 = np.broadcast_to(v[:, None], wvw.shape)
                x1 = np.broadcast_to(w[None, :], wvw.shape)
                jac = 1.0
            dens = self.density(np.full(wvw.shape, ui), x0, x1) * jac * wvw * wu[i]
            for p0, p1 in MOMENT_KINDS:
                weights[(p0, p1)][i] = np.sum(dens * x0**p0 * x1**p1)
        return MomentQuadrature(a=u, weights=weights)

    def support_bound(self) -> float:
        if self.support == "simplex":
            return 1.0
        lo, hi = self.support[0]
        return float(max(abs(lo), abs(hi)))

    def support_min(self) -> float:
        return 0.0 if self.support == "simplex" else float(self.support[0][0])

    def draw(self, rng, n):
        if self.sampler is None:
            raise SamplingError("this density model has no sampler attached")
        return np.asarray(self.sampler(rng, n), dtype=float)

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params, "nodes": self.nodes}


@dataclass(eq=False)
class GaussianConditional(JointInputModel):
    """Trivariate Gaussian restricted to ``a_lo <= A <= a_hi`` and renormalized.

    Only the ``A`` coordinate is truncated, so ``(X0, X1) | A = a`` stays
    Gaussian with mean linear in ``a`` and constant covariance; the moment
    integrals collapse to one dimension in ``a``.
    """

    mu: np.ndarray
    sigma: np.ndarray
    a_lo: float = -math.inf
    a_hi: float = math.inf
    nodes: int = 128
    tol: float = 1e-10
    kind: str = "truncated_multinormal"

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        sigma = np.array(self.sigma, dtype=float)
        if mu.shape != (3,) or sigma.shape != (3, 3):
            raise ValueError("mu must have 3 entries and sigma must be 3x3")
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-14 * np.abs(sigma).max()):
            raise ValueError("sigma must be symmetric")
        minors = [np.linalg.det(sigma[:k, :k]) for k in (1, 2, 3)]
        if min(minors) <= 0:
            raise ValueError(f"sigma is not positive definite (leading minors {minors})")
        if not self.a_lo < self.a_hi:
            raise ValueError("truncation window needs a_lo < a_hi")
        self.mu, self.sigma = mu, sigma
        self._chol = np.linalg.cholesky(sigma)

    @property
    def a_scale(self) -> float:
        return math.sqrt(self.sigma[0, 0])

    def window_mass(self) -> float:
        """Probability of the truncation window under the untruncated A-marginal."""
        lo = (self.a_lo - self.mu[0]) / self.a_scale
        hi = (self.a_hi - self.mu[0]) / self.a_scale
        if lo > 0:
            return float(ndtr(-lo) - ndtr(-hi))
        return float(ndtr(hi) - ndtr(lo))

    def conditional(self, a):
        """Mean (2, n) and covariance (2, 2) of ``(X0, X1)`` given ``A = a``."""
        s_aa = self.sigma[0, 0]
        slope = self.sigma[1:, 0] / s_aa
        mean = self.mu[1:, None] + slope[:, None] * (np.asarray(a) - self.mu[0])
        cov = self.sigma[1:, 1:] - np.outer(self.sigma[1:, 0], self.sigma[0, 1:]) / s_aa
        return mean, cov

    def quadrature(self, level: int = 0) -> MomentQuadrature:
        n = self.nodes * 2**level
        # beyond 12 standard deviations the marginal density is below 1e-31
        lo = max(self.a_lo, self.mu[0] - 12 * self.a_scale)
        hi = min(self.a_hi, self.mu[0] + 12 * self.a_scale)
        a, w = _gauss_legendre(n, lo, hi)
        z = (a - self.mu[0]) / self.a_scale
        dens = w * np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * self.a_scale)
        dens /= self.window_mass()
        mean, cov = self.conditional(a)
        m0, m1 = mean
        weights = {
            (0, 0): dens,
            (1, 0): dens * m0,
            (0, 1): dens * m1,
            (2, 0): dens * (m0 * m0 + cov[0, 0]),
            (0, 2): dens * (m1 * m1 + cov[1, 1]),
            (1, 1): dens * (m0 * m1 + cov[0, 1]),
        }
        return MomentQuadrature(a=a, weights=weights)

    def support_bound(self) -> float:
        return float(max(abs(self.a_lo), abs(self.a_hi)))

    def support_min(self) -> float:
        return float(self.a_lo)

    def draw(self, rng, n):
        mass = self.window_mass()
        if mass < 1e-6:
            raise SamplingError(
                f"rejection acceptance {mass:.3g} below 1e-6 for window "
                f"[{self.a_lo}, {self.a_hi}]"
            )
        out = np.empty((n, 3))
        filled = 0
        while filled < n:
            need = n - filled
            batch = int(need / mass * 1.05) + 64
            z = rng.standard_normal((batch, 3)) @ self._chol.T + self.mu
            keep = z[(z[:, 0] >= self.a_lo) & (z[:, 0] <= self.a_hi)][:need]
            out[filled : filled + len(keep)] = keep
            filled += len(keep)
        return out

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "a_interval": [self.a_lo, self.a_hi],
            "nodes": self.nodes,
        }


# constructors ---------------------------------------------------------------


def dirichlet(alphas, nodes: int = 64, tol: float = 1e-10) -> ContinuousDensity:
    """Dirichlet law of ``(A, X0, X1, 1 - A - X0 - X1)`` on the 3-simplex."""
    alphas = np.array(alphas, dtype=float)
    if alphas.shape != (4,) or np.any(~(alphas > 0)) or not np.all(np.isfinite(alphas)):
        raise ValueError(f"Dirichlet needs 4 positive finite alphas, got {alphas}")
    log_norm = gammaln(alphas.sum()) - gammaln(alphas).sum()
    am1 = alphas - 1.0

    def density(a, x0, x1):
        rest = 1.0 - a - x0 - x1
        with np.errstate(divide="ignore", invalid="ignore"):
            logd = (
                log_norm
                + am1[0] * np.log(a)
                + am1[1] * np.log(x0)
                + am1[2] * np.log(x1)
                + am1[3] * np.log(rest)
            )
        inside = (a > 0) & (x0 > 0) & (x1 > 0) & (rest > 0)
        return np.where(inside, np.exp(logd), 0.0)

    def sampler(rng, n):
        g = np.column_stack([rng.standard_gamma(al, n) for al in alphas])
        return g[:, :3] / g.sum(axis=1, keepdims=True)

    return ContinuousDensity(
        density=density,
        support="simplex",
        nodes=nodes,
        tol=tol,
        sampler=sampler,
        params={"alphas": alphas.tolist()},
        kind="dirichlet",
    )


def multinomial(n: int, probs) -> DiscreteFinite:
    """Counts ``(A, X0, X1)`` of a multinomial with ``n`` trials.

    If ``sum(probs) < 1`` the remainder is an implicit fourth category.
    Zero-probability atoms are dropped.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"number of trials must be a positive integer, got {n}")
    n = int(n)
    probs = [float(p) for p in probs]
    if len(probs) != 3 or any(not (p >= 0) for p in probs) or sum(probs) > 1 + 1e-12:
        raise ValueError(f"need 3 nonnegative probabilities summing to <= 1, got {probs}")
    rest = max(0.0, 1.0 - sum(probs))
    atoms = []
    for a in range(n + 1):
        for x0 in range(n + 1 - a):
            for x1 in range(n + 1 - a - x0):
                r = n - a - x0 - x1
                p = (
                    math.factorial(n)
                    / (math.factorial(a) * math.factorial(x0) * math.factorial(x1) * math.factorial(r))
                    * probs[0] ** a
                    * probs[1] ** x0
                    * probs[2] ** x1
                    * rest**r
                )
                if p > 0:
                    atoms.append((a, x0, x1, p))
    atoms = np.array(atoms)
    atoms[:, 3] /= atoms[:, 3].sum()
    return DiscreteFinite(atoms, kind="multinomial", params={"n": n, "probs": probs})


def truncated_multinormal(mu, sigma, a_interval, nodes: int = 128) -> GaussianConditional:
    lo, hi = (float(v) for v in a_interval)
    if not lo >= 0:
        raise ValueError(f"truncation window for A must start at >= 0, got {lo}")
    if not (hi > lo and math.isfinite(hi)):
        raise ValueError(f"need a finite window lo < hi, got [{lo}, {hi}]")
    return GaussianConditional(mu=mu, sigma=sigma, a_lo=lo, a_hi=hi, nodes=nodes)


def multinormal(mu, sigma, nodes: int = 128) -> GaussianConditional:
    """Untruncated trivariate Gaussian; fails validation (``A`` unbounded)."""
    return GaussianConditional(mu=mu, sigma=sigma, nodes=nodes, kind="multinormal")


# operations -----------------------------------------------------------------


def _refined_pair(model: JointInputModel):
    if model.exact:
        q = model.quadrature(0)
        return q, q
    return model.quadrature(0), model.quadrature(1)


def weighted_moment(model: JointInputModel, p0: int, p1: int, f: Callable = None) -> float:
    """``E[X0^p0 X1^p1 f(A)]`` for ``p0 + p1 <= 2``.

    Continuous models are integrated at the base node count and once refined;
    disagreement beyond ``model.tol`` (relative to the integral of ``|.|``)
    raises :class:`QuadratureError` carrying both estimates.
    """
    if (p0, p1) not in MOMENT_KINDS:
        raise ValueError(f"need p0, p1 >= 0 with p0 + p1 <= 2, got ({p0}, {p1})")
    coarse_q, fine_q = _refined_pair(model)

    def evaluate(q):
        vals = np.ones_like(q.a) if f is None else np.asarray(f(q.a), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("f must be finite on the support of A")
        terms = q.weights[(p0, p1)] * vals
        return float(np.sum(terms)), float(np.sum(np.abs(terms)))

    fine, scale = evaluate(fine_q)
    if coarse_q is fine_q:
        return fine
    coarse, _ = evaluate(coarse_q)
    if abs(coarse - fine) > model.tol * max(scale, 1e-300):
        raise QuadratureError("weighted moment did not converge under refinement", coarse, fine)
    return fine


@dataclass
class Diagnostics:
    support_bound: float
    bounded: bool
    a_nonnegative: bool
    normalization: float
    normalized: bool
    messages: list

    @property
    def passed(self) -> bool:
        return self.bounded and self.a_nonnegative and self.normalized

    def to_dict(self) -> dict:
        return {
            "support_bound": self.support_bound if math.isfinite(self.support_bound) else "inf",
            "bounded": self.bounded,
            "a_nonnegative": self.a_nonnegative,
            "normalization": self.normalization,
            "normalized": self.normalized,
            "passed": self.passed,
            "messages": list(self.messages),
        }


def validate(model: JointInputModel) -> Diagnostics:
    """Check boundedness and nonnegativity of ``A`` and the normalization."""
    messages = []
    bound = model.support_bound()
    bounded = math.isfinite(bound)
    if not bounded:
        messages.append("UNBOUNDED A: boundedness hypothesis violated")
    nonneg = model.support_min() >= 0
    if not nonneg:
        messages.append(f"A takes negative values (support starts at {model.support_min()})")
    total = model.quadrature(0).integrate(0, 0, 1.0)
    tol = 1e-12 if model.exact else max(model.tol, 1e-12)
    normalized = abs(total - 1.0) <= tol
    if not normalized:
        messages.append(f"total probability {total!r} differs from 1 by more than {tol:g}")
    return Diagnostics(bound, bounded, nonneg, total, normalized, messages)


def require_valid(model: JointInputModel, override_unbounded: bool = False) -> Diagnostics:
    diag = validate(model)
    if not diag.passed and not override_unbounded:
        raise HypothesisError("; ".join(diag.messages) + " (pass override_unbounded to proceed)")
    return diag


@dataclass(eq=False)
class SampleBatch:
    """``n`` draws of ``(a, x0, x1)`` as rows of ``values``."""

    values: np.ndarray
    seed: int
    generator: str = GENERATOR_ID

    @property
    def a(self):
        return self.values[:, 0]

    @property
    def x0(self):
        return self.values[:, 1]

    @property
    def x1(self):
        return self.values[:, 2]

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        from .series import Realization

        for a, x0, x1 in self.values:
            yield Realization(float(a), float(x0), float(x1))


def sample(model: JointInputModel, n: int, seed: int) -> SampleBatch:
    if n < 1:
        raise ValueError("sample size must be positive")
    values = model.draw(make_rng(seed), int(n))
    return SampleBatch(values=values, seed=int(seed))
