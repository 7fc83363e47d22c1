"""Uncertainty quantification for the random Legendre equation

    (1 - t^2) X'' - 2 t X' + A (A + 1) X = 0,   X(0) = X0,  X'(0) = X1,

with jointly distributed (possibly dependent) inputs ``(A, X0, X1)`` and
bounded ``A``.
"""

__version__ = "0.1.0"

from .distributions import (  # noqa: E402
    DiscreteFinite,
    ContinuousDensity,
    GaussianConditional,
    dirichlet,
    multinomial,
    multinormal,
    sample,
    truncated_multinormal,
    validate,
    weighted_moment,
)
from .moments import expectation, moment_table, stabilization_check, variance  # noqa: E402
from .oracles import mc_estimate, mc_ode_estimate  # noqa: E402
from .ode import ode_solve  # noqa: E402
from .series import (  # noqa: E402
    Realization,
    coefficients,
    eval_truncated,
    product_P1,
    product_P2,
    residual,
)

__all__ = [
    "ContinuousDensity",
    "DiscreteFinite",
    "GaussianConditional",
    "Realization",
    "coefficients",
    "dirichlet",
    "eval_truncated",
    "expectation",
    "mc_estimate",
    "mc_ode_estimate",
    "moment_table",
    "multinomial",
    "multinormal",
    "ode_solve",
    "product_P1",
    "product_P2",
    "residual",
    "sample",
    "stabilization_check",
    "truncated_multinormal",
    "validate",
    "variance",
    "weighted_moment",
]
