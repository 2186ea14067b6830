"""Equilibrium, simulation and calibration of a stochastic cyber-attack reputation game."""

__version__ = "0.1.0"

from .equilibrium import (  # noqa: E402
    GLOBAL_AVERAGE, DerivedConstants, EquilibriumSolution, ModelParams, Regime, alpha, blocking_prob,
    derive_constants, solve, value_attacker, value_defender, y_of,
)
from .special import erf_like, erf_like_inv, erfc_like, erfc_like_inv  # noqa: E402

__all__ = [
    "GLOBAL_AVERAGE", "DerivedConstants", "EquilibriumSolution", "ModelParams", "Regime", "alpha",
    "blocking_prob", "derive_constants", "solve", "value_attacker", "value_defender", "y_of",
    "erf_like", "erf_like_inv", "erfc_like", "erfc_like_inv",
]
