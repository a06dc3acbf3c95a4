"""Normalization factors of two-fermion composite bosons and their bounds."""

from .bounds import (
    BoundsReport,
    bounds_report,
    chi_lower_P,
    chi_lower_lambda1,
    chi_max_exact,
    chi_max_smooth,
    chi_min_exact,
    chi_min_smooth,
    chi_upper_P,
    chi_upper_lambda1,
)
from .chi import (
    ChiSeries,
    MultiplicityBlocks,
    chi_multiplicity,
    chi_series,
    chi_series_esp,
    chi_series_newton_girard,
    commutator_expectation,
    epsilon_norm,
    ratio_series,
)
from .extremal import (
    INFINITE,
    ExtremalSpec,
    expand,
    gamma_peak,
    gamma_uniform,
    maximizing_distribution,
    minimizing_distribution,
    peaked_from_P,
    peaked_from_lambda1,
    uniform_from_P,
    uniform_from_lambda1,
)
from .schmidt import (
    SchmidtDistribution,
    feasible,
    lambda1_max,
    lambda1_min,
    make_distribution,
    p_max,
    p_min,
    summarize,
)

__version__ = "0.1.0"
