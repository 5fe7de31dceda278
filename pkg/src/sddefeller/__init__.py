"""Weak solutions and strong Feller diagnostics for singular-drift delay equations."""

__version__ = "0.1.0"

from .segments import Segment, TimeGrid, PathRealization, PathBatch, sup_norm, extract_segment, embed_constant
from .model import ModelSpec, make_model, catalog_names, eval_coefficients, validate_conditions
from .driftfree import NoiseStream, brownian_increments, simulate_driftfree
from .girsanov import weak_expectation, weight_diagnostics
from .direct import simulate_strong, simulate_coupled
from .feller import default_battery, strong_feller_gap, improved_feller_gap, stability_exponent, law_distance
from .convergence import FiniteInstance, check_modes, equivalence_oracle
from .analysis import maximal_inequality_check, stochastic_gronwall_check
from .acceptance import run_criterion

__all__ = [
    "Segment",
    "TimeGrid",
    "PathRealization",
    "PathBatch",
    "sup_norm",
    "extract_segment",
    "embed_constant",
    "ModelSpec",
    "make_model",
    "catalog_names",
    "eval_coefficients",
    "validate_conditions",
    "NoiseStream",
    "brownian_increments",
    "simulate_driftfree",
    "weak_expectation",
    "weight_diagnostics",
    "simulate_strong",
    "simulate_coupled",
    "default_battery",
    "strong_feller_gap",
    "improved_feller_gap",
    "stability_exponent",
    "law_distance",
    "FiniteInstance",
    "check_modes",
    "equivalence_oracle",
    "maximal_inequality_check",
    "stochastic_gronwall_check",
    "run_criterion",
]
