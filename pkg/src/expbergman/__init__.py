"""Numerical laboratory for Bergman spaces with exponential-type weights.

The package computes weights and their radius function, (rho, r)-lattices,
reproducing kernels through log-domain moments, transforms of measures,
Toeplitz matrices and their spectra, and the ratio reports that compare the
quantities declared equivalent by the Carleson and Schatten-class criteria.
"""

__version__ = "0.1.0"

from .errors import (CapacityError, ConfigError, ContractError, DomainError, ExpBergmanError,
                     NumericalConsistencyError, ParameterDomainError, PrecisionError,
                     TruncationError)
from .weights import WeightModel, check_membership, make_weight
from .geometry import Lattice, LatticeParams, build_lattice, split_lattice
from .kernel import MomentTable, compute_moments, kernel_eval, norm_Kz, normalized_kernel
from .measures import Measure, avg_function, berezin_measure, canonical_measures, lp_norm
from .toeplitz import assemble, operator_berezin, schatten_report, spectrum
from .carleson import carleson_check, carleson_qlp_check, vanishing_check

__all__ = [
    "__version__", "ExpBergmanError", "ParameterDomainError", "DomainError", "ContractError",
    "CapacityError", "PrecisionError", "TruncationError", "NumericalConsistencyError",
    "ConfigError", "WeightModel", "make_weight", "check_membership", "Lattice",
    "LatticeParams", "build_lattice", "split_lattice", "MomentTable", "compute_moments",
    "kernel_eval", "norm_Kz", "normalized_kernel", "Measure", "avg_function",
    "berezin_measure", "canonical_measures", "lp_norm", "assemble", "operator_berezin",
    "schatten_report", "spectrum", "carleson_check", "carleson_qlp_check", "vanishing_check",
]
