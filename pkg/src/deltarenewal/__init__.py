"""Hybrid symbolic and numeric solver for age-structured transport with a renewal boundary
condition whose data carry Dirac-derivative atoms."""

from .errors import (AssumptionError, ConfigError, DeltaRenewalError, DomainError, GeometryError,
                     NumericalError, ParameterError, SmoothnessError, TripleIntersectionError)
from .functions import SmoothFunction
from .model import (AssumptionVerdict, DataAtom, ModelConfig, Numerics, check_assumptions,
                    load_config, parse_config, serialize_config)
from .characteristics import build_singular_support, regions, survival, source_accum
from .hybrid import HybridSolution, solve
from .oracle import Mollifier, convergence_report, run_verification, solve_regularized
from .testfunctions import Bump1D, Bump2D

__version__ = "0.1.0"

__all__ = [
    "AssumptionError", "AssumptionVerdict", "Bump1D", "Bump2D", "ConfigError", "DataAtom",
    "DeltaRenewalError", "DomainError", "GeometryError", "HybridSolution", "ModelConfig",
    "Mollifier", "NumericalError", "Numerics", "ParameterError", "SmoothFunction",
    "SmoothnessError", "TripleIntersectionError", "build_singular_support", "check_assumptions",
    "convergence_report", "load_config", "parse_config", "regions", "run_verification",
    "serialize_config", "solve", "solve_regularized", "source_accum", "survival",
]
