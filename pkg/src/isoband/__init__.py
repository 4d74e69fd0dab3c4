"""Isothermal reduction and Floquet band computation for 2D periodic elliptic operators."""

from .beltrami import IsothermalMap, SolverConfig, kappa_of, lattice_periods, solve_periodic_beltrami
from .boundary import (
    DoubledProblem,
    StripProblem,
    assemble_parity_fiber,
    assemble_strip_fiber,
    corner_exponent,
    reflect_coefficients,
    verify_reflection_equivalence,
)
from .errors import *  # noqa: F401,F403
from .floquet import (
    BandStructure,
    assemble_fiber,
    band_oscillation,
    solve_bands,
    thomas_bound,
    uniform_k_grid,
)
from .grid import TorusGrid
from .isothermal import evaluate, identity_residuals, invert, jacobian_matrix, renormalize, verify_identities
from .metric import MetricField, beltrami_to_metric, metric_to_beltrami, normalize_det, validate_metric
from .pipeline import PROBLEM_PRESETS, ProblemSpec, RunReport, bench, run_pipeline
from .pushforward import CoefficientSet, DeltaCurve, DeltaLine, pushforward, pushforward_delta, sandwich_reduce

__version__ = "0.1.0"
