"""Mismatched distortion-rate solver for finite-alphabet sources.

The decoder announces a reproduction strategy, the encoder best-responds
under its own cost, and ties are broken against the decoder.  The library
evaluates the resulting single-letter value, its time-sharing envelope, and
exhaustive finite-blocklength oracles for small instances.
"""

from .caratheodory import (
    FamilyVector,
    ReductionCertificate,
    build_family,
    find_null_direction,
    reduce_step,
    reduce_support,
)
from .envelope import CurvePoint, EnvelopeCertificate, build_curve, convexify, default_grid
from .errors import (
    ConsistencyError,
    ConvergenceError,
    DegeneracyError,
    DimensionError,
    DomainError,
    GuardError,
    InputError,
    SolverError,
    SpecError,
)
from .inner import (
    InnerSolution,
    KKTReport,
    SolverOptions,
    Status,
    brute_force_inner,
    kkt_residual,
    lagrangian,
    solve_inner,
)
from .kernels import BACKEND
from .oracle import (
    BestResponseTable,
    DecoderTable,
    OracleValue,
    ba_distortion_rate,
    encoder_best_response,
    oracle_value,
)
from .outer import OuterCandidate, OuterOptions, OuterResult, evaluate_candidate, search_C
from .prob import (
    Coupling,
    Distribution,
    Kernel,
    coupling_to_forward,
    entropy,
    h,
    mutual_information,
    reduce_cost,
)
from .problem import ProblemSpec, parse_spec, serialize
from .tiebreak import TiebreakSolution, brute_force_tiebreak, delta_sweep, solve_tiebreak

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
