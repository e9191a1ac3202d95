"""Certificates and solvers for nonlocal functional boundary value problems with delay."""

from .certify import (
    Certificate,
    IndexSettings,
    auto_ladder,
    check_index0,
    check_index1,
    compute_M,
    compute_m,
    match_pattern,
    validate_hypotheses,
)
from .envelope import DelayForm, EnvelopeForm, HistorySegment, inf_number, sup_number
from .errors import (
    AlphaGammaInvalid,
    CInvalid,
    ConfigError,
    DelayTooLarge,
    FBVPError,
    IntervalInvalid,
    ModeUnsupported,
    NoConvergence,
    NonlinearityNegative,
    RhoNonpositive,
    RhoTooSmall,
)
from .kernel import (
    ConeData,
    CustomKernel,
    DirichletNonlocal,
    Mode,
    Thermostat,
    cone_constants,
    eval_gamma,
    eval_k,
    greens_residual,
    heaviside,
    phi_bound,
    validate_bounds,
)
from .measure import GridFunction, PiecewiseLinear, SignedMeasure, check_positivity, kernel_moment
from .problem import InitialDatum, ProblemInstance, build_instance, corollary_instance, power_delay
from .solver import (
    ConeSeed,
    SolverConfig,
    Strategy,
    TrivialExtension,
    alpha_consistency,
    apply_operator,
    check_cone_membership,
    solve,
    solve_multistart,
)

__version__ = "0.1.0"
