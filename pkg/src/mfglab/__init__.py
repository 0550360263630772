"""Numerical laboratory for stationary mean-field games with Riesz aggregation."""

from .choquard import ChoquardSolution, hopf_cole, solve_choquard_normalized
from .diagnostics import (
    Certificate,
    DiagnosticsReport,
    diagnose,
    energy,
    identity_residuals,
    nonexistence_certificate,
    pohozaev_residual,
)
from .errors import KernelError, NotApplicable, SolverFailure
from .grid import Grid
from .hjb import HJBProblem, HJBSolution, check_gradient_growth, lambda_upper_bound, solve_ergodic_hjb
from .kfp import KFPProblem, KFPSolution, apriori_monitor, kinetic_energy, solve_invariant_density
from .mfg import (
    AdmissibleSetParams,
    MFGParams,
    MFGSolution,
    admissible_set_check,
    classify_regime,
    fixed_point_solve,
    xi_selection,
)
from .riesz import Mollifier, RieszParams, hls_pairing, mollify, riesz_convolve

__version__ = "0.1.0"
