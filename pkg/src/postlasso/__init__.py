"""Confidence intervals and sets for coefficients selected by the lasso.

Conditional on the selected active set, the lasso estimator augmented with
its subgradient has a closed-form density.  A Metropolis-Hastings sampler
draws from it, the draws are mapped back to responses, and intervals are
formed from their quantiles after randomizing the plug-in mean over an
unconditional confidence ellipsoid.
"""

__version__ = "0.1.0"

from .errors import (BudgetExhausted, ConfigError, DegenerateGeometry,
                     DegenerateResponse, EmptyModel, EmptyRange, InconsistentSolution,
                     InfeasibleInit, InputError, InsufficientDraws, NoConvergence,
                     NonPositiveWeight, PostLassoError, RankDeficient)
from .linalg import ActiveSetGeometry, DesignContext, build_active_geometry, build_design_context
from .lasso import LassoSolution, cv_lambda_1se, fit_lasso, lambda_grid, lambda_max
from .density import AugmentedState, log_density, make_state, proposal_bounds
from .sampler import ChainConfig, ChainOutput, run_chain, run_chains
from .reconstruction import ConditionedDraws, project_nu, reconstruct_y
from .inference import (ConfidenceEllipsoid, InferenceResult, IntervalResult, SetResult,
                        build_C_A, build_interval_conservative, build_interval_oracle,
                        build_interval_plugin, build_interval_randomized, build_set,
                        run_algorithm1, sample_boundary)

__all__ = [
    "BudgetExhausted", "ConfigError", "DegenerateGeometry", "DegenerateResponse",
    "EmptyModel", "EmptyRange", "InconsistentSolution", "InfeasibleInit",
    "InputError", "InsufficientDraws", "NoConvergence", "NonPositiveWeight",
    "PostLassoError", "RankDeficient", "ActiveSetGeometry", "DesignContext",
    "build_active_geometry", "build_design_context", "LassoSolution",
    "cv_lambda_1se", "fit_lasso", "lambda_grid", "lambda_max", "AugmentedState",
    "log_density", "make_state", "proposal_bounds", "ChainConfig", "ChainOutput",
    "run_chain", "run_chains", "ConditionedDraws", "project_nu", "reconstruct_y",
    "ConfidenceEllipsoid", "InferenceResult", "IntervalResult", "SetResult",
    "build_C_A", "build_interval_conservative", "build_interval_oracle",
    "build_interval_plugin", "build_interval_randomized", "build_set",
    "run_algorithm1", "sample_boundary",
]
