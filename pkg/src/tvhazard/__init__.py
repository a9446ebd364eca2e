"""Time-varying additive hazard regression with total-variation penalties."""
from .core import (CoefficientSet, DomainError, FeatureTrack, IntervalCensored, InvalidInputError,
                   KnotGrid, ModelVariant, Observation, Penalty, RightCensored, StepFunction,
                   build_knot_grid, eval_cumulative_hazard, eval_hazard, survival, uncensored)
from .likelihood import (Design, ZeroProbabilityError, dataset_objective, dense_gradient,
                         gradient, neg_log_likelihood)
from .penalties import (prox_full, prox_fused_isotonic, prox_fused_lasso, tv_discrete,
                        tv_log_discrete)
from .simulator import SimConfig, generate_dataset, generate_truth, simulate_sites
from .solver import (DivergenceError, FitResult, SolverConfig, count_active_breakpoints,
                     evaluate, fit)

__version__ = "0.1.0"
