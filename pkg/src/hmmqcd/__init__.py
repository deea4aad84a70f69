"""Bayesian quickest change detection in hidden Markov models."""

from .detector import (
    DetectionOutcome,
    DetectorConfig,
    empirical_cost,
    empirical_pfa,
    mode_form_cost,
    pfa_bound,
    stopping_time,
)
from .filter import Belief, FilterUnderflow, change_statistic, filter_init, filter_run, filter_step
from .model import (
    AugmentedModel,
    Model,
    ModelError,
    StateSpacePair,
    build_augmented,
    constant_rho_mode_chain,
    load_model,
    mode_marginal,
    save_model,
)
from .observations import Gaussian, LogDensity, ObservationModel, ProductGaussian
from .simulate import (
    MonteCarloReport,
    OptimizerConfig,
    cost_curve,
    inverse_sigmoid,
    monte_carlo,
    optimize_threshold,
    sample_trajectory,
    sigmoid,
)

__version__ = "0.1.0"
