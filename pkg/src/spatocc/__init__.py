"""Bayesian spatial occupancy models with embedded machine-learning surfaces.

Fits zero-inflated detection/nondetection data with a probit occupancy
model whose spatial term f(s) is approximated by an embedded regressor
(regression tree, support vector regression, low-rank Gaussian process,
or Gaussian Markov random field), refit each MCMC iteration. Model
identification compares out-of-sample -2 x LPPD across learners and
checks residual spatial structure with Moran's I correlograms.
"""

from .errors import (
    ConvergenceError,
    DataFormatError,
    SamplerStateError,
    SingularSystemError,
    SpatoccError,
    UndefinedStatisticError,
    ValidationError,
)
from .learners import KINDS, FittedSurface, LearnerSpec, backend_name
from .model import (
    Coefficients,
    DetectionHistory,
    DetectionParams,
    LatentState,
    OccupancyDataset,
    Site,
    TrainHoldoutSplit,
    conditional_occupancy_prob,
    inv_probit,
    occupancy_prob,
    site_marginal_likelihood,
)
from .sampler import (
    ChainState,
    McmcConfig,
    PosteriorSamples,
    posterior_psi_draws,
    posterior_psi_surface,
    run_chain,
)
from .scoring import (
    Correlogram,
    ScoreReport,
    correlogram,
    morans_i,
    neg2_lppd,
    occupancy_residuals,
)
from .synth import ScenarioSurface, make_surface, sample_design

__version__ = "0.1.0"

__all__ = [
    "ChainState",
    "Coefficients",
    "ConvergenceError",
    "Correlogram",
    "DataFormatError",
    "DetectionHistory",
    "DetectionParams",
    "FittedSurface",
    "KINDS",
    "LatentState",
    "LearnerSpec",
    "McmcConfig",
    "OccupancyDataset",
    "PosteriorSamples",
    "SamplerStateError",
    "ScenarioSurface",
    "ScoreReport",
    "SingularSystemError",
    "Site",
    "SpatoccError",
    "TrainHoldoutSplit",
    "UndefinedStatisticError",
    "ValidationError",
    "backend_name",
    "conditional_occupancy_prob",
    "correlogram",
    "inv_probit",
    "make_surface",
    "morans_i",
    "neg2_lppd",
    "occupancy_prob",
    "occupancy_residuals",
    "posterior_psi_draws",
    "posterior_psi_surface",
    "run_chain",
    "sample_design",
    "site_marginal_likelihood",
    "__version__",
]
