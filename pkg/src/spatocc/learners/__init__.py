"""Spatial regressors behind one interface.

The sampler refits f(.) to real-valued pseudo-targets at the training
coordinates every iteration and predicts at arbitrary coordinates.
Four regressors are available plus "none", the nonspatial baseline
with f identically zero. All fits are deterministic: identical inputs
and hyperparameters reproduce the same surface bit for bit.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from ..errors import ValidationError
from ._backend import backend_name, kernels
from .base import FittedSurface, as_coords, as_targets, coord_bbox, to_unit
from .gmrf import GmrfFitter, fit_gmrf, predict_gmrf
from .lowrank_gp import (
    DEFAULT_RANGE_PHI,
    LowRankGpFitter,
    fit_lowrank_gp,
    predict_lowrank_gp,
)
from .svr import SvrFitter, fit_svr, predict_svr
from .tree import TreeFitter, fit_tree, predict_tree

KINDS = ("tree", "svr", "lowrank_gp", "gmrf", "none")

DEFAULT_HYPERPARAMS = {
    "tree": {"max_depth": 6, "min_leaf": 10, "min_improvement": 1e-6},
    "svr": {"C": 3.0, "epsilon": 0.1, "rbf_gamma": 5.0, "tol": 1e-4,
            "max_passes": 200},
    "lowrank_gp": {"n_knots": 100, "range_phi": DEFAULT_RANGE_PHI,
                   "sill_sigma2": 1.0, "nugget_tau2": 0.1},
    "gmrf": {"grid_nx": 15, "grid_ny": 15, "rho": 0.99, "tau_prec": 1.0,
             "obs_prec": 10.0},
    "none": {},
}


@dataclass(frozen=True)
class LearnerSpec:
    """Which spatial regressor to embed, with hyperparameter overrides.

    ``hyperparams`` holds only the overrides; ``resolved()`` merges them
    over the per-kind defaults. kind "none" is the nonspatial model.
    """

    kind: str
    hyperparams: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(
                f"unknown learner kind {self.kind!r}; expected one of {KINDS}"
            )
        defaults = DEFAULT_HYPERPARAMS[self.kind]
        hp = dict(self.hyperparams)
        unknown = sorted(set(hp) - set(defaults))
        if unknown:
            raise ValidationError(
                f"unknown hyperparameters for kind {self.kind!r}: {unknown}"
            )
        for key, val in hp.items():
            if isinstance(val, bool) or not isinstance(val, numbers.Real):
                raise ValidationError(f"hyperparameter {key!r} must be a number")
            if not np.isfinite(val):
                raise ValidationError(f"hyperparameter {key!r} must be finite")
        object.__setattr__(self, "hyperparams", MappingProxyType(hp))

    def resolved(self):
        """Defaults merged with the overrides, as a plain dict."""
        merged = dict(DEFAULT_HYPERPARAMS[self.kind])
        merged.update(self.hyperparams)
        return merged


class NoneFitter:
    """Nonspatial baseline: f is identically zero."""

    def __init__(self, coords):
        coords = as_coords(coords)
        self.n = coords.shape[0]
        self.bbox = coord_bbox(coords)

    def fit(self, targets):
        as_targets(targets, self.n)
        surface = FittedSurface(kind="none", bbox=self.bbox, params={})
        return surface, np.zeros(self.n)


_FITTERS = {
    "tree": TreeFitter,
    "svr": SvrFitter,
    "lowrank_gp": LowRankGpFitter,
    "gmrf": GmrfFitter,
    "none": NoneFitter,
}


def make_fitter(spec, coords):
    """Prepare a reusable fitter for the given coordinates.

    Factors/caches everything that depends only on the coordinates and
    hyperparameters (Gram matrices, lattice factorizations), so calling
    ``fitter.fit(targets)`` per MCMC iteration is cheap. ``fit`` returns
    (FittedSurface, fitted values at the training coordinates).
    """
    if not isinstance(spec, LearnerSpec):
        raise ValidationError("spec must be a LearnerSpec")
    cls = _FITTERS[spec.kind]
    if spec.kind == "none":
        return cls(coords)
    return cls(coords, **spec.resolved())


def fit(spec, coords, targets):
    """Fit one surface for the given LearnerSpec."""
    return make_fitter(spec, coords).fit(targets)[0]


_PREDICTORS = {
    "tree": predict_tree,
    "svr": predict_svr,
    "lowrank_gp": predict_lowrank_gp,
    "gmrf": predict_gmrf,
}


def predict(surface, coords):
    """Evaluate a fitted surface at raw coordinates.

    Deterministic and finite everywhere; queries outside the training
    bounding box follow each kind's extrapolation rule (tree: split
    traversal to the nearest leaf region; svr/gp: natural kernel decay;
    gmrf: clamp to the nearest cell; none: zero).
    """
    if not isinstance(surface, FittedSurface):
        raise ValidationError("surface must be a FittedSurface")
    pts = as_coords(coords, allow_empty=True)
    if surface.kind == "none":
        return np.zeros(pts.shape[0])
    unit = to_unit(pts, surface.bbox)
    return np.asarray(_PREDICTORS[surface.kind](surface, unit), dtype=float)


__all__ = [
    "KINDS",
    "DEFAULT_HYPERPARAMS",
    "LearnerSpec",
    "FittedSurface",
    "backend_name",
    "kernels",
    "make_fitter",
    "fit",
    "predict",
    "fit_tree",
    "fit_svr",
    "fit_lowrank_gp",
    "fit_gmrf",
]
