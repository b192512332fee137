"""Regression-tree learner: axis-aligned CART on the two coordinates."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from ._backend import kernels
from .base import FittedSurface, as_coords, as_targets, coord_bbox, to_unit


class TreeFitter:
    """Reusable fitter for one set of training coordinates.

    Standardizes the coordinates once; ``fit`` grows a fresh tree per
    target vector, which is the per-iteration workload inside the
    sampler.
    """

    def __init__(self, coords, max_depth=6, min_leaf=10, min_improvement=1e-6):
        coords = as_coords(coords)
        max_depth = int(max_depth)
        min_leaf = int(min_leaf)
        if max_depth < 0:
            raise ValidationError("max_depth must be >= 0")
        if min_leaf < 1:
            raise ValidationError("min_leaf must be >= 1")
        if not (np.isfinite(min_improvement) and min_improvement >= 0.0):
            raise ValidationError("min_improvement must be finite and >= 0")
        self.n = coords.shape[0]
        self.bbox = coord_bbox(coords)
        unit = to_unit(coords, self.bbox)
        self._x0 = np.ascontiguousarray(unit[:, 0])
        self._x1 = np.ascontiguousarray(unit[:, 1])
        self._hp = (max_depth, min_leaf, float(min_improvement))

    def fit(self, targets):
        """Grow the tree; returns (surface, fitted values at training sites)."""
        y = as_targets(targets, self.n)
        feature, threshold, left, right, value = kernels.tree_build(
            self._x0, self._x1, y, *self._hp
        )
        surface = FittedSurface(
            kind="tree",
            bbox=self.bbox,
            params={
                "feature": feature,
                "threshold": threshold,
                "left": left,
                "right": right,
                "value": value,
            },
        )
        fhat = kernels.tree_predict(
            feature, threshold, left, right, value, self._x0, self._x1
        )
        return surface, fhat


def fit_tree(coords, targets, max_depth=6, min_leaf=10, min_improvement=1e-6):
    """Fit a CART surface with squared-error impurity.

    Splits are axis-aligned on the two (standardized) coordinates; leaf
    value is the mean of its targets. Growth stops at ``max_depth``,
    when a child would drop below ``min_leaf`` points, or when the best
    split reduces SSE by less than ``min_improvement``.
    """
    fitter = TreeFitter(coords, max_depth, min_leaf, min_improvement)
    return fitter.fit(targets)[0]


def predict_tree(surface, unit_coords):
    p = surface.params
    q0 = np.ascontiguousarray(unit_coords[:, 0])
    q1 = np.ascontiguousarray(unit_coords[:, 1])
    return kernels.tree_predict(
        p["feature"], p["threshold"], p["left"], p["right"], p["value"], q0, q1
    )
