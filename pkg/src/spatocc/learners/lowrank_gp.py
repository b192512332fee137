"""Low-rank Gaussian process learner (predictive-process style).

Knots sit on a regular grid over the (standardized) training bounding
box. With B the site-knot exponential covariance and K the knot-knot
covariance, the basis weights solve (B'B + tau2 K) w = B'y and the
surface is f(s) = b(s)'w. The left-hand side depends only on the
coordinates, so a chain-long fitter factors it once.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ..errors import SingularSystemError, ValidationError
from .base import FittedSurface, as_coords, as_targets, coord_bbox, to_unit

# default range: 0.3 x the bounding-box diagonal, which is sqrt(2) after
# standardization to the unit square
DEFAULT_RANGE_PHI = 0.3 * math.sqrt(2.0)


def exp_cov(a, b, sill, phi):
    """Covariance sill * exp(-||a_i - b_j|| / phi)."""
    diff = a[:, None, :] - b[None, :, :]
    d = np.sqrt(diff[:, :, 0] * diff[:, :, 0] + diff[:, :, 1] * diff[:, :, 1])
    return sill * np.exp(-d / phi)


def knot_grid(n_knots):
    """Regular unit-square knot grid; n_knots must be a perfect square."""
    n_knots = int(n_knots)
    if n_knots < 1:
        raise ValidationError("n_knots must be >= 1")
    g = math.isqrt(n_knots)
    if g * g != n_knots:
        raise ValidationError(f"n_knots must be a perfect square, got {n_knots}")
    if g == 1:
        ticks = np.array([0.5])
    else:
        ticks = np.linspace(0.0, 1.0, g)
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


class LowRankGpFitter:
    """Reusable fitter: knot system factored once per coordinate set."""

    def __init__(self, coords, n_knots=100, range_phi=DEFAULT_RANGE_PHI,
                 sill_sigma2=1.0, nugget_tau2=0.1):
        coords = as_coords(coords)
        if not (np.isfinite(range_phi) and range_phi > 0.0):
            raise ValidationError("range_phi must be finite and > 0")
        if not (np.isfinite(sill_sigma2) and sill_sigma2 > 0.0):
            raise ValidationError("sill_sigma2 must be finite and > 0")
        if not (np.isfinite(nugget_tau2) and nugget_tau2 >= 0.0):
            raise ValidationError("nugget_tau2 must be finite and >= 0")
        self.n = coords.shape[0]
        self.bbox = coord_bbox(coords)
        unit = to_unit(coords, self.bbox)
        knots = knot_grid(n_knots)
        B = exp_cov(unit, knots, float(sill_sigma2), float(range_phi))
        K = exp_cov(knots, knots, float(sill_sigma2), float(range_phi))
        M = B.T @ B + float(nugget_tau2) * K
        try:
            self._factor = cho_factor(M, lower=True)
        except LinAlgError as exc:
            raise SingularSystemError(
                "low-rank gp system is singular; coincident knots or zero "
                "nugget with too few sites"
            ) from exc
        self._B = B
        self._knots = knots
        self._phi = float(range_phi)
        self._sill = float(sill_sigma2)

    def fit(self, targets):
        """Solve for basis weights; returns (surface, fitted training values)."""
        y = as_targets(targets, self.n)
        w = cho_solve(self._factor, self._B.T @ y)
        surface = FittedSurface(
            kind="lowrank_gp",
            bbox=self.bbox,
            params={
                "knots": self._knots,
                "weights": w,
                "range_phi": self._phi,
                "sill_sigma2": self._sill,
            },
        )
        return surface, self._B @ w


def fit_lowrank_gp(coords, targets, n_knots=100, range_phi=DEFAULT_RANGE_PHI,
                   sill_sigma2=1.0, nugget_tau2=0.1):
    """Fit a low-rank GP surface on a regular knot grid.

    ``range_phi`` is in standardized (unit-square) units; the default is
    0.3 times the bounding-box diagonal.
    """
    fitter = LowRankGpFitter(coords, n_knots, range_phi, sill_sigma2,
                             nugget_tau2)
    return fitter.fit(targets)[0]


def predict_lowrank_gp(surface, unit_coords):
    p = surface.params
    basis = exp_cov(unit_coords, p["knots"], p["sill_sigma2"], p["range_phi"])
    return basis @ p["weights"]
