"""Support vector regression learner with an RBF kernel.

The epsilon-insensitive dual is solved by a deterministic SMO sweep
(see the kernel backends); there is no randomness, so refitting the
same targets reproduces the same surface bit for bit.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConvergenceError, ValidationError
from ._backend import kernels
from .base import FittedSurface, as_coords, as_targets, coord_bbox, to_unit


def rbf_kernel(a, b, gamma):
    """Gram matrix k(a_i, b_j) = exp(-gamma * ||a_i - b_j||^2)."""
    diff = a[:, None, :] - b[None, :, :]
    d2 = diff[:, :, 0] * diff[:, :, 0] + diff[:, :, 1] * diff[:, :, 1]
    return np.exp(-gamma * d2)


class SvrFitter:
    """Reusable fitter: the training Gram matrix is built once."""

    def __init__(self, coords, C=3.0, epsilon=0.1, rbf_gamma=5.0,
                 tol=1e-4, max_passes=200):
        coords = as_coords(coords)
        if not (np.isfinite(C) and C > 0.0):
            raise ValidationError("C must be finite and > 0")
        if not (np.isfinite(epsilon) and epsilon >= 0.0):
            raise ValidationError("epsilon must be finite and >= 0")
        if not (np.isfinite(rbf_gamma) and rbf_gamma > 0.0):
            raise ValidationError("rbf_gamma must be finite and > 0")
        if not (np.isfinite(tol) and tol > 0.0):
            raise ValidationError("tol must be finite and > 0")
        max_passes = int(max_passes)
        if max_passes < 1:
            raise ValidationError("max_passes must be >= 1")
        self.n = coords.shape[0]
        self.bbox = coord_bbox(coords)
        self._unit = to_unit(coords, self.bbox)
        self._K = rbf_kernel(self._unit, self._unit, float(rbf_gamma))
        self._hp = (float(C), float(epsilon), float(rbf_gamma), float(tol),
                    max_passes)

    def fit(self, targets):
        """Solve the dual; returns (surface, fitted values at training sites)."""
        y = as_targets(targets, self.n)
        C, epsilon, gamma, tol, max_passes = self._hp
        beta, bias, passes, violation, converged = kernels.smo_solve(
            self._K, y, C, epsilon, tol, max_passes
        )
        if not converged:
            raise ConvergenceError(
                f"svr solver stopped after {passes} passes above KKT tolerance "
                f"{tol:g}",
                violation=float(violation),
            )
        support = beta != 0.0
        surface = FittedSurface(
            kind="svr",
            bbox=self.bbox,
            params={
                "sv_coords": self._unit[support],
                "beta": beta[support],
                "bias": float(bias),
                "rbf_gamma": gamma,
            },
        )
        fhat = self._K @ beta + bias
        return surface, fhat


def fit_svr(coords, targets, C=3.0, epsilon=0.1, rbf_gamma=5.0, tol=1e-4,
            max_passes=200):
    """Fit an epsilon-insensitive SVR surface.

    Prediction is f(s) = sum_k beta_k exp(-gamma ||s - s_k||^2) + b over
    the support vectors. Raises a convergence error carrying the final
    KKT violation if the solver runs out of passes.
    """
    fitter = SvrFitter(coords, C, epsilon, rbf_gamma, tol, max_passes)
    return fitter.fit(targets)[0]


def predict_svr(surface, unit_coords):
    p = surface.params
    sv = p["sv_coords"]
    if sv.shape[0] == 0:
        return np.full(unit_coords.shape[0], p["bias"], dtype=float)
    return rbf_kernel(unit_coords, sv, p["rbf_gamma"]) @ p["beta"] + p["bias"]
