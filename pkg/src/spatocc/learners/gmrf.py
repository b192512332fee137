"""Gaussian Markov random field learner: proper CAR on a lattice.

Sites are binned into cells of a grid_nx x grid_ny lattice over the
training bounding box. Cell effects u solve

    (Q + obs_prec A'A) u = obs_prec A'y,   Q = tau_prec (D - rho W),

with W the rook adjacency of the lattice, D its degree matrix, and A
the site-to-cell incidence. rho < 1 keeps Q positive definite; cells
without sites are filled in through Q. Prediction clamps a query to its
nearest cell.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ..errors import SingularSystemError, ValidationError
from .base import FittedSurface, as_coords, as_targets, coord_bbox, to_unit


def cell_index(unit_coords, nx, ny):
    """Map unit-square points to flat cell ids iy * nx + ix, clamped."""
    ix = np.clip(np.floor(unit_coords[:, 0] * nx).astype(np.int64), 0, nx - 1)
    iy = np.clip(np.floor(unit_coords[:, 1] * ny).astype(np.int64), 0, ny - 1)
    return iy * nx + ix


def car_precision(nx, ny, rho, tau_prec):
    """Dense proper-CAR precision tau_prec (D - rho W) with rook adjacency."""
    ncell = nx * ny
    W = np.zeros((ncell, ncell))
    for iy in range(ny):
        for ix in range(nx):
            c = iy * nx + ix
            if ix + 1 < nx:
                W[c, c + 1] = 1.0
                W[c + 1, c] = 1.0
            if iy + 1 < ny:
                W[c, c + nx] = 1.0
                W[c + nx, c] = 1.0
    D = np.diag(W.sum(axis=1))
    return tau_prec * (D - rho * W)


class GmrfFitter:
    """Reusable fitter: lattice system factored once per coordinate set."""

    def __init__(self, coords, grid_nx=15, grid_ny=15, rho=0.99, tau_prec=1.0,
                 obs_prec=10.0):
        coords = as_coords(coords)
        grid_nx = int(grid_nx)
        grid_ny = int(grid_ny)
        if grid_nx < 1 or grid_ny < 1:
            raise ValidationError("grid_nx and grid_ny must be >= 1")
        if not (np.isfinite(rho) and 0.0 < rho < 1.0):
            raise ValidationError("rho must be in (0, 1)")
        if not (np.isfinite(tau_prec) and tau_prec > 0.0):
            raise ValidationError("tau_prec must be finite and > 0")
        if not (np.isfinite(obs_prec) and obs_prec > 0.0):
            raise ValidationError("obs_prec must be finite and > 0")
        self.n = coords.shape[0]
        self.bbox = coord_bbox(coords)
        unit = to_unit(coords, self.bbox)
        self._nx = grid_nx
        self._ny = grid_ny
        self._ncell = grid_nx * grid_ny
        self._cells = cell_index(unit, grid_nx, grid_ny)
        self._obs_prec = float(obs_prec)
        M = car_precision(grid_nx, grid_ny, float(rho), float(tau_prec))
        counts = np.bincount(self._cells, minlength=self._ncell).astype(float)
        M[np.diag_indices_from(M)] += self._obs_prec * counts
        try:
            self._factor = cho_factor(M, lower=True)
        except LinAlgError as exc:
            raise SingularSystemError("gmrf lattice system is singular") from exc

    def fit(self, targets):
        """Solve for cell effects; returns (surface, fitted training values)."""
        y = as_targets(targets, self.n)
        rhs = self._obs_prec * np.bincount(
            self._cells, weights=y, minlength=self._ncell
        )
        effects = cho_solve(self._factor, rhs)
        surface = FittedSurface(
            kind="gmrf",
            bbox=self.bbox,
            params={
                "effects": effects,
                "grid_nx": self._nx,
                "grid_ny": self._ny,
            },
        )
        return surface, effects[self._cells]


def fit_gmrf(coords, targets, grid_nx=15, grid_ny=15, rho=0.99, tau_prec=1.0,
             obs_prec=10.0):
    """Fit proper-CAR lattice effects to the targets (posterior mode)."""
    fitter = GmrfFitter(coords, grid_nx, grid_ny, rho, tau_prec, obs_prec)
    return fitter.fit(targets)[0]


def predict_gmrf(surface, unit_coords):
    p = surface.params
    cells = cell_index(unit_coords, int(p["grid_nx"]), int(p["grid_ny"]))
    return p["effects"][cells]
