"""Synthetic occupancy scenarios on a unit-square grid.

Six ground-truth spatial patterns: (1) a two-level checkerboard step
function, (2) a radial bowl rising from the center, (3) a separable
cosine wave, (4) a proper-CAR lattice draw, (5) a Gaussian process with
exponential covariance, (6) a Gaussian process with squared-exponential
covariance. Scenarios 1-3 are deterministic shapes; 4-6 are random
fields pinned by the seed. Detection data are then simulated at sites
sampled from the grid cells.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, solve_triangular
from scipy.spatial.distance import pdist, squareform

from .errors import SingularSystemError, ValidationError
from .learners.gmrf import car_precision
from .model import (
    DetectionHistory,
    OccupancyDataset,
    Site,
    TrainHoldoutSplit,
    inv_probit,
)

SCENARIOS = (1, 2, 3, 4, 5, 6)

# free constants per scenario; the published patterns fix only the
# qualitative shapes, so every amplitude here is overridable
SCENARIO_DEFAULTS = {
    1: {"amplitude": 1.5},
    2: {"offset": -2.0, "slope": 5.0},
    3: {"amplitude": 1.5},
    4: {"rho": 0.99, "sd": 1.0},
    5: {"range_len": 0.2, "sd": 1.0},
    6: {"range_len": 0.2, "sd": 1.0},
}

# squared-exponential Gram matrices on a dense grid are near-singular;
# this ridge keeps the Cholesky alive without visible effect on draws
_GP_JITTER = 1e-8

DEFAULT_GRID = (30, 30)
DEFAULT_P = 0.5
DEFAULT_BETA0 = 0.0


def grid_centers(nx, ny):
    """Cell-center coordinates, x fastest, matching lattice cell order."""
    xs = (np.arange(nx) + 0.5) / nx
    ys = (np.arange(ny) + 0.5) / ny
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass(frozen=True)
class ScenarioSurface:
    """A true occupancy surface: f and psi = Phi(beta0 + f) per grid cell."""

    scenario: int
    grid: Tuple[int, int]
    coords: np.ndarray
    f: np.ndarray
    psi: np.ndarray
    p: float
    beta0: float
    seed: int

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.scenario!r}")
        nx, ny = self.grid
        ncell = nx * ny
        coords = np.array(self.coords, dtype=float)
        f = np.array(self.f, dtype=float)
        psi = np.array(self.psi, dtype=float)
        if coords.shape != (ncell, 2) or f.shape != (ncell,) or psi.shape != (ncell,):
            raise ValidationError("surface arrays must have one entry per cell")
        if not (np.all(np.isfinite(coords)) and np.all(np.isfinite(f))):
            raise ValidationError("surface values must be finite")
        if not np.allclose(psi, inv_probit(self.beta0 + f), rtol=0.0, atol=1e-15):
            raise ValidationError("psi must equal Phi(beta0 + f) cellwise")
        if not (np.all(psi > 0.0) and np.all(psi < 1.0)):
            raise ValidationError("psi must lie inside (0, 1)")
        if not 0.0 < self.p < 1.0:
            raise ValidationError("p must lie inside (0, 1)")
        for arr in (coords, f, psi):
            arr.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "psi", psi)

    @property
    def n_cells(self):
        return self.grid[0] * self.grid[1]


def _scenario_params(scenario, params):
    defaults = SCENARIO_DEFAULTS[scenario]
    merged = dict(defaults)
    if params:
        unknown = set(params) - set(defaults)
        if unknown:
            raise ValidationError(
                f"scenario {scenario} does not take {sorted(unknown)!r}"
            )
        for k, v in params.items():
            x = float(v)
            if not np.isfinite(x):
                raise ValidationError(f"{k} must be finite")
            merged[k] = x
    return merged


def _car_draw(nx, ny, rho, sd, rng):
    # proper-CAR marginal variances vary cell to cell and scale with the
    # free precision, so the draw is standardized to mean 0, sd exactly sd
    q = car_precision(nx, ny, rho=rho, tau_prec=1.0)
    try:
        low, _ = cho_factor(q, lower=True)
    except LinAlgError as exc:
        raise SingularSystemError("lattice precision is not positive definite") from exc
    u = solve_triangular(low, rng.standard_normal(nx * ny), lower=True, trans="T")
    spread = u.std()
    if spread == 0.0:
        raise SingularSystemError("degenerate lattice draw")
    return sd * (u - u.mean()) / spread


def _gp_draw(coords, range_len, sd, rng, squared):
    d = squareform(pdist(coords))
    scaled = (d / range_len) ** 2 if squared else d / range_len
    cov = sd * sd * np.exp(-scaled)
    cov[np.diag_indices_from(cov)] += _GP_JITTER
    try:
        low = np.linalg.cholesky(cov)
    except LinAlgError as exc:
        raise SingularSystemError("covariance is not positive definite") from exc
    return low @ rng.standard_normal(coords.shape[0])


def make_surface(scenario, grid=DEFAULT_GRID, params=None, seed=0,
                 p=DEFAULT_P, beta0=DEFAULT_BETA0):
    """Build one scenario's true surface over the grid.

    ``params`` overrides the scenario's amplitude constants (see
    SCENARIO_DEFAULTS for each scenario's keys). Deterministic given
    the seed; scenarios 1-3 do not consume randomness at all.
    """
    if scenario not in SCENARIOS:
        raise ValidationError(f"unknown scenario {scenario!r}")
    nx, ny = (int(v) for v in grid)
    if nx < 1 or ny < 1:
        raise ValidationError("grid dims must be >= 1")
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral) or seed < 0:
        raise ValidationError("seed must be an integer >= 0")
    pm = _scenario_params(scenario, params)
    coords = grid_centers(nx, ny)
    x = coords[:, 0]
    y = coords[:, 1]
    rng = np.random.default_rng(int(seed))
    if scenario == 1:
        same_half = (x < 0.5) == (y < 0.5)
        f = np.where(same_half, pm["amplitude"], -pm["amplitude"])
    elif scenario == 2:
        f = pm["offset"] + pm["slope"] * np.hypot(x - 0.5, y - 0.5)
    elif scenario == 3:
        f = pm["amplitude"] * np.cos(2.0 * np.pi * x) * np.cos(2.0 * np.pi * y)
    elif scenario == 4:
        f = _car_draw(nx, ny, pm["rho"], pm["sd"], rng)
    else:
        f = _gp_draw(coords, pm["range_len"], pm["sd"], rng, squared=(scenario == 6))
    return ScenarioSurface(
        scenario=scenario,
        grid=(nx, ny),
        coords=coords,
        f=f,
        psi=inv_probit(float(beta0) + f),
        p=float(p),
        beta0=float(beta0),
        seed=int(seed),
    )


def simulate_histories(psi, p, n_visits, rng):
    """Draw z ~ Bernoulli(psi) and an (n, J) visit matrix y ~ Bernoulli(p z)."""
    psi = np.asarray(psi, dtype=float)
    n = psi.shape[0]
    z = (rng.random(n) < psi).astype(np.int8)
    y = (rng.random((n, n_visits)) < p * z[:, None]).astype(np.int8)
    return z, y


def sample_design(surface, n_train=200, n_holdout=200, n_visits=3, seed=0):
    """Sample a survey design from a scenario surface.

    Draws n_train + n_holdout distinct grid cells without replacement,
    simulates occupancy and detections at the surface's psi and p, and
    returns a dataset whose split marks the two groups. Deterministic
    given the seed.
    """
    if not isinstance(surface, ScenarioSurface):
        raise ValidationError("surface must be a ScenarioSurface")
    for name, v in (("n_train", n_train), ("n_holdout", n_holdout),
                    ("n_visits", n_visits)):
        if isinstance(v, bool) or not isinstance(v, numbers.Integral) or v < 1:
            raise ValidationError(f"{name} must be an integer >= 1")
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral) or seed < 0:
        raise ValidationError("seed must be an integer >= 0")
    total = int(n_train) + int(n_holdout)
    if total > surface.n_cells:
        raise ValidationError(
            f"requested {total} sites but the grid has {surface.n_cells} cells"
        )
    rng = np.random.default_rng(int(seed))
    cells = rng.choice(surface.n_cells, size=total, replace=False)
    z, y = simulate_histories(surface.psi[cells], surface.p, int(n_visits), rng)
    ids = tuple(f"c{c:04d}" for c in cells)
    sites = tuple(
        Site(id=ids[k], coords=(surface.coords[c, 0], surface.coords[c, 1]))
        for k, c in enumerate(cells)
    )
    hists = tuple(
        DetectionHistory(site_id=ids[k], visits=tuple(int(v) for v in y[k]))
        for k in range(total)
    )
    split = TrainHoldoutSplit(
        train=ids[: int(n_train)], holdout=ids[int(n_train):]
    )
    return OccupancyDataset(sites=sites, histories=hists, covariates=None,
                            split=split)
