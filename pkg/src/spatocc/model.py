"""Core occupancy-model types and likelihood math.

Pure functions only: the detection layer (Bernoulli visits given true
presence), the latent presence layer, and the probit link tying the
occupancy probability to a linear predictor plus a spatial term. No
sampling and no I/O lives here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .errors import ValidationError

__all__ = [
    "PSI_CLAMP",
    "Site",
    "DetectionHistory",
    "TrainHoldoutSplit",
    "OccupancyDataset",
    "Coefficients",
    "DetectionParams",
    "LatentState",
    "ProbitLink",
    "inv_probit",
    "occupancy_prob",
    "site_marginal_likelihood",
    "conditional_occupancy_prob",
]

# Occupancy probabilities are kept this far away from {0, 1} whenever a
# log density is evaluated, so log terms stay finite.
PSI_CLAMP = 1e-12

_TINY = np.nextafter(0.0, 1.0)
_ONE_MINUS = np.nextafter(1.0, 0.0)


def inv_probit(x):
    """Standard normal CDF, the inverse link of the probit model.

    Accepts scalars or arrays. The far tails are evaluated in log space
    so the result is strictly inside (0, 1) wherever float64 permits
    (e.g. ``inv_probit(-38.0)`` is a subnormal positive number, never 0).

    Raises
    ------
    ValidationError
        If any input entry is not finite.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("inv_probit requires finite input")
    p = special.ndtr(arr)
    # ndtr underflows to 0 below about -37.5; exp(log_ndtr) reaches the
    # subnormal range before giving up.
    if np.any(p == 0.0):
        p = np.where(p == 0.0, np.exp(special.log_ndtr(arr)), p)
    p = np.clip(p, _TINY, _ONE_MINUS)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(p)
    return p


@dataclass(frozen=True)
class Site:
    """A survey site: an identifier plus a 2-D coordinate.

    Coordinates are in whatever planar units the dataset uses (unit
    square for synthetic data, projected map units for real data).
    """

    id: str | int
    coords: tuple[float, float]

    def __post_init__(self):
        c = tuple(float(v) for v in self.coords)
        if len(c) != 2 or not all(np.isfinite(v) for v in c):
            raise ValidationError(f"site {self.id!r}: coords must be 2 finite numbers")
        object.__setattr__(self, "coords", c)


@dataclass(frozen=True)
class DetectionHistory:
    """Ordered binary visit outcomes for one site (at least one visit)."""

    site_id: str | int
    visits: tuple[int, ...]

    def __post_init__(self):
        v = tuple(int(y) for y in self.visits)
        if len(v) == 0:
            raise ValidationError(f"site {self.site_id!r}: history must have >= 1 visit")
        if any(y not in (0, 1) for y in v):
            raise ValidationError(f"site {self.site_id!r}: visit outcomes must be 0 or 1")
        object.__setattr__(self, "visits", v)

    @property
    def n_visits(self) -> int:
        return len(self.visits)

    @property
    def n_detections(self) -> int:
        return sum(self.visits)

    @property
    def detected(self) -> bool:
        return self.n_detections > 0


@dataclass(frozen=True)
class TrainHoldoutSplit:
    """Partition of the site ids into a fitting set and a scoring set."""

    train: tuple
    holdout: tuple

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "holdout", tuple(self.holdout))
        overlap = set(self.train) & set(self.holdout)
        if overlap:
            raise ValidationError(f"split is not disjoint: {sorted(overlap)[:5]} ...")


@dataclass(frozen=True)
class OccupancyDataset:
    """Sites, their detection histories, optional covariates, and a split.

    ``covariates`` is an (n, q) matrix whose rows align with ``sites``;
    the design matrix used by the model prepends an intercept column.
    ``split`` must partition the site ids exactly.
    """

    sites: tuple[Site, ...]
    histories: tuple[DetectionHistory, ...]
    covariates: np.ndarray | None = None
    split: TrainHoldoutSplit | None = None

    def __post_init__(self):
        sites = tuple(self.sites)
        hists = tuple(self.histories)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "histories", hists)
        if len(sites) == 0:
            raise ValidationError("dataset needs at least one site")
        if len(sites) != len(hists):
            raise ValidationError(
                f"{len(sites)} sites but {len(hists)} histories"
            )
        ids = [s.id for s in sites]
        if len(set(ids)) != len(ids):
            raise ValidationError("site ids are not unique")
        for s, h in zip(sites, hists):
            if s.id != h.site_id:
                raise ValidationError(
                    f"history for {h.site_id!r} is not aligned with site {s.id!r}"
                )
        if self.covariates is not None:
            cov = np.array(self.covariates, dtype=float)
            if cov.ndim != 2 or cov.shape[0] != len(sites):
                raise ValidationError(
                    f"covariates must be ({len(sites)}, q), got {cov.shape}"
                )
            if not np.all(np.isfinite(cov)):
                raise ValidationError("covariates must be finite")
            cov.setflags(write=False)
            object.__setattr__(self, "covariates", cov)
        if self.split is not None:
            covered = set(self.split.train) | set(self.split.holdout)
            if covered != set(ids):
                raise ValidationError("split does not cover the site ids exactly")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def n_covariates(self) -> int:
        return 0 if self.covariates is None else self.covariates.shape[1]

    def coords(self) -> np.ndarray:
        """(n, 2) array of site coordinates, in dataset order."""
        return np.array([s.coords for s in self.sites], dtype=float)

    def design_matrix(self) -> np.ndarray:
        """(n, 1+q) design matrix: intercept column then covariates."""
        ones = np.ones((self.n_sites, 1))
        if self.covariates is None:
            return ones
        return np.hstack([ones, self.covariates])

    def detection_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-site (detections, visits) as integer arrays."""
        det = np.array([h.n_detections for h in self.histories], dtype=np.int64)
        vis = np.array([h.n_visits for h in self.histories], dtype=np.int64)
        return det, vis

    def index_of(self, ids: Sequence) -> np.ndarray:
        """Positions of the given site ids, in the order given."""
        pos = {s.id: i for i, s in enumerate(self.sites)}
        try:
            return np.array([pos[i] for i in ids], dtype=np.int64)
        except KeyError as exc:
            raise ValidationError(f"unknown site id {exc.args[0]!r}") from None

    def train_indices(self) -> np.ndarray:
        if self.split is None:
            raise ValidationError("dataset has no train/holdout split")
        return self.index_of(self.split.train)

    def holdout_indices(self) -> np.ndarray:
        if self.split is None:
            raise ValidationError("dataset has no train/holdout split")
        return self.index_of(self.split.holdout)


@dataclass(frozen=True)
class Coefficients:
    """Regression coefficients, intercept first."""

    beta: np.ndarray

    def __post_init__(self):
        b = np.atleast_1d(np.array(self.beta, dtype=float))
        if b.ndim != 1 or not np.all(np.isfinite(b)):
            raise ValidationError("beta must be a finite vector")
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)

    def __len__(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class DetectionParams:
    """Constant per-visit detection probability."""

    p: float

    def __post_init__(self):
        p = float(self.p)
        if not (0.0 < p < 1.0):
            raise ValidationError(f"detection probability must be in (0,1), got {p}")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class LatentState:
    """Latent presence indicators and their probit auxiliary values.

    Invariants: ``z`` is binary, every site with a detection has z = 1,
    and sign(a) matches z (a > 0 exactly when z = 1).
    """

    z: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=np.int8)
        a = np.array(self.a, dtype=float)
        if z.shape != a.shape or z.ndim != 1:
            raise ValidationError("z and a must be aligned vectors")
        if not np.all((z == 0) | (z == 1)):
            raise ValidationError("z must be binary")
        if not np.all(np.isfinite(a)):
            raise ValidationError("a must be finite")
        if np.any((z == 1) & (a <= 0)) or np.any((z == 0) & (a > 0)):
            raise ValidationError("sign of a inconsistent with z")
        z.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "a", a)


@dataclass(frozen=True)
class ProbitLink:
    """The (fixed) probit link: strictly increasing map from R onto (0,1)."""

    kind: str = field(default="probit")

    def __post_init__(self):
        if self.kind != "probit":
            raise ValidationError(f"unsupported link {self.kind!r}")

    def inverse(self, x):
        return inv_probit(x)


def occupancy_prob(beta, x_i, f_si):
    """Occupancy probability psi = Phi(x'beta + f(s)).

    ``beta`` may be a :class:`Coefficients` or a plain vector; ``x_i``
    is the site's design row (intercept first) and ``f_si`` the spatial
    term at the site.
    """
    b = beta.beta if isinstance(beta, Coefficients) else np.atleast_1d(np.asarray(beta, dtype=float))
    x = np.atleast_1d(np.asarray(x_i, dtype=float))
    if b.shape != x.shape:
        raise ValidationError(f"beta has shape {b.shape} but x has shape {x.shape}")
    return inv_probit(float(b @ x) + float(f_si))


def _history_array(history) -> np.ndarray:
    if isinstance(history, DetectionHistory):
        return np.asarray(history.visits, dtype=np.int64)
    arr = np.atleast_1d(np.asarray(history, dtype=np.int64))
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValidationError("visit outcomes must be 0 or 1")
    return arr


def site_marginal_likelihood(history, psi: float, p: float) -> float:
    """Likelihood of one site's history with latent presence summed out.

    Returns ``psi * p^S (1-p)^(J-S) + (1-psi) * [S == 0]`` where S is
    the number of detections over the J visits.
    """
    y = _history_array(history)
    if y.size == 0:
        raise ValidationError("history must contain at least one visit")
    if not (0.0 <= psi <= 1.0):
        raise ValidationError(f"psi must be in [0,1], got {psi}")
    if not (0.0 < p < 1.0):
        raise ValidationError(f"p must be in (0,1), got {p}")
    s = int(y.sum())
    j = y.size
    occupied = psi * p**s * (1.0 - p) ** (j - s)
    if s == 0:
        return occupied + (1.0 - psi)
    return occupied


def conditional_occupancy_prob(psi: float, p: float, n_visits: int) -> float:
    """P(z = 1 | all-zero history) = psi (1-p)^J / (psi (1-p)^J + 1 - psi).

    Only meaningful for a site whose J visits were all non-detections.
    """
    j = int(n_visits)
    if j < 1:
        raise ValidationError(f"need at least one visit, got {j}")
    if not (0.0 <= psi <= 1.0):
        raise ValidationError(f"psi must be in [0,1], got {psi}")
    if not (0.0 <= p <= 1.0):
        raise ValidationError(f"p must be in [0,1], got {p}")
    num = psi * (1.0 - p) ** j
    den = num + (1.0 - psi)
    if den == 0.0:
        # psi = 1 with p = 1: an occupied site that can never go undetected.
        raise ValidationError("degenerate conditional: psi = 1 and p = 1")
    return num / den
