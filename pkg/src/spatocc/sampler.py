"""MCMC for the occupancy model with an embedded spatial learner.

Probit data augmentation in the Albert-Chib style: each iteration
redraws the latent presences z, the auxiliary probit variables a, the
coefficients beta (conjugate normal), refits the learner surface to the
residual targets a - X beta (the embedding step), and redraws the
detection probability p (conjugate beta). All randomness flows through
one numpy Generator, and the per-iteration draw counts are fixed by the
data alone, so a seed pins down the entire chain and the random streams
stay aligned across learner kinds.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence, Union

import numpy as np
from scipy import special
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular

from . import learners
from .errors import (
    ConvergenceError,
    SamplerStateError,
    SingularSystemError,
    ValidationError,
)
from .learners import FittedSurface, LearnerSpec
from .learners.base import as_coords, coord_bbox
from .model import (
    PSI_CLAMP,
    Coefficients,
    DetectionParams,
    LatentState,
    OccupancyDataset,
    inv_probit,
)

# lower clamp for auxiliary draws on the z=1 branch; the exact u=0
# quantile maps to the open boundary a=0, which the sign invariant forbids
_APOS_MIN = 1e-300


@dataclass(frozen=True)
class McmcConfig:
    """Chain settings and priors.

    beta has a Normal(beta_mean, beta_var I) prior (beta_mean may be a
    scalar, broadcast over the design columns, or a full vector); p has
    a Beta(p_alpha, p_beta) prior. refit_every controls how many
    iterations share one fitted surface (default: refit every
    iteration).
    """

    n_iter: int = 5000
    burn_in: int = 1000
    thin: int = 4
    seed: int = 0
    refit_every: int = 1
    beta_mean: Union[float, Sequence[float]] = 0.0
    beta_var: float = 2.25
    p_alpha: float = 1.0
    p_beta: float = 1.0

    def __post_init__(self):
        for name in ("n_iter", "burn_in", "thin", "seed", "refit_every"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, numbers.Integral):
                raise ValidationError(f"{name} must be an integer")
            object.__setattr__(self, name, int(v))
        if self.n_iter < 1:
            raise ValidationError("n_iter must be >= 1")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValidationError("burn_in must satisfy 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValidationError("thin must be >= 1")
        if self.refit_every < 1:
            raise ValidationError("refit_every must be >= 1")
        if self.seed < 0:
            raise ValidationError("seed must be >= 0")
        mean = self.beta_mean
        if isinstance(mean, numbers.Real) and not isinstance(mean, bool):
            mean = float(mean)
            if not np.isfinite(mean):
                raise ValidationError("beta_mean must be finite")
        else:
            arr = np.asarray(mean, dtype=float)
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise ValidationError("beta_mean must be a finite scalar or vector")
            mean = tuple(float(v) for v in arr)
        object.__setattr__(self, "beta_mean", mean)
        for name in ("beta_var", "p_alpha", "p_beta"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v > 0.0):
                raise ValidationError(f"{name} must be finite and > 0")
            object.__setattr__(self, name, v)

    def prior_mean(self, q):
        """Prior mean as a length-q vector."""
        if isinstance(self.beta_mean, float):
            return np.full(q, self.beta_mean)
        arr = np.asarray(self.beta_mean, dtype=float)
        if arr.shape != (q,):
            raise ValidationError(
                f"beta_mean has length {arr.shape[0]} but the design has {q} columns"
            )
        return arr.copy()

    def n_retained(self):
        return (self.n_iter - self.burn_in) // self.thin


@dataclass(frozen=True)
class ChainState:
    """One full set of model unknowns during sampling.

    f_values caches predict(surface, training coords); update_f keeps
    the two in sync.
    """

    latent: LatentState
    beta: Coefficients
    p: DetectionParams
    surface: FittedSurface
    f_values: np.ndarray

    def __post_init__(self):
        f = np.array(self.f_values, dtype=float)
        if f.ndim != 1 or f.shape != self.latent.z.shape:
            raise ValidationError("f_values must align with the latent state")
        if not np.all(np.isfinite(f)):
            raise ValidationError("f_values must be finite")
        f.setflags(write=False)
        object.__setattr__(self, "f_values", f)


@dataclass(frozen=True)
class TrainView:
    """Training-split arrays pulled out of a dataset once.

    The update operations accept either an OccupancyDataset or one of
    these; run_chain builds the view a single time. Without a split the
    whole dataset is the training set.
    """

    X: np.ndarray
    coords: np.ndarray
    det: np.ndarray
    vis: np.ndarray
    detected: np.ndarray
    allzero: np.ndarray
    ids: tuple

    @classmethod
    def from_dataset(cls, data):
        if not isinstance(data, OccupancyDataset):
            raise ValidationError("data must be an OccupancyDataset")
        if data.split is not None:
            idx = data.train_indices()
            ids = tuple(data.split.train)
        else:
            idx = np.arange(data.n_sites)
            ids = tuple(s.id for s in data.sites)
        if idx.shape[0] == 0:
            raise ValidationError("training split is empty")
        det, vis = data.detection_counts()
        detected = det[idx] > 0
        return cls(
            X=data.design_matrix()[idx],
            coords=data.coords()[idx],
            det=det[idx],
            vis=vis[idx],
            detected=detected,
            allzero=np.flatnonzero(~detected),
            ids=ids,
        )

    @property
    def n(self):
        return self.X.shape[0]


def _view(data):
    return data if isinstance(data, TrainView) else TrainView.from_dataset(data)


def truncnorm_draw(mu, z, u):
    """Inverse-CDF truncated normal draws for the probit augmentation.

    Given means mu, indicators z, and uniforms u in [0, 1), returns
    a ~ Normal(mu, 1) truncated to (0, inf) where z = 1 and to
    (-inf, 0] where z = 0. Works in log space throughout, so extreme
    means stay finite without any rejection loop.
    """
    mu = np.asarray(mu, dtype=float)
    z = np.asarray(z)
    u = np.asarray(u, dtype=float)
    lg = np.log1p(-u)
    pos = mu - special.ndtri_exp(lg + special.log_ndtr(mu))
    neg = mu + special.ndtri_exp(lg + special.log_ndtr(-mu))
    return np.where(
        z == 1, np.maximum(pos, _APOS_MIN), np.minimum(neg, 0.0)
    )


def update_z(state, data, rng):
    """Redraw latent presence.

    Sites with a detection stay occupied. All-zero sites draw z from
    the conditional psi (1-p)^J / (psi (1-p)^J + 1 - psi). Auxiliary
    values at sites whose z flipped get a sign-consistent placeholder;
    a is never read before update_aux replaces it.
    """
    tv = _view(data)
    psi = inv_probit(tv.X @ state.beta.beta + state.f_values)
    az = tv.allzero
    p = state.p.p
    num = psi[az] * (1.0 - p) ** tv.vis[az]
    cond = num / (num + (1.0 - psi[az]))
    u = rng.random(az.shape[0])
    z = np.ones(tv.n, dtype=np.int8)
    z[az] = (u < cond).astype(np.int8)
    a = state.latent.a
    a = np.where((z == 1) & (a <= 0.0), 1.0, a)
    a = np.where((z == 0) & (a > 0.0), 0.0, a)
    return replace(state, latent=LatentState(z=z, a=a))


def update_aux(state, data, rng):
    """Redraw the probit auxiliaries a ~ N(x'beta + f, 1) sign-truncated by z."""
    tv = _view(data)
    mu = tv.X @ state.beta.beta + state.f_values
    u = rng.random(tv.n)
    a = truncnorm_draw(mu, state.latent.z, u)
    return replace(state, latent=LatentState(z=state.latent.z, a=a))


def update_beta(state, data, rng, beta_mean=0.0, beta_var=2.25):
    """Conjugate normal draw for the coefficients.

    beta ~ Normal(V (X'(a - f) + mu0 / beta_var), V) with
    V = (X'X + I / beta_var)^(-1).
    """
    tv = _view(data)
    q = tv.X.shape[1]
    mu0 = np.full(q, float(beta_mean)) if np.ndim(beta_mean) == 0 else (
        np.asarray(beta_mean, dtype=float)
    )
    if mu0.shape != (q,):
        raise ValidationError(f"beta_mean must have length {q}")
    if not (np.isfinite(beta_var) and beta_var > 0.0):
        raise ValidationError("beta_var must be finite and > 0")
    resid = state.latent.a - state.f_values
    prec = tv.X.T @ tv.X + np.eye(q) / beta_var
    try:
        low = cho_factor(prec, lower=True)
    except LinAlgError as exc:
        raise SingularSystemError("coefficient posterior is singular") from exc
    mean = cho_solve(low, tv.X.T @ resid + mu0 / beta_var)
    noise = solve_triangular(low[0], rng.standard_normal(q), lower=True,
                             trans="T")
    return replace(state, beta=Coefficients(mean + noise))


def update_f(state, data, learner):
    """Refit the spatial surface to the residual targets a - X beta.

    ``learner`` may be a LearnerSpec or a prepared fitter from
    learners.make_fitter (run_chain passes the latter so coordinate-only
    work is done once per chain). Deterministic: no RNG involved.
    """
    tv = _view(data)
    fitter = (
        learners.make_fitter(learner, tv.coords)
        if isinstance(learner, LearnerSpec)
        else learner
    )
    targets = state.latent.a - tv.X @ state.beta.beta
    surface, _ = fitter.fit(targets)
    f_values = learners.predict(surface, tv.coords)
    return replace(state, surface=surface, f_values=f_values)


def update_p(state, data, rng, p_alpha=1.0, p_beta=1.0):
    """Conjugate beta draw for detection probability.

    p ~ Beta(p_alpha + S, p_beta + T - S) with S the detections and T
    the visits over currently occupied sites; with no occupied sites
    this is a prior draw. The draw is clamped into the open unit
    interval.
    """
    tv = _view(data)
    occ = state.latent.z == 1
    s_det = int(tv.det[occ].sum())
    t_vis = int(tv.vis[occ].sum())
    draw = rng.beta(p_alpha + s_det, p_beta + (t_vis - s_det))
    p = float(np.clip(draw, PSI_CLAMP, 1.0 - PSI_CLAMP))
    return replace(state, p=DetectionParams(p))


@dataclass(frozen=True)
class PosteriorSamples:
    """Retained thinned draws plus a deterministic run summary.

    Arrays are stacked across the M retained draws: beta is (M, q),
    p is (M,), psi_train is (M, n_train) with every value in the open
    unit interval, and surfaces is the M fitted surfaces.
    """

    beta: np.ndarray
    p: np.ndarray
    surfaces: tuple
    psi_train: np.ndarray
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        p = np.array(self.p, dtype=float)
        psi = np.array(self.psi_train, dtype=float)
        m = beta.shape[0]
        if beta.ndim != 2:
            raise ValidationError("beta draws must be (M, q)")
        if p.shape != (m,) or psi.shape[0] != m or len(self.surfaces) != m:
            raise ValidationError("draw arrays disagree on the number of draws")
        if psi.ndim != 2:
            raise ValidationError("psi_train must be (M, n_train)")
        if m and not (np.all(psi > 0.0) and np.all(psi < 1.0)):
            raise ValidationError("every retained psi must be inside (0, 1)")
        for arr in (beta, p, psi):
            if not np.all(np.isfinite(arr)):
                raise ValidationError("retained draws must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "psi_train", psi)
        object.__setattr__(self, "surfaces", tuple(self.surfaces))
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n_draws(self):
        return self.beta.shape[0]

    def draws(self):
        """Iterate retained (beta, p, surface, psi_train) tuples."""
        for m in range(self.n_draws):
            yield self.beta[m], float(self.p[m]), self.surfaces[m], self.psi_train[m]


def run_chain(data, learner, cfg):
    """Run one chain; fully deterministic given cfg.seed.

    Per iteration: update_z, update_aux, update_beta, update_f (every
    cfg.refit_every iterations, always including the first), update_p.
    Keeps draw t when t > burn_in and (t - burn_in) % thin == 0.
    Learner convergence failures and invalid states abort with the
    iteration index.
    """
    if not isinstance(learner, LearnerSpec):
        raise ValidationError("learner must be a LearnerSpec")
    if not isinstance(cfg, McmcConfig):
        raise ValidationError("cfg must be an McmcConfig")
    tv = TrainView.from_dataset(data)
    q = tv.X.shape[1]
    mu0 = cfg.prior_mean(q)
    fitter = learners.make_fitter(learner, tv.coords)
    rng = np.random.default_rng(cfg.seed)

    z0 = tv.detected.astype(np.int8)
    state = ChainState(
        latent=LatentState(z=z0, a=np.where(z0 == 1, 1.0, 0.0)),
        beta=Coefficients(mu0),
        p=DetectionParams(0.5),
        surface=FittedSurface(kind="none", bbox=coord_bbox(tv.coords)),
        f_values=np.zeros(tv.n),
    )

    kept_beta = []
    kept_p = []
    kept_surf = []
    kept_psi = []
    for t in range(1, cfg.n_iter + 1):
        try:
            state = update_z(state, tv, rng)
            state = update_aux(state, tv, rng)
            state = update_beta(state, tv, rng, beta_mean=mu0,
                                beta_var=cfg.beta_var)
            if (t - 1) % cfg.refit_every == 0:
                state = update_f(state, tv, fitter)
            state = update_p(state, tv, rng, cfg.p_alpha, cfg.p_beta)
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"learner did not converge at iteration {t}: {exc.args[0]}",
                violation=exc.violation,
            ) from exc
        except ValidationError as exc:
            raise SamplerStateError(
                f"invalid state at iteration {t}: {exc} "
                f"(beta range [{state.beta.beta.min():.3g}, "
                f"{state.beta.beta.max():.3g}], p {state.p.p:.3g}, "
                f"f range [{state.f_values.min():.3g}, "
                f"{state.f_values.max():.3g}])"
            ) from exc
        if t > cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0:
            if not np.all(state.latent.z[tv.detected] == 1):
                raise SamplerStateError(
                    f"detected site left unoccupied at iteration {t}"
                )
            kept_beta.append(state.beta.beta)
            kept_p.append(state.p.p)
            kept_surf.append(state.surface)
            kept_psi.append(inv_probit(tv.X @ state.beta.beta + state.f_values))

    m = len(kept_beta)
    meta = {
        "learner": learner.kind,
        "hyperparams": {k: v for k, v in sorted(learner.resolved().items())},
        "n_iter": cfg.n_iter,
        "burn_in": cfg.burn_in,
        "thin": cfg.thin,
        "seed": cfg.seed,
        "refit_every": cfg.refit_every,
        "beta_mean": cfg.beta_mean,
        "beta_var": cfg.beta_var,
        "p_alpha": cfg.p_alpha,
        "p_beta": cfg.p_beta,
        "n_train": int(tv.n),
        "n_draws": m,
        "backend": learners.backend_name(),
        "mean_p": float(np.mean(kept_p)) if m else None,
        "mean_occupancy": float(np.mean(kept_psi)) if m else None,
    }
    return PosteriorSamples(
        beta=np.array(kept_beta, dtype=float).reshape(m, q),
        p=np.array(kept_p, dtype=float),
        surfaces=tuple(kept_surf),
        psi_train=np.array(kept_psi, dtype=float).reshape(m, tv.n),
        meta=meta,
    )


def _grid_design(samples, grid_coords, design):
    if not isinstance(samples, PosteriorSamples):
        raise ValidationError("samples must be a PosteriorSamples")
    if samples.n_draws < 1:
        raise ValidationError("need at least one retained draw")
    pts = as_coords(grid_coords, allow_empty=True)
    m = pts.shape[0]
    q = samples.beta.shape[1]
    if design is None:
        if q != 1:
            raise ValidationError(
                "the model has covariates; pass a grid design matrix"
            )
        xg = np.ones((m, 1))
    else:
        xg = np.asarray(design, dtype=float)
        if xg.shape != (m, q) or not np.all(np.isfinite(xg)):
            raise ValidationError(f"design must be finite with shape ({m}, {q})")
    return pts, xg


def posterior_psi_draws(samples, grid_coords, design=None):
    """Per-draw psi(s) = Phi(x(s)'beta + f(s)) at grid points, (M, n_points).

    With covariates in the model a grid design matrix must be supplied;
    an intercept-only model needs none.
    """
    pts, xg = _grid_design(samples, grid_coords, design)
    out = np.empty((samples.n_draws, pts.shape[0]))
    for k, (beta_m, _p, surface_m, _psi) in enumerate(samples.draws()):
        out[k] = inv_probit(xg @ beta_m + learners.predict(surface_m, pts))
    return out


def posterior_psi_surface(samples, grid_coords, design=None):
    """Across-draw mean of psi at grid points (see posterior_psi_draws)."""
    pts, xg = _grid_design(samples, grid_coords, design)
    acc = np.zeros(pts.shape[0])
    for beta_m, _p, surface_m, _psi in samples.draws():
        acc += inv_probit(xg @ beta_m + learners.predict(surface_m, pts))
    return acc / samples.n_draws
