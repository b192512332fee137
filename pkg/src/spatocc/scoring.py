"""Model comparison and adequacy checks.

Two instruments: out-of-sample -2 x LPPD (lower is better) scores
predictive accuracy on holdout sites, and Moran's I correlograms with
permutation envelopes flag spatial dependence left in detection-scale
residuals.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from . import learners
from .errors import UndefinedStatisticError, ValidationError
from .model import OccupancyDataset, inv_probit
from .sampler import PosteriorSamples

DEFAULT_N_BINS = 10
DEFAULT_N_PERM = 199
ENVELOPE_QUANTILES = (0.025, 0.975)

# declared residual construction, echoed into output metadata so a run
# can be audited without reading the source
RESIDUAL_DEFINITION = (
    "naive detection indicator (any detection over J_i visits) minus the "
    "posterior mean of psi_i * (1 - (1 - p)^J_i)"
)


@dataclass(frozen=True)
class ScoreReport:
    """Holdout -2 x LPPD for one fitted model.

    lppd_per_site holds each holdout site's log mean-over-draws
    predictive density; the total is -2 times their sum. n_draws is
    disclosed so scores are only compared at matching M.
    """

    label: str
    neg2_lppd: float
    lppd_per_site: np.ndarray
    n_holdout: int
    n_draws: int

    def __post_init__(self):
        vals = np.array(self.lppd_per_site, dtype=float)
        if vals.ndim != 1 or vals.shape[0] != self.n_holdout or self.n_holdout < 1:
            raise ValidationError("per-site values must match n_holdout >= 1")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("per-site log densities must be finite")
        total = -2.0 * float(vals.sum())
        if not np.isfinite(self.neg2_lppd) or abs(self.neg2_lppd - total) > 1e-9 * (
            1.0 + abs(total)
        ):
            raise ValidationError("neg2_lppd does not equal -2 * sum(lppd_per_site)")
        if self.n_draws < 1:
            raise ValidationError("n_draws must be >= 1")
        vals.setflags(write=False)
        object.__setattr__(self, "lppd_per_site", vals)
        object.__setattr__(self, "neg2_lppd", float(self.neg2_lppd))


@dataclass(frozen=True)
class Correlogram:
    """Moran's I by distance bin with a permutation envelope.

    Bins follow histogram convention on pair distances: bin k covers
    [edges[k], edges[k+1]), the last bin closing at its upper edge.
    Empty bins carry NaN for I and the envelope and a zero pair count.
    pair_counts are unordered pairs.
    """

    bin_edges: np.ndarray
    i_values: np.ndarray
    env_lo: np.ndarray
    env_hi: np.ndarray
    pair_counts: np.ndarray

    def __post_init__(self):
        edges = np.array(self.bin_edges, dtype=float)
        if edges.ndim != 1 or edges.shape[0] < 3:
            raise ValidationError("need at least 2 bins (3 edges)")
        if not np.all(np.isfinite(edges)) or not np.all(np.diff(edges) > 0.0):
            raise ValidationError("bin edges must be finite and strictly increasing")
        k = edges.shape[0] - 1
        ivals = np.array(self.i_values, dtype=float)
        lo = np.array(self.env_lo, dtype=float)
        hi = np.array(self.env_hi, dtype=float)
        pairs = np.array(self.pair_counts, dtype=np.int64)
        for arr in (ivals, lo, hi, pairs):
            if arr.shape != (k,):
                raise ValidationError("per-bin arrays must have one entry per bin")
        if np.any(pairs < 0):
            raise ValidationError("pair counts must be >= 0")
        both = np.isfinite(lo) & np.isfinite(hi)
        if np.any(lo[both] > hi[both]):
            raise ValidationError("envelope lower bound exceeds upper bound")
        for arr in (edges, ivals, lo, hi, pairs):
            arr.setflags(write=False)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "i_values", ivals)
        object.__setattr__(self, "env_lo", lo)
        object.__setattr__(self, "env_hi", hi)
        object.__setattr__(self, "pair_counts", pairs)

    @property
    def n_bins(self):
        return self.bin_edges.shape[0] - 1


def _slice_indices(data, indices, default):
    if not isinstance(data, OccupancyDataset):
        raise ValidationError("data must be an OccupancyDataset")
    if indices is None:
        if data.split is not None:
            idx = default(data)
        else:
            idx = np.arange(data.n_sites)
    else:
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValidationError("indices must be a 1-D integer sequence")
        if idx.shape[0] and (idx.min() < 0 or idx.max() >= data.n_sites):
            raise ValidationError("indices out of range for the dataset")
    if idx.shape[0] == 0:
        raise ValidationError("site slice is empty")
    return idx


def site_densities(det, vis, psi, p):
    """Marginal likelihood of each site's history, vectorized.

    psi p^S (1-p)^(J-S) plus the never-occupied mass (1-psi) when no
    visit detected. Matches the scalar model.site_marginal_likelihood.
    """
    det = np.asarray(det)
    vis = np.asarray(vis)
    psi = np.asarray(psi, dtype=float)
    occ = psi * p**det * (1.0 - p) ** (vis - det)
    return occ + (1.0 - psi) * (det == 0)


def detection_prob(psi, p, vis):
    """P(at least one detection over ``vis`` visits) = psi (1 - (1-p)^J)."""
    return np.asarray(psi, dtype=float) * (1.0 - (1.0 - p) ** np.asarray(vis))


def _psi_at(samples, X, coords):
    for beta_m, p_m, surf_m, _psi in samples.draws():
        yield inv_probit(X @ beta_m + learners.predict(surf_m, coords)), p_m


def neg2_lppd(samples, data, indices=None, label=None):
    """Score a fitted model on holdout sites.

    For each site the predictive density is averaged over retained
    draws before taking the log; the report totals -2 x sum of logs.
    ``indices`` defaults to the dataset's holdout split (all sites when
    there is no split).
    """
    if not isinstance(samples, PosteriorSamples):
        raise ValidationError("samples must be a PosteriorSamples")
    if samples.n_draws < 1:
        raise ValidationError("need at least one retained draw")
    idx = _slice_indices(data, indices, lambda d: d.holdout_indices())
    X = data.design_matrix()[idx]
    coords = data.coords()[idx]
    det, vis = data.detection_counts()
    det = det[idx]
    vis = vis[idx]
    acc = np.zeros(idx.shape[0])
    for psi, p_m in _psi_at(samples, X, coords):
        acc += site_densities(det, vis, psi, p_m)
    mean_dens = acc / samples.n_draws
    if np.any(mean_dens <= 0.0):
        # unreachable given psi/p clamping, guarded so log never sees zero
        raise UndefinedStatisticError("a site has zero mean predictive density")
    lppd = np.log(mean_dens)
    return ScoreReport(
        label=label if label is not None else str(samples.meta.get("learner", "model")),
        neg2_lppd=-2.0 * float(lppd.sum()),
        lppd_per_site=lppd,
        n_holdout=int(idx.shape[0]),
        n_draws=samples.n_draws,
    )


def occupancy_residuals(samples, data, indices=None):
    """Detection-scale residuals for adequacy checks.

    r_i = 1[any detection at i] - E_draws[psi_i (1 - (1-p)^J_i)].
    ``indices`` defaults to the training split (all sites when there is
    no split). Values lie strictly inside (-1, 1).
    """
    if not isinstance(samples, PosteriorSamples):
        raise ValidationError("samples must be a PosteriorSamples")
    if samples.n_draws < 1:
        raise ValidationError("need at least one retained draw")
    idx = _slice_indices(data, indices, lambda d: d.train_indices())
    X = data.design_matrix()[idx]
    coords = data.coords()[idx]
    det, vis = data.detection_counts()
    det = det[idx]
    vis = vis[idx]
    acc = np.zeros(idx.shape[0])
    for psi, p_m in _psi_at(samples, X, coords):
        acc += detection_prob(psi, p_m, vis)
    return (det > 0).astype(float) - acc / samples.n_draws


def morans_i(values, weights):
    """Moran's I of ``values`` under a nonnegative zero-diagonal weight matrix.

    I = (n / sum w) * sum_ij w_ij (v_i - vbar)(v_j - vbar) / sum_i (v_i - vbar)^2.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = v.shape[0]
    if v.ndim != 1 or n < 2 or not np.all(np.isfinite(v)):
        raise ValidationError("values must be >= 2 finite reals")
    if w.shape != (n, n) or not np.all(np.isfinite(w)):
        raise ValidationError(f"weights must be finite with shape ({n}, {n})")
    if np.any(w < 0.0) or np.any(np.diag(w) != 0.0):
        raise ValidationError("weights must be nonnegative with a zero diagonal")
    s0 = w.sum()
    if s0 == 0.0:
        raise UndefinedStatisticError("total spatial weight is zero")
    d = v - v.mean()
    ss = d @ d
    if ss == 0.0:
        raise UndefinedStatisticError("values have zero variance")
    return float((n / s0) * (d @ w @ d) / ss)


def default_bins(coords, n_bins=DEFAULT_N_BINS):
    """Equal-width bin edges from 0 to half the maximum pairwise distance."""
    pts = np.asarray(coords, dtype=float)
    if isinstance(n_bins, bool) or not isinstance(n_bins, numbers.Integral) or n_bins < 2:
        raise ValidationError("n_bins must be an integer >= 2")
    dmax = float(pdist(pts).max()) if pts.shape[0] > 1 else 0.0
    if dmax <= 0.0:
        raise ValidationError("all points coincide; no distance scale for bins")
    return np.linspace(0.0, 0.5 * dmax, int(n_bins) + 1)


def correlogram(values, coords, bins=None, n_perm=DEFAULT_N_PERM, seed=0):
    """Moran's I per distance bin, with a permutation null envelope.

    Bin k uses binary weights w_ij = 1 iff the pair distance falls in
    bin k. The envelope holds the 2.5% and 97.5% quantiles of each
    bin's I over ``n_perm`` random relabelings of the values; the same
    relabelings serve every bin. Deterministic given ``seed``. Bins
    with no pairs come back as NaN rather than an error.
    """
    v = np.asarray(values, dtype=float)
    pts = np.asarray(coords, dtype=float)
    n = v.shape[0]
    if v.ndim != 1 or not np.all(np.isfinite(v)):
        raise ValidationError("values must be 1-D and finite")
    if pts.ndim != 2 or pts.shape != (n, 2):
        raise ValidationError(f"coords must have shape ({n}, 2)")
    if n < 2:
        raise ValidationError("need at least 2 sites")
    if isinstance(n_perm, bool) or not isinstance(n_perm, numbers.Integral) or n_perm < 1:
        raise ValidationError("n_perm must be an integer >= 1")
    edges = default_bins(pts) if bins is None else np.asarray(bins, dtype=float)
    if edges.ndim != 1 or edges.shape[0] < 3 or not np.all(np.diff(edges) > 0.0):
        raise ValidationError("bins must be >= 3 strictly increasing edges")
    d = v - v.mean()
    ss = d @ d
    if ss == 0.0:
        raise UndefinedStatisticError("values have zero variance")

    dist = squareform(pdist(pts))
    rng = np.random.default_rng(seed)
    perms = np.stack([v[rng.permutation(n)] for _ in range(int(n_perm))])
    perms -= v.mean()

    k = edges.shape[0] - 1
    i_obs = np.full(k, np.nan)
    lo = np.full(k, np.nan)
    hi = np.full(k, np.nan)
    pairs = np.zeros(k, dtype=np.int64)
    for b in range(k):
        in_bin = (dist >= edges[b]) & (
            (dist <= edges[b + 1]) if b == k - 1 else (dist < edges[b + 1])
        )
        np.fill_diagonal(in_bin, False)
        s0 = float(in_bin.sum())
        if s0 == 0.0:
            continue
        w = in_bin.astype(float)
        pairs[b] = int(s0) // 2
        i_obs[b] = (n / s0) * (d @ w @ d) / ss
        # same centering and denominator apply to every relabeling
        num = ((perms @ w) * perms).sum(axis=1)
        i_perm = (n / s0) * num / ss
        lo[b], hi[b] = np.quantile(i_perm, ENVELOPE_QUANTILES)
    return Correlogram(
        bin_edges=edges, i_values=i_obs, env_lo=lo, env_hi=hi, pair_counts=pairs
    )
