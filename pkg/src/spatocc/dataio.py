"""File formats: dataset CSVs, run configs, fit artifacts, result tables.

Everything written here is byte-deterministic given its inputs: floats
are serialized with shortest round-trip repr, JSON keys are sorted, and
arrays go to plain .npy files. Coordinates and values stay in input
units; the learners' internal standardization never leaks into files.
"""

from __future__ import annotations

import csv
import json
import numbers
import os
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DataFormatError, ValidationError
from .learners import DEFAULT_HYPERPARAMS, FittedSurface, LearnerSpec
from .model import DetectionHistory, OccupancyDataset, Site, TrainHoldoutSplit
from .sampler import McmcConfig, PosteriorSamples, posterior_psi_draws
from .scoring import (
    DEFAULT_N_BINS,
    DEFAULT_N_PERM,
    RESIDUAL_DEFINITION,
    Correlogram,
    ScoreReport,
)

SITES_HEADER = ("site_id", "x", "y")
DETECTIONS_HEADER = ("site_id", "visit", "y")
RASTER_HEADER = ("x", "y", "psi_mean", "psi_lo", "psi_hi")
CORRELOGRAM_HEADER = ("bin_lo", "bin_hi", "I", "env_lo", "env_hi", "pairs")
SUMMARY_HEADER = ("parameter", "mean", "sd", "q2.5", "q97.5")


def _fmt(v):
    """Shortest decimal that round-trips to the same float64."""
    return repr(float(v))


def _parse_float(text, what, row):
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"{what} is not a number: {text!r}", row=row) from None
    if not np.isfinite(v):
        raise DataFormatError(f"{what} must be finite, got {text!r}", row=row)
    return v


def _read_rows(path, expected_prefix):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path} is empty", row=1) from None
        header = tuple(h.strip() for h in header)
        k = len(expected_prefix)
        if header[:k] != expected_prefix:
            raise DataFormatError(
                f"{path} header must start with {','.join(expected_prefix)}", row=1
            )
        rows = list(reader)
    return header, rows


def load_dataset(sites_path, detections_path, split_path=None):
    """Assemble a dataset from the two CSVs (and an optional split JSON).

    sites CSV: ``site_id,x,y[,cov...]``; detections CSV:
    ``site_id,visit,y`` with one row per visit, ordered per site by the
    visit index. Sites without any visit row are rejected. Row numbers
    in errors are 1-based and count the header.
    """
    header, rows = _read_rows(sites_path, SITES_HEADER)
    cov_names = tuple(header[3:])
    sites = []
    cov_rows = []
    seen = {}
    for k, row in enumerate(rows):
        rno = k + 2
        if len(row) != 3 + len(cov_names):
            raise DataFormatError(
                f"expected {3 + len(cov_names)} fields, got {len(row)}", row=rno
            )
        sid = row[0].strip()
        if not sid:
            raise DataFormatError("empty site_id", row=rno)
        if sid in seen:
            raise DataFormatError(f"duplicate site_id {sid!r}", row=rno)
        seen[sid] = len(sites)
        x = _parse_float(row[1], "x", rno)
        y = _parse_float(row[2], "y", rno)
        sites.append(Site(id=sid, coords=(x, y)))
        cov_rows.append(
            [_parse_float(row[3 + j], cov_names[j], rno) for j in range(len(cov_names))]
        )

    _, det_rows = _read_rows(detections_path, DETECTIONS_HEADER)
    visits = {sid: [] for sid in seen}
    keys = set()
    for k, row in enumerate(det_rows):
        rno = k + 2
        if len(row) != 3:
            raise DataFormatError(f"expected 3 fields, got {len(row)}", row=rno)
        sid = row[0].strip()
        if sid not in seen:
            raise DataFormatError(f"unknown site_id {sid!r}", row=rno)
        try:
            visit = int(row[1])
        except ValueError:
            raise DataFormatError(
                f"visit index is not an integer: {row[1]!r}", row=rno
            ) from None
        if (sid, visit) in keys:
            raise DataFormatError(
                f"duplicate visit {visit} for site {sid!r}", row=rno
            )
        keys.add((sid, visit))
        if row[2].strip() not in ("0", "1"):
            raise DataFormatError(
                f"y must be 0 or 1, got {row[2]!r}", row=rno
            )
        visits[sid].append((visit, int(row[2])))

    hists = []
    for s in sites:
        vv = visits[s.id]
        if not vv:
            raise DataFormatError(f"site {s.id!r} has no detection rows")
        vv.sort(key=lambda t: t[0])
        hists.append(DetectionHistory(site_id=s.id, visits=tuple(y for _, y in vv)))

    split = None
    if split_path is not None:
        with open(split_path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict) or set(raw) != {"train", "holdout"}:
            raise DataFormatError(f"{split_path} must hold train and holdout id lists")
        split = TrainHoldoutSplit(train=tuple(raw["train"]),
                                  holdout=tuple(raw["holdout"]))
    cov = np.array(cov_rows, dtype=float) if cov_names else None
    return OccupancyDataset(sites=tuple(sites), histories=tuple(hists),
                            covariates=cov, split=split)


def write_dataset(data, sites_path, detections_path, split_path=None):
    """Write the CSV pair (and split JSON when present); loads back equal."""
    if not isinstance(data, OccupancyDataset):
        raise ValidationError("data must be an OccupancyDataset")
    q = data.n_covariates
    with open(sites_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(SITES_HEADER) + [f"cov{j + 1}" for j in range(q)])
        for i, s in enumerate(data.sites):
            row = [str(s.id), _fmt(s.coords[0]), _fmt(s.coords[1])]
            if q:
                row += [_fmt(v) for v in data.covariates[i]]
            w.writerow(row)
    with open(detections_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETECTIONS_HEADER)
        for h in data.histories:
            for j, y in enumerate(h.visits):
                w.writerow([str(h.site_id), str(j + 1), str(y)])
    if split_path is not None:
        if data.split is None:
            raise ValidationError("dataset has no split to write")
        dump_json(split_path, {"train": list(data.split.train),
                                "holdout": list(data.split.holdout)})


def apply_split(data, holdout_ids=None, holdout_fraction=None, seed=0):
    """Return a copy of the dataset carrying a train/holdout split.

    Either an explicit holdout id list or a fraction drawn without
    replacement under the seed.
    """
    if (holdout_ids is None) == (holdout_fraction is None):
        raise ValidationError("pass exactly one of holdout_ids, holdout_fraction")
    ids = [s.id for s in data.sites]
    if holdout_ids is not None:
        hold = list(holdout_ids)
        unknown = set(hold) - set(ids)
        if unknown:
            raise ValidationError(f"holdout ids not in dataset: {sorted(unknown)[:5]}")
        hold_set = set(hold)
        train = tuple(i for i in ids if i not in hold_set)
    else:
        frac = float(holdout_fraction)
        if not 0.0 < frac < 1.0:
            raise ValidationError("holdout_fraction must be in (0, 1)")
        n_hold = int(round(frac * len(ids)))
        if n_hold == 0 or n_hold == len(ids):
            raise ValidationError("holdout_fraction leaves an empty split")
        rng = np.random.default_rng(int(seed))
        pick = rng.choice(len(ids), size=n_hold, replace=False)
        hold = [ids[int(k)] for k in sorted(pick)]
        hold_set = set(hold)
        train = tuple(i for i in ids if i not in hold_set)
    split = TrainHoldoutSplit(train=train, holdout=tuple(hold))
    return OccupancyDataset(sites=data.sites, histories=data.histories,
                            covariates=data.covariates, split=split)


@dataclass(frozen=True)
class RunConfig:
    """One fit run: dataset paths, learner, chain settings, scoring, output.

    Mirrors the JSON schema accepted by load_run_config; paths are
    resolved relative to the config file's directory.
    """

    sites_path: str
    detections_path: str
    learner: LearnerSpec
    mcmc: McmcConfig
    out_dir: str
    split_path: Optional[str] = None
    holdout_ids: Optional[Tuple] = None
    holdout_fraction: Optional[float] = None
    split_seed: int = 0
    n_bins: int = DEFAULT_N_BINS
    n_perm: int = DEFAULT_N_PERM
    env_seed: int = 0

    def __post_init__(self):
        for name in ("n_bins", "n_perm"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, numbers.Integral) or v < 1:
                raise ValidationError(f"{name} must be an integer >= 1")
        if self.n_bins < 2:
            raise ValidationError("n_bins must be >= 2")
        given = [
            s for s in (self.split_path, self.holdout_ids, self.holdout_fraction)
            if s is not None
        ]
        if len(given) > 1:
            raise ValidationError("give at most one split specification")

    def load_data(self):
        data = load_dataset(self.sites_path, self.detections_path, self.split_path)
        if self.holdout_ids is not None:
            data = apply_split(data, holdout_ids=self.holdout_ids)
        elif self.holdout_fraction is not None:
            data = apply_split(data, holdout_fraction=self.holdout_fraction,
                               seed=self.split_seed)
        return data

    def echo(self):
        """JSON-ready image of this config, embedded in run outputs."""
        mc = self.mcmc
        return {
            "sites": self.sites_path,
            "detections": self.detections_path,
            "learner": {"kind": self.learner.kind,
                        "hyperparams": dict(sorted(self.learner.resolved().items()))},
            "mcmc": {
                "n_iter": mc.n_iter, "burn_in": mc.burn_in, "thin": mc.thin,
                "seed": mc.seed, "refit_every": mc.refit_every,
                "beta_mean": (list(mc.beta_mean)
                              if isinstance(mc.beta_mean, tuple) else mc.beta_mean),
                "beta_var": mc.beta_var,
                "p_alpha": mc.p_alpha, "p_beta": mc.p_beta,
            },
            "scoring": {"n_bins": self.n_bins, "n_perm": self.n_perm,
                        "env_seed": self.env_seed},
            "split": {
                "file": self.split_path,
                "holdout_ids": (list(self.holdout_ids)
                                if self.holdout_ids is not None else None),
                "holdout_fraction": self.holdout_fraction,
                "seed": self.split_seed,
            },
            "out_dir": self.out_dir,
        }


def load_run_config(path):
    """Parse and validate a run-config JSON file."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise DataFormatError(f"{path} must hold a JSON object")
    known = {"sites", "detections", "learner", "mcmc", "scoring", "split", "out_dir"}
    unknown = set(raw) - known
    if unknown:
        raise DataFormatError(f"unknown config keys {sorted(unknown)!r}")
    for key in ("sites", "detections", "out_dir"):
        if key not in raw:
            raise DataFormatError(f"config is missing {key!r}")
    base = os.path.dirname(os.path.abspath(path))

    def _resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    sites = _resolve(str(raw["sites"]))
    dets = _resolve(str(raw["detections"]))
    for p in (sites, dets):
        if not os.path.exists(p):
            raise DataFormatError(f"referenced path does not exist: {p}")

    lr = raw.get("learner", {"kind": "none"})
    if not isinstance(lr, dict) or "kind" not in lr:
        raise DataFormatError("learner must be an object with a kind")
    extra = set(lr) - {"kind", "hyperparams"}
    if extra:
        raise DataFormatError(f"unknown learner keys {sorted(extra)!r}")
    try:
        learner = LearnerSpec(str(lr["kind"]), dict(lr.get("hyperparams", {})))
    except ValidationError as exc:
        raise DataFormatError(f"bad learner config: {exc}") from exc

    mc = raw.get("mcmc", {})
    if not isinstance(mc, dict):
        raise DataFormatError("mcmc must be an object")
    try:
        mcmc = McmcConfig(**mc)
    except (TypeError, ValidationError) as exc:
        raise DataFormatError(f"bad mcmc config: {exc}") from exc

    sc = raw.get("scoring", {})
    if not isinstance(sc, dict) or set(sc) - {"n_bins", "n_perm", "env_seed"}:
        raise DataFormatError("scoring accepts n_bins, n_perm, env_seed")

    sp = raw.get("split")
    split_path = holdout_ids = holdout_fraction = None
    split_seed = 0
    if sp is not None:
        if not isinstance(sp, dict) or set(sp) - {
            "file", "holdout_ids", "holdout_fraction", "seed"
        }:
            raise DataFormatError(
                "split accepts file, holdout_ids, holdout_fraction, seed"
            )
        if sp.get("file") is not None:
            split_path = _resolve(str(sp["file"]))
            if not os.path.exists(split_path):
                raise DataFormatError(f"referenced path does not exist: {split_path}")
        if sp.get("holdout_ids") is not None:
            holdout_ids = tuple(str(i) for i in sp["holdout_ids"])
        if sp.get("holdout_fraction") is not None:
            holdout_fraction = float(sp["holdout_fraction"])
        split_seed = int(sp.get("seed", 0))

    try:
        return RunConfig(
            sites_path=sites,
            detections_path=dets,
            learner=learner,
            mcmc=mcmc,
            out_dir=_resolve(str(raw["out_dir"])),
            split_path=split_path,
            holdout_ids=holdout_ids,
            holdout_fraction=holdout_fraction,
            split_seed=split_seed,
            **{k: int(v) for k, v in sc.items()},
        )
    except ValidationError as exc:
        raise DataFormatError(f"bad config: {exc}") from exc


def dump_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_samples(samples, out_dir):
    """Persist a PosteriorSamples directory: .npy arrays plus JSON.

    Ragged per-draw surface arrays are concatenated flat with recorded
    shapes; scalar surface parameters go into the JSON. Byte content is
    a pure function of the draws.
    """
    if not isinstance(samples, PosteriorSamples):
        raise ValidationError("samples must be a PosteriorSamples")
    os.makedirs(out_dir, exist_ok=True)
    np.save(os.path.join(out_dir, "beta.npy"), samples.beta)
    np.save(os.path.join(out_dir, "p.npy"), samples.p)
    np.save(os.path.join(out_dir, "psi_train.npy"), samples.psi_train)

    kinds = {s.kind for s in samples.surfaces}
    bboxes = {s.bbox for s in samples.surfaces}
    if len(kinds) > 1 or len(bboxes) > 1:
        raise ValidationError("draws mix surface kinds or bounding boxes")
    kind = kinds.pop() if kinds else str(samples.meta.get("learner", "none"))
    bbox = list(bboxes.pop()) if bboxes else None

    array_params = {}
    scalar_params = {}
    if samples.surfaces:
        for key in sorted(samples.surfaces[0].params):
            vals = [s.params[key] for s in samples.surfaces]
            if isinstance(vals[0], np.ndarray):
                array_params[key] = {
                    "dtype": str(vals[0].dtype),
                    "shapes": [list(v.shape) for v in vals],
                }
                flat = np.concatenate([v.ravel() for v in vals]) if vals else (
                    np.empty(0)
                )
                np.save(os.path.join(out_dir, f"surface_{key}.npy"), flat)
            elif isinstance(vals[0], (bool, np.bool_)):
                raise ValidationError(f"surface param {key!r} has unsupported type")
            elif isinstance(vals[0], (int, np.integer)):
                scalar_params[key] = [int(v) for v in vals]
            else:
                scalar_params[key] = [float(v) for v in vals]
    dump_json(
        os.path.join(out_dir, "surfaces.json"),
        {
            "kind": kind,
            "bbox": bbox,
            "n_draws": samples.n_draws,
            "array_params": array_params,
            "scalar_params": scalar_params,
        },
    )
    dump_json(os.path.join(out_dir, "meta.json"), _jsonable(dict(samples.meta)))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, str)) or obj is None:
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    raise ValidationError(f"cannot serialize {type(obj).__name__} to JSON")


def load_samples(fit_dir):
    """Load what save_samples wrote."""
    def _need(name):
        p = os.path.join(fit_dir, name)
        if not os.path.exists(p):
            raise DataFormatError(f"missing fit artifact: {p}")
        return p

    beta = np.load(_need("beta.npy"))
    p = np.load(_need("p.npy"))
    psi = np.load(_need("psi_train.npy"))
    with open(_need("surfaces.json"), encoding="utf-8") as fh:
        sj = json.load(fh)
    with open(_need("meta.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    m = int(sj["n_draws"])
    kind = str(sj["kind"])
    bbox = tuple(sj["bbox"]) if sj["bbox"] is not None else None

    per_draw = [dict() for _ in range(m)]
    for key, info in sj["array_params"].items():
        flat = np.load(_need(f"surface_{key}.npy"))
        dtype = np.dtype(info["dtype"])
        off = 0
        for k, shape in enumerate(info["shapes"]):
            size = int(np.prod(shape)) if shape else 1
            per_draw[k][key] = flat[off:off + size].astype(dtype, copy=False).reshape(
                shape
            )
            off += size
        if off != flat.shape[0]:
            raise DataFormatError(f"surface_{key}.npy does not match its shapes")
    for key, vals in sj["scalar_params"].items():
        if len(vals) != m:
            raise DataFormatError(f"scalar param {key!r} has wrong draw count")
        for k, v in enumerate(vals):
            per_draw[k][key] = v
    surfaces = tuple(
        FittedSurface(kind=kind, bbox=bbox, params=per_draw[k]) for k in range(m)
    )
    return PosteriorSamples(beta=beta, p=p, surfaces=surfaces, psi_train=psi,
                            meta=meta)


def write_raster(path, coords, psi_mean, psi_lo, psi_hi):
    pts = np.asarray(coords, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RASTER_HEADER)
        for k in range(pts.shape[0]):
            w.writerow([
                _fmt(pts[k, 0]), _fmt(pts[k, 1]),
                _fmt(psi_mean[k]), _fmt(psi_lo[k]), _fmt(psi_hi[k]),
            ])


def write_truth_raster(path, surface):
    """x, y, f, psi rows for a synthetic scenario's true surface."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x", "y", "f", "psi"))
        for k in range(surface.coords.shape[0]):
            w.writerow([
                _fmt(surface.coords[k, 0]), _fmt(surface.coords[k, 1]),
                _fmt(surface.f[k]), _fmt(surface.psi[k]),
            ])


def write_score(path, score):
    if not isinstance(score, ScoreReport):
        raise ValidationError("score must be a ScoreReport")
    dump_json(path, {
        "model": score.label,
        "neg2_lppd": score.neg2_lppd,
        "n_draws": score.n_draws,
        "n_holdout": score.n_holdout,
    })


def write_correlogram(path, corr):
    if not isinstance(corr, Correlogram):
        raise ValidationError("corr must be a Correlogram")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CORRELOGRAM_HEADER)
        for b in range(corr.n_bins):
            def cell(v):
                return "" if not np.isfinite(v) else _fmt(v)
            w.writerow([
                _fmt(corr.bin_edges[b]), _fmt(corr.bin_edges[b + 1]),
                cell(corr.i_values[b]), cell(corr.env_lo[b]),
                cell(corr.env_hi[b]), str(int(corr.pair_counts[b])),
            ])


def read_correlogram(path):
    """Parse correlogram.csv back into an equal Correlogram."""
    _, rows = _read_rows(path, CORRELOGRAM_HEADER)
    if not rows:
        raise DataFormatError(f"{path} has no bins")
    edges = []
    ivals, lo, hi, pairs = [], [], [], []
    for k, row in enumerate(rows):
        rno = k + 2
        if len(row) != 6:
            raise DataFormatError(f"expected 6 fields, got {len(row)}", row=rno)
        b_lo = _parse_float(row[0], "bin_lo", rno)
        b_hi = _parse_float(row[1], "bin_hi", rno)
        if not edges:
            edges.append(b_lo)
        elif edges[-1] != b_lo:
            raise DataFormatError("bins are not contiguous", row=rno)
        edges.append(b_hi)
        for text, acc in ((row[2], ivals), (row[3], lo), (row[4], hi)):
            acc.append(np.nan if text == "" else _parse_float(text, "value", rno))
        pairs.append(int(row[5]))
    return Correlogram(bin_edges=np.array(edges), i_values=np.array(ivals),
                       env_lo=np.array(lo), env_hi=np.array(hi),
                       pair_counts=np.array(pairs, dtype=np.int64))


def write_posterior_summary(path, samples):
    """parameter, mean, sd, q2.5, q97.5 rows for each beta and p."""
    cols = [(f"beta_{j}", samples.beta[:, j]) for j in range(samples.beta.shape[1])]
    cols.append(("p", samples.p))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for name, x in cols:
            sd = float(np.std(x, ddof=1)) if x.shape[0] > 1 else 0.0
            qlo, qhi = np.quantile(x, (0.025, 0.975))
            w.writerow([name, _fmt(x.mean()), _fmt(sd), _fmt(qlo), _fmt(qhi)])


def write_outputs(out_dir, samples, score=None, corr=None, raster_coords=None,
                  raster_design=None, config_echo=None, warnings=()):
    """Write a run's result files into out_dir; returns the paths written.

    Always emits posterior_summary.csv and meta.json (config echo,
    residual definition, warnings). score.json, correlogram.csv, and
    psi_raster.csv appear when their inputs are given; a missing score
    is recorded as a warning instead of a file.
    """
    if not isinstance(samples, PosteriorSamples):
        raise ValidationError("samples must be a PosteriorSamples")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    notes = list(warnings)

    path = os.path.join(out_dir, "posterior_summary.csv")
    write_posterior_summary(path, samples)
    written.append(path)

    if score is not None:
        path = os.path.join(out_dir, "score.json")
        write_score(path, score)
        written.append(path)
    else:
        notes.append("score.json omitted: no holdout score was computed")

    if corr is not None:
        path = os.path.join(out_dir, "correlogram.csv")
        write_correlogram(path, corr)
        written.append(path)

    if raster_coords is not None:
        pts = np.asarray(raster_coords, dtype=float)
        draws = posterior_psi_draws(samples, pts, design=raster_design)
        lo, hi = np.quantile(draws, (0.025, 0.975), axis=0)
        path = os.path.join(out_dir, "psi_raster.csv")
        write_raster(path, pts, draws.mean(axis=0), lo, hi)
        written.append(path)

    path = os.path.join(out_dir, "meta.json")
    dump_json(path, {
        "config": _jsonable(config_echo) if config_echo is not None else None,
        # keep the chain's own record when this overwrites a save_samples
        # meta.json in the same directory
        "chain": _jsonable(dict(samples.meta)),
        "residual_definition": RESIDUAL_DEFINITION,
        "warnings": notes,
        "n_draws": samples.n_draws,
        "learner": samples.meta.get("learner"),
    })
    written.append(path)
    return written
