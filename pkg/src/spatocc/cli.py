"""Command-line workflow: simulate, fit, predict, score, correlogram, compare.

Every subcommand is deterministic given its flags, so rerunning a
command overwrites its outputs with identical bytes. compare fits
several learners on one shared dataset and split, deriving each chain's
seed as base seed + the learner's position in the canonical kind order.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import dataio, learners, scoring, synth
from .errors import SpatoccError
from .learners import KINDS, LearnerSpec
from .sampler import McmcConfig, posterior_psi_draws, run_chain

LEARNER_ALIASES = {"gp": "lowrank_gp"}
LEAGUE_HEADER = ("learner", "neg2_lppd", "status")


def _parse_grid(text):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("grid must look like 30x30")
    try:
        nx, ny = int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError("grid must look like 30x30") from None
    if nx < 1 or ny < 1:
        raise argparse.ArgumentTypeError("grid dims must be >= 1")
    return nx, ny


def _parse_bbox(text):
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("bbox must be x0,y0,x1,y1")
    try:
        vals = tuple(float(v) for v in parts)
    except ValueError:
        raise argparse.ArgumentTypeError("bbox must be 4 numbers") from None
    return vals


def _canonical_kind(name):
    kind = LEARNER_ALIASES.get(name.strip(), name.strip())
    if kind not in KINDS:
        raise argparse.ArgumentTypeError(
            f"unknown learner {name!r}; choose from {', '.join(KINDS)} (gp = lowrank_gp)"
        )
    return kind


def _grid_points(bbox, nx, ny):
    x0, y0, x1, y1 = bbox
    xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
    ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _cmd_simulate(args):
    surface = synth.make_surface(args.scenario, grid=args.grid, seed=args.seed,
                                 p=args.p)
    data = synth.sample_design(surface, n_train=args.n_train,
                               n_holdout=args.n_holdout, n_visits=args.visits,
                               seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    dataio.write_dataset(
        data,
        os.path.join(args.out, "sites.csv"),
        os.path.join(args.out, "detections.csv"),
        os.path.join(args.out, "split.json"),
    )
    dataio.write_truth_raster(os.path.join(args.out, "truth_raster.csv"), surface)
    dataio.dump_json(os.path.join(args.out, "meta.json"), {
        "command": "simulate",
        "scenario": args.scenario,
        "grid": list(args.grid),
        "seed": args.seed,
        "n_train": args.n_train,
        "n_holdout": args.n_holdout,
        "visits": args.visits,
        "p": args.p,
    })
    print(f"wrote {data.n_sites} sites over {surface.n_cells} cells to {args.out}")
    return 0


def _cmd_fit(args):
    cfg = dataio.load_run_config(args.config)
    data = cfg.load_data()
    samples = run_chain(data, cfg.learner, cfg.mcmc)
    dataio.save_samples(samples, cfg.out_dir)
    dataio.write_outputs(cfg.out_dir, samples, config_echo=cfg.echo())
    print(f"{cfg.learner.kind}: {samples.n_draws} draws saved to {cfg.out_dir}")
    return 0


def _load_fit(fit_dir):
    samples = dataio.load_samples(fit_dir)
    meta_path = os.path.join(fit_dir, "meta.json")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    return samples, meta


def _fit_dataset(args, meta):
    """Dataset for a fitted run: flag overrides, else the fit's config echo."""
    sites, dets, split = args.sites, args.detections, args.split_file
    if sites is None or dets is None:
        echo = (meta or {}).get("config") or {}
        sites = sites or echo.get("sites")
        dets = dets or echo.get("detections")
        if split is None:
            split = (echo.get("split") or {}).get("file")
    if sites is None or dets is None:
        raise SpatoccError(
            "dataset paths are not recorded in the fit; pass --sites/--detections"
        )
    return dataio.load_dataset(sites, dets, split)


def _cmd_predict(args):
    samples, meta = _load_fit(args.fit)
    if args.bbox is not None:
        bbox = args.bbox
    else:
        with open(os.path.join(args.fit, "surfaces.json"), encoding="utf-8") as fh:
            bbox = json.load(fh)["bbox"]
        if bbox is None:
            raise SpatoccError("fit has no bounding box; pass --bbox")
    pts = _grid_points(bbox, *args.grid)
    draws = posterior_psi_draws(samples, pts)
    lo, hi = np.quantile(draws, (0.025, 0.975), axis=0)
    out = args.out or os.path.join(args.fit, "psi_raster.csv")
    dataio.write_raster(out, pts, draws.mean(axis=0), lo, hi)
    print(f"wrote {pts.shape[0]}-point raster to {out}")
    return 0


def _cmd_score(args):
    samples, meta = _load_fit(args.fit)
    data = _fit_dataset(args, meta)
    report = scoring.neg2_lppd(samples, data)
    out = args.out or os.path.join(args.fit, "score.json")
    dataio.write_score(out, report)
    print(f"{report.label}: -2*LPPD = {report.neg2_lppd:.4f} "
          f"over {report.n_holdout} holdout sites ({report.n_draws} draws)")
    return 0


def _cmd_correlogram(args):
    samples, meta = _load_fit(args.fit)
    data = _fit_dataset(args, meta)
    resid = scoring.occupancy_residuals(samples, data)
    idx = data.train_indices() if data.split is not None else np.arange(data.n_sites)
    coords = data.coords()[idx]
    bins = scoring.default_bins(coords, n_bins=args.n_bins)
    corr = scoring.correlogram(resid, coords, bins=bins, n_perm=args.n_perm,
                               seed=args.env_seed)
    out = args.out or os.path.join(args.fit, "correlogram.csv")
    dataio.write_correlogram(out, corr)
    flagged = np.flatnonzero(
        np.isfinite(corr.i_values)
        & ((corr.i_values > corr.env_hi) | (corr.i_values < corr.env_lo))
    )
    print(f"wrote {corr.n_bins}-bin correlogram to {out}; "
          f"{flagged.size} bin(s) outside the envelope")
    return 0


def _cmd_compare(args):
    data = dataio.load_dataset(
        os.path.join(args.data, "sites.csv"),
        os.path.join(args.data, "detections.csv"),
        os.path.join(args.data, "split.json"),
    )
    if data.split is None:
        raise SpatoccError("compare needs a dataset with a train/holdout split")
    kinds = [_canonical_kind(k) for k in args.learners.split(",") if k.strip()]
    if not kinds:
        raise SpatoccError("no learners requested")
    if len(set(kinds)) != len(kinds):
        raise SpatoccError("learners listed twice")
    os.makedirs(args.out, exist_ok=True)
    tr = data.train_indices()
    coords_tr = data.coords()[tr]
    rows = []
    failures = []
    for kind in kinds:
        cfg = McmcConfig(n_iter=args.n_iter, burn_in=args.burn_in, thin=args.thin,
                         seed=args.seed + KINDS.index(kind),
                         refit_every=args.refit_every)
        sub = os.path.join(args.out, kind)
        try:
            samples = run_chain(data, LearnerSpec(kind), cfg)
            report = scoring.neg2_lppd(samples, data)
            resid = scoring.occupancy_residuals(samples, data)
            corr = scoring.correlogram(resid, coords_tr,
                                       bins=scoring.default_bins(coords_tr),
                                       n_perm=args.n_perm, seed=args.env_seed)
            dataio.save_samples(samples, sub)
            dataio.write_outputs(sub, samples, score=report, corr=corr)
            rows.append((kind, report.neg2_lppd))
        except SpatoccError as exc:
            print(f"{kind} failed: {exc}", file=sys.stderr)
            failures.append(kind)
    rows.sort(key=lambda r: r[1])
    league = os.path.join(args.out, "league.csv")
    with open(league, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(LEAGUE_HEADER) + "\n")
        for kind, score in rows:
            fh.write(f"{kind},{dataio._fmt(score)},ok\n")
        for kind in failures:
            fh.write(f"{kind},,failed\n")
    for kind, score in rows:
        print(f"{kind}: {score:.4f}")
    for kind in failures:
        print(f"{kind}: failed")
    print(f"league table written to {league}")
    return 1 if failures else 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="spatocc",
        description="Spatial occupancy models with embedded learners",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic scenario dataset")
    sim.add_argument("--scenario", type=int, required=True, choices=synth.SCENARIOS)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)
    sim.add_argument("--grid", type=_parse_grid, default=synth.DEFAULT_GRID)
    sim.add_argument("--n-train", type=int, default=200)
    sim.add_argument("--n-holdout", type=int, default=200)
    sim.add_argument("--visits", type=int, default=3)
    sim.add_argument("--p", type=float, default=synth.DEFAULT_P)
    sim.set_defaults(func=_cmd_simulate)

    fit = sub.add_parser("fit", help="run one MCMC fit from a config file")
    fit.add_argument("--config", required=True)
    fit.set_defaults(func=_cmd_fit)

    pred = sub.add_parser("predict", help="posterior psi raster from a fit")
    pred.add_argument("--fit", required=True)
    pred.add_argument("--grid", type=_parse_grid, default=synth.DEFAULT_GRID)
    pred.add_argument("--bbox", type=_parse_bbox, default=None,
                      help="x0,y0,x1,y1 (default: the training bounding box)")
    pred.add_argument("--out", default=None)
    pred.set_defaults(func=_cmd_predict)

    sc = sub.add_parser("score", help="holdout -2*LPPD for a fit")
    sc.add_argument("--fit", required=True)
    sc.add_argument("--sites", default=None)
    sc.add_argument("--detections", default=None)
    sc.add_argument("--split-file", default=None)
    sc.add_argument("--out", default=None)
    sc.set_defaults(func=_cmd_score)

    co = sub.add_parser("correlogram",
                        help="Moran's I correlogram of a fit's residuals")
    co.add_argument("--fit", required=True)
    co.add_argument("--sites", default=None)
    co.add_argument("--detections", default=None)
    co.add_argument("--split-file", default=None)
    co.add_argument("--n-bins", type=int, default=scoring.DEFAULT_N_BINS)
    co.add_argument("--n-perm", type=int, default=scoring.DEFAULT_N_PERM)
    co.add_argument("--env-seed", type=int, default=0)
    co.add_argument("--out", default=None)
    co.set_defaults(func=_cmd_correlogram)

    cp = sub.add_parser("compare", help="fit several learners and rank them")
    cp.add_argument("--data", required=True,
                    help="directory with sites.csv, detections.csv, split.json")
    cp.add_argument("--learners", default="tree,svr,gp,gmrf,none")
    cp.add_argument("--seed", type=int, default=0)
    cp.add_argument("--out", required=True)
    cp.add_argument("--n-iter", type=int, default=5000)
    cp.add_argument("--burn-in", type=int, default=1000)
    cp.add_argument("--thin", type=int, default=4)
    cp.add_argument("--refit-every", type=int, default=1)
    cp.add_argument("--n-perm", type=int, default=scoring.DEFAULT_N_PERM)
    cp.add_argument("--env-seed", type=int, default=0)
    cp.set_defaults(func=_cmd_compare)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpatoccError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
