"""File-format tests: CSV/JSON round trips, validation rows, byte stability."""

import json
import os

import numpy as np
import pytest

from spatocc import dataio
from spatocc.dataio import (
    apply_split,
    dump_json,
    load_dataset,
    load_run_config,
    load_samples,
    read_correlogram,
    save_samples,
    write_correlogram,
    write_dataset,
    write_outputs,
    write_posterior_summary,
    write_raster,
    write_score,
    write_truth_raster,
)
from spatocc.errors import DataFormatError, ValidationError
from spatocc.learners import KINDS, LearnerSpec
from spatocc.sampler import McmcConfig, run_chain
from spatocc.scoring import ScoreReport, correlogram, neg2_lppd
from spatocc.synth import make_surface, sample_design

from conftest import build_dataset


def write_csv(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return str(path)


def tiny_csvs(tmp_path, sites=None, dets=None):
    sites_text = sites or "site_id,x,y\na,0.1,0.2\nb,0.5,0.9\n"
    dets_text = dets or "site_id,visit,y\na,1,0\na,2,1\nb,1,0\n"
    return (
        write_csv(tmp_path / "sites.csv", sites_text),
        write_csv(tmp_path / "detections.csv", dets_text),
    )


def dir_bytes(root):
    out = {}
    for base, _dirs, files in os.walk(root):
        for f in files:
            p = os.path.join(base, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


class TestLoadDataset:
    def test_basic_assembly(self, tmp_path):
        data = load_dataset(*tiny_csvs(tmp_path))
        assert [s.id for s in data.sites] == ["a", "b"]
        assert data.histories[0].visits == (0, 1)
        assert data.histories[1].visits == (0,)
        assert data.covariates is None

    def test_visit_rows_sorted_by_index(self, tmp_path):
        dets = "site_id,visit,y\na,2,1\na,1,0\nb,1,1\n"
        data = load_dataset(*tiny_csvs(tmp_path, dets=dets))
        assert data.histories[0].visits == (0, 1)

    def test_covariate_columns(self, tmp_path):
        sites = "site_id,x,y,elev,slope\na,0,0,3.5,0.1\nb,1,1,-2.0,0.2\n"
        data = load_dataset(*tiny_csvs(tmp_path, sites=sites))
        np.testing.assert_allclose(data.covariates, [[3.5, 0.1], [-2.0, 0.2]])

    def test_split_file(self, tmp_path):
        s, d = tiny_csvs(tmp_path)
        sp = tmp_path / "split.json"
        dump_json(sp, {"train": ["a"], "holdout": ["b"]})
        data = load_dataset(s, d, str(sp))
        assert data.split.train == ("a",)
        bad = tmp_path / "bad.json"
        dump_json(bad, {"train": ["a", "b"]})
        with pytest.raises(DataFormatError):
            load_dataset(s, d, str(bad))

    @pytest.mark.parametrize(
        "sites,dets,row,fragment",
        [
            ("site_id,x,y\na,0.1\n", None, 2, "fields"),
            ("site_id,x,y\n,0.1,0.2\n", None, 2, "empty site_id"),
            ("site_id,x,y\na,0,0\na,1,1\n", "site_id,visit,y\na,1,0\n", 3, "duplicate"),
            ("site_id,x,y\na,zero,0.2\n", None, 2, "not a number"),
            ("site_id,x,y\na,inf,0.2\n", None, 2, "finite"),
            (None, "site_id,visit,y\nzz,1,0\n", 2, "unknown site_id"),
            (None, "site_id,visit,y\na,one,0\n", 2, "not an integer"),
            (None, "site_id,visit,y\na,1,0\na,1,1\nb,1,0\n", 3, "duplicate visit"),
            (None, "site_id,visit,y\na,1,2\n", 2, "0 or 1"),
        ],
    )
    def test_malformed_inputs_name_the_row(self, tmp_path, sites, dets, row, fragment):
        s, d = tiny_csvs(tmp_path, sites=sites, dets=dets)
        with pytest.raises(DataFormatError, match=fragment) as err:
            load_dataset(s, d)
        assert err.value.row == row

    def test_site_without_visits_rejected(self, tmp_path):
        s, d = tiny_csvs(tmp_path, dets="site_id,visit,y\na,1,0\n")
        with pytest.raises(DataFormatError, match="no detection rows"):
            load_dataset(s, d)

    def test_wrong_header_rejected(self, tmp_path):
        s, d = tiny_csvs(tmp_path, sites="id,x,y\na,0,0\n")
        with pytest.raises(DataFormatError, match="header"):
            load_dataset(s, d)

    def test_empty_file_rejected(self, tmp_path):
        s = write_csv(tmp_path / "sites.csv", "")
        d = write_csv(tmp_path / "detections.csv", "site_id,visit,y\n")
        with pytest.raises(DataFormatError, match="empty"):
            load_dataset(s, d)


class TestWriteDataset:
    def test_round_trip_identity(self, tmp_path):
        cov = np.random.default_rng(2).normal(size=(25, 2))
        data = build_dataset(n=25, seed=2, covariates=cov, split_at=18)
        s = tmp_path / "sites.csv"
        d = tmp_path / "dets.csv"
        sp = tmp_path / "split.json"
        write_dataset(data, s, d, sp)
        back = load_dataset(str(s), str(d), str(sp))
        assert [x.id for x in back.sites] == [x.id for x in data.sites]
        np.testing.assert_array_equal(back.coords(), data.coords())
        np.testing.assert_array_equal(back.covariates, data.covariates)
        assert all(
            a.visits == b.visits for a, b in zip(back.histories, data.histories)
        )
        assert back.split == data.split

    def test_write_is_byte_stable(self, tmp_path):
        data = build_dataset(n=10, seed=3)
        for d in ("one", "two"):
            os.makedirs(tmp_path / d)
            write_dataset(data, tmp_path / d / "s.csv", tmp_path / d / "d.csv")
        assert dir_bytes(tmp_path / "one") == dir_bytes(tmp_path / "two")

    def test_split_requested_but_absent(self, tmp_path):
        data = build_dataset(n=5, seed=0)
        with pytest.raises(ValidationError):
            write_dataset(data, tmp_path / "s.csv", tmp_path / "d.csv",
                          tmp_path / "sp.json")


class TestApplySplit:
    def test_explicit_ids(self):
        data = build_dataset(n=10, seed=1)
        ids = [s.id for s in data.sites]
        out = apply_split(data, holdout_ids=ids[:3])
        assert set(out.split.holdout) == set(ids[:3])
        assert set(out.split.train) == set(ids[3:])

    def test_fraction_deterministic(self):
        data = build_dataset(n=20, seed=4)
        a = apply_split(data, holdout_fraction=0.25, seed=7)
        b = apply_split(data, holdout_fraction=0.25, seed=7)
        assert a.split == b.split
        assert len(a.split.holdout) == 5
        c = apply_split(data, holdout_fraction=0.25, seed=8)
        assert c.split != a.split

    def test_bad_requests(self):
        data = build_dataset(n=10, seed=1)
        with pytest.raises(ValidationError):
            apply_split(data)
        with pytest.raises(ValidationError):
            apply_split(data, holdout_ids=["s0"], holdout_fraction=0.5)
        with pytest.raises(ValidationError):
            apply_split(data, holdout_ids=["nope"])
        with pytest.raises(ValidationError):
            apply_split(data, holdout_fraction=1.5)
        with pytest.raises(ValidationError):
            apply_split(data, holdout_fraction=0.001)


class TestRunConfig:
    def _config_files(self, tmp_path, **overrides):
        data = build_dataset(n=12, seed=5)
        write_dataset(data, tmp_path / "sites.csv", tmp_path / "dets.csv")
        raw = {
            "sites": "sites.csv",
            "detections": "dets.csv",
            "learner": {"kind": "tree", "hyperparams": {"max_depth": 3}},
            "mcmc": {"n_iter": 50, "burn_in": 10, "thin": 2, "seed": 1},
            "out_dir": "out",
            **overrides,
        }
        path = tmp_path / "run.json"
        dump_json(path, raw)
        return str(path)

    def test_relative_paths_resolve_against_config(self, tmp_path):
        cfg = load_run_config(self._config_files(tmp_path))
        assert cfg.sites_path == str(tmp_path / "sites.csv")
        assert cfg.out_dir == str(tmp_path / "out")
        assert cfg.learner.kind == "tree"
        assert cfg.mcmc.n_iter == 50
        data = cfg.load_data()
        assert data.n_sites == 12

    def test_echo_is_json_ready(self, tmp_path):
        cfg = load_run_config(self._config_files(tmp_path))
        echo = cfg.echo()
        json.dumps(echo)  # must not raise
        assert echo["learner"]["kind"] == "tree"
        assert echo["mcmc"]["seed"] == 1
        assert echo["scoring"]["n_perm"] == 199

    def test_holdout_fraction_split(self, tmp_path):
        cfg = load_run_config(
            self._config_files(tmp_path, split={"holdout_fraction": 0.25, "seed": 3})
        )
        data = cfg.load_data()
        assert len(data.split.holdout) == 3

    @pytest.mark.parametrize(
        "overrides,fragment",
        [
            ({"typo": 1}, "unknown config keys"),
            ({"sites": "missing.csv"}, "does not exist"),
            ({"learner": {"kind": "forest"}}, "bad learner"),
            ({"learner": {"kind": "tree", "extra": 1}}, "unknown learner keys"),
            ({"mcmc": {"n_iter": 0}}, "bad mcmc"),
            ({"mcmc": {"bogus": 2}}, "bad mcmc"),
            ({"scoring": {"bins": 5}}, "scoring accepts"),
            ({"split": {"file": "nope.json"}}, "does not exist"),
            (
                {"split": {"holdout_ids": ["a"], "holdout_fraction": 0.5}},
                "at most one split",
            ),
        ],
    )
    def test_invalid_configs(self, tmp_path, overrides, fragment):
        with pytest.raises(DataFormatError, match=fragment):
            load_run_config(self._config_files(tmp_path, **overrides))

    def test_missing_required_key(self, tmp_path):
        path = tmp_path / "run.json"
        dump_json(path, {"sites": "s.csv"})
        with pytest.raises(DataFormatError, match="missing"):
            load_run_config(str(path))


class TestSampleStore:
    @pytest.mark.parametrize("kind", KINDS)
    def test_round_trip_every_learner(self, tmp_path, kind):
        data = build_dataset(n=25, seed=6)
        s = run_chain(data, LearnerSpec(kind),
                      McmcConfig(n_iter=24, burn_in=8, thin=2, seed=3))
        save_samples(s, tmp_path / kind)
        back = load_samples(tmp_path / kind)
        np.testing.assert_array_equal(back.beta, s.beta)
        np.testing.assert_array_equal(back.p, s.p)
        np.testing.assert_array_equal(back.psi_train, s.psi_train)
        assert len(back.surfaces) == s.n_draws
        for sa, sb in zip(back.surfaces, s.surfaces):
            assert sa.kind == sb.kind
            assert sa.bbox == sb.bbox
            assert set(sa.params) == set(sb.params)
            for k in sa.params:
                np.testing.assert_array_equal(
                    np.asarray(sa.params[k]), np.asarray(sb.params[k])
                )
        assert back.meta["learner"] == kind

    def test_double_save_byte_identical(self, tmp_path):
        data = build_dataset(n=20, seed=7)
        s = run_chain(data, LearnerSpec("tree"),
                      McmcConfig(n_iter=20, burn_in=5, thin=3, seed=2))
        save_samples(s, tmp_path / "a")
        save_samples(s, tmp_path / "b")
        assert dir_bytes(tmp_path / "a") == dir_bytes(tmp_path / "b")

    def test_missing_artifact_named(self, tmp_path):
        data = build_dataset(n=15, seed=8)
        s = run_chain(data, LearnerSpec("none"),
                      McmcConfig(n_iter=10, burn_in=2, thin=1, seed=0))
        save_samples(s, tmp_path / "fit")
        os.remove(tmp_path / "fit" / "p.npy")
        with pytest.raises(DataFormatError, match="p.npy"):
            load_samples(tmp_path / "fit")


class TestResultFiles:
    def test_raster_format_and_parse(self, tmp_path):
        path = tmp_path / "r.csv"
        write_raster(path, [[0.25, 0.75]], [0.5], [0.4], [0.6])
        lines = path.read_text().splitlines()
        assert lines[0] == "x,y,psi_mean,psi_lo,psi_hi"
        assert lines[1] == "0.25,0.75,0.5,0.4,0.6"
        assert len(lines) == 2

    def test_truth_raster(self, tmp_path):
        surf = make_surface(1, grid=(3, 3))
        path = tmp_path / "truth.csv"
        write_truth_raster(path, surf)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,y,f,psi"
        assert len(lines) == 10

    def test_score_json(self, tmp_path):
        report = ScoreReport(label="tree", neg2_lppd=2.0,
                             lppd_per_site=np.array([-1.0]), n_holdout=1, n_draws=4)
        path = tmp_path / "score.json"
        write_score(path, report)
        raw = json.loads(path.read_text())
        assert raw == {"model": "tree", "neg2_lppd": 2.0, "n_draws": 4,
                       "n_holdout": 1}

    def test_correlogram_round_trip_with_nan(self, tmp_path):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]])
        c = correlogram(np.array([1.0, -1.0, 0.5]), pts,
                        bins=[0.0, 2.0, 4.0, 12.0], n_perm=19, seed=0)
        path = tmp_path / "corr.csv"
        write_correlogram(path, c)
        # the empty middle bin serializes as blank cells
        middle = path.read_text().splitlines()[2]
        assert ",,," in middle
        back = read_correlogram(path)
        np.testing.assert_array_equal(back.bin_edges, c.bin_edges)
        np.testing.assert_array_equal(back.i_values, c.i_values)
        np.testing.assert_array_equal(back.env_lo, c.env_lo)
        np.testing.assert_array_equal(back.env_hi, c.env_hi)
        np.testing.assert_array_equal(back.pair_counts, c.pair_counts)

    def test_correlogram_contiguity_checked(self, tmp_path):
        path = write_csv(
            tmp_path / "bad.csv",
            "bin_lo,bin_hi,I,env_lo,env_hi,pairs\n"
            "0.0,1.0,0.1,-0.2,0.2,3\n"
            "2.0,3.0,0.1,-0.2,0.2,3\n",
        )
        with pytest.raises(DataFormatError, match="contiguous"):
            read_correlogram(path)

    def test_posterior_summary_values(self, tmp_path):
        from spatocc.learners import FittedSurface
        from spatocc.sampler import PosteriorSamples

        surf = FittedSurface(kind="none", bbox=(0, 0, 1, 1))
        s = PosteriorSamples(
            beta=np.array([[1.0], [2.0], [3.0]]),
            p=np.array([0.2, 0.4, 0.6]),
            surfaces=(surf,) * 3,
            psi_train=np.full((3, 2), 0.5),
        )
        path = tmp_path / "summary.csv"
        write_posterior_summary(path, s)
        lines = path.read_text().splitlines()
        assert lines[0] == "parameter,mean,sd,q2.5,q97.5"
        name, mean, sd, qlo, qhi = lines[1].split(",")
        assert name == "beta_0"
        assert float(mean) == 2.0
        assert float(sd) == pytest.approx(1.0)  # ddof = 1
        assert float(qlo) == pytest.approx(np.quantile([1.0, 2.0, 3.0], 0.025))
        assert lines[2].startswith("p,")

    def test_single_draw_sd_is_zero(self, tmp_path):
        from spatocc.learners import FittedSurface
        from spatocc.sampler import PosteriorSamples

        surf = FittedSurface(kind="none", bbox=(0, 0, 1, 1))
        s = PosteriorSamples(
            beta=np.array([[1.5]]), p=np.array([0.5]),
            surfaces=(surf,), psi_train=np.full((1, 2), 0.5),
        )
        path = tmp_path / "summary.csv"
        write_posterior_summary(path, s)
        assert path.read_text().splitlines()[1] == "beta_0,1.5,0.0,1.5,1.5"


class TestWriteOutputs:
    def _samples(self, with_split=True):
        data = build_dataset(n=30, seed=9, split_at=20 if with_split else None)
        s = run_chain(data, LearnerSpec("none"),
                      McmcConfig(n_iter=20, burn_in=5, thin=1, seed=1))
        return data, s

    def test_full_set_of_files(self, tmp_path):
        data, s = self._samples()
        report = neg2_lppd(s, data)
        grid = np.array([[0.2, 0.2], [0.8, 0.8]])
        written = write_outputs(
            tmp_path, s, score=report, raster_coords=grid,
            config_echo={"learner": {"kind": "none"}},
        )
        names = {os.path.basename(p) for p in written}
        assert names == {"posterior_summary.csv", "score.json", "psi_raster.csv",
                         "meta.json"}
        meta = json.loads((tmp_path / "meta.json").read_text())
        assert meta["config"]["learner"]["kind"] == "none"
        assert meta["chain"]["learner"] == "none"
        assert meta["warnings"] == []

    def test_missing_score_becomes_warning(self, tmp_path):
        _, s = self._samples()
        written = write_outputs(tmp_path, s)
        assert not (tmp_path / "score.json").exists()
        meta = json.loads((tmp_path / "meta.json").read_text())
        assert any("score.json omitted" in w for w in meta["warnings"])

    def test_raster_interval_ordering(self, tmp_path):
        _, s = self._samples()
        grid = np.random.default_rng(1).uniform(size=(30, 2))
        write_outputs(tmp_path, s, raster_coords=grid)
        rows = (tmp_path / "psi_raster.csv").read_text().splitlines()[1:]
        for row in rows:
            _x, _y, mean, lo, hi = (float(v) for v in row.split(","))
            assert lo <= mean <= hi

    def test_byte_identical_reruns(self, tmp_path):
        data, s = self._samples()
        report = neg2_lppd(s, data)
        for d in ("a", "b"):
            write_outputs(tmp_path / d, s, score=report,
                          raster_coords=[[0.5, 0.5]], config_echo={"k": 1})
        assert dir_bytes(tmp_path / "a") == dir_bytes(tmp_path / "b")


class TestDumpJson:
    def test_sorted_keys_and_trailing_newline(self, tmp_path):
        path = tmp_path / "x.json"
        dump_json(path, {"b": 1, "a": {"d": 2, "c": 3}})
        text = path.read_text()
        assert text.endswith("\n")
        assert text.index('"a"') < text.index('"b"')
        assert text.index('"c"') < text.index('"d"')
