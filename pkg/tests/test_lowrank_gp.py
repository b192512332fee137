"""Low-rank GP learner tests against a dense normal-equation oracle."""

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from spatocc import learners
from spatocc.errors import ValidationError
from spatocc.learners import LearnerSpec
from spatocc.learners.lowrank_gp import (
    DEFAULT_RANGE_PHI,
    LowRankGpFitter,
    exp_cov,
    fit_lowrank_gp,
    knot_grid,
    predict_lowrank_gp,
)


def oracle_fit(coords, targets, n_knots, phi, sill, tau2):
    """Dense reference solve with independently built covariance matrices."""
    coords = np.asarray(coords, dtype=float)
    x0, y0 = coords.min(axis=0)
    x1, y1 = coords.max(axis=0)
    sx = (x1 - x0) if x1 > x0 else 1.0
    sy = (y1 - y0) if y1 > y0 else 1.0
    unit = np.column_stack([(coords[:, 0] - x0) / sx, (coords[:, 1] - y0) / sy])
    g = int(round(np.sqrt(n_knots)))
    ticks = np.array([0.5]) if g == 1 else np.linspace(0.0, 1.0, g)
    kx, ky = np.meshgrid(ticks, ticks, indexing="ij")
    knots = np.column_stack([kx.ravel(), ky.ravel()])
    B = sill * np.exp(-cdist(unit, knots) / phi)
    K = sill * np.exp(-cdist(knots, knots) / phi)
    w = np.linalg.solve(B.T @ B + tau2 * K, B.T @ targets)
    return knots, w, B @ w


class TestKnotGrid:
    def test_single_knot_centered(self):
        np.testing.assert_array_equal(knot_grid(1), [[0.5, 0.5]])

    def test_four_knots_are_square_corners(self):
        got = knot_grid(4)
        want = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
        np.testing.assert_allclose(got, want)

    def test_grid_spans_unit_square(self):
        g = knot_grid(25)
        assert g.shape == (25, 2)
        assert g.min() == 0.0 and g.max() == 1.0
        # rows unique: no coincident knots
        assert len({tuple(r) for r in g}) == 25

    @pytest.mark.parametrize("bad", [0, -4, 2, 3, 5, 99])
    def test_non_square_counts_rejected(self, bad):
        with pytest.raises(ValidationError):
            knot_grid(bad)


class TestDenseOracle:
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_dense_solve(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(20, 80))
        coords = rng.uniform(-3.0, 7.0, size=(n, 2))
        y = rng.normal(size=n)
        n_knots = int(rng.choice([4, 9, 16, 25]))
        phi = float(rng.uniform(0.2, 1.0))
        sill = float(rng.uniform(0.5, 2.0))
        tau2 = float(rng.uniform(0.01, 0.5))

        surface, fhat = LowRankGpFitter(coords, n_knots, phi, sill, tau2).fit(y)
        knots, w, fhat_ref = oracle_fit(coords, y, n_knots, phi, sill, tau2)

        np.testing.assert_allclose(surface.params["knots"], knots, atol=1e-12)
        np.testing.assert_allclose(surface.params["weights"], w, atol=1e-8)
        np.testing.assert_allclose(fhat, fhat_ref, atol=1e-8)

    def test_default_hyperparameters_match_oracle(self):
        rng = np.random.default_rng(42)
        coords = rng.uniform(0.0, 1.0, size=(120, 2))
        y = rng.normal(size=120)
        surface = fit_lowrank_gp(coords, y)
        _, w, _ = oracle_fit(coords, y, 100, DEFAULT_RANGE_PHI, 1.0, 0.1)
        np.testing.assert_allclose(surface.params["weights"], w, atol=1e-8)


class TestBehaviour:
    def test_zero_targets_give_zero_surface(self):
        rng = np.random.default_rng(3)
        coords = rng.uniform(size=(30, 2))
        surface, fhat = LowRankGpFitter(coords, 9).fit(np.zeros(30))
        np.testing.assert_array_equal(surface.params["weights"], np.zeros(9))
        np.testing.assert_array_equal(fhat, np.zeros(30))

    def test_single_site_shrinks_toward_zero(self):
        surface, fhat = LowRankGpFitter([[2.0, 5.0]], n_knots=1).fit([3.0])
        assert 0.0 < fhat[0] < 3.0
        # hand solve: site maps to (0,0), knot at (0.5,0.5)
        b = np.exp(-np.hypot(0.5, 0.5) / DEFAULT_RANGE_PHI)
        assert fhat[0] == pytest.approx(b * b * 3.0 / (b * b + 0.1), abs=1e-12)

    def test_interpolates_with_zero_nugget_at_knots(self):
        # sites exactly on the 3x3 knot grid with tau2=0: B is square and
        # nonsingular, so the fit reproduces the targets
        ticks = np.array([0.0, 0.5, 1.0])
        gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
        coords = np.column_stack([gx.ravel(), gy.ravel()])
        y = np.arange(9, dtype=float) - 4.0
        _, fhat = LowRankGpFitter(coords, 9, nugget_tau2=0.0).fit(y)
        np.testing.assert_allclose(fhat, y, atol=1e-8)

    def test_predict_at_training_coords_equals_fit_values(self):
        rng = np.random.default_rng(11)
        coords = rng.uniform(size=(40, 2)) * np.array([10.0, 2.0])
        y = rng.normal(size=40)
        surface, fhat = LowRankGpFitter(coords, 16).fit(y)
        pred = learners.predict(surface, coords)
        np.testing.assert_allclose(pred, fhat, atol=1e-12)

    def test_prediction_decays_far_from_data(self):
        # exponential covariance basis -> f tends to 0 away from knots
        rng = np.random.default_rng(7)
        coords = rng.uniform(size=(50, 2))
        y = rng.normal(size=50) + 2.0
        surface = fit_lowrank_gp(coords, y, n_knots=9)
        far = learners.predict(surface, [[80.0, -90.0]])
        assert abs(far[0]) < 1e-6

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"range_phi": 0.0},
            {"range_phi": -1.0},
            {"range_phi": np.inf},
            {"sill_sigma2": 0.0},
            {"nugget_tau2": -0.1},
        ],
    )
    def test_bad_hyperparameters_rejected(self, kwargs):
        coords = np.random.default_rng(0).uniform(size=(10, 2))
        with pytest.raises(ValidationError):
            LowRankGpFitter(coords, 4, **kwargs)

    def test_target_length_mismatch(self):
        fitter = LowRankGpFitter(np.random.default_rng(0).uniform(size=(10, 2)), 4)
        with pytest.raises(ValidationError):
            fitter.fit(np.zeros(9))


class TestProperties:
    def test_deterministic(self):
        rng = np.random.default_rng(5)
        coords = rng.uniform(size=(60, 2))
        y = rng.normal(size=60)
        s1, f1 = LowRankGpFitter(coords, 25).fit(y)
        s2, f2 = LowRankGpFitter(coords.copy(), 25).fit(y.copy())
        np.testing.assert_array_equal(f1, f2)
        np.testing.assert_array_equal(s1.params["weights"], s2.params["weights"])

    def test_dispatch_matches_direct_call(self):
        rng = np.random.default_rng(9)
        coords = rng.uniform(size=(30, 2))
        y = rng.normal(size=30)
        spec = LearnerSpec("lowrank_gp", {"n_knots": 16, "nugget_tau2": 0.2})
        via_registry = learners.fit(spec, coords, y)
        direct = fit_lowrank_gp(coords, y, n_knots=16, nugget_tau2=0.2)
        np.testing.assert_array_equal(
            via_registry.params["weights"], direct.params["weights"]
        )
        grid = rng.uniform(size=(15, 2))
        # predict_lowrank_gp works in standardized units; the registry
        # applies the bbox map first
        from spatocc.learners.base import to_unit

        np.testing.assert_array_equal(
            learners.predict(via_registry, grid),
            predict_lowrank_gp(direct, to_unit(grid, direct.bbox)),
        )

    def test_smoother_than_targets(self):
        # nugget regularization: fitted values vary less than noisy targets
        rng = np.random.default_rng(21)
        coords = rng.uniform(size=(100, 2))
        y = rng.normal(size=100) * 3.0
        _, fhat = LowRankGpFitter(coords, 16).fit(y)
        assert np.var(fhat) < np.var(y)

    def test_exp_cov_basics(self):
        a = np.array([[0.0, 0.0], [1.0, 0.0]])
        k = exp_cov(a, a, sill=2.0, phi=0.5)
        assert k[0, 0] == k[1, 1] == 2.0
        assert k[0, 1] == pytest.approx(2.0 * np.exp(-2.0), rel=1e-12)
        assert k[0, 1] == k[1, 0]
