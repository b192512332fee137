"""Shared fixtures: small synthetic datasets and frozen chain states."""

import numpy as np
import pytest

from spatocc.model import DetectionHistory, OccupancyDataset, Site, TrainHoldoutSplit


def build_dataset(n=40, n_visits=3, p=0.6, beta0=0.2, seed=0, covariates=None,
                  split_at=None):
    """Random-but-reproducible dataset with known generating values."""
    rng = np.random.default_rng(seed)
    coords = rng.random((n, 2))
    from spatocc.model import inv_probit

    lin = np.full(n, beta0)
    if covariates is not None:
        lin = lin + covariates @ rng.standard_normal(covariates.shape[1])
    psi = inv_probit(lin)
    z = rng.random(n) < psi
    y = (rng.random((n, n_visits)) < p * z[:, None]).astype(int)
    ids = [f"s{i}" for i in range(n)]
    sites = tuple(Site(id=ids[i], coords=(coords[i, 0], coords[i, 1]))
                  for i in range(n))
    hists = tuple(DetectionHistory(site_id=ids[i], visits=tuple(y[i]))
                  for i in range(n))
    split = None
    if split_at is not None:
        split = TrainHoldoutSplit(train=tuple(ids[:split_at]),
                                  holdout=tuple(ids[split_at:]))
    return OccupancyDataset(sites=sites, histories=hists, covariates=covariates,
                            split=split)


@pytest.fixture
def small_dataset():
    return build_dataset(n=40, seed=0)


@pytest.fixture
def split_dataset():
    return build_dataset(n=60, seed=1, split_at=40)
