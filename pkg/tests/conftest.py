import pathlib

import numpy as np
import pytest

from treeshap_kit.model import Ensemble, TreeModel

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture
def stump():
    """Single split on feature 0 at 0.5; covers 6 left, 4 right."""
    return TreeModel.from_arrays(
        values=[0.0, 1.0, 3.0],
        left=[1, -1, -1], right=[2, -1, -1],
        thresholds=[0.5, 0.0, 0.0],
        covers=[10.0, 6.0, 4.0],
        features=[0, -1, -1])


@pytest.fixture
def two_level():
    """Root on f0, left child on f1; leaf values 0, 4, 10."""
    return TreeModel.from_arrays(
        values=[0.0, 0.0, 0.0, 4.0, 10.0],
        left=[1, 2, -1, -1, -1], right=[4, 3, -1, -1, -1],
        thresholds=[0.5, 0.5, 0.0, 0.0, 0.0],
        covers=[8.0, 4.0, 2.0, 2.0, 4.0],
        features=[0, 1, -1, -1, -1])


@pytest.fixture
def duplicated():
    """Feature 0 split twice along the left spine."""
    return TreeModel.from_arrays(
        values=[0.0, 0.0, 1.0, 2.0, 5.0],
        left=[1, 2, -1, -1, -1], right=[4, 3, -1, -1, -1],
        thresholds=[0.5, 0.25, 0.0, 0.0, 0.0],
        covers=[10.0, 6.0, 2.0, 4.0, 4.0],
        features=[0, 0, -1, -1, -1])


@pytest.fixture
def bench_model_path():
    return FIXTURES / "adult_synth_forest.json"


@pytest.fixture
def bench_samples_path():
    return FIXTURES / "adult_synth_samples.csv"


def as_ensemble(tree, num_features, base_offset=0.0):
    return Ensemble.from_trees([tree], num_features, base_offset)


def reference_phi(trees, X, num_features):
    """Sum of per-tree exhaustive-oracle attributions plus shared base."""
    from treeshap_kit import oracle
    phi = np.zeros((len(X), num_features))
    base = np.zeros(len(X))
    for i, x in enumerate(X):
        for tree in trees:
            p, b = oracle.shap_bruteforce(x, tree, num_features)
            phi[i] += p
            base[i] += b
    return phi, base
