"""Seeded random trees, ensembles, and sample batches.

Used by the self-test command and the test suite. Generated trees have
real-valued covers that conserve exactly across splits, and feature picks
are uniform over the feature space, so duplicated features along a path
show up regularly once depth exceeds the feature count.
"""

from __future__ import annotations

import numpy as np

from .model import Ensemble, SampleBatch, TreeModel


def random_tree(rng: np.random.Generator, num_features: int, max_depth: int,
                split_prob: float = 0.8, root_cover: float = 100.0) -> TreeModel:
    """One random tree; each internal node splits on a uniform feature."""
    values: list[float] = []
    left: list[int] = []
    right: list[int] = []
    thresholds: list[float] = []
    covers: list[float] = []
    features: list[int] = []

    def build(depth_left: int, cover: float) -> int:
        j = len(values)
        values.append(0.0)
        left.append(-1)
        right.append(-1)
        thresholds.append(0.0)
        covers.append(cover)
        features.append(-1)
        if depth_left == 0 or rng.random() >= split_prob:
            values[j] = float(rng.normal())
            return j
        features[j] = int(rng.integers(num_features))
        thresholds[j] = float(rng.random())
        left_cover = cover * float(rng.uniform(0.2, 0.8))
        left[j] = build(depth_left - 1, left_cover)
        right[j] = build(depth_left - 1, cover - left_cover)
        return j

    build(max_depth, root_cover)
    return TreeModel.from_arrays(values, left, right, thresholds, covers, features)


def random_ensemble(rng: np.random.Generator, num_trees: int, num_features: int,
                    max_depth: int, split_prob: float = 0.8,
                    base_offset: float = 0.0) -> Ensemble:
    trees = [random_tree(rng, num_features, max_depth, split_prob)
             for _ in range(num_trees)]
    return Ensemble.from_trees(trees, num_features, base_offset)


def random_batch(rng: np.random.Generator, num_samples: int,
                 num_features: int) -> SampleBatch:
    """Uniform [0, 1) samples, matching the threshold distribution."""
    return SampleBatch(rng.random((num_samples, num_features)))
