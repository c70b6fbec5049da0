"""Build the committed benchmark fixture: a 100-tree depth-8 forest.

The feature matrix imitates a census-income table after one-hot encoding:
6 continuous columns followed by 58 binary indicator columns grouped into
categorical blocks, 64 features total. The label mixes threshold effects
on the continuous columns with a few indicator interactions so the forest
learns deep, uneven trees.

Run from the repository root:
    python3 tools/make_fixture.py
"""

import os
import pathlib
import sys

import numpy as np
from sklearn.ensemble import RandomForestClassifier

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "exporter", "src"))
from tree_export import dump_samples, export_model  # noqa: E402

SEED = 20240824
NUM_TREES = 100
MAX_DEPTH = 8
NUM_SAMPLES = 10_000
TRAIN_SAMPLES = 30_000

CATEGORY_SIZES = [7, 16, 7, 14, 6, 5, 2, 1]  # 58 indicator columns


def synth_census(rng: np.random.Generator, n: int) -> np.ndarray:
    cols = [
        rng.integers(17, 91, size=n).astype(float),        # age
        rng.lognormal(11.6, 1.0, size=n),                  # sampling weight
        rng.integers(1, 17, size=n).astype(float),         # education years
        np.where(rng.random(n) < 0.08, rng.lognormal(8.5, 1.4, n), 0.0),  # gain
        np.where(rng.random(n) < 0.05, rng.lognormal(7.0, 0.8, n), 0.0),  # loss
        np.clip(rng.normal(40, 12, size=n), 1, 99),        # weekly hours
    ]
    for size in CATEGORY_SIZES:
        probs = rng.dirichlet(np.ones(size) * 1.5)
        pick = rng.choice(size, size=n, p=probs)
        block = np.zeros((n, size))
        block[np.arange(n), pick] = 1.0
        cols.append(block)
    return np.column_stack(cols)


def labels(rng: np.random.Generator, X: np.ndarray) -> np.ndarray:
    score = (
        0.04 * (X[:, 0] - 38)
        + 0.25 * (X[:, 2] - 10)
        + 0.9 * (X[:, 3] > 5000)
        + 0.02 * (X[:, 5] - 40)
        + 0.8 * X[:, 7]
        + 0.6 * X[:, 14] * (X[:, 5] > 45)
        - 0.7 * X[:, 30]
        + rng.normal(scale=0.8, size=len(X))
    )
    return (score > 0.4).astype(int)


def main() -> None:
    out_dir = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)

    X_train = synth_census(rng, TRAIN_SAMPLES)
    y_train = labels(rng, X_train)
    X_bench = synth_census(rng, NUM_SAMPLES)

    forest = RandomForestClassifier(
        n_estimators=NUM_TREES, max_depth=MAX_DEPTH, random_state=SEED,
        n_jobs=-1).fit(X_train, y_train)

    model_path = out_dir / "adult_synth_forest.json"
    manifest = export_model(forest, model_path, X_bench)
    with open(str(model_path) + ".manifest.json", "w", encoding="utf-8") as fh:
        fh.write(manifest.to_json())
    dump_samples(X_bench, out_dir / "adult_synth_samples.csv")
    print(f"model: {manifest.num_trees} trees, depth {manifest.max_depth}, "
          f"{manifest.max_leaves} max leaves, parity {manifest.parity_max_dev:.2e}")
    print(f"samples: {X_bench.shape}, positive rate {y_train.mean():.3f}")


if __name__ == "__main__":
    main()
