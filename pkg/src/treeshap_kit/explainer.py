"""Batch orchestration: algorithm selection, accumulation, parallel fan-out.

Tree contributions are always accumulated in tree order 0..T-1 for every
sample, and workers partition the sample axis into contiguous chunks, so
the output is bit-identical for any worker count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fastv2, kernels
from .model import Ensemble, SampleBatch, ValidationError

DEFAULT_BUDGET_BYTES = 1 << 30  # 1 GiB of precomputation tables

ALGORITHMS = ("original", "v1", "v2", "auto")


@dataclass(frozen=True)
class Attribution:
    """Per-sample SHAP vectors plus the shared base value."""

    phi: np.ndarray          # M x num_features
    base_values: np.ndarray  # M
    algorithm: str           # concrete algorithm that produced this


@dataclass(frozen=True)
class MemoryEstimate:
    """Precomputation table sizing for an ensemble."""

    total_bytes: int        # sum over trees of leaves * 2^depth * 8
    max_tree_bytes: int     # largest single-tree table
    global_bound_bytes: int  # max_leaves * 2^max_depth * 8 for every tree


def estimate(ensemble: Ensemble) -> MemoryEstimate:
    per_tree = [fastv2.table_bytes(t) for t in ensemble.trees]
    bound = len(ensemble.trees) * ensemble.max_leaves * (1 << ensemble.max_depth) * 8
    return MemoryEstimate(
        total_bytes=sum(per_tree),
        max_tree_bytes=max(per_tree, default=0),
        global_bound_bytes=bound)


def v2_sample_threshold(max_depth: int) -> int:
    """Smallest sample count at which precomputation pays off."""
    if max_depth == 0:
        return 1
    limit = 2 ** (max_depth + 1) / max_depth
    return int(limit) + 1


def auto_select(ensemble: Ensemble, num_samples: int,
                budget_bytes: int = DEFAULT_BUDGET_BYTES) -> str:
    """Pick between v1 and v2; the original variant is never chosen."""
    if ensemble.max_depth == 0:
        return "v1"
    if (num_samples >= v2_sample_threshold(ensemble.max_depth)
            and estimate(ensemble).total_bytes <= budget_bytes):
        return "v2"
    return "v1"


def expected_value(ensemble: Ensemble) -> float:
    """Cover-weighted leaf mean summed over trees; every sample's base value."""
    total = ensemble.base_offset
    for tree in ensemble.trees:
        leaves = tree.left < 0
        total += float(np.dot(tree.values[leaves], tree.covers[leaves]) / tree.covers[0])
    return total


def _run_chunked(run, X: np.ndarray, phi: np.ndarray, workers: int,
                 counters: np.ndarray | None) -> None:
    """Split the sample axis into contiguous per-worker chunks."""
    m = X.shape[0]
    if m == 0:
        return
    workers = min(workers, m)
    bounds = np.linspace(0, m, workers + 1, dtype=np.int64)
    chunk_counters = [np.zeros(kernels.N_COUNTERS, dtype=np.int64) for _ in range(workers)]
    if workers == 1:
        run(X, phi, chunk_counters[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(run, X[bounds[i]:bounds[i + 1]],
                            phi[bounds[i]:bounds[i + 1]], chunk_counters[i])
                for i in range(workers)]
            for fut in futures:
                fut.result()
    if counters is not None:
        for cc in chunk_counters:
            counters += cc


def explain(ensemble: Ensemble, batch: SampleBatch, algorithm: str = "auto",
            workers: int = 1, budget_bytes: int = DEFAULT_BUDGET_BYTES,
            cache_path=None, counters: np.ndarray | None = None) -> Attribution:
    """Per-sample SHAP vectors for the whole batch, summed over all trees."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}, expected one of {ALGORITHMS}")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    X = batch.rows
    if X.shape[1] != ensemble.num_features:
        raise ValidationError(
            f"batch has {X.shape[1]} columns, model expects {ensemble.num_features}")
    if algorithm == "auto":
        algorithm = auto_select(ensemble, X.shape[0], budget_bytes)

    flat = kernels.flatten(ensemble)
    phi = np.zeros((X.shape[0], ensemble.num_features))

    if algorithm == "original":
        _run_chunked(lambda x, p, c: kernels.run_original(flat, x, p, c),
                     X, phi, workers, counters)
    elif algorithm == "v1":
        _run_chunked(lambda x, p, c: kernels.run_v1(flat, x, p, c),
                     X, phi, workers, counters)
    else:
        _explain_v2(ensemble, flat, X, phi, workers, budget_bytes, cache_path, counters)

    base = expected_value(ensemble)
    return Attribution(phi=phi, base_values=np.full(X.shape[0], base), algorithm=algorithm)


def _explain_v2(ensemble, flat, X, phi, workers, budget_bytes, cache_path, counters):
    est = estimate(ensemble)
    if cache_path is not None:
        tables = fastv2.load_cache(cache_path, expected_digest=fastv2.cache_digest_for(ensemble))
    elif est.total_bytes <= budget_bytes:
        tables = prep_all(ensemble, workers=workers, budget_bytes=budget_bytes)
    elif est.max_tree_bytes <= budget_bytes:
        # stream: one tree's table at a time; accumulation order per phi
        # element is still (tree, leaf)-ascending, so output is unchanged
        for tree in ensemble.trees:
            table = fastv2.prep(tree, budget_bytes)
            sub = Ensemble.from_trees([tree], ensemble.num_features)
            sub_flat = kernels.flatten(sub)
            sf, so, sw, ef = kernels.flatten_tables([table])
            _run_chunked(lambda x, p, c: kernels.run_score(sub_flat, sf, so, sw, ef, x, p, c),
                         X, phi, workers, counters)
        return
    else:
        raise fastv2.BudgetExceeded(
            f"largest per-tree table needs {est.max_tree_bytes} bytes, over the "
            f"{budget_bytes}-byte budget; raise --budget or use --algorithm v1")
    sf, so, sw, ef = kernels.flatten_tables(tables)
    _run_chunked(lambda x, p, c: kernels.run_score(flat, sf, so, sw, ef, x, p, c),
                 X, phi, workers, counters)


def prep_all(ensemble: Ensemble, workers: int = 1,
             budget_bytes: int | None = None) -> list[fastv2.PrepTable]:
    """Precompute every tree's table, optionally in parallel per tree."""
    if workers <= 1 or len(ensemble.trees) <= 1:
        return [fastv2.prep(t, budget_bytes) for t in ensemble.trees]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: fastv2.prep(t, budget_bytes), ensemble.trees))


def write_attribution_csv(attr: Attribution, path) -> None:
    """phi_0..phi_{n-1} then the base value, one row per sample."""
    n = attr.phi.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"phi_{i}" for i in range(n)] + ["base"])
        for row, base in zip(attr.phi, attr.base_values):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(base))])
