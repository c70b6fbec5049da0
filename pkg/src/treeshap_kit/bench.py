"""Timed comparison of the three SHAP variants on one model and batch.

One warm-up pass per algorithm (also absorbs JIT compilation) followed by
R timed repeats. Speedups are ratios of mean wall times; the v2 row is
split into its sample-independent precomputation and the per-sample
scoring, since the former is amortized across batches in steady-model
deployments. Iteration counters come from the kernels and cost the same
one add per inner loop in every variant, so their ratios are meaningful.
"""

from __future__ import annotations

import csv
import json
import os
import platform
import statistics
import time

import numpy as np

from . import explainer, fastv2, kernels
from .model import Ensemble, SampleBatch


def _timed(fn, repeats: int) -> tuple[list[float], object]:
    fn()  # warm-up, untimed
    times = []
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return times, result


def _stats(times: list[float]) -> dict:
    return {
        "mean_s": statistics.fmean(times),
        "sd_s": statistics.stdev(times) if len(times) > 1 else 0.0,
        "times_s": times,
    }


def machine_note() -> dict:
    import numba
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "processor": platform.processor() or platform.machine(),
        "cpu_count": os.cpu_count(),
        "numpy": np.__version__,
        "numba": numba.__version__,
    }


def run_bench(ensemble: Ensemble, batch: SampleBatch, repeats: int = 5,
              workers: int = 1,
              budget_bytes: int = explainer.DEFAULT_BUDGET_BYTES) -> dict:
    """Benchmark report as a plain dict (JSON-serializable)."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X = batch.rows
    flat = kernels.flatten(ensemble)
    report: dict = {
        "machine": machine_note(),
        "config": {
            "repeats": repeats,
            "workers": workers,
            "num_samples": int(X.shape[0]),
            "num_features": ensemble.num_features,
            "num_trees": len(ensemble.trees),
            "max_depth": ensemble.max_depth,
        },
        "algorithms": {},
    }
    outputs: dict[str, np.ndarray] = {}
    counters: dict[str, np.ndarray] = {}

    def run_plain(runner, name):
        c = np.zeros(kernels.N_COUNTERS, dtype=np.int64)

        def once():
            c[:] = 0
            phi = np.zeros((X.shape[0], ensemble.num_features))
            explainer._run_chunked(lambda x, p, cc: runner(flat, x, p, cc),
                                   X, phi, workers, c)
            return phi
        times, phi = _timed(once, repeats)
        outputs[name] = phi
        counters[name] = c.copy()
        report["algorithms"][name] = _stats(times) | {
            "iterations": int(c[kernels.ITERS]),
            "leaf_unwinds": int(c[kernels.LEAF_UNWINDS]),
        }

    run_plain(kernels.run_original, "original")
    run_plain(kernels.run_v1, "v1")

    prep_times, tables = _timed(
        lambda: explainer.prep_all(ensemble, budget_bytes=budget_bytes), repeats)
    sf, so, sw, ef = kernels.flatten_tables(tables)
    c2 = np.zeros(kernels.N_COUNTERS, dtype=np.int64)

    def score_once():
        c2[:] = 0
        phi = np.zeros((X.shape[0], ensemble.num_features))
        explainer._run_chunked(
            lambda x, p, cc: kernels.run_score(flat, sf, so, sw, ef, x, p, cc),
            X, phi, workers, c2)
        return phi
    score_times, phi2 = _timed(score_once, repeats)
    outputs["v2"] = phi2

    mean_orig = report["algorithms"]["original"]["mean_s"]
    mean_v1 = report["algorithms"]["v1"]["mean_s"]
    mean_score = statistics.fmean(score_times)
    report["algorithms"]["v1"]["speedup_vs_original"] = mean_orig / mean_v1
    report["algorithms"]["v1"]["iteration_ratio_vs_original"] = (
        report["algorithms"]["v1"]["iterations"]
        / max(report["algorithms"]["original"]["iterations"], 1))
    report["algorithms"]["v2"] = {
        "prep": _stats(prep_times) | {
            "table_bytes": int(sum(t.nbytes() for t in tables))},
        "score": _stats(score_times) | {"lookups": int(c2[kernels.ITERS])},
        "total_mean_s": statistics.fmean(prep_times) + mean_score,
        "score_speedup_vs_original": mean_orig / mean_score,
    }
    report["max_deviation"] = {
        "v1_vs_original": float(np.abs(outputs["v1"] - outputs["original"]).max(initial=0.0)),
        "v2_vs_original": float(np.abs(outputs["v2"] - outputs["original"]).max(initial=0.0)),
    }
    return report


def iteration_counters(ensemble: Ensemble, batch: SampleBatch,
                       workers: int = 1) -> dict:
    """Inner-loop work per algorithm on one batch, without timing.

    Instrumentation is always compiled into the kernels (one integer add
    per inner iteration, identical in every variant), so the v1/original
    ratio is a clean measure of algorithmic work saved.
    """
    X = batch.rows
    flat = kernels.flatten(ensemble)
    out: dict = {}

    def count(runner):
        c = np.zeros(kernels.N_COUNTERS, dtype=np.int64)
        phi = np.zeros((X.shape[0], ensemble.num_features))
        explainer._run_chunked(lambda x, p, cc: runner(x, p, cc), X, phi, workers, c)
        return c

    c = count(lambda x, p, cc: kernels.run_original(flat, x, p, cc))
    out["original"] = {"iterations": int(c[kernels.ITERS]),
                       "leaf_unwinds": int(c[kernels.LEAF_UNWINDS])}
    c = count(lambda x, p, cc: kernels.run_v1(flat, x, p, cc))
    out["v1"] = {"iterations": int(c[kernels.ITERS]),
                 "leaf_unwinds": int(c[kernels.LEAF_UNWINDS])}
    tables = explainer.prep_all(ensemble)
    sf, so, sw, ef = kernels.flatten_tables(tables)
    c = count(lambda x, p, cc: kernels.run_score(flat, sf, so, sw, ef, x, p, cc))
    out["v2"] = {"lookups": int(c[kernels.ITERS])}
    out["v1_vs_original"] = (out["v1"]["iterations"]
                             / max(out["original"]["iterations"], 1))
    return out


def format_table(report: dict) -> str:
    """Human-readable summary of a bench report."""
    cfg = report["config"]
    lines = [
        f"samples={cfg['num_samples']} trees={cfg['num_trees']} "
        f"depth={cfg['max_depth']} repeats={cfg['repeats']} workers={cfg['workers']}",
        f"{'algorithm':<12} {'mean (s)':>10} {'sd (s)':>10} {'speedup':>8}",
    ]
    a = report["algorithms"]
    lines.append(f"{'original':<12} {a['original']['mean_s']:>10.4f} "
                 f"{a['original']['sd_s']:>10.4f} {'1.00':>8}")
    lines.append(f"{'v1':<12} {a['v1']['mean_s']:>10.4f} {a['v1']['sd_s']:>10.4f} "
                 f"{a['v1']['speedup_vs_original']:>8.2f}")
    v2 = a["v2"]
    lines.append(f"{'v2 prep':<12} {v2['prep']['mean_s']:>10.4f} "
                 f"{v2['prep']['sd_s']:>10.4f} {'':>8}")
    lines.append(f"{'v2 score':<12} {v2['score']['mean_s']:>10.4f} "
                 f"{v2['score']['sd_s']:>10.4f} "
                 f"{v2['score_speedup_vs_original']:>8.2f}")
    lines.append(
        f"v1/original iteration ratio: {a['v1']['iteration_ratio_vs_original']:.3f}")
    dev = report["max_deviation"]
    lines.append(f"max deviation vs original: v1 {dev['v1_vs_original']:.2e}, "
                 f"v2 {dev['v2_vs_original']:.2e}")
    return "\n".join(lines)


def write_report(report: dict, out_dir) -> dict:
    """Write bench.json, bench.csv, and a bench.png timing figure.

    Returns the paths written.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "json": os.path.join(out_dir, "bench.json"),
        "csv": os.path.join(out_dir, "bench.csv"),
        "figure": os.path.join(out_dir, "bench.png"),
    }
    with open(paths["json"], "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")

    a = report["algorithms"]
    rows = [
        ("original", "total", a["original"]["mean_s"], a["original"]["sd_s"], 1.0),
        ("v1", "total", a["v1"]["mean_s"], a["v1"]["sd_s"],
         a["v1"]["speedup_vs_original"]),
        ("v2", "prep", a["v2"]["prep"]["mean_s"], a["v2"]["prep"]["sd_s"], ""),
        ("v2", "score", a["v2"]["score"]["mean_s"], a["v2"]["score"]["sd_s"],
         a["v2"]["score_speedup_vs_original"]),
    ]
    with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "phase", "mean_s", "sd_s", "speedup_vs_original"])
        writer.writerows(rows)

    _write_figure(report, paths["figure"])
    return paths


def _write_figure(report: dict, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    a = report["algorithms"]
    labels = ["original", "v1", "v2 score"]
    means = [a["original"]["mean_s"], a["v1"]["mean_s"], a["v2"]["score"]["mean_s"]]
    sds = [a["original"]["sd_s"], a["v1"]["sd_s"], a["v2"]["score"]["sd_s"]]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(labels, means, yerr=sds, capsize=4, color=["#777777", "#4477aa", "#228833"])
    ax.bar(["v2 score"], [a["v2"]["prep"]["mean_s"]], bottom=[means[2]],
           color="#ccbb44", label="v2 prep (amortized)")
    ax.set_ylabel("wall time per pass (s)")
    cfg = report["config"]
    ax.set_title(f"{cfg['num_samples']} samples, {cfg['num_trees']} trees, "
                 f"depth {cfg['max_depth']}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
