"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 model/data validation or I/O
failure, 3 self-test deviation above the accuracy gate.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bench, explainer, fastv2, model, oracle, synth

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_SELFTEST = 3

SELFTEST_GATE = 1e-10


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_workers() -> int:
    env = os.environ.get("FTS_WORKERS")
    if env is None:
        return 1
    try:
        value = int(env)
        if value < 1:
            raise ValueError
        return value
    except ValueError:
        print(f"treeshap: error: FTS_WORKERS={env!r} is not a positive integer",
              file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treeshap",
                     description="SHAP attributions for tree ensembles")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, data=False, out=False):
        p.add_argument("--model", required=True, help="model JSON file")
        if data:
            p.add_argument("--data", required=True,
                           help="headerless CSV, one sample per row")
        if out:
            p.add_argument("--out", help="output path")
        p.add_argument("--budget", type=int,
                       default=explainer.DEFAULT_BUDGET_BYTES,
                       help="precomputation memory budget in bytes")

    p = sub.add_parser("explain", help="attributions for a sample batch")
    add_common(p, data=True, out=True)
    p.add_argument("--algorithm", choices=explainer.ALGORITHMS, default="auto")
    p.add_argument("--cache", help="precomputed table cache (implies v2)")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel workers (default: FTS_WORKERS or 1)")

    p = sub.add_parser("prep", help="precompute tables and write a cache file")
    add_common(p)
    p.add_argument("--cache", required=True, help="cache file to write")

    p = sub.add_parser("bench", help="time the three variants on a batch")
    add_common(p, data=True, out=True)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("validate", help="check model invariants")
    p.add_argument("--model", required=True)

    p = sub.add_parser("estimate", help="table memory footprint for a model")
    add_common(p)

    p = sub.add_parser("selftest", help="verify against the exhaustive oracle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=25)
    return parser


def _resolve_workers(value) -> int:
    if value is None:
        return _default_workers()
    if value < 1:
        print("treeshap: error: --workers must be >= 1", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    return value


def _cmd_explain(args) -> int:
    ensemble = model.load_model(args.model)
    batch = model.load_samples(args.data, ensemble.num_features)
    algorithm = "v2" if args.cache and args.algorithm == "auto" else args.algorithm
    attr = explainer.explain(
        ensemble, batch, algorithm=algorithm,
        workers=_resolve_workers(args.workers),
        budget_bytes=args.budget, cache_path=args.cache)
    if args.out:
        explainer.write_attribution_csv(attr, args.out)
        print(f"wrote {len(batch)} attributions ({attr.algorithm}) to {args.out}")
    else:
        explainer.write_attribution_csv(attr, "/dev/stdout")
    return EXIT_OK


def _cmd_prep(args) -> int:
    ensemble = model.load_model(args.model)
    tables = fastv2.prep_ensemble(ensemble, args.budget)
    fastv2.save_cache(tables, args.cache, fastv2.cache_digest_for(ensemble))
    total = sum(t.nbytes() for t in tables)
    print(f"wrote {len(tables)} tables ({total} bytes of weights) to {args.cache}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    ensemble = model.load_model(args.model)
    batch = model.load_samples(args.data, ensemble.num_features)
    report = bench.run_bench(ensemble, batch, repeats=args.repeats,
                             workers=_resolve_workers(args.workers),
                             budget_bytes=args.budget)
    print(bench.format_table(report))
    if args.out:
        paths = bench.write_report(report, args.out)
        print(f"wrote {paths['json']}, {paths['csv']}, {paths['figure']}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        ensemble = model.load_model(args.model)
    except model.ModelError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"ok: {len(ensemble.trees)} trees, {ensemble.num_features} features, "
          f"max depth {ensemble.max_depth}")
    return EXIT_OK


def _cmd_estimate(args) -> int:
    ensemble = model.load_model(args.model)
    est = explainer.estimate(ensemble)
    print(f"total table bytes:     {est.total_bytes}")
    print(f"largest tree table:    {est.max_tree_bytes}")
    print(f"global bound:          {est.global_bound_bytes}")
    print(f"within budget {args.budget}: {'yes' if est.total_bytes <= args.budget else 'no'}")
    return EXIT_OK


def _cmd_selftest(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for trial in range(args.trials):
        nfeat = int(rng.integers(2, 9))
        ensemble = synth.random_ensemble(rng, int(rng.integers(1, 6)), nfeat,
                                         int(rng.integers(1, 6)))
        batch = synth.random_batch(rng, 8, nfeat)
        ref = np.zeros((len(batch), nfeat))
        for i, x in enumerate(batch.rows):
            for tree in ensemble.trees:
                phi, _ = oracle.shap_bruteforce(x, tree, nfeat)
                ref[i] += phi
        for algorithm in ("original", "v1", "v2"):
            attr = explainer.explain(ensemble, batch, algorithm=algorithm)
            dev = float(np.abs(attr.phi - ref).max(initial=0.0))
            worst = max(worst, dev)
    print(f"self-test: {args.trials} trials x 3 algorithms, "
          f"worst deviation {worst:.3e} (gate {SELFTEST_GATE:.0e})")
    if worst > SELFTEST_GATE:
        print("self-test FAILED", file=sys.stderr)
        return EXIT_SELFTEST
    print("self-test passed")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "explain": _cmd_explain,
        "prep": _cmd_prep,
        "bench": _cmd_bench,
        "validate": _cmd_validate,
        "estimate": _cmd_estimate,
        "selftest": _cmd_selftest,
    }[args.command]
    try:
        return handler(args)
    except (model.ModelError, fastv2.CacheError, fastv2.BudgetExceeded,
            OSError, ValueError) as exc:
        print(f"treeshap: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
