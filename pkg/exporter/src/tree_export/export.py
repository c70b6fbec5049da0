"""Convert fitted tree ensembles to the portable model JSON.

Supported inputs: scikit-learn random forests and gradient boosting
(pickled), and XGBoost boosters when that library is installed. Binary
classifiers are exported as probability-of-positive leaves unless the
margin flag asks for raw scores. The engine consumes only the emitted
JSON, so it never needs the training framework at explain time.

Split conventions: scikit-learn sends ties left (x <= t), matching the
engine. XGBoost sends ties right (x < t); rather than assuming the
difference is harmless, every export ends with a prediction-parity check
and the observed maximum deviation is recorded in the manifest.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import pickle
import sys
from dataclasses import dataclass

import numpy as np

from treeshap_kit import model as engine_model

PARITY_TOLERANCE = 1e-6
PARITY_SAMPLES = 1000


class ExportError(Exception):
    """Unsupported model type or a failed parity check."""


@dataclass(frozen=True)
class ExportManifest:
    framework: str
    framework_version: str
    model_type: str
    num_trees: int
    max_depth: int
    max_leaves: int
    num_features: int
    base_offset: float
    output: str        # "probability" or "margin"
    json_sha256: str   # digest of the emitted model file
    parity_max_dev: float
    parity_samples: int
    tie_note: str

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2) + "\n"


def _sklearn_tree_to_dict(tree, leaf_value) -> dict:
    """One fitted sklearn tree as the portable node-array dict."""
    t = tree.tree_
    n = t.node_count
    value = np.zeros(n)
    for j in range(n):
        if t.children_left[j] < 0:
            value[j] = leaf_value(t, j)
    return {
        "children_left": [int(v) for v in t.children_left],
        "children_right": [int(v) for v in t.children_right],
        "feature": [int(v) if t.children_left[j] >= 0 else -1
                    for j, v in enumerate(t.feature)],
        "threshold": [float(v) if t.children_left[j] >= 0 else 0.0
                      for j, v in enumerate(t.threshold)],
        "cover": [float(v) for v in t.weighted_n_node_samples],
        "value": [float(v) for v in value],
    }


def _convert_sklearn(fitted, margin: bool) -> tuple[dict, str, str]:
    """(model document, model_type, output kind) for an sklearn ensemble."""
    from sklearn.ensemble import (GradientBoostingClassifier,
                                  GradientBoostingRegressor,
                                  RandomForestClassifier,
                                  RandomForestRegressor)

    if isinstance(fitted, RandomForestClassifier):
        if fitted.n_classes_ != 2:
            raise ExportError(
                f"multiclass forest ({fitted.n_classes_} classes) is unsupported; "
                "export one single-output model per class instead")
        if margin:
            raise ExportError("margin output is only available for boosted models")
        n_trees = len(fitted.estimators_)

        def leaf_value(t, j):
            counts = t.value[j, 0]
            return counts[1] / counts.sum() / n_trees
        trees = [_sklearn_tree_to_dict(est, leaf_value) for est in fitted.estimators_]
        return ({"num_features": int(fitted.n_features_in_), "base_offset": 0.0,
                 "trees": trees}, "RandomForestClassifier", "probability")

    if isinstance(fitted, RandomForestRegressor):
        n_trees = len(fitted.estimators_)

        def leaf_value(t, j):
            return t.value[j, 0, 0] / n_trees
        trees = [_sklearn_tree_to_dict(est, leaf_value) for est in fitted.estimators_]
        return ({"num_features": int(fitted.n_features_in_), "base_offset": 0.0,
                 "trees": trees}, "RandomForestRegressor", "value")

    if isinstance(fitted, (GradientBoostingRegressor, GradientBoostingClassifier)):
        if isinstance(fitted, GradientBoostingClassifier):
            if fitted.n_classes_ != 2:
                raise ExportError(
                    f"multiclass boosting ({fitted.n_classes_} classes) is "
                    "unsupported; export one single-output model per class instead")
            if not margin:
                raise ExportError(
                    "boosted classifiers are exported as margins (log-odds); "
                    "pass the margin flag")
        lr = float(fitted.learning_rate)

        def leaf_value(t, j):
            return t.value[j, 0, 0] * lr  # learning rate folded into leaves
        trees = [_sklearn_tree_to_dict(est[0], leaf_value)
                 for est in fitted.estimators_]
        base = _gbt_base_offset(fitted)
        return ({"num_features": int(fitted.n_features_in_), "base_offset": base,
                 "trees": trees}, type(fitted).__name__, "margin")

    raise ExportError(f"unsupported model type {type(fitted).__name__}")


def _gbt_base_offset(fitted) -> float:
    """Initial raw prediction of a gradient-boosted sklearn model."""
    init = fitted.init_
    probe = np.zeros((1, fitted.n_features_in_))
    if hasattr(fitted, "n_classes_"):
        p = float(np.clip(init.predict_proba(probe)[0, 1], 1e-12, 1 - 1e-12))
        return float(np.log(p / (1.0 - p)))
    return float(init.predict(probe)[0])


def _convert_xgboost(booster, margin: bool) -> tuple[dict, str, str]:
    """XGBoost booster via its JSON dump; ties go right there (x < t)."""
    import xgboost  # noqa: F401  guarded at the call site

    config = json.loads(booster.save_config())
    learner = config["learner"]
    base_score = float(learner["learner_model_param"]["base_score"])
    num_features = int(learner["learner_model_param"]["num_feature"])
    dumps = booster.get_dump(dump_format="json", with_stats=True)

    def walk(node, arrays):
        j = len(arrays["value"])
        for key in arrays:
            arrays[key].append(0)
        if "leaf" in node:
            arrays["children_left"][j] = -1
            arrays["children_right"][j] = -1
            arrays["feature"][j] = -1
            arrays["threshold"][j] = 0.0
            arrays["cover"][j] = float(node["cover"])
            arrays["value"][j] = float(node["leaf"])
            return j
        feat = node["split"]
        arrays["feature"][j] = int(feat[1:]) if feat.startswith("f") else int(feat)
        arrays["threshold"][j] = float(node["split_condition"])
        arrays["cover"][j] = float(node["cover"])
        kids = {c["nodeid"]: c for c in node["children"]}
        arrays["children_left"][j] = walk(kids[node["yes"]], arrays)
        arrays["children_right"][j] = walk(kids[node["no"]], arrays)
        return j

    trees = []
    for dump in dumps:
        arrays = {k: [] for k in ("children_left", "children_right", "feature",
                                  "threshold", "cover", "value")}
        walk(json.loads(dump), arrays)
        trees.append(arrays)
    return ({"num_features": num_features, "base_offset": base_score,
             "trees": trees}, "xgboost.Booster",
            "margin" if margin else "value")


def _framework_predict(fitted, X: np.ndarray, output: str) -> np.ndarray:
    try:
        import xgboost
        if isinstance(fitted, xgboost.Booster):
            return fitted.predict(xgboost.DMatrix(X), output_margin=True)
    except ImportError:
        pass
    if output == "probability":
        return fitted.predict_proba(X)[:, 1]
    if output == "margin" and hasattr(fitted, "decision_function"):
        return fitted.decision_function(X)
    return fitted.predict(X)


def parity_check(fitted, model_path, X: np.ndarray, output: str = "value") -> float:
    """Max |framework prediction - engine prediction| over the samples."""
    ensemble = engine_model.load_model(model_path)
    from treeshap_kit import kernels
    engine = kernels.predict_batch(kernels.flatten(ensemble),
                                   np.asarray(X, dtype=np.float64))
    reference = np.asarray(_framework_predict(fitted, X, output), dtype=np.float64)
    return float(np.abs(engine - reference).max(initial=0.0))


def export_model(fitted, out_path, X: np.ndarray, margin: bool = False) -> ExportManifest:
    """Write model JSON plus a manifest; verifies prediction parity on X."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < PARITY_SAMPLES:
        raise ExportError(
            f"parity check needs at least {PARITY_SAMPLES} samples, got {X.shape[0]}")

    is_xgb = type(fitted).__module__.startswith("xgboost")
    if is_xgb:
        import xgboost
        doc, model_type, output = _convert_xgboost(fitted, margin)
        framework, version = "xgboost", xgboost.__version__
        tie_note = ("source sends threshold ties right (x < t), engine sends them "
                    "left (x <= t); deviation below covers any affected sample")
    else:
        import sklearn
        doc, model_type, output = _convert_sklearn(fitted, margin)
        framework, version = "scikit-learn", sklearn.__version__
        tie_note = "both source and engine send threshold ties left (x <= t)"

    ensemble = engine_model.load_model(_write_doc(doc, out_path))
    dev = parity_check(fitted, out_path, X, output)
    if dev > PARITY_TOLERANCE:
        raise ExportError(
            f"parity check failed: max deviation {dev:.3e} > {PARITY_TOLERANCE}")

    with open(out_path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    return ExportManifest(
        framework=framework, framework_version=version, model_type=model_type,
        num_trees=len(ensemble.trees), max_depth=ensemble.max_depth,
        max_leaves=ensemble.max_leaves, num_features=ensemble.num_features,
        base_offset=ensemble.base_offset, output=output, json_sha256=digest,
        parity_max_dev=dev, parity_samples=int(X.shape[0]), tie_note=tie_note)


def _write_doc(doc: dict, out_path) -> str:
    # round-trip through the engine's canonical form so the digest is stable
    trees = [engine_model.TreeModel.from_arrays(
        values=t["value"], left=t["children_left"], right=t["children_right"],
        thresholds=t["threshold"], covers=t["cover"], features=t["feature"])
        for t in doc["trees"]]
    ensemble = engine_model.Ensemble.from_trees(
        trees, doc["num_features"], doc["base_offset"])
    engine_model.save_model(ensemble, out_path)
    return out_path


def dump_samples(X: np.ndarray, path) -> None:
    """Headerless CSV in the engine's sample format."""
    np.savetxt(path, np.asarray(X, dtype=np.float64), delimiter=",", fmt="%.17g")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tree-export", description=__doc__.splitlines()[0])
    parser.add_argument("--input", required=True,
                        help="pickled sklearn model (.pkl) or xgboost model file")
    parser.add_argument("--out", required=True, help="model JSON to write")
    parser.add_argument("--data", required=True,
                        help=f"CSV of >= {PARITY_SAMPLES} samples for the parity check")
    parser.add_argument("--margin", action="store_true",
                        help="export raw scores instead of probabilities")
    args = parser.parse_args(argv)

    if args.input.endswith((".xgb", ".ubj", ".bst")):
        try:
            import xgboost
        except ImportError:
            print("tree-export: xgboost is not installed", file=sys.stderr)
            return 2
        fitted = xgboost.Booster()
        fitted.load_model(args.input)
    else:
        with open(args.input, "rb") as fh:
            fitted = pickle.load(fh)

    X = np.loadtxt(args.data, delimiter=",", ndmin=2)
    try:
        manifest = export_model(fitted, args.out, X, margin=args.margin)
    except ExportError as exc:
        print(f"tree-export: {exc}", file=sys.stderr)
        return 2
    manifest_path = args.out + ".manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(manifest.to_json())
    print(f"wrote {args.out} ({manifest.num_trees} trees, parity "
          f"{manifest.parity_max_dev:.2e}) and {manifest_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
