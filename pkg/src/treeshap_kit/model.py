"""Portable tree-ensemble model: validation, (de)serialization, prediction.

A tree is six parallel node arrays. Node 0 is the root; leaves are marked
by -1 in ``left``/``right``/``features``. ``values`` is authoritative only
at leaves. Covers are real-valued node sample counts and must be conserved
across each split (relative tolerance 1e-6).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

COVER_RTOL = 1e-6


class ModelError(Exception):
    """Base class for model loading/validation failures."""


class ParseError(ModelError):
    """The file is not valid JSON or does not match the model schema."""


class ValidationError(ModelError):
    """A structural invariant is violated; message names node and check."""


def goes_left(x_value: float, threshold: float) -> bool:
    """Shared split rule: ties descend left."""
    return x_value <= threshold


@dataclass(frozen=True)
class TreeModel:
    """One decision tree as parallel node arrays."""

    values: np.ndarray      # leaf value; unused at internal nodes
    left: np.ndarray        # left child index, -1 at leaves
    right: np.ndarray       # right child index, -1 at leaves
    thresholds: np.ndarray  # split threshold; unused at leaves
    covers: np.ndarray      # training-sample count per node, possibly weighted
    features: np.ndarray    # split feature index, -1 at leaves
    max_depth: int          # internal nodes on the longest root-to-leaf path
    num_leaves: int

    @classmethod
    def from_arrays(cls, values, left, right, thresholds, covers, features) -> "TreeModel":
        """Build a tree, deriving max_depth/num_leaves by traversal."""
        values = np.asarray(values, dtype=np.float64)
        left = np.asarray(left, dtype=np.int64)
        right = np.asarray(right, dtype=np.int64)
        thresholds = np.asarray(thresholds, dtype=np.float64)
        covers = np.asarray(covers, dtype=np.float64)
        features = np.asarray(features, dtype=np.int64)
        depth, leaves = _traverse_stats(left, right)
        return cls(values, left, right, thresholds, covers, features, depth, leaves)

    @property
    def num_nodes(self) -> int:
        return len(self.values)

    def is_leaf(self, j: int) -> bool:
        return self.left[j] < 0


def _traverse_stats(left: np.ndarray, right: np.ndarray) -> tuple[int, int]:
    """(max_depth, num_leaves) by iterative DFS; raises on malformed graphs."""
    n = len(left)
    if n == 0:
        raise ValidationError("tree has no nodes")
    max_depth = 0
    leaves = 0
    seen = np.zeros(n, dtype=bool)
    stack = [(0, 0)]
    while stack:
        j, d = stack.pop()
        if j < 0 or j >= n:
            raise ValidationError(f"child index {j} out of range")
        if seen[j]:
            raise ValidationError(f"node {j} reached twice (cycle or shared child)")
        seen[j] = True
        if left[j] < 0:
            leaves += 1
            max_depth = max(max_depth, d)
        else:
            stack.append((int(right[j]), d + 1))
            stack.append((int(left[j]), d + 1))
    return max_depth, leaves


@dataclass(frozen=True)
class Ensemble:
    """A set of trees sharing one feature space."""

    trees: tuple[TreeModel, ...]
    num_features: int
    base_offset: float = 0.0
    max_depth: int = field(default=0)
    max_leaves: int = field(default=0)

    @classmethod
    def from_trees(cls, trees, num_features: int, base_offset: float = 0.0) -> "Ensemble":
        trees = tuple(trees)
        depth = max((t.max_depth for t in trees), default=0)
        leaves = max((t.num_leaves for t in trees), default=0)
        return cls(trees, num_features, float(base_offset), depth, leaves)


@dataclass(frozen=True)
class SampleBatch:
    """M x num_features matrix of samples to explain."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValidationError("sample batch must be a 2-D matrix")
        if not np.all(np.isfinite(rows)):
            raise ValidationError("sample batch contains NaN or infinite entries")
        object.__setattr__(self, "rows", rows)

    def __len__(self) -> int:
        return self.rows.shape[0]


def validate_tree(tree: TreeModel, num_features: int, tree_index: int = 0) -> list[str]:
    """All violated invariants for one tree, as human-readable strings."""
    issues: list[str] = []
    tag = f"tree {tree_index}"
    n = tree.num_nodes
    lengths = {
        "values": len(tree.values), "left": len(tree.left), "right": len(tree.right),
        "thresholds": len(tree.thresholds), "covers": len(tree.covers),
        "features": len(tree.features),
    }
    if len(set(lengths.values())) != 1:
        issues.append(f"{tag}: node arrays have unequal lengths {lengths}")
        return issues

    for j in range(n):
        markers = (tree.left[j] < 0, tree.right[j] < 0, tree.features[j] < 0)
        if len(set(markers)) != 1:
            issues.append(f"{tag}: node {j}: inconsistent leaf markers "
                          f"(left={tree.left[j]}, right={tree.right[j]}, feature={tree.features[j]})")
        if tree.covers[j] <= 0:
            issues.append(f"{tag}: node {j}: cover must be positive, got {tree.covers[j]}")

    # parent structure: every non-root node has exactly one parent, no cycles
    parents = np.zeros(n, dtype=np.int64)
    for j in range(n):
        for child in (tree.left[j], tree.right[j]):
            if child < 0:
                continue
            if child >= n:
                issues.append(f"{tag}: node {j}: child index {child} out of range")
            else:
                parents[child] += 1
    if n > 0 and parents[0] != 0:
        issues.append(f"{tag}: root node 0 has a parent (cycle at node "
                      f"{next(j for j in range(n) if tree.left[j] == 0 or tree.right[j] == 0)})")
    for j in range(1, n):
        if parents[j] != 1:
            issues.append(f"{tag}: node {j}: has {parents[j]} parents, expected 1")
    if issues:
        return issues  # structure is unsafe to traverse further

    for j in range(n):
        if tree.left[j] < 0:
            continue
        if not 0 <= tree.features[j] < num_features:
            issues.append(f"{tag}: node {j}: feature index {tree.features[j]} "
                          f"outside [0, {num_features})")
        child_sum = tree.covers[tree.left[j]] + tree.covers[tree.right[j]]
        if abs(child_sum - tree.covers[j]) > COVER_RTOL * tree.covers[j]:
            issues.append(f"{tag}: node {j}: cover conservation violated "
                          f"(children sum {child_sum}, parent {tree.covers[j]})")

    try:
        depth, leaves = _traverse_stats(tree.left, tree.right)
    except ValidationError as exc:
        issues.append(f"{tag}: {exc}")
        return issues
    if depth != tree.max_depth:
        issues.append(f"{tag}: max_depth {tree.max_depth} != recomputed {depth}")
    if leaves != tree.num_leaves:
        issues.append(f"{tag}: num_leaves {tree.num_leaves} != recomputed {leaves}")
    return issues


def validate(ensemble: Ensemble) -> list[str]:
    """Validation report: empty list means ok."""
    issues: list[str] = []
    for idx, tree in enumerate(ensemble.trees):
        issues.extend(validate_tree(tree, ensemble.num_features, idx))
    depth = max((t.max_depth for t in ensemble.trees), default=0)
    leaves = max((t.num_leaves for t in ensemble.trees), default=0)
    if depth != ensemble.max_depth:
        issues.append(f"ensemble: max_depth {ensemble.max_depth} != recomputed {depth}")
    if leaves != ensemble.max_leaves:
        issues.append(f"ensemble: max_leaves {ensemble.max_leaves} != recomputed {leaves}")
    return issues


def _tree_to_dict(tree: TreeModel) -> dict:
    return {
        "children_left": [int(v) for v in tree.left],
        "children_right": [int(v) for v in tree.right],
        "feature": [int(v) for v in tree.features],
        "threshold": [float(v) for v in tree.thresholds],
        "cover": [float(v) for v in tree.covers],
        "value": [float(v) for v in tree.values],
    }


def _tree_from_dict(d: dict) -> TreeModel:
    required = ("children_left", "children_right", "feature", "threshold", "cover", "value")
    for key in required:
        if key not in d:
            raise ParseError(f"tree object is missing key '{key}'")
    return TreeModel.from_arrays(
        values=d["value"], left=d["children_left"], right=d["children_right"],
        thresholds=d["threshold"], covers=d["cover"], features=d["feature"],
    )


def canonical_json(ensemble: Ensemble) -> str:
    """Canonical serialization used for both files and the cache digest."""
    doc = {
        "num_features": int(ensemble.num_features),
        "base_offset": float(ensemble.base_offset),
        "trees": [_tree_to_dict(t) for t in ensemble.trees],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def model_digest(ensemble: Ensemble) -> bytes:
    """SHA-256 of the canonical model JSON, used to bind caches to models."""
    return hashlib.sha256(canonical_json(ensemble).encode("utf-8")).digest()


def save_model(ensemble: Ensemble, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(ensemble))


def load_model(path) -> Ensemble:
    """Parse and fully validate a model file.

    Raises ParseError for malformed files and ValidationError naming the
    first violated invariant.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "num_features" not in doc or "trees" not in doc:
        raise ParseError(f"{path}: missing 'num_features' or 'trees'")
    try:
        trees = []
        for idx, tree_doc in enumerate(doc["trees"]):
            try:
                trees.append(_tree_from_dict(tree_doc))
            except ValidationError as exc:
                raise ValidationError(f"tree {idx}: {exc}") from exc
        ensemble = Ensemble.from_trees(
            trees, int(doc["num_features"]), float(doc.get("base_offset", 0.0)))
    except (TypeError, KeyError) as exc:
        raise ParseError(f"{path}: malformed model document: {exc}") from exc
    issues = validate(ensemble)
    if issues:
        raise ValidationError(issues[0] + (f" (+{len(issues) - 1} more)" if len(issues) > 1 else ""))
    return ensemble


def load_samples(path, num_features: int | None = None) -> SampleBatch:
    """Headerless CSV of decimal reals, one sample per row."""
    rows = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    if rows.size == 0:
        rows = rows.reshape(0, num_features if num_features else 0)
    batch = SampleBatch(rows)
    if num_features is not None and batch.rows.shape[1] != num_features:
        raise ValidationError(
            f"sample batch has {batch.rows.shape[1]} columns, model expects {num_features}")
    return batch


def predict_tree(tree: TreeModel, x: np.ndarray) -> float:
    """Leaf value reached by plain decision-path descent."""
    j = 0
    while not tree.is_leaf(j):
        if goes_left(x[tree.features[j]], tree.thresholds[j]):
            j = int(tree.left[j])
        else:
            j = int(tree.right[j])
    return float(tree.values[j])


def predict(ensemble: Ensemble, x) -> float:
    """Sum of per-tree leaf values plus the base offset."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (ensemble.num_features,):
        raise ValidationError(
            f"sample has shape {x.shape}, model expects ({ensemble.num_features},)")
    return sum(predict_tree(t, x) for t in ensemble.trees) + ensemble.base_offset


def predict_batch(ensemble: Ensemble, batch: SampleBatch) -> np.ndarray:
    return np.array([predict(ensemble, row) for row in batch.rows])
