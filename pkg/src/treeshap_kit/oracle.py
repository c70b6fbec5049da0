"""Slow, obviously-correct reference evaluators.

Everything here is exponential or near-exponential on purpose and guarded
by feature-count limits. These functions are the correctness anchor for
the fast path algorithms and are never used on the batch execution path.

Subset bitmask convention (shared with the precomputation tables): the
unique features of a path are numbered in order of first occurrence from
the root, and bit p of a mask corresponds to the (p+1)-th unique feature.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .model import TreeModel, goes_left

MAX_GUARD = 20


class GuardExceeded(ValueError):
    """Feature count beyond the exponential-enumeration guard."""


@dataclass(frozen=True)
class PathDescriptor:
    """One root-to-leaf path with everything the closed forms need."""

    leaf_value: float
    leaf_index: int
    node_features: tuple[int, ...]   # per internal node, root first; duplicates allowed
    ratios: tuple[float, ...]        # child cover / parent cover per internal node
    directions: tuple[str, ...]      # "left" or "right" per internal node
    thresholds: tuple[float, ...]
    unique_features: tuple[int, ...]  # first-occurrence order

    def __len__(self) -> int:
        return len(self.node_features)

    def indicator(self, x: np.ndarray, feature: int) -> float:
        """Product over this feature's occurrences of 1{x inside the branch}."""
        out = 1.0
        for f, t, d in zip(self.node_features, self.thresholds, self.directions):
            if f != feature:
                continue
            inside = goes_left(x[f], t) if d == "left" else not goes_left(x[f], t)
            out *= 1.0 if inside else 0.0
        return out

    def ratio_product(self, feature: int) -> float:
        """Product of covering ratios over this feature's occurrences."""
        out = 1.0
        for f, r in zip(self.node_features, self.ratios):
            if f == feature:
                out *= r
        return out


def enumerate_paths(tree: TreeModel) -> list[PathDescriptor]:
    """All root-to-leaf paths, leaves in left-first depth-first order."""
    paths: list[PathDescriptor] = []

    def walk(j, feats, rats, dirs, thrs):
        if tree.is_leaf(j):
            uniq = tuple(dict.fromkeys(feats))
            paths.append(PathDescriptor(
                leaf_value=float(tree.values[j]), leaf_index=int(j),
                node_features=tuple(feats), ratios=tuple(rats),
                directions=tuple(dirs), thresholds=tuple(thrs),
                unique_features=uniq))
            return
        f, t, r = int(tree.features[j]), float(tree.thresholds[j]), float(tree.covers[j])
        for child, side in ((int(tree.left[j]), "left"), (int(tree.right[j]), "right")):
            walk(child, feats + [f], rats + [float(tree.covers[child]) / r],
                 dirs + [side], thrs + [t])

    walk(0, [], [], [], [])
    return paths


def expvalue(x, s, tree: TreeModel) -> float:
    """Conditional expectation by recursive descent.

    Features in ``s`` follow the decision branch; the rest are marginalized
    by cover-weighting both children.
    """
    x = np.asarray(x, dtype=np.float64)
    s = frozenset(int(i) for i in s)

    def g(j: int) -> float:
        if tree.is_leaf(j):
            return float(tree.values[j])
        f = int(tree.features[j])
        a, b = int(tree.left[j]), int(tree.right[j])
        if f in s:
            return g(a) if goes_left(x[f], tree.thresholds[j]) else g(b)
        r = float(tree.covers[j])
        return g(a) * tree.covers[a] / r + g(b) * tree.covers[b] / r

    return g(0)


def subset_values(x, tree: TreeModel, n: int) -> np.ndarray:
    """expvalue(x, S, tree) for every S, indexed by bitmask over all n features.

    Uses the per-leaf closed form (sum over leaves of indicator/ratio
    products), which is algebraically identical to the recursive descent
    and vectorizes over subsets.
    """
    if n > MAX_GUARD:
        raise GuardExceeded(f"{n} features exceeds the 2^n enumeration guard ({MAX_GUARD})")
    x = np.asarray(x, dtype=np.float64)
    paths = enumerate_paths(tree)
    used = list(dict.fromkeys(f for p in paths for f in p.unique_features))
    k = len(used)
    leaf_vals = np.array([p.leaf_value for p in paths])
    ind = np.ones((len(paths), k))
    rat = np.ones((len(paths), k))
    for pi, p in enumerate(paths):
        for ui, f in enumerate(used):
            if f in p.unique_features:
                ind[pi, ui] = p.indicator(x, f)
                rat[pi, ui] = p.ratio_product(f)

    used_masks = np.arange(1 << k)
    bits = ((used_masks[:, None] >> np.arange(k)) & 1).astype(bool)  # (2^k, k)
    weights = np.where(bits[:, None, :], ind[None], rat[None]).prod(axis=2)
    g = weights @ leaf_vals  # (2^k,)

    all_masks = np.arange(1 << n)
    proj = np.zeros(1 << n, dtype=np.int64)
    for p, f in enumerate(used):
        proj |= ((all_masks >> f) & 1) << p
    return g[proj]


def shap_bruteforce(x, tree: TreeModel, n: int) -> tuple[np.ndarray, float]:
    """Classic Shapley sum over all 2^n feature subsets.

    Returns (phi, base) where base = expvalue(x, {}, tree).
    """
    if n > MAX_GUARD:
        raise GuardExceeded(f"{n} features exceeds the 2^n enumeration guard ({MAX_GUARD})")
    f = subset_values(x, tree, n)
    all_masks = np.arange(1 << n)
    size = np.array([bin(m).count("1") for m in all_masks])
    fact = np.array([factorial(i) for i in range(n + 1)], dtype=np.float64)
    phi = np.zeros(n)
    for i in range(n):
        bit = 1 << i
        without = all_masks[(all_masks & bit) == 0]
        w = fact[size[without]] * fact[n - size[without] - 1] / fact[n]
        phi[i] = float(np.dot(w, f[without | bit] - f[without]))
    return phi, float(f[0])


def _subsets_of(mask_positions: list[int]):
    """All submasks assembled from the given bit positions."""
    k = len(mask_positions)
    for sub in range(1 << k):
        m = 0
        for p in range(k):
            if sub >> p & 1:
                m |= 1 << mask_positions[p]
        yield m


def shap_per_path(x, tree: TreeModel, n: int) -> np.ndarray:
    """Literal per-path evaluation restricted to paths containing each feature."""
    x = np.asarray(x, dtype=np.float64)
    phi = np.zeros(n)
    for path in enumerate_paths(tree):
        dk = path.unique_features
        if len(dk) > MAX_GUARD:
            raise GuardExceeded(f"path has {len(dk)} unique features (guard {MAX_GUARD})")
        ind = {f: path.indicator(x, f) for f in dk}
        rat = {f: path.ratio_product(f) for f in dk}
        size = len(dk)
        for i in dk:
            others = [f for f in dk if f != i]
            inner = 0.0
            for m in range(size):
                weight = factorial(m) * factorial(size - m - 1) / factorial(size)
                ssum = 0.0
                for combo in _combinations(others, m):
                    term = 1.0
                    for f in combo:
                        term *= ind[f]
                    for f in others:
                        if f not in combo:
                            term *= rat[f]
                    ssum += term
                inner += weight * ssum
            phi[i] += inner * (ind[i] - rat[i]) * path.leaf_value
    return phi


def _combinations(items, m):
    from itertools import combinations
    return [set(c) for c in combinations(items, m)]


@dataclass(frozen=True)
class SubsetWeightTable:
    """Per-path table of aggregate Shapley-weighted ratio sums.

    ``u[mask]`` holds the scalar aggregate for subset C = mask; ``u_m[mask]``
    the per-size intermediate sequence it was summed from. The full-set mask
    is omitted: its top size term divides by zero and no consumer reads it.
    """

    u: dict[int, float]
    u_m: dict[int, tuple[float, ...]]
    unique_features: tuple[int, ...]


def subset_weights(path: PathDescriptor) -> SubsetWeightTable:
    """Exact aggregate table for every proper subset of the path's features."""
    dk = path.unique_features
    size = len(dk)
    if size > MAX_GUARD:
        raise GuardExceeded(f"path has {size} unique features (guard {MAX_GUARD})")
    rat = {f: path.ratio_product(f) for f in dk}
    u: dict[int, float] = {}
    u_m: dict[int, tuple[float, ...]] = {}
    for mask in range((1 << size) - 1, -1, -1):
        if mask == (1 << size) - 1:
            continue
        members = [p for p in range(size) if mask >> p & 1]
        c_feats = [dk[p] for p in members]
        terms = []
        for m in range(len(c_feats) + 1):
            weight = factorial(m) * factorial(size - m) / factorial(size + 1)
            ssum = 0.0
            for combo in _combinations(c_feats, m):
                term = 1.0
                for f in c_feats:
                    if f not in combo:
                        term *= rat[f]
                ssum += term
            terms.append(weight * ssum)
        u_m[mask] = tuple(terms)
        u[mask] = sum((size + 1) / (size - m) * terms[m] for m in range(len(terms)))
    return SubsetWeightTable(u=u, u_m=u_m, unique_features=dk)


def shap_from_tables(x, tree: TreeModel, n: int) -> np.ndarray:
    """Table-driven evaluation via per-path subset weight aggregates."""
    x = np.asarray(x, dtype=np.float64)
    phi = np.zeros(n)
    for path in enumerate_paths(tree):
        dk = path.unique_features
        if not dk:
            continue
        table = subset_weights(path)
        ind = {f: path.indicator(x, f) for f in dk}
        rat = {f: path.ratio_product(f) for f in dk}
        pos = {f: p for p, f in enumerate(dk)}
        sk = [f for f in dk if ind[f] == 0.0]
        q = 1.0
        for f in sk:
            q *= rat[f]
        sk_mask = 0
        for f in sk:
            sk_mask |= 1 << pos[f]
        full = (1 << len(dk)) - 1
        for f in dk:
            if f in sk:
                phi[f] -= table.u[full & ~sk_mask] * q * path.leaf_value
            else:
                c_mask = full & ~(sk_mask | (1 << pos[f]))
                phi[f] += table.u[c_mask] * q * (1.0 - rat[f]) * path.leaf_value
    return phi
