"""Sample-independent precomputation plus table-driven scoring.

``prep`` walks a tree once and fills, for every leaf, the aggregate subset
weights for all proper subsets of the path's unique features (row width
2^depth, column index = subset bitmask, first-occurrence bit order). The
all-ones column would divide by zero and is never consumed, so it is
stored as 0. ``score`` then explains a sample with one table lookup per
path feature instead of a weight-sequence unwind.

Tables can be persisted to disk and reloaded for the steady-model /
fresh-batches deployment pattern; the file header binds the tables to the
model through a content digest.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .model import Ensemble, TreeModel, goes_left, model_digest

CACHE_MAGIC = b"FTS2"
CACHE_VERSION = 1


class BudgetExceeded(RuntimeError):
    """Precomputation table would exceed the configured memory budget."""


class TableMismatch(ValueError):
    """A table was produced for a different tree than the one being scored."""


class CacheError(RuntimeError):
    """Base class for cache file problems."""


class CacheVersionError(CacheError):
    pass


class CacheDigestError(CacheError):
    """Cache was built for a different model."""


class CacheTruncatedError(CacheError):
    pass


@dataclass(frozen=True)
class PrepTable:
    """Per-tree precomputed subset-weight matrix.

    Rows follow left-first depth-first leaf discovery order; ``e`` maps each
    internal node to the path position of an earlier occurrence of its split
    feature (-1 if none), so scoring needs no per-sample duplicate scan.
    """

    s: np.ndarray          # num_leaves x 2^tree_depth, float64
    e: np.ndarray          # per-node duplicate position, -1 default
    tree_depth: int
    tree_leaves: int

    def nbytes(self) -> int:
        return self.s.nbytes


def table_bytes(tree: TreeModel) -> int:
    """Size of this tree's table: leaves x 2^depth doubles."""
    return tree.num_leaves * (1 << tree.max_depth) * 8


def prep(tree: TreeModel, budget_bytes: int | None = None) -> PrepTable:
    """Build the per-leaf subset-weight table for one tree.

    Deterministic and sample-independent. The in-flight workspace doubles
    its live row block at every split (top half: subsets containing the new
    feature; bottom half rescaled for the larger path) and duplicate
    features are unwound with a strided row selection.
    """
    if budget_bytes is not None and table_bytes(tree) > budget_bytes:
        raise BudgetExceeded(
            f"table needs {table_bytes(tree)} bytes "
            f"(leaves={tree.num_leaves}, depth={tree.max_depth}), budget {budget_bytes}")
    depth = tree.max_depth
    width = 1 << depth
    cols = np.arange(depth + 1, dtype=np.float64)
    s = np.zeros((tree.num_leaves, width))
    e = np.full(tree.num_nodes, -1, dtype=np.int64)
    counter = [0]

    def recurse(j: int, m_d: list[int], m_z: list[float], w: np.ndarray,
                p_z: float, p_i: int):
        l = len(m_d)
        m_d = m_d + [p_i]
        m_z = m_z + [p_z]
        if l == 0:
            w = np.zeros((width, depth + 1))
            w[0, 0] = 1.0
        else:
            half = 1 << (l - 1)
            old = w[:half]
            w = w.copy()
            # subsets without the new feature: rescale for the longer path
            w[:half] = old * ((l - cols) / (l + 1))
            # subsets with it: two-term extension of the size sequence
            top = old * (p_z * (l - cols) / (l + 1))
            top[:, 1:] += old[:, :-1] * (cols[1:] / (l + 1))
            w[half:2 * half] = top

        if tree.is_leaf(j):
            ll = len(m_d) - 1
            if ll > 0:
                coef = (ll + 1) / (ll - np.arange(ll, dtype=np.float64))
                row = w[:1 << ll, :ll] @ coef
                row[(1 << ll) - 1] = 0.0  # full-set column: undefined, never read
                s[counter[0], :1 << ll] = row
            counter[0] += 1
            return

        feat = int(tree.features[j])
        i_z = 1.0
        k = next((p for p in range(1, len(m_d)) if m_d[p] == feat), None)
        if k is not None:
            e[j] = k
            i_z = m_z[k]
            lu = len(m_d) - 1
            rows = np.arange(1 << lu)
            keep = rows[(rows >> (k - 1)) & 1 == 0]
            w = w.copy()
            w[:1 << (lu - 1)] = w[keep]
            w[:1 << (lu - 1), :lu] *= (lu + 1) / (lu - np.arange(lu, dtype=np.float64))
            m_d = m_d[:k] + m_d[k + 1:]
            m_z = m_z[:k] + m_z[k + 1:]
        r = float(tree.covers[j])
        a, b = int(tree.left[j]), int(tree.right[j])
        recurse(a, m_d, m_z, w, i_z * tree.covers[a] / r, feat)
        recurse(b, m_d, m_z, w, i_z * tree.covers[b] / r, feat)

    recurse(0, [], [], np.empty((0, 0)), 1.0, -1)
    return PrepTable(s=s, e=e, tree_depth=depth, tree_leaves=tree.num_leaves)


def score(x, tree: TreeModel, table: PrepTable, phi: np.ndarray | None = None) -> np.ndarray:
    """Add this tree's SHAP contributions for one sample using its table."""
    if table.tree_leaves != tree.num_leaves or table.tree_depth != tree.max_depth:
        raise TableMismatch(
            f"table is for a tree with {table.tree_leaves} leaves / depth "
            f"{table.tree_depth}, got {tree.num_leaves} leaves / depth {tree.max_depth}")
    x = np.asarray(x, dtype=np.float64)
    if phi is None:
        phi = np.zeros(len(x))
    s, e = table.s, table.e
    counter = [0]

    def recurse(j: int, m_d: list[int], m_z: list[float], m_o: list[int],
                q: float, p_z: float, p_o: int, p_i: int):
        m_d = m_d + [p_i]
        m_z = m_z + [p_z]
        m_o = m_o + [p_o]
        if p_o == 0:
            q *= p_z
        if tree.is_leaf(j):
            l = len(m_d) - 1
            v = float(tree.values[j])
            c = counter[0]
            full = (1 << l) - 1
            b_sum = 0
            for i in range(1, l + 1):
                if m_o[i] != 0:
                    b_sum += 1 << (i - 1)
            for i in range(1, l + 1):
                if m_o[i] == 0:
                    assert b_sum != full
                    phi[m_d[i]] -= s[c, b_sum] * q * v
                else:
                    assert b_sum - (1 << (i - 1)) != full
                    phi[m_d[i]] += s[c, b_sum - (1 << (i - 1))] * q * (1.0 - m_z[i]) * v
            counter[0] += 1
            return
        i_z, i_o = 1.0, 1
        k = int(e[j])
        if k != -1:
            i_z, i_o = m_z[k], m_o[k]
            m_d = m_d[:k] + m_d[k + 1:]
            m_z = m_z[:k] + m_z[k + 1:]
            m_o = m_o[:k] + m_o[k + 1:]
            if i_o == 0:
                q /= i_z
        f, r = int(tree.features[j]), float(tree.covers[j])
        a, b = int(tree.left[j]), int(tree.right[j])
        left_hit = goes_left(x[f], tree.thresholds[j])
        recurse(a, m_d, m_z, m_o, q, i_z * tree.covers[a] / r,
                i_o * (1 if left_hit else 0), f)
        recurse(b, m_d, m_z, m_o, q, i_z * tree.covers[b] / r,
                i_o * (0 if left_hit else 1), f)

    recurse(0, [], [], [], 1.0, 1.0, 1, -1)
    return phi


def prep_ensemble(ensemble: Ensemble, budget_bytes: int | None = None) -> list[PrepTable]:
    return [prep(t, budget_bytes) for t in ensemble.trees]


def save_cache(tables: list[PrepTable], path, digest: bytes) -> None:
    """Write tables with a header binding them to the source model digest."""
    if len(digest) != 32:
        raise ValueError("digest must be 32 bytes (SHA-256)")
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<I", CACHE_VERSION))
        fh.write(digest)
        fh.write(struct.pack("<I", len(tables)))
        for table in tables:
            fh.write(struct.pack("<III", table.tree_depth, table.tree_leaves, len(table.e)))
            fh.write(np.asarray(table.e, dtype="<i4").tobytes())
            fh.write(np.ascontiguousarray(table.s, dtype="<f8").tobytes())


def load_cache(path, expected_digest: bytes | None = None) -> list[PrepTable]:
    """Read tables back; verifies magic, version, and (optionally) digest."""
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CacheTruncatedError(f"{path}: file ends {pos + n - len(data)} bytes early")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != CACHE_MAGIC:
        raise CacheError(f"{path}: bad magic, not a prep-table cache")
    (version,) = struct.unpack("<I", take(4))
    if version != CACHE_VERSION:
        raise CacheVersionError(f"{path}: cache version {version}, expected {CACHE_VERSION}")
    digest = take(32)
    if expected_digest is not None and digest != expected_digest:
        raise CacheDigestError(f"{path}: cache was built for a different model")
    (num_trees,) = struct.unpack("<I", take(4))
    tables = []
    for _ in range(num_trees):
        depth, leaves, e_len = struct.unpack("<III", take(12))
        e = np.frombuffer(take(4 * e_len), dtype="<i4").astype(np.int64)
        width = 1 << depth
        s = np.frombuffer(take(8 * leaves * width), dtype="<f8").reshape(leaves, width).copy()
        tables.append(PrepTable(s=s, e=e, tree_depth=depth, tree_leaves=leaves))
    if pos != len(data):
        raise CacheError(f"{path}: {len(data) - pos} trailing bytes")
    return tables


def cache_digest_for(ensemble: Ensemble) -> bytes:
    return model_digest(ensemble)
