"""Compiled batch kernels for the three SHAP variants.

These mirror the arithmetic of the per-tree reference implementations in
``baseline``, ``fastv1``, and ``fastv2`` exactly, but run over flattened
ensemble arrays with an explicit DFS stack and per-depth path frames so
the hot loops compile under numba. All kernels release the GIL; callers
parallelize by splitting the sample axis, which keeps per-sample
accumulation order (tree 0..T-1, leaf-visit order within a tree) fixed
and the output bit-identical for any worker count.

Counters: index 0 accumulates inner-loop iterations of the weight updates
(extend/unwind bodies) or, for table scoring, one count per table lookup;
index 1 counts leaf unwind calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import Ensemble

N_COUNTERS = 2
ITERS, LEAF_UNWINDS = 0, 1


@dataclass(frozen=True)
class FlatEnsemble:
    """Ensemble node arrays concatenated for kernel consumption."""

    left: np.ndarray
    right: np.ndarray
    features: np.ndarray
    thresholds: np.ndarray
    values: np.ndarray
    covers: np.ndarray
    offsets: np.ndarray   # per-tree start index into the node arrays, len T+1
    max_depth: int
    num_features: int
    base_offset: float


def flatten(ensemble: Ensemble) -> FlatEnsemble:
    trees = ensemble.trees
    offsets = np.zeros(len(trees) + 1, dtype=np.int64)
    for i, t in enumerate(trees):
        offsets[i + 1] = offsets[i] + t.num_nodes
    cat = lambda attr, dtype: (np.concatenate([getattr(t, attr) for t in trees]).astype(dtype)
                               if trees else np.zeros(0, dtype=dtype))
    return FlatEnsemble(
        left=cat("left", np.int64), right=cat("right", np.int64),
        features=cat("features", np.int64), thresholds=cat("thresholds", np.float64),
        values=cat("values", np.float64), covers=cat("covers", np.float64),
        offsets=offsets, max_depth=ensemble.max_depth,
        num_features=ensemble.num_features, base_offset=ensemble.base_offset)


@njit(cache=True, nogil=True)
def _predict_kernel(left, right, feat, thr, val, offsets, X, out):
    n_trees = len(offsets) - 1
    for mi in range(X.shape[0]):
        acc = 0.0
        for t in range(n_trees):
            off = offsets[t]
            node = 0
            while left[off + node] >= 0:
                idx = off + node
                if X[mi, feat[idx]] <= thr[idx]:
                    node = left[idx]
                else:
                    node = right[idx]
            acc += val[off + node]
        out[mi] = acc


def predict_batch(flat: FlatEnsemble, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    _predict_kernel(flat.left, flat.right, flat.features, flat.thresholds,
                    flat.values, flat.offsets, np.ascontiguousarray(X), out)
    return out + flat.base_offset


@njit(cache=True, nogil=True)
def _original_kernel(left, right, feat, thr, val, cov, offsets, max_depth,
                     X, phi, counters):
    n_trees = len(offsets) - 1
    stride = max_depth + 2
    md = np.empty(stride * stride, dtype=np.int64)
    mz = np.empty(stride * stride)
    mo = np.empty(stride * stride)
    mw = np.empty(stride * stride)
    cap = 2 * stride + 2
    st_node = np.empty(cap, dtype=np.int64)
    st_pf = np.empty(cap, dtype=np.int64)
    st_plen = np.empty(cap, dtype=np.int64)
    st_pz = np.empty(cap)
    st_po = np.empty(cap)
    st_pi = np.empty(cap, dtype=np.int64)
    iters = 0
    leaf_unwinds = 0
    for mi in range(X.shape[0]):
        for t in range(n_trees):
            off = offsets[t]
            st_node[0] = 0
            st_pf[0] = -1
            st_plen[0] = 0
            st_pz[0] = 1.0
            st_po[0] = 1.0
            st_pi[0] = -1
            sp = 1
            while sp > 0:
                sp -= 1
                node = st_node[sp]
                pf = st_pf[sp]
                plen = st_plen[sp]
                pz = st_pz[sp]
                po = st_po[sp]
                pi = st_pi[sp]
                fr = pf + 1
                base = fr * stride
                pbase = pf * stride
                for i in range(plen):
                    md[base + i] = md[pbase + i]
                    mz[base + i] = mz[pbase + i]
                    mo[base + i] = mo[pbase + i]
                    mw[base + i] = mw[pbase + i]
                # extend
                l = plen
                md[base + l] = pi
                mz[base + l] = pz
                mo[base + l] = po
                mw[base + l] = 1.0 if l == 0 else 0.0
                for i in range(l - 1, -1, -1):
                    mw[base + i + 1] += po * mw[base + i] * (i + 1) / (l + 1)
                    mw[base + i] = pz * mw[base + i] * (l - i) / (l + 1)
                    iters += 1
                plen = l + 1
                idx = off + node
                if left[idx] < 0:
                    v = val[idx]
                    l2 = plen - 1
                    for i in range(1, plen):
                        oi = mo[base + i]
                        zi = mz[base + i]
                        total = 0.0
                        nxt = mw[base + l2]
                        if oi != 0.0:
                            for j in range(l2 - 1, -1, -1):
                                tmp = nxt * (l2 + 1) / (j + 1)
                                total += tmp
                                nxt = mw[base + j] - tmp * zi * (l2 - j) / (l2 + 1)
                                iters += 1
                        else:
                            for j in range(l2 - 1, -1, -1):
                                total += mw[base + j] * (l2 + 1) / (zi * (l2 - j))
                                iters += 1
                        phi[mi, md[base + i]] += total * (oi - zi) * v
                        leaf_unwinds += 1
                else:
                    fidx = feat[idx]
                    a = left[idx]
                    b = right[idx]
                    if X[mi, fidx] <= thr[idx]:
                        hot, cold = a, b
                    else:
                        hot, cold = b, a
                    iz = 1.0
                    io = 1.0
                    k = -1
                    for p in range(1, plen):
                        if md[base + p] == fidx:
                            k = p
                            break
                    if k >= 0:
                        iz = mz[base + k]
                        io = mo[base + k]
                        l2 = plen - 1
                        nxt = mw[base + l2]
                        if io != 0.0:
                            for j in range(l2 - 1, -1, -1):
                                tj = mw[base + j]
                                mw[base + j] = nxt * (l2 + 1) / (j + 1)
                                nxt = tj - mw[base + j] * iz * (l2 - j) / (l2 + 1)
                                iters += 1
                        else:
                            for j in range(l2 - 1, -1, -1):
                                mw[base + j] = mw[base + j] * (l2 + 1) / (iz * (l2 - j))
                                iters += 1
                        for j in range(k, l2):
                            md[base + j] = md[base + j + 1]
                            mz[base + j] = mz[base + j + 1]
                            mo[base + j] = mo[base + j + 1]
                        plen -= 1
                    rj = cov[idx]
                    st_node[sp] = cold
                    st_pf[sp] = fr
                    st_plen[sp] = plen
                    st_pz[sp] = iz * cov[off + cold] / rj
                    st_po[sp] = 0.0
                    st_pi[sp] = fidx
                    sp += 1
                    st_node[sp] = hot
                    st_pf[sp] = fr
                    st_plen[sp] = plen
                    st_pz[sp] = iz * cov[off + hot] / rj
                    st_po[sp] = io
                    st_pi[sp] = fidx
                    sp += 1
    counters[ITERS] += iters
    counters[LEAF_UNWINDS] += leaf_unwinds


@njit(cache=True, nogil=True)
def _v1_kernel(left, right, feat, thr, val, cov, offsets, max_depth,
               X, phi, counters):
    n_trees = len(offsets) - 1
    stride = max_depth + 2
    md = np.empty(stride * stride, dtype=np.int64)
    mz = np.empty(stride * stride)
    mo = np.empty(stride * stride)
    mw = np.empty(stride * stride)
    wl = np.zeros(stride, dtype=np.int64)  # per-frame weight-sequence length
    cap = 2 * stride + 2
    st_node = np.empty(cap, dtype=np.int64)
    st_pf = np.empty(cap, dtype=np.int64)
    st_plen = np.empty(cap, dtype=np.int64)
    st_q = np.empty(cap)
    st_pz = np.empty(cap)
    st_po = np.empty(cap)
    st_pi = np.empty(cap, dtype=np.int64)
    iters = 0
    leaf_unwinds = 0
    for mi in range(X.shape[0]):
        for t in range(n_trees):
            off = offsets[t]
            st_node[0] = 0
            st_pf[0] = -1
            st_plen[0] = 0
            st_q[0] = 1.0
            st_pz[0] = 1.0
            st_po[0] = 1.0
            st_pi[0] = -1
            sp = 1
            while sp > 0:
                sp -= 1
                node = st_node[sp]
                pf = st_pf[sp]
                plen = st_plen[sp]
                q = st_q[sp]
                pz = st_pz[sp]
                po = st_po[sp]
                pi = st_pi[sp]
                fr = pf + 1
                base = fr * stride
                pbase = pf * stride
                lw = wl[pf] if pf >= 0 else 0
                for i in range(plen):
                    md[base + i] = md[pbase + i]
                    mz[base + i] = mz[pbase + i]
                    mo[base + i] = mo[pbase + i]
                for i in range(lw):
                    mw[base + i] = mw[pbase + i]
                # extend
                l = plen
                md[base + l] = pi
                mz[base + l] = pz
                mo[base + l] = po
                if po == 0.0:
                    q *= pz
                    for i in range(lw - 1, -1, -1):
                        mw[base + i] *= (l - i) / (l + 1)
                        iters += 1
                else:
                    mw[base + lw] = 1.0 if lw == 0 else 0.0
                    for i in range(lw - 1, -1, -1):
                        mw[base + i + 1] += mw[base + i] * (i + 1) / (l + 1)
                        mw[base + i] = pz * mw[base + i] * (l - i) / (l + 1)
                        iters += 1
                    lw += 1
                plen = l + 1
                wl[fr] = lw
                idx = off + node
                if left[idx] < 0:
                    v = val[idx]
                    l2 = plen - 1
                    s0 = 0.0
                    if plen > lw:
                        for j in range(lw - 1, -1, -1):
                            s0 -= mw[base + j] * (l2 + 1) / (l2 - j)
                            iters += 1
                        leaf_unwinds += 1
                    for i in range(1, plen):
                        oi = mo[base + i]
                        if oi == 0.0:
                            phi[mi, md[base + i]] += s0 * q * v
                        else:
                            zi = mz[base + i]
                            nxt = mw[base + lw - 1]
                            total = 0.0
                            for j in range(lw - 2, -1, -1):
                                tmp = nxt * (l2 + 1) / (j + 1)
                                total += tmp
                                nxt = mw[base + j] - tmp * zi * (l2 - j) / (l2 + 1)
                                iters += 1
                            phi[mi, md[base + i]] += total * q * (1.0 - zi) * v
                            leaf_unwinds += 1
                else:
                    fidx = feat[idx]
                    a = left[idx]
                    b = right[idx]
                    if X[mi, fidx] <= thr[idx]:
                        hot, cold = a, b
                    else:
                        hot, cold = b, a
                    iz = 1.0
                    io = 1.0
                    k = -1
                    for p in range(1, plen):
                        if md[base + p] == fidx:
                            k = p
                            break
                    if k >= 0:
                        iz = mz[base + k]
                        io = mo[base + k]
                        l2 = plen - 1
                        lw2 = lw - 1
                        if io == 0.0:
                            for j in range(lw2, -1, -1):
                                mw[base + j] *= (l2 + 1) / (l2 - j)
                                iters += 1
                            q /= iz
                        else:
                            nxt = mw[base + lw2]
                            for j in range(lw2 - 1, -1, -1):
                                tj = mw[base + j]
                                mw[base + j] = nxt * (l2 + 1) / (j + 1)
                                nxt = tj - mw[base + j] * iz * (l2 - j) / (l2 + 1)
                                iters += 1
                            lw -= 1
                            wl[fr] = lw
                        for j in range(k, l2):
                            md[base + j] = md[base + j + 1]
                            mz[base + j] = mz[base + j + 1]
                            mo[base + j] = mo[base + j + 1]
                        plen -= 1
                    rj = cov[idx]
                    st_node[sp] = cold
                    st_pf[sp] = fr
                    st_plen[sp] = plen
                    st_q[sp] = q
                    st_pz[sp] = iz * cov[off + cold] / rj
                    st_po[sp] = 0.0
                    st_pi[sp] = fidx
                    sp += 1
                    st_node[sp] = hot
                    st_pf[sp] = fr
                    st_plen[sp] = plen
                    st_q[sp] = q
                    st_pz[sp] = iz * cov[off + hot] / rj
                    st_po[sp] = io
                    st_pi[sp] = fidx
                    sp += 1
    counters[ITERS] += iters
    counters[LEAF_UNWINDS] += leaf_unwinds


@njit(cache=True, nogil=True)
def _score_kernel(left, right, feat, thr, val, cov, offsets, max_depth,
                  s_flat, s_offsets, s_widths, e_flat, X, phi, counters):
    n_trees = len(offsets) - 1
    stride = max_depth + 2
    md = np.empty(stride * stride, dtype=np.int64)
    mz = np.empty(stride * stride)
    mo = np.empty(stride * stride)
    cap = 2 * stride + 2
    st_node = np.empty(cap, dtype=np.int64)
    st_pf = np.empty(cap, dtype=np.int64)
    st_plen = np.empty(cap, dtype=np.int64)
    st_q = np.empty(cap)
    st_pz = np.empty(cap)
    st_po = np.empty(cap)
    st_pi = np.empty(cap, dtype=np.int64)
    lookups = 0
    for mi in range(X.shape[0]):
        for t in range(n_trees):
            off = offsets[t]
            soff = s_offsets[t]
            width = s_widths[t]
            c = 0
            st_node[0] = 0
            st_pf[0] = -1
            st_plen[0] = 0
            st_q[0] = 1.0
            st_pz[0] = 1.0
            st_po[0] = 1.0
            st_pi[0] = -1
            sp = 1
            while sp > 0:
                sp -= 1
                node = st_node[sp]
                pf = st_pf[sp]
                plen = st_plen[sp]
                q = st_q[sp]
                pz = st_pz[sp]
                po = st_po[sp]
                pi = st_pi[sp]
                fr = pf + 1
                base = fr * stride
                pbase = pf * stride
                for i in range(plen):
                    md[base + i] = md[pbase + i]
                    mz[base + i] = mz[pbase + i]
                    mo[base + i] = mo[pbase + i]
                l = plen
                md[base + l] = pi
                mz[base + l] = pz
                mo[base + l] = po
                if po == 0.0:
                    q *= pz
                plen = l + 1
                idx = off + node
                if left[idx] < 0:
                    v = val[idx]
                    b_sum = 0
                    for i in range(1, plen):
                        if mo[base + i] != 0.0:
                            b_sum += 1 << (i - 1)
                    row = soff + c * width
                    for i in range(1, plen):
                        if mo[base + i] == 0.0:
                            phi[mi, md[base + i]] -= s_flat[row + b_sum] * q * v
                        else:
                            phi[mi, md[base + i]] += (s_flat[row + b_sum - (1 << (i - 1))]
                                                      * q * (1.0 - mz[base + i]) * v)
                        lookups += 1
                    c += 1
                else:
                    iz = 1.0
                    io = 1.0
                    k = e_flat[idx]
                    if k != -1:
                        iz = mz[base + k]
                        io = mo[base + k]
                        for j in range(k, plen - 1):
                            md[base + j] = md[base + j + 1]
                            mz[base + j] = mz[base + j + 1]
                            mo[base + j] = mo[base + j + 1]
                        plen -= 1
                        if io == 0.0:
                            q /= iz
                    fidx = feat[idx]
                    a = left[idx]
                    b = right[idx]
                    rj = cov[idx]
                    left_hit = X[mi, fidx] <= thr[idx]
                    # push right then left: leaves must appear in the
                    # left-first order the tables were built in
                    st_node[sp] = b
                    st_pf[sp] = fr
                    st_plen[sp] = plen
                    st_q[sp] = q
                    st_pz[sp] = iz * cov[off + b] / rj
                    st_po[sp] = 0.0 if left_hit else io
                    st_pi[sp] = fidx
                    sp += 1
                    st_node[sp] = a
                    st_pf[sp] = fr
                    st_plen[sp] = plen
                    st_q[sp] = q
                    st_pz[sp] = iz * cov[off + a] / rj
                    st_po[sp] = io if left_hit else 0.0
                    st_pi[sp] = fidx
                    sp += 1
    counters[ITERS] += lookups


def run_original(flat: FlatEnsemble, X: np.ndarray, phi: np.ndarray,
                 counters: np.ndarray) -> None:
    _original_kernel(flat.left, flat.right, flat.features, flat.thresholds,
                     flat.values, flat.covers, flat.offsets, flat.max_depth,
                     np.ascontiguousarray(X), phi, counters)


def run_v1(flat: FlatEnsemble, X: np.ndarray, phi: np.ndarray,
           counters: np.ndarray) -> None:
    _v1_kernel(flat.left, flat.right, flat.features, flat.thresholds,
               flat.values, flat.covers, flat.offsets, flat.max_depth,
               np.ascontiguousarray(X), phi, counters)


def flatten_tables(tables) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Concatenate prep tables for the score kernel."""
    s_offsets = np.zeros(len(tables) + 1, dtype=np.int64)
    widths = np.zeros(len(tables), dtype=np.int64)
    for i, tb in enumerate(tables):
        widths[i] = tb.s.shape[1]
        s_offsets[i + 1] = s_offsets[i] + tb.s.size
    s_flat = (np.concatenate([tb.s.ravel() for tb in tables])
              if tables else np.zeros(0))
    e_flat = (np.concatenate([np.asarray(tb.e, dtype=np.int64) for tb in tables])
              if tables else np.zeros(0, dtype=np.int64))
    return s_flat, s_offsets[:-1], widths, e_flat


def run_score(flat: FlatEnsemble, s_flat, s_offsets, s_widths, e_flat,
              X: np.ndarray, phi: np.ndarray, counters: np.ndarray) -> None:
    _score_kernel(flat.left, flat.right, flat.features, flat.thresholds,
                  flat.values, flat.covers, flat.offsets, flat.max_depth,
                  s_flat, s_offsets, s_widths, e_flat,
                  np.ascontiguousarray(X), phi, counters)
