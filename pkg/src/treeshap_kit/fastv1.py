"""Per-tree SHAP with weights tracked only for threshold-satisfying features.

The path state is the (m, w, q) triple: ``m`` records one (feature, ratio,
condition) entry per unique path feature plus a dummy at position 0, ``w``
holds one weight per subset size restricted to satisfying features, and
``q`` carries the ratio product of the non-satisfying features as a scalar.

This module is the readable single-sample implementation; batch execution
goes through the compiled kernels in :mod:`treeshap_kit.kernels`, which
implement the identical arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import TreeModel, goes_left


@dataclass
class V1PathState:
    d: list[int] = field(default_factory=list)    # feature per m entry, dummy -1 first
    z: list[float] = field(default_factory=list)  # covering ratio per m entry
    o: list[int] = field(default_factory=list)    # threshold condition per m entry
    w: list[float] = field(default_factory=list)
    q: float = 1.0

    def copy(self) -> "V1PathState":
        return V1PathState(list(self.d), list(self.z), list(self.o), list(self.w), self.q)

    def __len__(self) -> int:
        return len(self.d)


def v1_extend(state: V1PathState, p_z: float, p_o: int, p_i: int) -> V1PathState:
    """Incorporate one more split into (m, w, q)."""
    s = state.copy()
    l, lw = len(s.d), len(s.w)
    s.d.append(p_i)
    s.z.append(p_z)
    s.o.append(p_o)
    if p_o == 0:
        s.q *= p_z
        for i in range(lw - 1, -1, -1):
            s.w[i] *= (l - i) / (l + 1)
    else:
        s.w.append(1.0 if lw == 0 else 0.0)
        for i in range(lw - 1, -1, -1):
            s.w[i + 1] += s.w[i] * (i + 1) / (l + 1)
            s.w[i] = p_z * s.w[i] * (l - i) / (l + 1)
    return s


def v1_unwind(state: V1PathState, i: int) -> V1PathState:
    """Undo the extend for the feature at m position ``i``.

    ``i = -1`` leaves m and q alone and only reweights w by the final
    per-size factors; summing the result gives the aggregate for the
    non-satisfying features.
    """
    s = state.copy()
    l, lw = len(s.d) - 1, len(s.w) - 1
    if i < 0:
        for j in range(lw, -1, -1):
            s.w[j] *= (l + 1) / (l - j)
        return s
    if s.o[i] == 0:
        for j in range(lw, -1, -1):
            s.w[j] *= (l + 1) / (l - j)
        s.q /= s.z[i]
    else:
        n = s.w[lw]
        z_i = s.z[i]
        s.w.pop()
        for j in range(lw - 1, -1, -1):
            t = s.w[j]
            s.w[j] = n * (l + 1) / (j + 1)
            n = t - s.w[j] * z_i * (l - j) / (l + 1)
    del s.d[i], s.z[i], s.o[i]
    return s


def shap_v1(x, tree: TreeModel, phi: np.ndarray | None = None) -> np.ndarray:
    """Add this tree's SHAP contributions for one sample into phi."""
    x = np.asarray(x, dtype=np.float64)
    if phi is None:
        phi = np.zeros(len(x))

    def recurse(j: int, state: V1PathState, p_z: float, p_o: int, p_i: int):
        state = v1_extend(state, p_z, p_o, p_i)
        if tree.is_leaf(j):
            v = float(tree.values[j])
            s0 = 0.0
            if len(state) > len(state.w):
                s0 = -sum(v1_unwind(state, -1).w)
            for i in range(1, len(state)):
                if state.o[i] == 0:
                    phi[state.d[i]] += s0 * state.q * v
                else:
                    s = sum(v1_unwind(state, i).w)
                    phi[state.d[i]] += s * state.q * (1.0 - state.z[i]) * v
            return
        f, r = int(tree.features[j]), float(tree.covers[j])
        a, b = int(tree.left[j]), int(tree.right[j])
        hot, cold = (a, b) if goes_left(x[f], tree.thresholds[j]) else (b, a)
        i_z, i_o = 1.0, 1
        k = next((p for p in range(1, len(state)) if state.d[p] == f), None)
        if k is not None:
            i_z, i_o = state.z[k], state.o[k]
            state = v1_unwind(state, k)
        recurse(hot, state, i_z * tree.covers[hot] / r, i_o, f)
        recurse(cold, state, i_z * tree.covers[cold] / r, 0, f)

    recurse(0, V1PathState(), 1.0, 1, -1)
    return phi
