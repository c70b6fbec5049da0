"""Reference polynomial-time SHAP: weights kept for every path feature.

Performance baseline for the faster variants. The weight sequence grows at
every split regardless of whether the sample satisfies the threshold, and
every path feature is unwound at the leaf. Single-sample implementation;
batch execution uses :mod:`treeshap_kit.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import TreeModel, goes_left


@dataclass
class BaselinePathState:
    d: list[int] = field(default_factory=list)    # feature per entry, dummy -1 first
    z: list[float] = field(default_factory=list)  # covering ratio (hot*cold product)
    o: list[int] = field(default_factory=list)    # threshold condition
    w: list[float] = field(default_factory=list)  # one weight per subset size

    def copy(self) -> "BaselinePathState":
        return BaselinePathState(list(self.d), list(self.z), list(self.o), list(self.w))

    def __len__(self) -> int:
        return len(self.d)


def _extend(s: BaselinePathState, p_z: float, p_o: int, p_i: int) -> BaselinePathState:
    s = s.copy()
    l = len(s.d)
    s.d.append(p_i)
    s.z.append(p_z)
    s.o.append(p_o)
    s.w.append(1.0 if l == 0 else 0.0)
    for i in range(l - 1, -1, -1):
        s.w[i + 1] += p_o * s.w[i] * (i + 1) / (l + 1)
        s.w[i] = p_z * s.w[i] * (l - i) / (l + 1)
    return s


def _unwind(s: BaselinePathState, i: int) -> BaselinePathState:
    s = s.copy()
    l = len(s.d) - 1
    n = s.w[l]
    z_i, o_i = s.z[i], s.o[i]
    s.w.pop()
    if o_i != 0:
        for j in range(l - 1, -1, -1):
            t = s.w[j]
            s.w[j] = n * (l + 1) / (j + 1)
            n = t - s.w[j] * z_i * (l - j) / (l + 1)
    else:
        for j in range(l - 1, -1, -1):
            s.w[j] = s.w[j] * (l + 1) / (z_i * (l - j))
    del s.d[i], s.z[i], s.o[i]
    return s


def shap_original(x, tree: TreeModel, phi: np.ndarray | None = None) -> np.ndarray:
    """Add this tree's SHAP contributions for one sample into phi."""
    x = np.asarray(x, dtype=np.float64)
    if phi is None:
        phi = np.zeros(len(x))

    def recurse(j: int, state: BaselinePathState, p_z: float, p_o: int, p_i: int):
        state = _extend(state, p_z, p_o, p_i)
        if tree.is_leaf(j):
            v = float(tree.values[j])
            for i in range(1, len(state)):
                s = sum(_unwind(state, i).w)
                phi[state.d[i]] += s * (state.o[i] - state.z[i]) * v
            return
        f, r = int(tree.features[j]), float(tree.covers[j])
        a, b = int(tree.left[j]), int(tree.right[j])
        hot, cold = (a, b) if goes_left(x[f], tree.thresholds[j]) else (b, a)
        i_z, i_o = 1.0, 1
        k = next((p for p in range(1, len(state)) if state.d[p] == f), None)
        if k is not None:
            i_z, i_o = state.z[k], state.o[k]
            state = _unwind(state, k)
        recurse(hot, state, i_z * tree.covers[hot] / r, i_o, f)
        recurse(cold, state, i_z * tree.covers[cold] / r, 0, f)

    recurse(0, BaselinePathState(), 1.0, 1, -1)
    return phi
