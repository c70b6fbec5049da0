import numpy as np
import pytest

from treeshap_kit import fastv1, oracle, synth
from treeshap_kit.fastv1 import V1PathState, shap_v1, v1_extend, v1_unwind


def random_state(rng, depth):
    """A valid state built by extending from the root dummy."""
    state = v1_extend(V1PathState(), 1.0, 1, -1)
    for _ in range(depth):
        state = v1_extend(state, float(rng.uniform(0.1, 1.0)),
                          int(rng.integers(0, 2)), int(rng.integers(0, 6)))
    return state


def test_hand_fixtures(stump, two_level):
    np.testing.assert_allclose(shap_v1([0.2], stump), [-0.8])
    np.testing.assert_allclose(shap_v1([0.9], stump), [1.2])
    np.testing.assert_allclose(shap_v1([0.3, 0.7], two_level), [-3.5, 1.5], atol=1e-12)


def test_extend_unwind_inverse_property():
    """UNWIND(EXTEND(state, z, o, d), new position) restores (m, w, q)."""
    rng = np.random.default_rng(23)
    for _ in range(1000):
        state = random_state(rng, int(rng.integers(0, 7)))
        z = float(rng.uniform(0.05, 1.0))
        o = int(rng.integers(0, 2))
        back = v1_unwind(v1_extend(state, z, o, 9), len(state))
        np.testing.assert_allclose(back.w, state.w, atol=1e-12)
        assert back.q == pytest.approx(state.q, abs=1e-12)
        assert (back.d, back.o) == (state.d, state.o)
        np.testing.assert_allclose(back.z, state.z, atol=1e-12)


def test_weights_only_tracked_for_satisfying_features():
    rng = np.random.default_rng(2)
    state = v1_extend(V1PathState(), 1.0, 1, -1)
    satisfied = 1
    for _ in range(6):
        o = int(rng.integers(0, 2))
        satisfied += o
        state = v1_extend(state, 0.5, o, int(rng.integers(0, 6)))
    assert len(state.w) == satisfied
    assert len(state.d) == 7


def test_q_collects_nonsatisfying_ratios():
    state = v1_extend(V1PathState(), 1.0, 1, -1)
    state = v1_extend(state, 0.25, 0, 0)
    state = v1_extend(state, 0.5, 1, 1)
    state = v1_extend(state, 0.4, 0, 2)
    assert state.q == pytest.approx(0.1)


def test_leaf_aggregate_matches_subset_weight_table(two_level):
    """The unwind sums equal the exhaustive per-path aggregates."""
    paths = oracle.enumerate_paths(two_level)
    table = oracle.subset_weights(paths[1])  # value-4 leaf
    x = np.array([0.3, 0.7])  # f0 satisfied, f1 not
    state = v1_extend(V1PathState(), 1.0, 1, -1)
    state = v1_extend(state, 0.5, 1, 0)   # f0: ratio 4/8, satisfied
    state = v1_extend(state, 0.5, 0, 1)   # f1: ratio 2/4, not satisfied
    # S_k = {f1}: aggregate for f0 uses C = {} -> u = 0.5
    s_f0 = sum(v1_unwind(state, 1).w)
    assert s_f0 == pytest.approx(table.u[0b00])
    # aggregate for f1 uses C = D_k \ S_k = {f0} -> u = 0.75
    s_f1 = -sum(v1_unwind(state, -1).w)
    assert -s_f1 == pytest.approx(table.u[0b01])


def test_duplicated_feature(duplicated):
    for x in ([0.1], [0.3], [0.6]):
        ref, _ = oracle.shap_bruteforce(x, duplicated, 1)
        np.testing.assert_allclose(shap_v1(x, duplicated), ref, atol=1e-12)


def test_random_trees_match_oracle():
    rng = np.random.default_rng(31)
    for _ in range(30):
        nfeat = int(rng.integers(1, 6))
        tree = synth.random_tree(rng, nfeat, int(rng.integers(1, 6)))
        for x in rng.random((5, nfeat)):
            ref, _ = oracle.shap_bruteforce(x, tree, nfeat)
            np.testing.assert_allclose(shap_v1(x, tree), ref, atol=1e-10)
