import numpy as np
import pytest

from treeshap_kit import baseline, oracle, synth
from treeshap_kit.baseline import BaselinePathState, _extend, _unwind


def test_hand_fixtures(stump, two_level):
    np.testing.assert_allclose(baseline.shap_original([0.2], stump), [-0.8])
    np.testing.assert_allclose(baseline.shap_original([0.9], stump), [1.2])
    np.testing.assert_allclose(
        baseline.shap_original([0.3, 0.7], two_level), [-3.5, 1.5], atol=1e-12)


def test_duplicated_feature(duplicated):
    for x in ([0.1], [0.3], [0.6]):
        ref, _ = oracle.shap_bruteforce(x, duplicated, 1)
        np.testing.assert_allclose(baseline.shap_original(x, duplicated), ref, atol=1e-12)


def test_extend_unwind_are_inverse():
    rng = np.random.default_rng(5)
    for _ in range(300):
        state = BaselinePathState()
        state = _extend(state, 1.0, 1, -1)
        depth = int(rng.integers(1, 7))
        for _ in range(depth):
            state = _extend(state, float(rng.uniform(0.1, 1.0)),
                            int(rng.integers(0, 2)), int(rng.integers(0, 5)))
        i = int(rng.integers(1, len(state)))
        z, o, d = float(rng.uniform(0.1, 1.0)), int(rng.integers(0, 2)), 9
        back = _unwind(_extend(state, z, o, d), len(state))
        np.testing.assert_allclose(back.w, state.w, atol=1e-12)
        assert back.d == state.d


def test_random_trees_match_oracle():
    rng = np.random.default_rng(17)
    for _ in range(30):
        nfeat = int(rng.integers(1, 6))
        tree = synth.random_tree(rng, nfeat, int(rng.integers(1, 6)))
        for x in rng.random((5, nfeat)):
            ref, _ = oracle.shap_bruteforce(x, tree, nfeat)
            got = baseline.shap_original(x, tree)
            np.testing.assert_allclose(got, ref, atol=1e-10)


def test_accumulates_into_phi(stump):
    phi = np.zeros(1)
    baseline.shap_original([0.2], stump, phi)
    baseline.shap_original([0.2], stump, phi)
    assert phi[0] == pytest.approx(-1.6)
