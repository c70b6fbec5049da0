import numpy as np
import pytest

from treeshap_kit import fastv2, oracle, synth
from treeshap_kit.fastv2 import (BudgetExceeded, CacheDigestError, CacheError,
                                 CacheTruncatedError, CacheVersionError,
                                 TableMismatch, load_cache, prep,
                                 prep_ensemble, save_cache, score)
from treeshap_kit.model import Ensemble, model_digest


def test_prep_row_two_level(two_level):
    table = prep(two_level)
    # left-first leaf order: v=0, v=4, v=10
    np.testing.assert_allclose(table.s[1], [0.5, 0.75, 0.75, 0.0])
    np.testing.assert_allclose(table.s[0], [0.5, 0.75, 0.75, 0.0])
    np.testing.assert_allclose(table.s[2], [1.0, 0.0, 0.0, 0.0])


def test_prep_rows_match_subset_weight_oracle():
    rng = np.random.default_rng(41)
    for _ in range(20):
        nfeat = int(rng.integers(1, 5))
        tree = synth.random_tree(rng, nfeat, int(rng.integers(1, 6)))
        table = prep(tree)
        for row, path in enumerate(oracle.enumerate_paths(tree)):
            ref = oracle.subset_weights(path)
            size = len(path.unique_features)
            # the oracle numbers bits by first occurrence, prep by last
            # occurrence (duplicates are unwound and re-appended)
            last_order = list(dict.fromkeys(reversed(path.node_features)))[::-1]
            for mask, value in ref.u.items():
                feats = [path.unique_features[p] for p in range(size) if mask >> p & 1]
                prep_mask = sum(1 << last_order.index(f) for f in feats)
                assert table.s[row, prep_mask] == pytest.approx(value, abs=1e-12), \
                    f"row {row} subset {feats}"
            # everything past this path's subset range stays zero
            assert not table.s[row, 1 << size:].any()


def test_prep_is_sample_independent_and_deterministic(two_level):
    a, b = prep(two_level), prep(two_level)
    np.testing.assert_array_equal(a.s, b.s)
    np.testing.assert_array_equal(a.e, b.e)


def test_prep_budget(two_level):
    assert fastv2.table_bytes(two_level) == 3 * 4 * 8
    with pytest.raises(BudgetExceeded):
        prep(two_level, budget_bytes=fastv2.table_bytes(two_level) - 1)
    prep(two_level, budget_bytes=fastv2.table_bytes(two_level))


def test_prep_duplicate_feature_unwind(duplicated):
    table = prep(duplicated)
    assert table.e[1] == 1  # inner f0 split points at the root occurrence
    for x in ([0.1], [0.3], [0.6]):
        ref, _ = oracle.shap_bruteforce(x, duplicated, 1)
        np.testing.assert_allclose(score(x, duplicated, table), ref, atol=1e-12)


def test_score_hand_fixtures(stump, two_level):
    np.testing.assert_allclose(score([0.2], stump, prep(stump)), [-0.8])
    np.testing.assert_allclose(score([0.9], stump, prep(stump)), [1.2])
    np.testing.assert_allclose(
        score([0.3, 0.7], two_level, prep(two_level)), [-3.5, 1.5], atol=1e-12)


def test_score_random_trees_match_oracle():
    rng = np.random.default_rng(43)
    for _ in range(30):
        nfeat = int(rng.integers(1, 6))
        tree = synth.random_tree(rng, nfeat, int(rng.integers(1, 6)))
        table = prep(tree)
        for x in rng.random((5, nfeat)):
            ref, _ = oracle.shap_bruteforce(x, tree, nfeat)
            np.testing.assert_allclose(score(x, tree, table), ref, atol=1e-10)


def test_score_rejects_mismatched_table(stump, two_level):
    with pytest.raises(TableMismatch):
        score([0.2, 0.2], two_level, prep(stump))


def test_cache_roundtrip_bit_identical(tmp_path):
    rng = np.random.default_rng(47)
    ensemble = synth.random_ensemble(rng, 5, 4, 5)
    tables = prep_ensemble(ensemble)
    path = tmp_path / "tables.bin"
    save_cache(tables, path, model_digest(ensemble))
    loaded = load_cache(path, expected_digest=model_digest(ensemble))
    assert len(loaded) == len(tables)
    x = rng.random(4)
    for tree, a, b in zip(ensemble.trees, tables, loaded):
        np.testing.assert_array_equal(a.s, b.s)
        np.testing.assert_array_equal(a.e, b.e)
        assert (score(x, tree, a) == score(x, tree, b)).all()


def test_cache_digest_mismatch_detected(tmp_path):
    rng = np.random.default_rng(53)
    ensemble = synth.random_ensemble(rng, 2, 3, 3)
    path = tmp_path / "tables.bin"
    save_cache(prep_ensemble(ensemble), path, model_digest(ensemble))
    perturbed = synth.random_ensemble(np.random.default_rng(54), 2, 3, 3)
    with pytest.raises(CacheDigestError):
        load_cache(path, expected_digest=model_digest(perturbed))


def test_cache_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\0" * 64)
    with pytest.raises(CacheError):
        load_cache(path)


def test_cache_rejects_wrong_version(tmp_path):
    rng = np.random.default_rng(59)
    ensemble = synth.random_ensemble(rng, 1, 3, 3)
    path = tmp_path / "tables.bin"
    save_cache(prep_ensemble(ensemble), path, model_digest(ensemble))
    data = bytearray(path.read_bytes())
    data[4] = 99
    path.write_bytes(bytes(data))
    with pytest.raises(CacheVersionError):
        load_cache(path)


def test_cache_rejects_truncation(tmp_path):
    rng = np.random.default_rng(61)
    ensemble = synth.random_ensemble(rng, 2, 3, 4)
    path = tmp_path / "tables.bin"
    save_cache(prep_ensemble(ensemble), path, model_digest(ensemble))
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(CacheTruncatedError):
        load_cache(path)


def test_full_set_column_is_stored_as_zero(two_level):
    table = prep(two_level)
    assert table.s[0, 3] == 0.0 and table.s[1, 3] == 0.0
