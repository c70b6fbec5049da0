import numpy as np
import pytest

from conftest import reference_phi
from treeshap_kit import explainer, fastv2, kernels, model, synth
from treeshap_kit.model import Ensemble, SampleBatch, ValidationError


@pytest.fixture(scope="module")
def small_setup():
    rng = np.random.default_rng(71)
    ensemble = synth.random_ensemble(rng, 10, 6, 5, base_offset=0.25)
    batch = synth.random_batch(rng, 40, 6)
    ref, _ = reference_phi(ensemble.trees, batch.rows, 6)
    return ensemble, batch, ref


@pytest.mark.parametrize("algorithm", ["original", "v1", "v2"])
def test_all_algorithms_match_oracle(small_setup, algorithm):
    ensemble, batch, ref = small_setup
    attr = explainer.explain(ensemble, batch, algorithm=algorithm)
    assert attr.algorithm == algorithm
    np.testing.assert_allclose(attr.phi, ref, atol=1e-10)


@pytest.mark.parametrize("algorithm", ["original", "v1", "v2"])
def test_local_accuracy(small_setup, algorithm):
    ensemble, batch, _ = small_setup
    attr = explainer.explain(ensemble, batch, algorithm=algorithm)
    pred = kernels.predict_batch(kernels.flatten(ensemble), batch.rows)
    np.testing.assert_allclose(attr.phi.sum(axis=1) + attr.base_values, pred, atol=1e-8)


@pytest.mark.parametrize("algorithm", ["original", "v1", "v2"])
def test_worker_counts_are_byte_identical(small_setup, algorithm):
    ensemble, batch, _ = small_setup
    outputs = [explainer.explain(ensemble, batch, algorithm=algorithm, workers=w).phi
               for w in (1, 2, 4, 8)]
    for other in outputs[1:]:
        assert (outputs[0] == other).all()


def test_additivity_over_tree_copies(stump):
    """Two copies of the same tree double phi and the base value."""
    ensemble = Ensemble.from_trees([stump, stump], 1)
    batch = SampleBatch(np.array([[0.2]]))
    for algo in ("original", "v1", "v2"):
        attr = explainer.explain(ensemble, batch, algorithm=algo)
        assert attr.phi[0, 0] == pytest.approx(-1.6)
        assert attr.base_values[0] == pytest.approx(3.6)


def test_empty_batch(small_setup):
    ensemble, _, _ = small_setup
    attr = explainer.explain(ensemble, SampleBatch(np.zeros((0, 6))), algorithm="v1")
    assert attr.phi.shape == (0, 6)
    assert attr.base_values.shape == (0,)


def test_column_mismatch_rejected(small_setup):
    ensemble, _, _ = small_setup
    with pytest.raises(ValidationError):
        explainer.explain(ensemble, SampleBatch(np.zeros((2, 3))))


def test_unknown_algorithm_and_bad_workers(small_setup):
    ensemble, batch, _ = small_setup
    with pytest.raises(ValueError):
        explainer.explain(ensemble, batch, algorithm="v3")
    with pytest.raises(ValueError):
        explainer.explain(ensemble, batch, workers=0)


def test_expected_value_is_mean_prediction(small_setup):
    """Cover-weighted base equals the empty-set conditional expectation."""
    from treeshap_kit import oracle
    ensemble, _, _ = small_setup
    want = ensemble.base_offset + sum(
        oracle.expvalue(np.zeros(6), set(), t) for t in ensemble.trees)
    assert explainer.expected_value(ensemble) == pytest.approx(want, abs=1e-12)


def test_auto_select_thresholds():
    assert explainer.v2_sample_threshold(6) == 22
    assert explainer.v2_sample_threshold(10) == 205
    assert explainer.v2_sample_threshold(14) == 2341


def test_auto_select_monotone_and_never_original():
    rng = np.random.default_rng(73)
    ensemble = synth.random_ensemble(rng, 4, 5, 6, split_prob=1.0)
    threshold = explainer.v2_sample_threshold(ensemble.max_depth)
    assert explainer.auto_select(ensemble, threshold - 1) == "v1"
    assert explainer.auto_select(ensemble, threshold) == "v2"
    assert explainer.auto_select(ensemble, 10 * threshold) == "v2"
    for m in (1, threshold, 10 ** 6):
        assert explainer.auto_select(ensemble, m) != "original"


def test_auto_select_respects_budget():
    rng = np.random.default_rng(79)
    ensemble = synth.random_ensemble(rng, 4, 5, 6, split_prob=1.0)
    est = explainer.estimate(ensemble)
    many = 10 ** 6
    assert explainer.auto_select(ensemble, many, budget_bytes=est.total_bytes) == "v2"
    assert explainer.auto_select(ensemble, many, budget_bytes=est.total_bytes - 1) == "v1"


def test_estimate_matches_per_tree_tables():
    rng = np.random.default_rng(83)
    ensemble = synth.random_ensemble(rng, 6, 5, 5)
    est = explainer.estimate(ensemble)
    assert est.total_bytes == sum(fastv2.table_bytes(t) for t in ensemble.trees)
    assert est.max_tree_bytes == max(fastv2.table_bytes(t) for t in ensemble.trees)
    assert est.total_bytes <= est.global_bound_bytes


@pytest.mark.parametrize("depth,expected", [
    (6, 32 * 1024), (10, 8 * 1024 * 1024), (14, 2 * 1024 ** 3)])
def test_memory_global_bound_balanced_trees(depth, expected):
    """Complete balanced tree: leaves * 2^depth * 8 bytes."""
    rng = np.random.default_rng(depth)
    tree = synth.random_tree(rng, 3, depth, split_prob=1.0)
    assert tree.num_leaves == 1 << depth
    est = explainer.estimate(Ensemble.from_trees([tree], 3))
    assert est.global_bound_bytes == expected
    assert est.total_bytes == expected


def test_v2_streaming_matches_all_at_once(small_setup):
    ensemble, batch, _ = small_setup
    est = explainer.estimate(ensemble)
    full = explainer.explain(ensemble, batch, algorithm="v2")
    streamed = explainer.explain(ensemble, batch, algorithm="v2",
                                 budget_bytes=est.max_tree_bytes)
    assert (full.phi == streamed.phi).all()


def test_v2_budget_exceeded_is_explicit(small_setup):
    ensemble, batch, _ = small_setup
    with pytest.raises(fastv2.BudgetExceeded):
        explainer.explain(ensemble, batch, algorithm="v2", budget_bytes=16)


def test_v2_cache_path_matches_in_memory(tmp_path, small_setup):
    ensemble, batch, _ = small_setup
    path = tmp_path / "tables.bin"
    fastv2.save_cache(fastv2.prep_ensemble(ensemble), path,
                      fastv2.cache_digest_for(ensemble))
    from_cache = explainer.explain(ensemble, batch, algorithm="v2", cache_path=path)
    in_memory = explainer.explain(ensemble, batch, algorithm="v2")
    assert (from_cache.phi == in_memory.phi).all()


def test_csv_header_and_values(tmp_path, small_setup):
    ensemble, batch, _ = small_setup
    attr = explainer.explain(ensemble, batch, algorithm="v1")
    path = tmp_path / "phi.csv"
    explainer.write_attribution_csv(attr, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(f"phi_{i}" for i in range(6)) + ",base"
    parsed = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(parsed[:, :6], attr.phi)  # repr round-trips
    np.testing.assert_array_equal(parsed[:, 6], attr.base_values)
