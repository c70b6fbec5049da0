import numpy as np
import pytest

from treeshap_kit import baseline, fastv1, fastv2, kernels, model, synth


@pytest.fixture(scope="module")
def setup():
    rng = np.random.default_rng(113)
    ensemble = synth.random_ensemble(rng, 8, 5, 6, base_offset=1.0)
    X = rng.random((20, 5))
    return ensemble, X


def test_predict_batch_matches_scalar_predict(setup):
    ensemble, X = setup
    got = kernels.predict_batch(kernels.flatten(ensemble), X)
    want = [model.predict(ensemble, x) for x in X]
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_kernels_match_reference_implementations(setup):
    """Compiled batch kernels agree with the per-sample code.

    Not bit-for-bit: the kernels accumulate the unwind sums inside the
    backward loop while the reference sums a list afterwards, so the
    floating-point addition order differs.
    """
    ensemble, X = setup
    flat = kernels.flatten(ensemble)
    n = ensemble.num_features
    counters = np.zeros(kernels.N_COUNTERS, dtype=np.int64)

    ref_orig = np.zeros((len(X), n))
    ref_v1 = np.zeros((len(X), n))
    ref_v2 = np.zeros((len(X), n))
    tables = fastv2.prep_ensemble(ensemble)
    for i, x in enumerate(X):
        for tree, table in zip(ensemble.trees, tables):
            baseline.shap_original(x, tree, ref_orig[i])
            fastv1.shap_v1(x, tree, ref_v1[i])
            fastv2.score(x, tree, table, ref_v2[i])

    phi = np.zeros((len(X), n))
    kernels.run_original(flat, X, phi, counters)
    np.testing.assert_allclose(phi, ref_orig, atol=1e-12)

    phi = np.zeros((len(X), n))
    kernels.run_v1(flat, X, phi, counters)
    np.testing.assert_allclose(phi, ref_v1, atol=1e-12)

    phi = np.zeros((len(X), n))
    sf, so, sw, ef = kernels.flatten_tables(tables)
    kernels.run_score(flat, sf, so, sw, ef, X, phi, counters)
    np.testing.assert_allclose(phi, ref_v2, atol=1e-12)


def test_counters_accumulate(setup):
    ensemble, X = setup
    flat = kernels.flatten(ensemble)
    c1 = np.zeros(kernels.N_COUNTERS, dtype=np.int64)
    c2 = np.zeros(kernels.N_COUNTERS, dtype=np.int64)
    phi = np.zeros((len(X), ensemble.num_features))
    kernels.run_original(flat, X, phi, c1)
    kernels.run_v1(flat, X, phi, c2)
    assert 0 < c2[kernels.ITERS] < c1[kernels.ITERS]
