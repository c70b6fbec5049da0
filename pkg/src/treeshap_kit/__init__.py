"""SHAP attributions for tree ensembles.

Most callers need only :func:`treeshap_kit.model.load_model` and
:func:`treeshap_kit.explainer.explain`; the rest of the package is the
algorithm variants, the precomputation cache, the benchmark harness, and
the brute-force verification oracle.
"""

__version__ = "0.1.0"
