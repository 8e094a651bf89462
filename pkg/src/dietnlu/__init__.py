"""dietnlu: joint intent/entity recognition on sparse+dense features.

The package provides a transformer-based joint model, two baseline
classifiers, deterministic featurization, and a cross-validated
evaluation harness with dataset-shift reporting.
"""

__version__ = "0.1.0"
