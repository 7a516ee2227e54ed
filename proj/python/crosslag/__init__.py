"""Python bindings for the CrossLag forecaster."""

import json

from . import _core
from ._core import (
    CompatibilityError,
    ConfigError,
    Dataset,
    DimensionError,
    Error,
    LoadError,
    Model,
    NumericError,
    build_lag_vector,
    cross_lag_attention,
    estimate_mi,
    feature_mi,
    lag_bank,
    load_dataset,
    parse_dataset,
    reference_stack_census,
    run_cli,
    select_features,
    sha256_hex,
    split_sizes,
    valid_key_mask,
)

__version__ = _core.__version__


def default_outbreak_spec(seed=7):
    return json.loads(_core.default_outbreak_spec(seed))


def generate_synthetic(spec):
    """spec: dict in the `synth --spec` format. Returns (Dataset, metadata dict)."""
    ds, meta = _core.generate_synthetic(json.dumps(spec))
    return ds, json.loads(meta)


def model(config=None, seed=0):
    return Model(json.dumps(config or {}), seed)
