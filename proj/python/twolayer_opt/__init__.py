"""Two-layer network training with stationarity certificates."""

import json as _json

import numpy as _np

from ._twolayer import (
    Activation,
    ConfigError,
    Dataset,
    Error,
    FormatError,
    IoError,
    NumericsError,
    ShapeError,
    UnknownNameError,
    activation,
    activation_names,
    forward,
    generate_inputs,
    grad_theta,
    grad_W,
    label_with_teacher,
    load_dataset,
    loss,
    prox_ball,
    save_dataset,
    stationarity_system,
    suite_names,
    trajectory_columns,
    vector_apply,
)
from . import _twolayer as _core

__all__ = [
    "Activation", "ConfigError", "Dataset", "Error", "FormatError", "IoError",
    "NumericsError", "ShapeError", "UnknownNameError", "activation", "activation_names",
    "c1_probe", "certify", "collection_rank", "forward", "generate_inputs", "grad_theta",
    "grad_W", "label_with_teacher", "lipschitz_estimates", "load_dataset", "loss",
    "prox_ball", "run", "run_suite", "save_dataset", "stationarity_system", "suite_names",
    "svd_rank", "trajectory_columns", "vector_apply",
]


def _act(a):
    return activation(a) if isinstance(a, str) else a


def svd_rank(M, rank_tol=1e-10):
    return _json.loads(_core.svd_rank_json(_np.asarray(M, dtype=float), rank_tol))


def collection_rank(act, W, inputs, rank_tol=1e-10):
    W = None if W is None else _np.asarray(W, dtype=float)
    return _json.loads(_core.collection_rank_json(_act(act), W, inputs, rank_tol))


def lipschitz_estimates(W, theta, act, dataset):
    return _json.loads(_core.lipschitz_estimates_json(W, theta, _act(act), dataset))


def certify(W, theta, act, dataset, rank_tol=1e-10):
    return _json.loads(_core.certify_json(W, theta, _act(act), dataset, rank_tol))


def c1_probe(act, intervals, grid_points=64, tol=1e-8):
    return _json.loads(_core.c1_probe_json(_act(act), list(intervals), grid_points, tol))


def run(act, dataset, config=None):
    """Returns (W, theta, trajectory, info); trajectory columns follow trajectory_columns()."""
    W, theta, traj, info = _core.run_json(_act(act), dataset, _json.dumps(config or {}))
    return W, theta, traj, _json.loads(info)


def run_suite(suite, spec=None, threads=1):
    return _json.loads(_core.run_suite_json(suite, _json.dumps(spec or {}), threads))
