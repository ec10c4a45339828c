"""Residual integral solver networks."""

import json

from . import _core
from ._core import __version__, caputo_matrix, gamma, gauss_legendre, problem_ids, run_cli

__all__ = [
    "__version__",
    "caputo_matrix",
    "gamma",
    "gauss_legendre",
    "get_problem",
    "predict",
    "problem_ids",
    "run_cli",
    "self_check",
    "train",
]


def _problem_arg(problem):
    return problem if isinstance(problem, str) else json.dumps(problem)


def get_problem(problem_id):
    """Registry problem as a config-file dictionary."""
    return json.loads(_core.problem_json(problem_id))


def self_check(problem):
    """(max residual, tolerance) of the exact solution; accepts an id or a config dict."""
    return _core.self_check(_problem_arg(problem))


def train(problem, model="risn", seed=0, config=None):
    """Trains one model; returns (result dict, list of per-unknown parameter dicts)."""
    result, params = _core.train(_problem_arg(problem), model, seed, json.dumps(config) if config else "")
    return json.loads(result), json.loads(params)


def predict(params, x):
    """Evaluates one trained network at the rows of x."""
    return _core.predict(json.dumps(params), [list(map(float, row)) for row in x])
