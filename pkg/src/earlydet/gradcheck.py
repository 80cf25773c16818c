"""Finite-difference verification of the analytic loss gradients.

Central differences over every parameter of small random networks, compared
against the gradients reported by the loss functions. Dropout is disabled so
the loss is a deterministic function of the parameters. Used by the test
suite and by the ``check-gradients`` CLI command.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import losses, network
from .network import NetworkParams

FD_STEP = 1e-6
# |a - b| / max(|a| + |b|, floor): the floor keeps near-zero entries from
# turning finite-difference noise into spurious relative errors
REL_ERROR_FLOOR = 1e-3


def finite_difference_gradients(
    loss_fn: Callable[[NetworkParams], float],
    params: NetworkParams,
    h: float = FD_STEP,
) -> np.ndarray:
    """Central-difference gradient of a scalar loss over all parameters."""
    theta = network.flatten_params(params)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + h
        up = loss_fn(network.unflatten_params(params.layout, theta))
        theta[i] = orig - h
        down = loss_fn(network.unflatten_params(params.layout, theta))
        theta[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad


def relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), REL_ERROR_FLOOR)
    return np.abs(analytic - numeric) / denom


def _flatten_grads(grads) -> np.ndarray:
    return np.concatenate(
        [np.concatenate([g.weights.ravel(), g.biases.ravel()]) for g in grads]
    )


def _randomize_biases(params: NetworkParams, rng: np.random.Generator) -> None:
    # zero biases can cascade into pre-activations sitting exactly on the
    # ReLU kink, where central differences and subgradients legitimately
    # disagree; random biases keep the sampled point differentiable
    for layer in params.layers:
        layer.biases[:] = rng.normal(0.0, 0.1, layer.biases.shape)


def _random_weighted_case(seed: int):
    rng = np.random.default_rng(seed)
    layout = network.small_layout(7, (8, 6, 8), softmax_units=2)
    params = network.init_params(layout, seed)
    _randomize_biases(params, rng)
    n = int(rng.integers(1, 6))
    x = rng.standard_normal((n, layout.input_dim))
    labels = rng.integers(0, 2, n)
    y = np.eye(2)[labels]
    fg = labels == 1
    cfg = losses.WeightedLossConfig(
        fg_weight=float(rng.uniform(1.0, 3.0)),
        bg_weight=float(rng.uniform(0.5, 2.0)),
        reg_weight=float(rng.uniform(0.0, 2e-3)),
    )

    def loss_at(p: NetworkParams) -> float:
        return losses.weighted_loss(x, y, fg, p, cfg).total

    report = losses.weighted_loss(x, y, fg, params, cfg)
    return params, loss_at, report


def _random_multitask_case(seed: int, num_classes: int = 3):
    rng = np.random.default_rng(seed)
    layout = network.small_layout(7, (8, 6, 8), softmax_units=num_classes, sigmoid_units=2)
    params = network.init_params(layout, seed)
    _randomize_biases(params, rng)
    n = int(rng.integers(1, 6))
    x = rng.standard_normal((n, layout.input_dim))
    y = np.eye(num_classes)[rng.integers(0, num_classes, n)]
    d = rng.uniform(0.0, 1.0, (n, 2))
    cfg = losses.MultitaskLossConfig(
        class_weight=float(rng.uniform(0.5, 2.0)),
        dist_weight=float(rng.uniform(0.5, 3.0)),
        conf_weight=float(rng.uniform(0.5, 2.0)),
        reg_weight=float(rng.uniform(0.0, 2e-3)),
    )

    def loss_at(p: NetworkParams) -> float:
        return losses.multitask_loss(x, y, d, p, cfg).total

    report = losses.multitask_loss(x, y, d, params, cfg)
    return params, loss_at, report


def check_case(kind: str, seed: int) -> dict:
    """Max relative analytic-vs-numeric gradient error for one random case."""
    if kind == "weighted":
        params, loss_at, report = _random_weighted_case(seed)
    elif kind == "multitask":
        params, loss_at, report = _random_multitask_case(seed)
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    numeric = finite_difference_gradients(loss_at, params)
    analytic = _flatten_grads(report.gradients)
    err = relative_errors(analytic, numeric)
    return {
        "kind": kind,
        "seed": seed,
        "max_rel_error": float(err.max()),
        "num_params": int(err.size),
    }


def run_suite(num_seeds: int = 20, start_seed: int = 0) -> dict:
    """Gradient-check both losses over ``num_seeds`` random tiny networks."""
    cases = []
    for s in range(start_seed, start_seed + num_seeds):
        cases.append(check_case("weighted", s))
        cases.append(check_case("multitask", s))
    return {
        "max_rel_error": max(c["max_rel_error"] for c in cases),
        "fd_step": FD_STEP,
        "num_cases": len(cases),
        "cases": cases,
    }
