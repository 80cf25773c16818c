"""Training loops for both networks.

Single-threaded and deterministic for a given seed: parameter init, batch
shuffling, and dropout all derive from one seed sequence. Per-epoch loss
components are appended to a CSV log.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from . import losses, network
from .errors import InputError
from .network import NetworkParams


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 25
    batch_size: int = 256
    learning_rate: float = 1e-4
    seed: int = 0


def _epoch_logger(log_path, component_names, log_comment):
    if log_path is None:
        return None, None
    fh = open(log_path, "w", newline="")
    if log_comment:
        fh.write(f"# {log_comment}\n")
    writer = csv.writer(fh)
    writer.writerow(["epoch", "total", *component_names, "wall_time_s"])
    return fh, writer


def _train(
    params: NetworkParams,
    batch_loss,
    num_examples: int,
    settings: TrainSettings,
    component_names: list[str],
    log_path=None,
    log_comment: str | None = None,
) -> NetworkParams:
    if num_examples == 0:
        raise InputError("cannot train on an empty example set")
    ss = np.random.SeedSequence(settings.seed)
    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    state = network.init_adam_state(params)
    fh, writer = _epoch_logger(log_path, component_names, log_comment)
    try:
        for epoch in range(settings.epochs):
            t0 = time.perf_counter()
            order = shuffle_rng.permutation(num_examples)
            totals, comps = [], []
            for lo in range(0, num_examples, settings.batch_size):
                idx = order[lo : lo + settings.batch_size]
                report = batch_loss(idx, params, dropout_rng)
                params, state = network.adam_step(
                    params, report.gradients, state, settings.learning_rate
                )
                totals.append(report.total)
                comps.append([report.components[k] for k in component_names])
            if writer is not None:
                mean_comps = np.mean(comps, axis=0)
                writer.writerow(
                    [
                        epoch + 1,
                        f"{np.mean(totals):.6f}",
                        *(f"{v:.6f}" for v in mean_comps),
                        f"{time.perf_counter() - t0:.3f}",
                    ]
                )
    finally:
        if fh is not None:
            fh.close()
    return params


def train_dnn1(
    x: np.ndarray,
    y: np.ndarray,
    fg: np.ndarray,
    cfg: losses.WeightedLossConfig,
    settings: TrainSettings,
    log_path=None,
    log_comment: str | None = None,
) -> NetworkParams:
    """Fore-/background network on all frames, weighted cross-entropy."""
    params = network.init_params(network.dnn1_layout(x.shape[1]), settings.seed)

    def batch_loss(idx, p, rng):
        return losses.weighted_loss(x[idx], y[idx], fg[idx], p, cfg, mode="train", rng=rng)

    return _train(
        params, batch_loss, x.shape[0], settings, ["fg", "bg", "regularizer"],
        log_path, log_comment,
    )


def train_dnn2(
    x: np.ndarray,
    y: np.ndarray,
    d: np.ndarray,
    num_classes: int,
    cfg: losses.MultitaskLossConfig,
    settings: TrainSettings,
    log_path=None,
    log_comment: str | None = None,
) -> NetworkParams:
    """Class/boundary network on foreground frames, multitask loss."""
    params = network.init_params(
        network.dnn2_layout(num_classes, x.shape[1]), settings.seed
    )

    def batch_loss(idx, p, rng):
        return losses.multitask_loss(x[idx], y[idx], d[idx], p, cfg, mode="train", rng=rng)

    return _train(
        params,
        batch_loss,
        x.shape[0],
        settings,
        ["class", "dist", "conf", "regularizer"],
        log_path,
        log_comment,
    )
