"""The two tailored training losses, with exact analytic gradients.

* Weighted cross-entropy for fore-/background classification: foreground
  misses can be penalized harder than background misses (defaults 2:1).
* Multitask loss for the class/boundary network: cross-entropy class term,
  squared onset/offset distance term, and a confidence term that scales the
  class posterior by the intersection-over-union of predicted and true
  event extents, tying classification and boundary quality together.

Both losses add an L2 penalty on the weights (biases excluded). The distance
and confidence terms are implemented as positive mean squared errors so that
minimization is well-posed.

Gradients flow through the softmax/sigmoid heads and, for the confidence
term, through the predicted distances inside the I/U ratio. Dropout masks
are fixed per call: the returned gradients are exact for the single forward
pass performed here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import network
from .errors import InputError
from .network import LayerParams, NetworkParams

LOG_CLAMP = 1e-12
IOU_EPS = 1e-8


@dataclass(frozen=True)
class WeightedLossConfig:
    """Penalty weights for the fore-/background loss."""

    fg_weight: float = 2.0
    bg_weight: float = 1.0
    reg_weight: float = 1e-3


@dataclass(frozen=True)
class MultitaskLossConfig:
    """Term weights for the class/distance/confidence loss."""

    class_weight: float = 1.0
    dist_weight: float = 2.0
    conf_weight: float = 1.0
    reg_weight: float = 1e-3


@dataclass
class LossReport:
    """Scalar loss, its unweighted components, and parameter-shaped gradients.

    ``total`` equals the config-weighted sum of ``components`` (the
    regularizer enters with weight 1; its own factor is already inside).
    """

    total: float
    components: dict[str, float]
    gradients: list[LayerParams]


def _clamped_log(p: np.ndarray) -> np.ndarray:
    return np.log(np.clip(p, LOG_CLAMP, 1.0))


def _validate_batch(x: np.ndarray, *targets: np.ndarray) -> tuple[np.ndarray, ...]:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] == 0:
        raise InputError("empty batch")
    out = [x]
    for t in targets:
        t = np.atleast_2d(np.asarray(t, dtype=np.float64))
        if t.shape[0] != x.shape[0]:
            raise InputError(
                f"batch size mismatch: {x.shape[0]} inputs vs {t.shape[0]} targets"
            )
        out.append(t)
    return tuple(out)


def weighted_loss(
    x: np.ndarray,
    y: np.ndarray,
    fg: np.ndarray,
    params: NetworkParams,
    cfg: WeightedLossConfig,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> LossReport:
    """Class-weighted cross-entropy over a fore-/background batch.

    ``y`` is (N, 2) one-hot with index 1 = foreground; ``fg`` is the boolean
    foreground indicator driving the per-example penalty weight.
    """
    x, y = _validate_batch(x, y)
    fg = np.asarray(fg, dtype=bool).reshape(-1)
    if fg.shape[0] != x.shape[0]:
        raise InputError("fg flag count does not match batch size")

    logits, trace = network.forward(x, params, mode, rng)
    probs = network.softmax(logits)
    n = x.shape[0]

    ce = -np.sum(y * _clamped_log(probs), axis=1)
    fg_term = float(np.sum(ce[fg])) / n
    bg_term = float(np.sum(ce[~fg])) / n
    reg = network.l2_penalty(params, cfg.reg_weight)
    total = cfg.fg_weight * fg_term + cfg.bg_weight * bg_term + reg

    w = np.where(fg, cfg.fg_weight, cfg.bg_weight)
    delta = (probs - y) * w[:, None] / n
    grads = network.backprop(params, trace, delta)
    network.add_l2_gradient(grads, params, cfg.reg_weight)

    return LossReport(
        total, {"fg": fg_term, "bg": bg_term, "regularizer": reg}, grads
    )


def iou_terms(d: np.ndarray, d_hat: np.ndarray) -> tuple[float, float]:
    """Intersection and union of true and predicted (d_on, d_off) extents.

    I = min(d_on, d̂_on) + min(d_off, d̂_off), U with max; 0 <= I <= U.
    """
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    d_hat = np.asarray(d_hat, dtype=np.float64).reshape(-1)
    if d.shape != (2,) or d_hat.shape != (2,):
        raise InputError("iou_terms expects two 2-component distance pairs")
    if np.any(d < 0) or np.any(d_hat < 0):
        raise InputError("distance components must be >= 0")
    i = float(np.minimum(d, d_hat).sum())
    u = float(np.maximum(d, d_hat).sum())
    return i, u


def multitask_loss(
    x: np.ndarray,
    y: np.ndarray,
    d: np.ndarray,
    params: NetworkParams,
    cfg: MultitaskLossConfig,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> LossReport:
    """Joint class / distance / IoU-confidence loss for the multitask network.

    ``y`` is (N, C) one-hot over foreground classes, ``d`` the (N, 2)
    normalized onset/offset distances. The confidence term compares y with
    ŷ·(I/U); its gradient reaches both the class head and, via I/U, the
    distance head. At exact distance ties the I/U subgradient to the
    prediction is taken as 0 (ground-truth branch).
    """
    x, y, d = _validate_batch(x, y, d)
    if np.any(d < 0):
        raise InputError("distance targets must be >= 0")

    out, trace = network.forward(x, params, mode, rng)
    c = params.layout.softmax_units
    if y.shape[1] != c:
        raise InputError(f"expected {c}-class one-hot targets, got {y.shape[1]}")
    yhat = network.softmax(out[:, :c])
    dhat = network.sigmoid(out[:, c:])
    n = x.shape[0]

    e_class = float(np.mean(-np.sum(y * _clamped_log(yhat), axis=1)))
    diff = dhat - d
    e_dist = float(np.mean(np.sum(diff**2, axis=1)))

    inter = np.minimum(d, dhat).sum(axis=1)
    union = np.maximum(d, dhat).sum(axis=1)
    ratio = (inter + IOU_EPS) / (union + IOU_EPS)
    resid = y - yhat * ratio[:, None]
    e_conf = float(np.mean(np.sum(resid**2, axis=1)))

    reg = network.l2_penalty(params, cfg.reg_weight)
    total = (
        cfg.class_weight * e_class
        + cfg.dist_weight * e_dist
        + cfg.conf_weight * e_conf
        + reg
    )

    # class head: cross-entropy shortcut plus the confidence term pushed
    # back through the softmax Jacobian
    g_yhat = -2.0 * ratio[:, None] * resid
    vjp = yhat * (g_yhat - np.sum(g_yhat * yhat, axis=1, keepdims=True))
    delta_class = (cfg.class_weight * (yhat - y) + cfg.conf_weight * vjp) / n

    # distance head: squared-error term plus the confidence term through
    # the I/U ratio; min/max pick out which side each component moves
    de_dratio = -2.0 * np.sum(resid * yhat, axis=1)
    di = (dhat < d).astype(np.float64)
    du = (dhat > d).astype(np.float64)
    dratio_ddhat = (
        di * (union + IOU_EPS)[:, None] - (inter + IOU_EPS)[:, None] * du
    ) / ((union + IOU_EPS) ** 2)[:, None]
    g_dhat = (
        cfg.dist_weight * 2.0 * diff
        + cfg.conf_weight * de_dratio[:, None] * dratio_ddhat
    ) / n
    delta_dist = g_dhat * dhat * (1.0 - dhat)

    delta = np.concatenate([delta_class, delta_dist], axis=1)
    grads = network.backprop(params, trace, delta)
    network.add_l2_gradient(grads, params, cfg.reg_weight)

    return LossReport(
        total,
        {"class": e_class, "dist": e_dist, "conf": e_conf, "regularizer": reg},
        grads,
    )
