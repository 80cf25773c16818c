"""Minimal dense-network engine.

Two network shapes share one engine: a fore-/background classifier with a
2-unit softmax head (DNN-1) and a joint classifier/boundary-regressor whose
head splits into C softmax units and 2 sigmoid units (DNN-2). Hidden stack
is fc1:512 -> fc2:256 -> fc3:512, all ReLU, with inverted dropout after each
hidden layer. Gradients are hand-derived; the forward pass records a trace
that the loss modules backpropagate through.

All training arithmetic is float64 so finite-difference checks stay tight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError

HIDDEN_SIZES = (512, 256, 512)
FEATURE_DIM = 320

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
DEFAULT_LEARNING_RATE = 1e-4


@dataclass(frozen=True)
class NetworkLayout:
    """Layer widths and head structure of one network."""

    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int
    dropout_p: float
    # number of softmax units in the head; remaining units are sigmoid
    softmax_units: int

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden, self.output_dim)
        if any(d <= 0 for d in dims):
            raise ConfigurationError(f"non-positive layer size in {dims}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigurationError(f"dropout_p={self.dropout_p} outside [0, 1)")
        if not 0 < self.softmax_units <= self.output_dim:
            raise ConfigurationError(
                f"softmax_units={self.softmax_units} incompatible with "
                f"output_dim={self.output_dim}"
            )

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(out, in) shape of every weight matrix, hidden layers then head."""
        sizes = (self.input_dim, *self.hidden, self.output_dim)
        return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]


def dnn1_layout(input_dim: int = FEATURE_DIM) -> NetworkLayout:
    """Fore-/background network: 2-unit softmax head, dropout 0.5."""
    return NetworkLayout(input_dim, HIDDEN_SIZES, 2, 0.5, softmax_units=2)


def dnn2_layout(num_classes: int, input_dim: int = FEATURE_DIM) -> NetworkLayout:
    """Class + boundary network: C softmax units, 2 sigmoid units, dropout 0.2."""
    if num_classes < 1:
        raise ConfigurationError(f"num_classes={num_classes} must be >= 1")
    return NetworkLayout(
        input_dim, HIDDEN_SIZES, num_classes + 2, 0.2, softmax_units=num_classes
    )


def small_layout(
    input_dim: int,
    hidden: tuple[int, ...],
    softmax_units: int,
    sigmoid_units: int = 0,
    dropout_p: float = 0.0,
) -> NetworkLayout:
    """Arbitrary-width layout, mainly for gradient checks on tiny networks."""
    return NetworkLayout(
        input_dim, tuple(hidden), softmax_units + sigmoid_units, dropout_p, softmax_units
    )


@dataclass
class LayerParams:
    """Weights (out, in) and biases (out,) of one dense layer."""

    weights: np.ndarray
    biases: np.ndarray


@dataclass
class NetworkParams:
    """Ordered dense layers (hidden stack then head) plus their layout."""

    layout: NetworkLayout
    layers: list[LayerParams]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.layout,
            [LayerParams(l.weights.copy(), l.biases.copy()) for l in self.layers],
        )


@dataclass
class ForwardTrace:
    """Everything backpropagation needs to replay one forward pass exactly.

    ``inputs[i]`` is the activation entering layer i (post-ReLU and
    post-dropout for i > 0), so the combined ReLU/dropout multiplier of a
    hidden layer is recoverable as ``scale * (inputs[i+1] > 0)``: a unit is
    exactly zero iff the ReLU or its dropout mask silenced it.
    """

    inputs: list[np.ndarray]  # activation entering each layer
    dropout_masks: list[np.ndarray | None]  # keep masks; None in eval mode
    dropout_p: float
    train_mode: bool


@dataclass
class AdamState:
    """First/second-moment accumulators mirroring the parameter shapes."""

    m: list[LayerParams]
    v: list[LayerParams]
    step: int = 0


def init_params(layout: NetworkLayout, seed: int) -> NetworkParams:
    """Deterministic scaled-variance init: He for ReLU layers, 1/fan_in head.

    Biases start at zero.
    """
    rng = np.random.default_rng(seed)
    layers = []
    dims = layout.layer_dims
    for i, (out_dim, in_dim) in enumerate(dims):
        is_head = i == len(dims) - 1
        std = np.sqrt((1.0 if is_head else 2.0) / in_dim)
        w = rng.standard_normal((out_dim, in_dim)) * std
        layers.append(LayerParams(w, np.zeros(out_dim)))
    return NetworkParams(layout, layers)


def zeros_like_params(params: NetworkParams) -> list[LayerParams]:
    return [
        LayerParams(np.zeros_like(l.weights), np.zeros_like(l.biases))
        for l in params.layers
    ]


def init_adam_state(params: NetworkParams) -> AdamState:
    return AdamState(zeros_like_params(params), zeros_like_params(params), 0)


def _check_input(x: np.ndarray, layout: NetworkLayout) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != layout.input_dim:
        raise InputError(
            f"expected input dim {layout.input_dim}, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise InputError("non-finite values in network input")
    return x


def forward(
    x: np.ndarray,
    params: NetworkParams,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    """Raw head pre-activations for a batch, plus the backprop trace.

    ``mode`` is "train" (dropout active, requires ``rng``) or "eval" (pure,
    deterministic). Input may be a single vector or an (N, D) batch.
    """
    if mode not in ("train", "eval"):
        raise ConfigurationError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    if train and params.layout.dropout_p > 0 and rng is None:
        raise ConfigurationError("train mode with dropout requires an rng")

    a = _check_input(x, params.layout)
    p_drop = params.layout.dropout_p
    scale = 1.0 / (1.0 - p_drop) if p_drop > 0 else 1.0
    inputs, drop_masks = [], []
    for layer in params.layers[:-1]:
        inputs.append(a)
        z = a @ layer.weights.T
        z += layer.biases
        np.maximum(z, 0.0, out=z)
        a = z
        if train and p_drop > 0:
            keep = rng.random(a.shape, dtype=np.float32) >= p_drop
            np.multiply(a, keep, out=a)
            a *= scale
            drop_masks.append(keep)
        else:
            drop_masks.append(None)
    inputs.append(a)
    head = params.layers[-1]
    out = a @ head.weights.T
    out += head.biases
    trace = ForwardTrace(inputs, drop_masks, p_drop, train)
    return out, trace


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward_dnn1(
    x: np.ndarray,
    params: NetworkParams,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    """Fore-/background posterior. Index 1 is the foreground probability."""
    out, trace = forward(x, params, mode, rng)
    post = softmax(out)
    if np.asarray(x).ndim == 1:
        post = post[0]
    return post, trace


def forward_dnn2(
    x: np.ndarray,
    params: NetworkParams,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray, ForwardTrace]:
    """Class posterior (softmax over first C units) and distance pair
    (sigmoid over the last 2 units, ordered (d_on, d_off))."""
    out, trace = forward(x, params, mode, rng)
    c = params.layout.softmax_units
    yhat = softmax(out[:, :c])
    dhat = sigmoid(out[:, c:])
    if np.asarray(x).ndim == 1:
        yhat, dhat = yhat[0], dhat[0]
    return yhat, dhat, trace


def backprop(
    params: NetworkParams, trace: ForwardTrace, delta_out: np.ndarray
) -> list[LayerParams]:
    """Gradients of a scalar loss given dL/d(head pre-activations).

    Replays the recorded ReLU and dropout masks, so gradients are exact for
    the forward pass that produced the trace.
    """
    grads = [None] * len(params.layers)
    d = np.asarray(delta_out, dtype=np.float64)
    head = params.layers[-1]
    grads[-1] = LayerParams(d.T @ trace.inputs[-1], d.sum(axis=0))
    da = d @ head.weights
    dropped = trace.train_mode and trace.dropout_p > 0
    scale = 1.0 / (1.0 - trace.dropout_p) if dropped else 1.0
    for i in range(len(params.layers) - 2, -1, -1):
        # combined ReLU/dropout multiplier recovered from the stored activation
        np.multiply(da, trace.inputs[i + 1] > 0, out=da)
        if dropped:
            da *= scale
        dz = da
        grads[i] = LayerParams(dz.T @ trace.inputs[i], dz.sum(axis=0))
        if i > 0:
            da = dz @ params.layers[i].weights
    return grads


def add_l2_gradient(
    grads: list[LayerParams], params: NetworkParams, lam: float
) -> None:
    """In-place d/dW of (lam/2)||W||^2. Biases are not regularized."""
    if lam == 0.0:
        return
    for g, l in zip(grads, params.layers):
        g.weights += lam * l.weights


def l2_penalty(params: NetworkParams, lam: float) -> float:
    """(lam/2) * squared L2 norm of the weights (biases excluded)."""
    if lam == 0.0:
        return 0.0
    return 0.5 * lam * sum(
        float(np.dot(l.weights.reshape(-1), l.weights.reshape(-1)))
        for l in params.layers
    )


def adam_step(
    params: NetworkParams,
    grads: list[LayerParams],
    state: AdamState,
    lr: float = DEFAULT_LEARNING_RATE,
) -> tuple[NetworkParams, AdamState]:
    """One bias-corrected Adam update.

    Returns fresh parameters; the moment accumulators are updated in place
    and handed back, so the passed-in state must not be reused.
    """
    if len(grads) != len(params.layers):
        raise ConfigurationError(
            f"gradient count {len(grads)} != layer count {len(params.layers)}"
        )
    for g, l in zip(grads, params.layers):
        if g.weights.shape != l.weights.shape or g.biases.shape != l.biases.shape:
            raise ConfigurationError(
                f"gradient shape {g.weights.shape}/{g.biases.shape} does not match "
                f"parameter shape {l.weights.shape}/{l.biases.shape}"
            )

    t = state.step + 1
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t

    def update(value, grad, m, v):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * grad
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * np.square(grad)
        denom = v / bc2
        np.sqrt(denom, out=denom)
        denom += ADAM_EPS
        step = m / bc1
        step /= denom
        step *= lr
        return value - step

    new_layers = []
    for l, g, m, v in zip(params.layers, grads, state.m, state.v):
        w = update(l.weights, g.weights, m.weights, v.weights)
        b = update(l.biases, g.biases, m.biases, v.biases)
        new_layers.append(LayerParams(w, b))
    return NetworkParams(params.layout, new_layers), AdamState(state.m, state.v, t)


def flatten_params(params: NetworkParams) -> np.ndarray:
    """All parameters as one float64 vector, layer order, weights then biases."""
    return np.concatenate(
        [np.concatenate([l.weights.ravel(), l.biases.ravel()]) for l in params.layers]
    )


def unflatten_params(layout: NetworkLayout, vec: np.ndarray) -> NetworkParams:
    """Inverse of :func:`flatten_params`."""
    needed = sum(o * i + o for o, i in layout.layer_dims)
    if vec.size != needed:
        raise ConfigurationError(
            f"parameter vector length {vec.size} does not match layout ({needed} needed)"
        )
    layers = []
    pos = 0
    for out_dim, in_dim in layout.layer_dims:
        nw = out_dim * in_dim
        w = vec[pos : pos + nw].reshape(out_dim, in_dim).copy()
        pos += nw
        b = vec[pos : pos + out_dim].copy()
        pos += out_dim
        layers.append(LayerParams(w, b))
    return NetworkParams(layout, layers)
