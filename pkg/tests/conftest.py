import numpy as np
import pytest

from earlydet import network


def head_bias_params(layout: network.NetworkLayout, head_biases) -> network.NetworkParams:
    """All-zero parameters except the head biases: hidden activations are all
    zero, so the head output equals the bias vector exactly."""
    params = network.init_params(layout, 0)
    for layer in params.layers:
        layer.weights[:] = 0.0
        layer.biases[:] = 0.0
    params.layers[-1].biases[:] = np.asarray(head_biases, dtype=np.float64)
    return params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
