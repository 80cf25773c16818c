"""Trained model bundle and its on-disk checkpoint format.

Checkpoint layout: ASCII header lines (layouts, class count, dropout,
distance-normalization constants, config hash) terminated by ``end-header``,
followed by the raw little-endian float64 parameters of both networks in
declared layer order (weights row-major, then biases, per layer).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import network
from .errors import InputError, MissingArtifactError
from .features import NormalizationConstants
from .network import NetworkParams

_MAGIC = "earlydet-model v1"


@dataclass
class ModelBundle:
    dnn1: NetworkParams
    dnn2: NetworkParams
    norm: NormalizationConstants
    num_classes: int


def save_checkpoint(path, bundle: ModelBundle, config_hash: str = "-") -> None:
    l1, l2 = bundle.dnn1.layout, bundle.dnn2.layout
    header = "\n".join(
        [
            _MAGIC,
            f"config_hash {config_hash or '-'}",
            f"classes {bundle.num_classes}",
            f"dnn1-layout {l1.input_dim} {' '.join(map(str, l1.hidden))} {l1.output_dim}",
            f"dnn2-layout {l2.input_dim} {' '.join(map(str, l2.hidden))} {l2.output_dim}",
            f"dropout {l1.dropout_p} {l2.dropout_p}",
            f"norm {bundle.norm.max_on!r} {bundle.norm.max_off!r}",
            "end-header",
            "",
        ]
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(network.flatten_params(bundle.dnn1).astype("<f8").tobytes())
        fh.write(network.flatten_params(bundle.dnn2).astype("<f8").tobytes())


def load_checkpoint(path) -> ModelBundle:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        fields: dict[str, list[str]] = {}
        first = fh.readline().decode("ascii").strip()
        if first != _MAGIC:
            raise InputError(f"{path}: not a model checkpoint")
        while True:
            line = fh.readline().decode("ascii").strip()
            if not line:
                raise InputError(f"{path}: truncated header")
            if line == "end-header":
                break
            key, *rest = line.split()
            fields[key] = rest
        raw = np.frombuffer(fh.read(), dtype="<f8")

    num_classes = int(fields["classes"][0])
    drop1, drop2 = (float(v) for v in fields["dropout"])
    dims1 = [int(v) for v in fields["dnn1-layout"]]
    dims2 = [int(v) for v in fields["dnn2-layout"]]
    layout1 = network.NetworkLayout(
        dims1[0], tuple(dims1[1:-1]), dims1[-1], drop1, softmax_units=dims1[-1]
    )
    layout2 = network.NetworkLayout(
        dims2[0], tuple(dims2[1:-1]), dims2[-1], drop2, softmax_units=num_classes
    )
    norm = NormalizationConstants(*(float(v) for v in fields["norm"]))

    n1 = sum(o * i + o for o, i in layout1.layer_dims)
    n2 = sum(o * i + o for o, i in layout2.layer_dims)
    if raw.size != n1 + n2:
        raise InputError(
            f"{path}: expected {n1 + n2} parameters, found {raw.size}"
        )
    dnn1 = network.unflatten_params(layout1, raw[:n1].copy())
    dnn2 = network.unflatten_params(layout2, raw[n1:].copy())
    return ModelBundle(dnn1, dnn2, norm, num_classes)
