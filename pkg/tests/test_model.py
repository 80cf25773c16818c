import numpy as np
import pytest

from earlydet import model, network
from earlydet.errors import InputError, MissingArtifactError
from earlydet.features import NormalizationConstants


def make_bundle(seed=0, num_classes=4):
    return model.ModelBundle(
        network.init_params(network.dnn1_layout(), seed),
        network.init_params(network.dnn2_layout(num_classes), seed + 1),
        NormalizationConstants(173.0, 181.5),
        num_classes,
    )


class TestCheckpoint:
    def test_roundtrip_bit_identical(self, tmp_path):
        bundle = make_bundle()
        path = tmp_path / "model.ckpt"
        model.save_checkpoint(path, bundle, config_hash="abc123")
        back = model.load_checkpoint(path)
        assert back.num_classes == 4
        assert back.norm == bundle.norm
        for orig, loaded in ((bundle.dnn1, back.dnn1), (bundle.dnn2, back.dnn2)):
            assert loaded.layout == orig.layout
            for a, b in zip(orig.layers, loaded.layers):
                assert np.array_equal(a.weights, b.weights)
                assert np.array_equal(a.biases, b.biases)

    def test_header_is_plain_text(self, tmp_path):
        path = tmp_path / "model.ckpt"
        model.save_checkpoint(path, make_bundle(), config_hash="abc123")
        with open(path, "rb") as fh:
            head = fh.read(400).split(b"end-header")[0].decode("ascii")
        assert "earlydet-model v1" in head
        assert "classes 4" in head
        assert "dropout 0.5 0.2" in head
        assert "config_hash abc123" in head

    def test_loaded_model_behaves_identically(self, tmp_path, rng):
        bundle = make_bundle(seed=9)
        path = tmp_path / "model.ckpt"
        model.save_checkpoint(path, bundle)
        back = model.load_checkpoint(path)
        x = rng.standard_normal((5, 320))
        p_orig, _ = network.forward_dnn1(x, bundle.dnn1)
        p_back, _ = network.forward_dnn1(x, back.dnn1)
        assert np.array_equal(p_orig, p_back)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            model.load_checkpoint(tmp_path / "nope.ckpt")

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"something else\n")
        with pytest.raises(InputError):
            model.load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "model.ckpt"
        model.save_checkpoint(path, make_bundle())
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 64])
        with pytest.raises(InputError):
            model.load_checkpoint(path)
