import json

import numpy as np
import pytest

from earlydet import features as feat
from earlydet import synth
from earlydet.errors import ConfigurationError
from earlydet.features import FeatureConfig, NormalizationConstants
from earlydet.synth import AnnotatedStream, EventInterval, StreamSpec

CFG = FeatureConfig()


def small_spec(**kwargs) -> StreamSpec:
    defaults = dict(duration_s=20.0, events_per_class=1, seed=7)
    defaults.update(kwargs)
    return StreamSpec(**defaults)


class TestSynthesizeStream:
    def test_deterministic_per_seed(self):
        a = synth.synthesize_stream(small_spec())
        b = synth.synthesize_stream(small_spec())
        assert np.array_equal(a.audio.samples, b.audio.samples)
        assert a.events == b.events

    def test_different_seed_differs(self):
        a = synth.synthesize_stream(small_spec(seed=1))
        b = synth.synthesize_stream(small_spec(seed=2))
        assert not np.array_equal(a.audio.samples, b.audio.samples)

    def test_zero_events_pure_noise(self):
        stream = synth.synthesize_stream(small_spec(events_per_class=0))
        assert stream.events == []
        assert abs(float(np.std(stream.audio.samples)) - 0.01) < 0.002

    def test_fifty_events_disjoint_in_120s(self):
        stream = synth.synthesize_stream(StreamSpec(events_per_class=10, seed=3))
        assert len(stream.events) == 50
        # oracle: pairwise disjointness via sorted scan
        ordered = sorted(stream.events, key=lambda e: e.onset)
        for prev, cur in zip(ordered, ordered[1:]):
            assert prev.offset < cur.onset
        num_frames = feat.frame_count(stream.audio.samples.size, CFG)
        assert all(0 <= e.onset <= e.offset < num_frames for e in stream.events)

    def test_overfull_schedule_rejected(self):
        with pytest.raises(ConfigurationError):
            synth.synthesize_stream(small_spec(duration_s=10.0, events_per_class=3))

    def test_events_audible_above_noise(self):
        stream = synth.synthesize_stream(small_spec(seed=11))
        samples = stream.audio.samples
        ev = stream.events[0]
        inside = samples[ev.onset * CFG.hop_len : ev.offset * CFG.hop_len]
        assert np.std(inside) > 5 * 0.01


@pytest.fixture(scope="module")
def streams():
    return [
        synth.synthesize_stream(small_spec(duration_s=25.0, seed=s)) for s in (0, 1)
    ]


@pytest.fixture(scope="module")
def tset(streams):
    return synth.make_training_set(streams, num_classes=5, cfg=CFG)


class TestTrainingSet:

    def test_every_frame_appears_exactly_once(self, streams, tset):
        total = sum(
            feat.frame_count(s.audio.samples.size, CFG) for s in streams
        )
        assert tset.x1.shape == (total, 320)
        assert tset.y1.shape == (total, 2)
        assert tset.fg.shape == (total,)

    def test_foreground_flags_match_membership_oracle(self, streams, tset):
        # brute force: a frame is foreground iff it lies inside any event
        flags = []
        for s in streams:
            m = feat.frame_count(s.audio.samples.size, CFG)
            for i in range(m):
                flags.append(any(e.onset <= i <= e.offset for e in s.events))
        assert np.array_equal(tset.fg, np.array(flags))
        assert np.array_equal(tset.y1[:, 1] == 1.0, tset.fg)

    def test_dnn2_count_is_sum_of_event_lengths(self, streams, tset):
        expected = sum(e.length for s in streams for e in s.events)
        assert tset.x2.shape[0] == expected
        assert tset.y2.shape == (expected, 5)
        assert tset.d2.shape == (expected, 2)

    def test_dnn2_labels_and_distances(self, streams, tset):
        # reconstruct the example block for the first event of stream 0
        ev = streams[0].events[0]
        block_y = tset.y2[: ev.length]
        assert np.all(block_y[:, ev.class_id] == 1.0)
        d = tset.d2[: ev.length] * np.array([tset.norm.max_on, tset.norm.max_off])
        assert np.allclose(d[:, 0], np.arange(ev.length))
        assert np.allclose(d[:, 1], np.arange(ev.length)[::-1])

    def test_normalized_distances_in_unit_interval(self, tset):
        assert np.all((tset.d2 >= 0.0) & (tset.d2 <= 1.0))
        assert tset.d2.max() == 1.0

    def test_supplied_norm_constants_respected(self, streams):
        norm = NormalizationConstants(1000.0, 1000.0)
        tset = synth.make_training_set(streams, num_classes=5, cfg=CFG, norm=norm)
        assert tset.norm is norm
        assert tset.d2.max() < 1.0

    def test_class_separability_nearest_centroid(self):
        # events must be learnable: nearest-centroid on per-event mean
        # features classifies held-out events >90% correctly
        train = synth.synthesize_stream(StreamSpec(duration_s=60.0, events_per_class=4, seed=21))
        test = synth.synthesize_stream(StreamSpec(duration_s=60.0, events_per_class=4, seed=22))

        def event_means(stream):
            x = feat.extract_features(stream.audio, CFG)
            return [
                (e.class_id, x[e.onset : e.offset + 1].mean(axis=0))
                for e in stream.events
            ]

        centroids = {}
        for cid in range(5):
            vecs = [v for c, v in event_means(train) if c == cid]
            centroids[cid] = np.mean(vecs, axis=0)
        hits = 0
        test_means = event_means(test)
        for cid, v in test_means:
            pred = min(centroids, key=lambda c: float(np.sum((v - centroids[c]) ** 2)))
            hits += pred == cid
        assert hits / len(test_means) > 0.9


class TestManifest:
    def test_roundtrip(self, tmp_path):
        streams = [
            synth.synthesize_stream(small_spec(seed=s, duration_s=15.0)) for s in (5, 6)
        ]
        manifest = synth.write_dataset(
            tmp_path, streams, "m.json", extra_meta={"config_hash": "cafe"}
        )
        doc = json.loads(manifest.read_text())
        assert doc["config_hash"] == "cafe"
        assert doc["sample_rate"] == 44100
        loaded = synth.load_dataset(manifest)
        assert len(loaded) == 2
        for orig, back in zip(streams, loaded):
            assert back.events == orig.events
            assert back.audio.sample_rate == orig.audio.sample_rate
            assert np.max(np.abs(back.audio.samples - orig.audio.samples)) <= 1.0 / 32768.0

    def test_event_schema(self, tmp_path):
        stream = AnnotatedStream(
            feat.AudioBuffer(np.zeros(44100), 44100), [EventInterval(2, 10, 30)]
        )
        manifest = synth.write_dataset(tmp_path, [stream], "m.json")
        doc = json.loads(manifest.read_text())
        assert doc["streams"][0]["events"] == [
            {"class": 2, "onset_frame": 10, "offset_frame": 30}
        ]
