import numpy as np
import pytest

from earlydet import evaluate
from earlydet.errors import ConfigurationError
from earlydet.evaluate import MatchResult, StreamScores, compute_metrics, match_events
from earlydet.inference import DetectedEvent, ThresholdSet
from earlydet.synth import EventInterval


def det(onset, offset, cid=0):
    return DetectedEvent(cid, onset, offset, 1.0)


def tru(onset, offset, cid=0):
    return EventInterval(cid, onset, offset)


class TestMatchEvents:
    def test_mutual_center_containment_matches(self):
        m = match_events([det(10, 20)], [tru(8, 22)])
        assert m.pairs == [(0, 0)]
        assert m.unmatched_detected == [] and m.unmatched_truth == []

    def test_offcenter_detection_rejected(self):
        # center of [10, 40] is 25, outside [8, 22]
        m = match_events([det(10, 40)], [tru(8, 22)])
        assert m.pairs == []
        assert m.unmatched_detected == [0]
        assert m.unmatched_truth == [0]

    def test_empty_detections_all_deletions(self):
        m = match_events([], [tru(0, 10), tru(20, 30)])
        assert m.tp == 0 and m.fp == 0 and m.fn == 2

    def test_matching_is_injective(self, rng):
        for _ in range(20):
            dets = [det(int(o), int(o + rng.integers(2, 20))) for o in rng.integers(0, 200, 8)]
            trus = [tru(int(o), int(o + rng.integers(2, 20))) for o in rng.integers(0, 200, 8)]
            m = match_events(dets, trus)
            det_ids = [a for a, _ in m.pairs] + m.unmatched_detected
            tru_ids = [b for _, b in m.pairs] + m.unmatched_truth
            assert sorted(det_ids) == list(range(8))
            assert sorted(tru_ids) == list(range(8))

    def test_greedy_time_order(self):
        # two detections both able to match the one truth: the earlier wins
        m = match_events([det(12, 18), det(10, 20)], [tru(10, 20)])
        assert m.pairs == [(1, 0)]  # detection starting at 10 comes first in time
        assert m.unmatched_detected == [0]


class TestComputeMetrics:
    def test_counting_example(self):
        # 10 truths, 9 detections, 8 matched
        m = MatchResult(
            pairs=[(i, i) for i in range(8)],
            unmatched_detected=[8],
            unmatched_truth=[8, 9],
        )
        report = compute_metrics({0: m})
        assert report.overall.f1 == 16.0 / 19.0
        assert report.overall.er == 0.3
        assert report.per_class[0].n_truth == 10

    def test_perfect_detection(self):
        m = MatchResult(pairs=[(0, 0), (1, 1)])
        report = compute_metrics({0: m})
        assert report.overall.f1 == 1.0
        assert report.overall.er == 0.0

    def test_empty_class_reported_absent(self):
        report = compute_metrics({0: MatchResult(), 1: MatchResult(pairs=[(0, 0)])})
        assert report.per_class[0].er is None
        assert report.per_class[0].f1 is None
        assert report.per_class[1].f1 == 1.0

    def test_micro_average_pools_counts(self):
        matches = {
            0: MatchResult(pairs=[(0, 0)], unmatched_detected=[1]),
            1: MatchResult(pairs=[(0, 0)], unmatched_truth=[1]),
        }
        report = compute_metrics(matches)
        assert report.overall.tp == 2
        assert report.overall.fp == 1
        assert report.overall.fn == 1
        assert report.overall.f1 == 4.0 / 6.0
        assert report.overall.er == 2.0 / 3.0


def make_stream_scores(num_classes, events, num_frames, plateau=1.0, noise=0.0):
    """Hand-built outputs: frames inside an event vote its exact extent with
    weight ``plateau``; background frames optionally vote a small blob."""
    p1 = np.full(num_frames, noise)
    yhat = np.full((num_frames, num_classes), 1.0 / num_classes)
    d = np.zeros((num_frames, 2))
    for ev in events:
        for i in range(ev.onset, ev.offset + 1):
            p1[i] = plateau
            yhat[i] = np.eye(num_classes)[ev.class_id]
            d[i] = (i - ev.onset, ev.offset - i)
    return StreamScores(p1, yhat, d, events)


class TestThresholdGrid:
    def test_eleven_point_grid(self):
        grid = evaluate.threshold_grid(0.1)
        assert grid.size == 11
        assert grid[0] == 0.0 and grid[-1] == 1.0
        assert np.allclose(np.diff(grid), 0.1)

    def test_bad_step_rejected(self):
        with pytest.raises(ConfigurationError):
            evaluate.threshold_grid(0.0)


class TestCalibration:
    def test_nine_fold_default_structure(self):
        events = [EventInterval(0, 10, 19), EventInterval(1, 40, 49)]
        scores = [make_stream_scores(2, events, 70) for _ in range(9)]
        thresholds = evaluate.calibrate_thresholds(scores, 2, folds=9, grid_step=0.1)
        assert thresholds.betas.shape == (2,)
        assert thresholds.divisors.shape == (2,)
        # identical clean streams: every positive threshold is perfect, so the
        # tie-break lands on 1.0
        assert np.all(thresholds.betas == 1.0)
        # divisor = plateau height * event length
        assert np.allclose(thresholds.divisors, 10.0)

    def test_tie_break_toward_larger_beta(self):
        # class 0 is perfectly separated exactly for beta in {0.3 .. 0.7}: its
        # short events plateau at 0.7 of the divisor (a longer event sets the
        # scale), and a background blob at 0.2 pollutes thresholds <= 0.2; the
        # tie-break must pick 0.7
        events = [
            EventInterval(0, 5, 11),  # length 7 -> normalized 0.7
            EventInterval(0, 20, 29),  # length 10 -> sets the divisor
            EventInterval(1, 40, 44),
        ]
        scores = []
        for _ in range(3):
            s = make_stream_scores(2, events, 70)
            # spurious class-0 votes far from any event: height 2 -> 0.2
            s.p1[55:57] = 1.0
            s.yhat[55:57] = np.array([1.0, 0.0])
            s.d_frames[55:57] = [(0.0, 1.0), (1.0, 0.0)]
            scores.append(s)
        thresholds = evaluate.calibrate_thresholds(scores, 2, folds=3, grid_step=0.1)
        assert thresholds.divisors[0] == 10.0
        assert thresholds.betas[0] == 0.7

    def test_fewer_streams_than_folds_rejected(self):
        scores = [make_stream_scores(1, [EventInterval(0, 0, 4)], 10)]
        with pytest.raises(ConfigurationError):
            evaluate.calibrate_thresholds(scores, 1, folds=9)

    def test_absent_class_rejected(self):
        scores = [make_stream_scores(2, [EventInterval(0, 0, 4)], 10) for _ in range(3)]
        with pytest.raises(ConfigurationError):
            evaluate.calibrate_thresholds(scores, 2, folds=3)

    def test_calibrated_thresholds_detect_events(self):
        # event lengths vary 6..12, so the shortest normalizes to 0.5: every
        # beta <= 0.5 is perfect, anything higher loses short events
        lengths = [6, 8, 10, 12]
        scores = []
        for i in range(9):
            ln = lengths[i % len(lengths)]
            events = [EventInterval(0, 5, 4 + ln)]
            scores.append(make_stream_scores(1, events, 40))
        thresholds = evaluate.calibrate_thresholds(scores, 1, folds=9)
        assert thresholds.betas[0] == 0.5


class TestOnlineCurves:
    def make_scores(self):
        events = [EventInterval(0, 10, 29), EventInterval(1, 40, 49)]
        return [make_stream_scores(2, events, 70)]

    def test_zero_truncation_zero_f1(self):
        scores = self.make_scores()
        thr = ThresholdSet(np.array([0.5, 0.5]), np.array([20.0, 10.0]))
        curves = evaluate.online_curves(scores, thr, 2, k_step=10)
        assert curves[0].ks[0] == 0
        assert curves[0].f1[0] == 0.0

    def test_endpoint_equals_offline_exactly(self):
        scores = self.make_scores()
        thr = ThresholdSet(np.array([0.5, 0.5]), np.array([20.0, 10.0]))
        curves = evaluate.online_curves(scores, thr, 2, k_step=10)
        for curve in curves:
            assert curve.f1[-1] == curve.offline_f1
            assert curve.er[-1] == curve.offline_er

    def test_grid_is_ascending_and_covers_longest_event(self):
        scores = self.make_scores()
        thr = ThresholdSet(np.array([0.5, 0.5]), np.array([20.0, 10.0]))
        curves = evaluate.online_curves(scores, thr, 2, k_step=10)
        assert curves[0].ks == sorted(curves[0].ks)
        assert curves[0].ks[-1] >= 20  # class-0 event length
        assert curves[1].ks[-1] >= 10

    def test_clean_case_reaches_offline_early(self):
        scores = self.make_scores()
        thr = ThresholdSet(np.array([0.5, 0.5]), np.array([20.0, 10.0]))
        curves = evaluate.online_curves(scores, thr, 2, k_step=10)
        # class 0: event length 20, divisor 20, beta 0.5 -> crossing after 10
        # frames; every index of the predicted extent crosses together
        assert curves[0].f1[1] == curves[0].offline_f1 == 1.0
        assert evaluate.curve_slope(curves[0]) >= 0.0


class TestReportWriters:
    def test_metrics_json_and_csv(self, tmp_path):
        report = compute_metrics({0: MatchResult(pairs=[(0, 0)], unmatched_detected=[1])})
        evaluate.metrics_to_json(report, tmp_path / "m.json", "beef")
        evaluate.metrics_to_csv(report, tmp_path / "m.csv", "beef")
        import json

        doc = json.loads((tmp_path / "m.json").read_text())
        assert doc["config_hash"] == "beef"
        assert doc["overall"]["tp"] == 1
        lines = (tmp_path / "m.csv").read_text().splitlines()
        assert lines[0] == "# config_hash=beef"
        assert lines[1].startswith("class,")
        assert lines[-1].startswith("overall,")

    def test_curves_csv_and_svg(self, tmp_path):
        curve = evaluate.OnlineCurve(0, [0, 10, 20], [0.0, 0.5, 1.0], [1.0, 0.5, 0.0], 1.0, 0.0)
        evaluate.curves_to_csv([curve], tmp_path / "c.csv", "beef")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert len(lines) == 2 + 3  # hash comment + header + three points
        evaluate.curve_to_svg(curve, tmp_path / "c.svg", "tone", config_hash="beef")
        svg = (tmp_path / "c.svg").read_text()
        assert svg.startswith("<!-- config_hash=beef -->")
        assert "<svg" in svg and "offline F1" in svg and "</svg>" in svg
