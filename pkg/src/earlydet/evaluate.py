"""Event-wise evaluation, threshold calibration, and online curves.

A detection matches a ground-truth event of the same class when each
interval's center falls inside the other; matching is greedy in time order
and 1:1. F1 = 2TP/(2TP+FP+FN); ER = (insertions + deletions) / N_truth,
pooled counts for the overall row. Class thresholds are picked on an 11-point
grid by 9-fold cross-validation over training streams; ties break toward the
larger threshold. The online protocol truncates each test event of a class
to its first k frames and re-runs detection, tracing how performance
approaches the offline value as events unfold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import inference
from .errors import ConfigurationError
from .inference import DetectedEvent, ThresholdSet
from .synth import EventInterval


@dataclass
class MatchResult:
    """1:1 pairs plus the leftovers on both sides, for one class."""

    pairs: list[tuple[int, int]] = field(default_factory=list)
    unmatched_detected: list[int] = field(default_factory=list)
    unmatched_truth: list[int] = field(default_factory=list)

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.unmatched_detected)

    @property
    def fn(self) -> int:
        return len(self.unmatched_truth)


def _center(onset: float, offset: float) -> float:
    return (onset + offset) / 2.0


def _mutual_center_containment(det, truth) -> bool:
    cd = _center(det.onset, det.offset)
    ct = _center(truth.onset, truth.offset)
    return truth.onset <= cd <= truth.offset and det.onset <= ct <= det.offset


def match_events(detected: list, truth: list) -> MatchResult:
    """Greedy time-ordered 1:1 matching under mutual center containment.

    Both lists hold same-class intervals with ``onset``/``offset`` fields.
    """
    det_order = sorted(range(len(detected)), key=lambda i: (detected[i].onset, detected[i].offset))
    truth_order = sorted(range(len(truth)), key=lambda i: (truth[i].onset, truth[i].offset))
    result = MatchResult()
    used: set[int] = set()
    for di in det_order:
        for ti in truth_order:
            if ti in used:
                continue
            if _mutual_center_containment(detected[di], truth[ti]):
                result.pairs.append((di, ti))
                used.add(ti)
                break
        else:
            result.unmatched_detected.append(di)
    result.unmatched_truth = [ti for ti in truth_order if ti not in used]
    return result


@dataclass
class ClassMetrics:
    tp: int
    fp: int
    fn: int

    @property
    def n_truth(self) -> int:
        return self.tp + self.fn

    @property
    def f1(self) -> float | None:
        denom = 2 * self.tp + self.fp + self.fn
        return 2.0 * self.tp / denom if denom else None

    @property
    def er(self) -> float | None:
        return (self.fp + self.fn) / self.n_truth if self.n_truth else None

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "n_truth": self.n_truth,
            "f1": self.f1,
            "er": self.er,
        }


@dataclass
class MetricsReport:
    per_class: dict[int, ClassMetrics]
    overall: ClassMetrics

    def as_dict(self) -> dict:
        return {
            "per_class": {str(c): m.as_dict() for c, m in sorted(self.per_class.items())},
            "overall": self.overall.as_dict(),
        }


def compute_metrics(matches: dict[int, MatchResult]) -> MetricsReport:
    """Per-class and pooled (micro-averaged) metrics from match results."""
    per_class = {
        c: ClassMetrics(m.tp, m.fp, m.fn) for c, m in matches.items()
    }
    overall = ClassMetrics(
        sum(m.tp for m in per_class.values()),
        sum(m.fp for m in per_class.values()),
        sum(m.fn for m in per_class.values()),
    )
    return MetricsReport(per_class, overall)


def _split_by_class(items: list, num_classes: int) -> list[list]:
    buckets: list[list] = [[] for _ in range(num_classes)]
    for it in items:
        buckets[it.class_id].append(it)
    return buckets


def evaluate_detections(
    detections_per_stream: list[list[DetectedEvent]],
    truths_per_stream: list[list[EventInterval]],
    num_classes: int,
) -> MetricsReport:
    """Match within each stream, pool counts per class across streams."""
    tp = np.zeros(num_classes, dtype=int)
    fp = np.zeros(num_classes, dtype=int)
    fn = np.zeros(num_classes, dtype=int)
    for dets, truths in zip(detections_per_stream, truths_per_stream):
        det_c = _split_by_class(dets, num_classes)
        tru_c = _split_by_class(truths, num_classes)
        for c in range(num_classes):
            m = match_events(det_c[c], tru_c[c])
            tp[c] += m.tp
            fp[c] += m.fp
            fn[c] += m.fn
    per_class = {c: ClassMetrics(int(tp[c]), int(fp[c]), int(fn[c])) for c in range(num_classes)}
    overall = ClassMetrics(int(tp.sum()), int(fp.sum()), int(fn.sum()))
    return MetricsReport(per_class, overall)


# ---------------------------------------------------------------------------
# threshold calibration


@dataclass
class StreamScores:
    """Cached per-stream material for calibration and curves."""

    p1: np.ndarray  # (M,)
    yhat: np.ndarray  # (M, C)
    d_frames: np.ndarray  # (M, 2)
    events: list[EventInterval]

    @property
    def num_frames(self) -> int:
        return self.p1.shape[0]


def score_streams(bundle, features_per_stream, events_per_stream) -> list[StreamScores]:
    out = []
    for x, events in zip(features_per_stream, events_per_stream):
        p1, yhat, d_frames = inference.score_frames(bundle, x)
        out.append(StreamScores(p1, yhat, d_frames, events))
    return out


def threshold_grid(step: float = 0.1) -> np.ndarray:
    """Candidate thresholds 0, step, ..., 1 (11 points at the default step)."""
    if not 0 < step <= 1:
        raise ConfigurationError(f"grid step {step} outside (0, 1]")
    n = int(round(1.0 / step))
    return np.round(np.linspace(0.0, 1.0, n + 1), 12)


def _stream_tracks(scores: list[StreamScores], num_classes: int) -> list[np.ndarray]:
    tracks = []
    for s in scores:
        contribs = inference.contributions_for(s.p1, s.yhat, s.d_frames)
        tracks.append(inference.batch_track(num_classes, contribs))
    return tracks


def calibration_divisors(tracks: list[np.ndarray], num_classes: int) -> np.ndarray:
    """Per-class maximum accumulated score over the training streams."""
    div = np.zeros(num_classes)
    for t in tracks:
        if t.shape[1]:
            div = np.maximum(div, t.max(axis=1))
    return np.maximum(div, 1e-12)


def calibrate_thresholds(
    train_scores: list[StreamScores],
    num_classes: int,
    folds: int = 9,
    grid_step: float = 0.1,
) -> ThresholdSet:
    """Class thresholds maximizing mean cross-validated F1 on the grid.

    Streams are split into ``folds`` groups round-robin; every fold's
    held-out streams are evaluated at each candidate threshold against the
    globally calibrated score scale. Ties break toward the larger threshold.
    """
    if folds < 1:
        raise ConfigurationError("folds must be >= 1")
    if len(train_scores) < folds:
        raise ConfigurationError(
            f"{len(train_scores)} training streams cannot form {folds} folds"
        )
    for c in range(num_classes):
        if not any(ev.class_id == c for s in train_scores for ev in s.events):
            raise ConfigurationError(f"class {c} absent from training data")

    tracks = _stream_tracks(train_scores, num_classes)
    divisors = calibration_divisors(tracks, num_classes)
    grid = threshold_grid(grid_step)

    # f1_sum[c, g, fold]: class-c F1 on the fold's held-out streams at grid[g]
    fold_f1 = np.full((num_classes, grid.size, folds), np.nan)
    for fold in range(folds):
        held = [i for i in range(len(train_scores)) if i % folds == fold]
        for gi, beta in enumerate(grid):
            thr = ThresholdSet(np.full(num_classes, beta), divisors)
            dets = [inference.segment_events(tracks[i], thr) for i in held]
            truths = [train_scores[i].events for i in held]
            report = evaluate_detections(dets, truths, num_classes)
            for c in range(num_classes):
                f1 = report.per_class[c].f1
                if report.per_class[c].n_truth or report.per_class[c].fp:
                    fold_f1[c, gi, fold] = f1 if f1 is not None else 0.0

    betas = np.zeros(num_classes)
    for c in range(num_classes):
        with np.errstate(invalid="ignore"):
            mean_f1 = np.nanmean(fold_f1[c], axis=1)
        mean_f1 = np.nan_to_num(mean_f1, nan=0.0)
        best = mean_f1.max()
        betas[c] = grid[np.flatnonzero(mean_f1 >= best - 1e-12).max()]
    return ThresholdSet(betas, divisors)


# ---------------------------------------------------------------------------
# online early-detection curves


@dataclass
class OnlineCurve:
    class_id: int
    ks: list[int]
    f1: list[float]
    er: list[float | None]
    offline_f1: float | None
    offline_er: float | None


def _event_positions(scores: StreamScores, class_id: int) -> np.ndarray:
    """Per frame: position within its class-``class_id`` event, -1 elsewhere."""
    pos = np.full(scores.num_frames, -1, dtype=np.int64)
    for ev in scores.events:
        if ev.class_id == class_id:
            idx = np.arange(ev.onset, min(ev.offset + 1, scores.num_frames))
            pos[idx] = idx - ev.onset
    return pos


def _truncated_metrics(
    test_scores: list[StreamScores],
    thresholds: ThresholdSet,
    num_classes: int,
    class_id: int,
    k: int | None,
) -> ClassMetrics:
    """Class metrics with each class-``class_id`` test event truncated to its
    first ``k`` frames (``None`` = no truncation)."""
    dets, truths = [], []
    for s in test_scores:
        if k is None:
            keep = np.ones(s.num_frames, dtype=bool)
        else:
            keep = _event_positions(s, class_id) < k
        ids = np.flatnonzero(keep)
        contribs = inference.contributions_for(
            s.p1[ids], s.yhat[ids], s.d_frames[ids], frame_ids=ids
        )
        track = inference.batch_track(num_classes, contribs)
        dets.append(inference.segment_events(track, thresholds))
        truths.append(s.events)
    report = evaluate_detections(dets, truths, num_classes)
    return report.per_class[class_id]


def online_curves(
    test_scores: list[StreamScores],
    thresholds: ThresholdSet,
    num_classes: int,
    k_step: int = 10,
) -> list[OnlineCurve]:
    """Per-class early-detection curves over the truncation grid.

    The grid runs from 0 in ``k_step`` increments up past the longest test
    event of the class, so the final point sees untruncated events and
    reproduces the offline metrics exactly.
    """
    curves = []
    for c in range(num_classes):
        lengths = [
            ev.length for s in test_scores for ev in s.events if ev.class_id == c
        ]
        max_len = max(lengths) if lengths else 0
        ks = list(range(0, int(math.ceil(max_len / k_step)) * k_step + 1, k_step))
        if not ks:
            ks = [0]
        f1s: list[float] = []
        ers: list[float | None] = []
        for k in ks:
            m = _truncated_metrics(test_scores, thresholds, num_classes, c, k)
            f1s.append(m.f1 if m.f1 is not None else 0.0)
            ers.append(m.er)
        offline = _truncated_metrics(test_scores, thresholds, num_classes, c, None)
        curves.append(OnlineCurve(c, ks, f1s, ers, offline.f1, offline.er))
    return curves


def curve_slope(curve: OnlineCurve) -> float:
    """Least-squares slope of F1 versus k (>= 0 expected on average)."""
    k = np.asarray(curve.ks, dtype=np.float64)
    f1 = np.asarray(curve.f1, dtype=np.float64)
    if k.size < 2:
        return 0.0
    k = k - k.mean()
    denom = float(np.sum(k**2))
    return float(np.sum(k * (f1 - f1.mean())) / denom) if denom else 0.0


# ---------------------------------------------------------------------------
# report writers


def metrics_to_json(report: MetricsReport, path, config_hash: str = "-") -> None:
    import json

    doc = {"config_hash": config_hash, **report.as_dict()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def metrics_to_csv(report: MetricsReport, path, config_hash: str = "-") -> None:
    import csv

    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["class", "tp", "fp", "fn", "n_truth", "f1", "er"])

        def fmt(v):
            return "" if v is None else f"{v:.6f}"

        for c, m in sorted(report.per_class.items()):
            writer.writerow([c, m.tp, m.fp, m.fn, m.n_truth, fmt(m.f1), fmt(m.er)])
        o = report.overall
        writer.writerow(["overall", o.tp, o.fp, o.fn, o.n_truth, fmt(o.f1), fmt(o.er)])


def curves_to_csv(curves: list[OnlineCurve], path, config_hash: str = "-") -> None:
    import csv

    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["class", "k", "f1", "er"])
        for curve in curves:
            for k, f1, er in zip(curve.ks, curve.f1, curve.er):
                writer.writerow([curve.class_id, k, f"{f1:.6f}", "" if er is None else f"{er:.6f}"])


def curve_to_svg(
    curve: OnlineCurve, path, class_name: str | None = None, config_hash: str = "-"
) -> None:
    """Self-contained line chart: online F1 and ER against observed event
    frames, with the offline values as horizontal references."""
    width, height, pad = 560, 360, 50
    ks = np.asarray(curve.ks, dtype=np.float64)
    kmax = max(float(ks.max()), 1.0)
    ymax = max(1.0, *(e for e in curve.er if e is not None), 0.0) if curve.er else 1.0

    def x_px(k):
        return pad + (width - 2 * pad) * k / kmax

    def y_px(v):
        return height - pad - (height - 2 * pad) * v / ymax

    def polyline(values, color):
        pts = " ".join(
            f"{x_px(k):.1f},{y_px(v):.1f}"
            for k, v in zip(ks, values)
            if v is not None
        )
        return f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>'

    def href(v, color, label):
        if v is None:
            return ""
        y = y_px(v)
        return (
            f'<line x1="{pad}" y1="{y:.1f}" x2="{width - pad}" y2="{y:.1f}" '
            f'stroke="{color}" stroke-dasharray="6 4" stroke-width="1"/>'
            f'<text x="{width - pad + 4}" y="{y + 4:.1f}" font-size="10" fill="{color}">{label}</text>'
        )

    title = class_name or f"class {curve.class_id}"
    parts = [
        f"<!-- config_hash={config_hash} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">'
        f"online performance: {title}</text>",
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" font-size="11">'
        "observed event frames k</text>",
        f'<text x="14" y="{height / 2}" font-size="11" '
        f'transform="rotate(-90 14 {height / 2})" text-anchor="middle">score</text>',
        polyline(curve.f1, "#1f77b4"),
        polyline(curve.er, "#d62728"),
        href(curve.offline_f1, "#1f77b4", "offline F1"),
        href(curve.offline_er, "#d62728", "offline ER"),
        f'<text x="{pad}" y="{height - pad + 16}" font-size="10">0</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" font-size="10" '
        f'text-anchor="end">{int(kmax)}</text>',
        f'<text x="{pad - 6}" y="{y_px(0) + 4:.1f}" font-size="10" text-anchor="end">0</text>',
        f'<text x="{pad - 6}" y="{y_px(ymax) + 4:.1f}" font-size="10" text-anchor="end">{ymax:g}</text>',
        "</svg>",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
