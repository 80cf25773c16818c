"""Early-detection inference.

Each consumed frame votes a per-class confidence weight over its region of
interest — the index interval spanned by the predicted onset/offset
distances. Votes only ever add, so accumulated scores are monotone
non-decreasing in the number of consumed frames and threshold crossings are
irrevocable: an event can be triggered from its opening frames.

Scores are compared against class thresholds after division by fixed
calibration divisors (the maximum accumulated score seen on training data),
keeping the decision rule causal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import network
from .errors import ContractViolation, InputError
from .features import restore_distance_array


@dataclass
class FrameContribution:
    """One frame's vote: per-class weights over an index interval."""

    m: int
    n_lo: int
    n_hi: int
    weights: np.ndarray  # (C,) p1 * yhat


@dataclass
class DetectedEvent:
    class_id: int
    onset: int
    offset: int
    peak_score: float
    trigger_frame: int | None = None


@dataclass
class ThresholdSet:
    """Per-class decision thresholds and calibration score divisors."""

    betas: np.ndarray  # (C,) in [0, 1]
    divisors: np.ndarray  # (C,) > 0

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        self.divisors = np.asarray(self.divisors, dtype=np.float64)
        if np.any(self.divisors <= 0):
            raise InputError("calibration divisors must be > 0")


def roi(m: int, d_on: float, d_off: float) -> tuple[int, int]:
    """Integer index interval [ceil(m - d_on), floor(m + d_off)], left end
    clamped at 0. Distances are in frame units (already restored)."""
    if d_on < 0 or d_off < 0:
        raise InputError("restored distances must be >= 0")
    n_lo = max(math.ceil(m - d_on), 0)
    n_hi = math.floor(m + d_off)
    return n_lo, n_hi


def frame_confidence(
    m: int, p1: float, yhat: np.ndarray, d_on: float, d_off: float
) -> FrameContribution:
    """Per-class vote p1 * yhat over the frame's region of interest."""
    n_lo, n_hi = roi(m, d_on, d_off)
    weights = float(p1) * np.asarray(yhat, dtype=np.float64)
    return FrameContribution(m, n_lo, n_hi, weights)


class ConfidenceTrack:
    """Per-class accumulated confidence over frame indices.

    Scores only grow as frames are consumed; the high-water mark enforces
    ascending frame order.
    """

    def __init__(self, num_classes: int, capacity: int = 1024):
        self.num_classes = num_classes
        self.scores = np.zeros((num_classes, max(capacity, 16)))
        self.length = 0  # 1 + highest index with a vote
        self.high_water = -1  # last consumed frame index

    def _ensure(self, n_hi: int) -> None:
        cap = self.scores.shape[1]
        if n_hi < cap:
            return
        new_cap = cap
        while new_cap <= n_hi:
            new_cap *= 2
        grown = np.zeros((self.num_classes, new_cap))
        grown[:, :cap] = self.scores
        self.scores = grown

    def add(self, contrib: FrameContribution) -> None:
        if contrib.m <= self.high_water:
            raise ContractViolation(
                f"frame {contrib.m} arrived after frame {self.high_water}"
            )
        self._ensure(contrib.n_hi)
        self.scores[:, contrib.n_lo : contrib.n_hi + 1] += contrib.weights[:, None]
        self.length = max(self.length, contrib.n_hi + 1)
        self.high_water = contrib.m

    def dense(self) -> np.ndarray:
        """Copy of the accumulated scores, (C, length)."""
        return self.scores[:, : self.length].copy()


def accumulate(track: ConfidenceTrack, contrib: FrameContribution) -> ConfidenceTrack:
    """Add one frame's vote to the track (in place; returned for chaining)."""
    track.add(contrib)
    return track


def batch_track(num_classes: int, contribs: list[FrameContribution]) -> np.ndarray:
    """Accumulated confidence from all contributions at once, (C, length).

    Identical arithmetic to feeding the contributions through a
    ConfidenceTrack in ascending frame order.
    """
    track = ConfidenceTrack(num_classes)
    for contrib in contribs:
        track.add(contrib)
    return track.dense()


def normalize_scores(scores: np.ndarray, thresholds: ThresholdSet) -> np.ndarray:
    """Scores divided by the per-class calibration divisors, clamped at 1."""
    return np.minimum(scores / thresholds.divisors[:, None], 1.0)


def segment_events(
    track: ConfidenceTrack | np.ndarray, thresholds: ThresholdSet
) -> list[DetectedEvent]:
    """Maximal runs of indices whose normalized score clears the class
    threshold (and carries any vote at all) become detected events."""
    scores = track.dense() if isinstance(track, ConfidenceTrack) else np.asarray(track)
    if scores.size == 0:
        return []
    norm = normalize_scores(scores, thresholds)
    events = []
    for c in range(scores.shape[0]):
        above = (scores[c] > 0) & (norm[c] >= thresholds.betas[c])
        if not above.any():
            continue
        padded = np.concatenate([[False], above, [False]])
        changes = np.flatnonzero(np.diff(padded.astype(np.int8)))
        for s, e in zip(changes[::2], changes[1::2] - 1):
            peak = float(norm[c, s : e + 1].max())
            events.append(DetectedEvent(c, int(s), int(e), peak))
    events.sort(key=lambda ev: (ev.class_id, ev.onset))
    return events


class DetectorState:
    """Streaming detector for one stream: accumulates votes frame by frame
    and reports each event once, at its first threshold crossing."""

    def __init__(self, num_classes: int, thresholds: ThresholdSet):
        if thresholds.betas.shape != (num_classes,):
            raise InputError("threshold count does not match class count")
        self.num_classes = num_classes
        self.thresholds = thresholds
        self.track = ConfidenceTrack(num_classes)
        self.above = np.zeros((num_classes, self.track.scores.shape[1]), dtype=bool)
        self.triggers: list[DetectedEvent] = []

    def _ensure_above(self) -> None:
        cap = self.track.scores.shape[1]
        if self.above.shape[1] < cap:
            grown = np.zeros((self.num_classes, cap), dtype=bool)
            grown[:, : self.above.shape[1]] = self.above
            self.above = grown

    def step(
        self, m: int, p1: float, yhat: np.ndarray, d_on: float, d_off: float
    ) -> list[DetectedEvent]:
        """Consume frame m; return events newly crossing their threshold."""
        contrib = frame_confidence(m, p1, yhat, d_on, d_off)
        self.track.add(contrib)
        self._ensure_above()
        lo, hi = contrib.n_lo, contrib.n_hi
        new_events: list[DetectedEvent] = []
        for c in range(self.num_classes):
            beta, div = self.thresholds.betas[c], self.thresholds.divisors[c]
            window = self.track.scores[c, lo : hi + 1]
            norm = np.minimum(window / div, 1.0)
            newly = (window > 0) & (norm >= beta) & ~self.above[c, lo : hi + 1]
            if not newly.any():
                continue
            self.above[c, lo : hi + 1] |= newly
            for s, e in self._new_runs(c, lo, hi, newly):
                peak = float(
                    np.minimum(self.track.scores[c, s : e + 1] / div, 1.0).max()
                )
                new_events.append(DetectedEvent(c, s, e, peak, trigger_frame=m))
        self.triggers.extend(new_events)
        return new_events

    def _new_runs(self, c: int, lo: int, hi: int, newly: np.ndarray):
        """Connected above-threshold runs created entirely by this step.

        A run containing any index that was already above threshold belongs
        to a previously reported event growing outward, not a new one.
        """
        above = self.above[c]
        was_new = np.zeros_like(above)
        was_new[lo : hi + 1] = newly
        runs = []
        padded = np.concatenate([[False], newly, [False]])
        changes = np.flatnonzero(np.diff(padded.astype(np.int8)))
        seen: set[tuple[int, int]] = set()
        for s0, e0 in zip(changes[::2] + lo, changes[1::2] - 1 + lo):
            s = s0
            while s > 0 and above[s - 1]:
                s -= 1
            e = e0
            while e + 1 < above.size and above[e + 1]:
                e += 1
            if (s, e) in seen:
                continue
            seen.add((s, e))
            if np.any(above[s : e + 1] & ~was_new[s : e + 1]):
                continue  # touches an existing event
            runs.append((s, e))
        return runs

    def finalize(self) -> list[DetectedEvent]:
        """Segmented events at the current point, tagged with the earliest
        trigger frame of any crossing inside each event's extent."""
        events = segment_events(self.track, self.thresholds)
        for ev in events:
            hits = [
                t.trigger_frame
                for t in self.triggers
                if t.class_id == ev.class_id
                and t.onset <= ev.offset
                and t.offset >= ev.onset
            ]
            ev.trigger_frame = min(hits) if hits else None
        return events


def detector_step(
    state: DetectorState, m: int, p1: float, yhat: np.ndarray, d_on: float, d_off: float
) -> tuple[DetectorState, list[DetectedEvent]]:
    """Functional wrapper over :meth:`DetectorState.step`."""
    return state, state.step(m, p1, yhat, d_on, d_off)


# ---------------------------------------------------------------------------
# scoring a whole stream with a trained model


def score_frames(bundle, x: np.ndarray):
    """Eval-mode network outputs for context-stacked frames.

    Returns (p1, yhat, d_frames): foreground posterior (M,), class posterior
    (M, C), and predicted distances restored to frame units (M, 2).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    post, _ = network.forward_dnn1(x, bundle.dnn1, mode="eval")
    yhat, dhat, _ = network.forward_dnn2(x, bundle.dnn2, mode="eval")
    d_frames = restore_distance_array(dhat, bundle.norm)
    return post[:, 1], yhat, d_frames


def contributions_for(
    p1: np.ndarray, yhat: np.ndarray, d_frames: np.ndarray, frame_ids: np.ndarray | None = None
) -> list[FrameContribution]:
    """FrameContributions for scored frames, in ascending frame order."""
    m_ids = np.arange(p1.shape[0]) if frame_ids is None else np.asarray(frame_ids)
    return [
        frame_confidence(int(m), float(p1[i]), yhat[i], float(d_frames[i, 0]), float(d_frames[i, 1]))
        for i, m in enumerate(m_ids)
    ]


def run_detector(bundle, x: np.ndarray, thresholds: ThresholdSet):
    """Stream all frames through a DetectorState.

    Returns (final events with trigger frames, trigger list, dense track).
    """
    p1, yhat, d_frames = score_frames(bundle, x)
    state = DetectorState(bundle.num_classes, thresholds)
    for m in range(p1.shape[0]):
        state.step(m, float(p1[m]), yhat[m], float(d_frames[m, 0]), float(d_frames[m, 1]))
    return state.finalize(), state.triggers, state.track.dense()
