"""Deterministic synthetic event streams and dataset packaging.

Generates annotated audio streams with non-overlapping events drawn from a
set of acoustically distinct class generators (tone bursts, chirps, noise
bursts, harmonic stacks, AM tones) over Gaussian background noise, and
converts annotated streams into training examples for both networks. A JSON
manifest plus WAV files form the on-disk dataset; the same manifest schema
ingests externally prepared corpora.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import features as feat
from .errors import ConfigurationError, InputError
from .features import AudioBuffer, FeatureConfig, NormalizationConstants

EVENT_KINDS = ("tone-burst", "chirp", "noise-burst", "harmonic-stack", "am-tone")

# keeps events clear of stream edges so their boundary frames always exist
EDGE_MARGIN_S = 0.3
RAMP_S = 0.01


@dataclass(frozen=True)
class EventClassSpec:
    name: str
    kind: str
    duration_range: tuple[float, float] = (1.2, 2.0)
    freq_range: tuple[float, float] = (400.0, 600.0)
    amplitude_range: tuple[float, float] = (0.25, 0.5)
    harmonics: int = 6
    am_rate_range: tuple[float, float] = (4.0, 8.0)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ConfigurationError(f"unknown event kind {self.kind!r}")
        if self.duration_range[0] <= 0 or self.duration_range[1] < self.duration_range[0]:
            raise ConfigurationError(f"bad duration range {self.duration_range}")


def default_event_classes() -> tuple[EventClassSpec, ...]:
    """Five classes with disjoint primary bands."""
    return (
        EventClassSpec("tone", "tone-burst", freq_range=(400.0, 600.0)),
        EventClassSpec("chirp", "chirp", freq_range=(900.0, 1600.0)),
        EventClassSpec("noise", "noise-burst", freq_range=(2500.0, 4000.0)),
        EventClassSpec("harmonic", "harmonic-stack", freq_range=(120.0, 180.0)),
        EventClassSpec("amtone", "am-tone", freq_range=(5200.0, 7000.0)),
    )


@dataclass(frozen=True)
class StreamSpec:
    classes: tuple[EventClassSpec, ...] = field(default_factory=default_event_classes)
    duration_s: float = 120.0
    events_per_class: int = 5
    noise_level: float = 0.01
    min_gap_s: float = 0.4
    seed: int = 0
    sample_rate: int = 44100

    def __post_init__(self):
        if self.min_gap_s < 0.2:
            raise ConfigurationError("minimum inter-event gap must be >= 0.2 s")
        if not self.classes:
            raise ConfigurationError("at least one event class required")


@dataclass
class EventInterval:
    """Inclusive frame-index interval of one event."""

    class_id: int
    onset: int
    offset: int

    def __post_init__(self):
        if self.onset > self.offset:
            raise InputError(f"onset {self.onset} > offset {self.offset}")

    @property
    def length(self) -> int:
        return self.offset - self.onset + 1


@dataclass
class AnnotatedStream:
    audio: AudioBuffer
    events: list[EventInterval]


def _event_waveform(spec: EventClassSpec, duration_s: float, amplitude: float,
                    rate: int, rng: np.random.Generator) -> np.ndarray:
    n = int(round(duration_s * rate))
    t = np.arange(n) / rate
    lo, hi = spec.freq_range
    if spec.kind == "tone-burst":
        f = rng.uniform(lo, hi)
        wave = np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    elif spec.kind == "chirp":
        f0 = rng.uniform(lo, (lo + hi) / 2)
        f1 = rng.uniform((lo + hi) / 2, hi)
        phase = 2 * np.pi * (f0 * t + (f1 - f0) * t**2 / (2 * duration_s))
        wave = np.sin(phase + rng.uniform(0, 2 * np.pi))
    elif spec.kind == "noise-burst":
        white = rng.standard_normal(n)
        spec_bins = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n, d=1.0 / rate)
        spec_bins[(freqs < lo) | (freqs > hi)] = 0.0
        wave = np.fft.irfft(spec_bins, n)
        wave = wave / (np.max(np.abs(wave)) + 1e-30)
    elif spec.kind == "harmonic-stack":
        f0 = rng.uniform(lo, hi)
        wave = np.zeros(n)
        for h in range(1, spec.harmonics + 1):
            wave += np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi)) / h
        wave = wave / np.max(np.abs(wave))
    elif spec.kind == "am-tone":
        fc = rng.uniform(lo, hi)
        fm = rng.uniform(*spec.am_rate_range)
        wave = (0.5 * (1.0 + np.sin(2 * np.pi * fm * t))) * np.sin(
            2 * np.pi * fc * t + rng.uniform(0, 2 * np.pi)
        )
    else:  # pragma: no cover - guarded by EventClassSpec
        raise ConfigurationError(f"unknown event kind {spec.kind!r}")

    ramp = int(round(RAMP_S * rate))
    if ramp > 0 and 2 * ramp < n:
        env = np.ones(n)
        edge = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[:ramp] = edge
        env[-ramp:] = edge[::-1]
        wave = wave * env
    return amplitude * wave


def _frame_bounds(start_sample: int, end_sample: int, cfg: FeatureConfig,
                  num_frames: int) -> tuple[int, int]:
    """First/last frame whose span overlaps [start, end) by at least half a
    frame length."""
    frame, hop = cfg.frame_len, cfg.hop_len
    lo_guess = max((start_sample - frame) // hop - 1, 0)
    hi_guess = min(end_sample // hop + 1, num_frames - 1)
    idx = np.arange(lo_guess, hi_guess + 1)
    starts = idx * hop
    overlap = np.minimum(end_sample, starts + frame) - np.maximum(start_sample, starts)
    ok = overlap >= frame / 2.0
    if not np.any(ok):
        raise ConfigurationError("event too short to cover half a frame")
    hits = idx[ok]
    return int(hits[0]), int(hits[-1])


def synthesize_stream(spec: StreamSpec, cfg: FeatureConfig | None = None) -> AnnotatedStream:
    """Deterministic annotated stream: scheduled events mixed over Gaussian
    background noise, with frame-rounded boundary annotations."""
    cfg = cfg or FeatureConfig(sample_rate=spec.sample_rate)
    if cfg.sample_rate != spec.sample_rate:
        raise ConfigurationError("stream and feature sample rates differ")
    rng = np.random.default_rng(spec.seed)
    rate = spec.sample_rate
    n_samples = int(round(spec.duration_s * rate))

    schedule = []  # (class_id, duration_s, amplitude)
    for cid, cls in enumerate(spec.classes):
        for _ in range(spec.events_per_class):
            schedule.append(
                (
                    cid,
                    float(rng.uniform(*cls.duration_range)),
                    float(rng.uniform(*cls.amplitude_range)),
                )
            )
    order = rng.permutation(len(schedule))
    schedule = [schedule[i] for i in order]

    total_event_s = sum(d for _, d, _ in schedule)
    n_events = len(schedule)
    slack = (
        spec.duration_s
        - 2 * EDGE_MARGIN_S
        - total_event_s
        - max(n_events - 1, 0) * spec.min_gap_s
    )
    if n_events and slack < 0:
        raise ConfigurationError(
            f"{n_events} events totalling {total_event_s:.1f}s cannot fit in "
            f"{spec.duration_s:.1f}s with {spec.min_gap_s:.1f}s gaps"
        )

    audio = rng.normal(0.0, spec.noise_level, n_samples)
    events: list[EventInterval] = []
    num_frames = feat.frame_count(n_samples, cfg)
    if n_events:
        extra = rng.dirichlet(np.ones(n_events + 1)) * slack
        cursor = EDGE_MARGIN_S + extra[0]
        for i, (cid, dur, amp) in enumerate(schedule):
            start = int(round(cursor * rate))
            wave = _event_waveform(spec.classes[cid], dur, amp, rate, rng)
            audio[start : start + wave.size] += wave
            onset_f, offset_f = _frame_bounds(start, start + wave.size, cfg, num_frames)
            events.append(EventInterval(cid, onset_f, offset_f))
            cursor += dur + spec.min_gap_s + extra[i + 1]

    events.sort(key=lambda e: e.onset)
    return AnnotatedStream(AudioBuffer(audio, rate), events)


# ---------------------------------------------------------------------------
# annotated streams -> training examples


@dataclass
class TrainingSet:
    """Arrays for both networks plus the distance normalization constants."""

    x1: np.ndarray  # (N1, dim) all frames
    y1: np.ndarray  # (N1, 2) one-hot, index 1 = foreground
    fg: np.ndarray  # (N1,) bool
    x2: np.ndarray  # (N2, dim) foreground frames only
    y2: np.ndarray  # (N2, C) one-hot class
    d2: np.ndarray  # (N2, 2) normalized distances
    norm: NormalizationConstants
    num_classes: int


def foreground_mask(num_frames: int, events: list[EventInterval]) -> np.ndarray:
    mask = np.zeros(num_frames, dtype=bool)
    for ev in events:
        mask[ev.onset : ev.offset + 1] = True
    return mask


def make_training_set(
    streams: list[AnnotatedStream],
    num_classes: int,
    cfg: FeatureConfig | None = None,
    norm: NormalizationConstants | None = None,
    features_list: list[np.ndarray] | None = None,
) -> TrainingSet:
    """Every context-stacked frame becomes a fore-/background example; frames
    inside events additionally become class/distance examples. Normalization
    maxima are computed here when not supplied."""
    cfg = cfg or FeatureConfig()
    if features_list is not None and len(features_list) != len(streams):
        raise InputError("features_list length does not match stream count")
    xs1, fgs, xs2, cls2, don2, doff2 = [], [], [], [], [], []
    for si, stream in enumerate(streams):
        x = (
            features_list[si]
            if features_list is not None
            else feat.extract_features(stream.audio, cfg)
        )
        m = x.shape[0]
        if m == 0:
            warnings.warn("stream shorter than one frame, skipped")
            continue
        mask = foreground_mask(m, stream.events)
        xs1.append(x)
        fgs.append(mask)
        for ev in stream.events:
            if ev.offset >= m:
                raise InputError("event extends past the stream's frame count")
            idx = np.arange(ev.onset, ev.offset + 1)
            xs2.append(x[idx])
            cls2.append(np.full(idx.size, ev.class_id))
            don2.append(idx - ev.onset)
            doff2.append(ev.offset - idx)

    if not xs1:
        raise InputError("no usable streams")
    x1 = np.concatenate(xs1)
    fg = np.concatenate(fgs)
    y1 = np.zeros((x1.shape[0], 2))
    y1[np.arange(x1.shape[0]), fg.astype(int)] = 1.0

    x2 = np.concatenate(xs2) if xs2 else np.empty((0, x1.shape[1]))
    cls = np.concatenate(cls2) if cls2 else np.empty(0, dtype=int)
    d_on = np.concatenate(don2).astype(np.float64) if don2 else np.empty(0)
    d_off = np.concatenate(doff2).astype(np.float64) if doff2 else np.empty(0)
    if np.any(cls >= num_classes):
        raise InputError("event class id outside configured class count")
    y2 = np.zeros((x2.shape[0], num_classes))
    if cls.size:
        y2[np.arange(cls.size), cls] = 1.0

    if norm is None:
        norm = NormalizationConstants(
            max(float(d_on.max()) if d_on.size else 1.0, 1.0),
            max(float(d_off.max()) if d_off.size else 1.0, 1.0),
        )
    d2 = np.stack(
        [np.minimum(d_on / norm.max_on, 1.0), np.minimum(d_off / norm.max_off, 1.0)],
        axis=1,
    ) if x2.shape[0] else np.empty((0, 2))

    return TrainingSet(x1, y1, fg, x2, y2, d2, norm, num_classes)


# ---------------------------------------------------------------------------
# dataset manifest: JSON next to the WAV files


def write_dataset(
    out_dir,
    streams: list[AnnotatedStream],
    manifest_name: str = "manifest.json",
    prefix: str = "stream",
    extra_meta: dict | None = None,
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, stream in enumerate(streams):
        wav_name = f"{prefix}_{i:03d}.wav"
        feat.write_wav(out_dir / wav_name, stream.audio)
        entries.append(
            {
                "audio": wav_name,
                "events": [
                    {"class": ev.class_id, "onset_frame": ev.onset, "offset_frame": ev.offset}
                    for ev in stream.events
                ],
            }
        )
    manifest = {
        "sample_rate": streams[0].audio.sample_rate if streams else 44100,
        "streams": entries,
    }
    if extra_meta:
        manifest.update(extra_meta)
    path = out_dir / manifest_name
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def load_dataset(manifest_path) -> list[AnnotatedStream]:
    manifest_path = Path(manifest_path)
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    rate = int(manifest["sample_rate"])
    streams = []
    for entry in manifest["streams"]:
        audio = feat.read_wav(manifest_path.parent / entry["audio"])
        if audio.sample_rate != rate:
            raise InputError(
                f"{entry['audio']}: rate {audio.sample_rate} != manifest rate {rate}"
            )
        events = [
            EventInterval(int(e["class"]), int(e["onset_frame"]), int(e["offset_frame"]))
            for e in entry["events"]
        ]
        streams.append(AnnotatedStream(audio, events))
    return streams
