"""Audio-to-feature frontend.

100 ms frames with 10 ms hop, 64 log-Gammatone spectral coefficients per
frame (ERB-spaced centers from 50 Hz to 22050 Hz, 4th-order magnitude
responses applied to the frame's power spectrum), and 5-frame context
stacking with edge replication. Also the onset/offset distance targets for
the boundary regressor and their normalize/restore pair.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, ContractViolation, InputError

ENERGY_FLOOR = 1e-10


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = 44100
    frame_s: float = 0.1
    hop_s: float = 0.01
    num_bands: int = 64
    min_freq: float = 50.0
    max_freq: float = 22050.0
    context: int = 5

    @property
    def frame_len(self) -> int:
        return int(round(self.frame_s * self.sample_rate))

    @property
    def hop_len(self) -> int:
        return int(round(self.hop_s * self.sample_rate))

    @property
    def feature_dim(self) -> int:
        return self.context * self.num_bands


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int = 44100


@dataclass
class FeatureFrame:
    """Context-stacked feature vector for one center frame."""

    values: np.ndarray  # (context * num_bands,)
    frame_index: int
    time_s: float


@dataclass
class DistancePair:
    """Distances from a frame to its event's onset and offset."""

    d_on: float
    d_off: float
    unit: str  # "frames" | "normalized"


@dataclass
class NormalizationConstants:
    """Per-dimension maxima (in frames) computed on training data."""

    max_on: float
    max_off: float


def frame_count(num_samples: int, cfg: FeatureConfig) -> int:
    if num_samples < cfg.frame_len:
        return 0
    return (num_samples - cfg.frame_len) // cfg.hop_len + 1


def frame_stream(audio: AudioBuffer | np.ndarray, cfg: FeatureConfig | None = None) -> np.ndarray:
    """Slice audio into overlapping frames; frame i covers samples
    [i*hop, i*hop + frame_len). Audio shorter than one frame yields an
    empty result."""
    cfg = cfg or FeatureConfig()
    if isinstance(audio, AudioBuffer):
        if audio.sample_rate != cfg.sample_rate:
            raise InputError(
                f"audio rate {audio.sample_rate} != configured {cfg.sample_rate}; "
                "resampling is not supported"
            )
        samples = audio.samples
    else:
        samples = audio
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise InputError("expected mono audio")
    n = frame_count(samples.size, cfg)
    if n == 0:
        return np.empty((0, cfg.frame_len))
    windows = np.lib.stride_tricks.sliding_window_view(samples, cfg.frame_len)
    return windows[:: cfg.hop_len][:n]


def erb_scale(freq_hz):
    """Glasberg-Moore ERB-rate scale."""
    return 21.4 * np.log10(1.0 + 0.00437 * np.asarray(freq_hz, dtype=np.float64))


def erb_scale_inverse(erb):
    return (10.0 ** (np.asarray(erb, dtype=np.float64) / 21.4) - 1.0) / 0.00437


def erb_bandwidth(freq_hz):
    return 24.7 * (4.37 * np.asarray(freq_hz, dtype=np.float64) / 1000.0 + 1.0)


def gammatone_center_frequencies(cfg: FeatureConfig | None = None) -> np.ndarray:
    """Band centers uniformly spaced on the ERB-rate scale, endpoints inclusive."""
    cfg = cfg or FeatureConfig()
    pts = np.linspace(erb_scale(cfg.min_freq), erb_scale(cfg.max_freq), cfg.num_bands)
    return erb_scale_inverse(pts)


_BANK_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def _filterbank(cfg: FeatureConfig) -> tuple[np.ndarray, np.ndarray]:
    """(window, power_weights): periodic Hann window of frame length and the
    (num_bands, num_bins) squared 4th-order gammatone magnitude responses
    sampled at the frame's DFT bin frequencies."""
    key = (cfg.sample_rate, cfg.frame_len, cfg.num_bands, cfg.min_freq, cfg.max_freq)
    cached = _BANK_CACHE.get(key)
    if cached is not None:
        return cached
    n = cfg.frame_len
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    freqs = np.fft.rfftfreq(n, d=1.0 / cfg.sample_rate)
    centers = gammatone_center_frequencies(cfg)
    bw = 1.019 * erb_bandwidth(centers)
    # unit-peak 4th-order gammatone magnitude response
    rel = (freqs[None, :] - centers[:, None]) / bw[:, None]
    mag = (1.0 + rel**2) ** -2.0
    weights = mag**2
    _BANK_CACHE[key] = (window, weights)
    return window, weights


def gammatone_features_batch(frames: np.ndarray, cfg: FeatureConfig | None = None) -> np.ndarray:
    """log-Gammatone coefficients for (M, frame_len) frames -> (M, num_bands)."""
    cfg = cfg or FeatureConfig()
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[1] != cfg.frame_len:
        raise InputError(
            f"frame length {frames.shape[1]} != configured {cfg.frame_len}"
        )
    window, weights = _filterbank(cfg)
    out = np.empty((frames.shape[0], cfg.num_bands))
    # chunked so the transient spectra stay small
    step = 2048
    for lo in range(0, frames.shape[0], step):
        spec = np.fft.rfft(frames[lo : lo + step] * window, axis=1)
        power = spec.real**2 + spec.imag**2
        out[lo : lo + step] = np.log(power @ weights.T + ENERGY_FLOOR)
    return out


def gammatone_features(frame: np.ndarray, sample_rate: int | None = None,
                       cfg: FeatureConfig | None = None) -> np.ndarray:
    """64-coefficient log-Gammatone vector for a single raw frame."""
    if cfg is None:
        cfg = FeatureConfig() if sample_rate is None else replace(
            FeatureConfig(), sample_rate=sample_rate
        )
    return gammatone_features_batch(np.asarray(frame)[None, :], cfg)[0]


def _context_indices(num_frames: int, cfg: FeatureConfig) -> np.ndarray:
    half = cfg.context // 2
    base = np.arange(num_frames)[:, None] + np.arange(-half, cfg.context - half)[None, :]
    return np.clip(base, 0, num_frames - 1)


def stack_context(framewise: np.ndarray, i: int, cfg: FeatureConfig | None = None) -> FeatureFrame:
    """Concatenate frames i-2..i+2 (edge frames replicate past the stream
    boundary) into one context vector centered on frame ``i``."""
    cfg = cfg or FeatureConfig()
    framewise = np.atleast_2d(np.asarray(framewise, dtype=np.float64))
    m = framewise.shape[0]
    if m == 0:
        raise InputError("no frames to stack")
    if not 0 <= i < m:
        raise InputError(f"frame index {i} outside [0, {m})")
    idx = _context_indices(m, cfg)[i]
    values = framewise[idx].reshape(-1)
    time_s = (i * cfg.hop_len + cfg.frame_len / 2.0) / cfg.sample_rate
    return FeatureFrame(values, i, time_s)


def stack_all(framewise: np.ndarray, cfg: FeatureConfig | None = None) -> np.ndarray:
    """Context-stacked features for every frame -> (M, context*num_bands)."""
    cfg = cfg or FeatureConfig()
    framewise = np.atleast_2d(np.asarray(framewise, dtype=np.float64))
    if framewise.shape[0] == 0:
        return np.empty((0, cfg.feature_dim))
    idx = _context_indices(framewise.shape[0], cfg)
    return framewise[idx].reshape(framewise.shape[0], -1)


def extract_features(audio: AudioBuffer, cfg: FeatureConfig | None = None) -> np.ndarray:
    """WAV-ready pipeline: framing, log-Gammatone bank, context stacking."""
    cfg = cfg or FeatureConfig()
    frames = frame_stream(audio, cfg)
    return stack_all(gammatone_features_batch(frames, cfg), cfg)


def distance_targets(event, i: int) -> DistancePair:
    """Frame distances (i - onset, offset - i) for a frame inside the event."""
    if not event.onset <= i <= event.offset:
        raise ContractViolation(
            f"frame {i} outside event [{event.onset}, {event.offset}]"
        )
    return DistancePair(float(i - event.onset), float(event.offset - i), "frames")


def normalize_distances(d: DistancePair, k: NormalizationConstants) -> DistancePair:
    """Divide by the training maxima and clamp to [0, 1]."""
    if k.max_on <= 0 or k.max_off <= 0:
        raise ConfigurationError("normalization maxima must be > 0")
    if d.unit != "frames":
        raise InputError("normalize_distances expects frame-unit distances")
    return DistancePair(
        min(d.d_on / k.max_on, 1.0), min(d.d_off / k.max_off, 1.0), "normalized"
    )


def restore_distances(d: DistancePair, k: NormalizationConstants) -> DistancePair:
    """Back to frame units; exact inverse of normalize for unclamped values."""
    if k.max_on <= 0 or k.max_off <= 0:
        raise ConfigurationError("normalization maxima must be > 0")
    if d.unit != "normalized":
        raise InputError("restore_distances expects normalized distances")
    return DistancePair(d.d_on * k.max_on, d.d_off * k.max_off, "frames")


def restore_distance_array(d: np.ndarray, k: NormalizationConstants) -> np.ndarray:
    """(N, 2) normalized distances back to frame units."""
    if k.max_on <= 0 or k.max_off <= 0:
        raise ConfigurationError("normalization maxima must be > 0")
    return np.asarray(d, dtype=np.float64) * np.array([k.max_on, k.max_off])


# ---------------------------------------------------------------------------
# feature file format: one ASCII header line, then little-endian float32
# rows (count x dim)

_FEATURE_MAGIC = "earlydet-features"


def write_features(path, feats: np.ndarray, cfg: FeatureConfig | None = None) -> None:
    cfg = cfg or FeatureConfig()
    feats = np.atleast_2d(np.asarray(feats))
    header = (
        f"{_FEATURE_MAGIC} count={feats.shape[0]} dim={feats.shape[1]} "
        f"hop_s={cfg.hop_s!r} frame_s={cfg.frame_s!r}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(feats.astype("<f4").tobytes())


def read_features(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        fields = header.split()
        if not fields or fields[0] != _FEATURE_MAGIC:
            raise InputError(f"{path}: not a feature file")
        meta = dict(kv.split("=", 1) for kv in fields[1:])
        count, dim = int(meta["count"]), int(meta["dim"])
        data = np.frombuffer(fh.read(count * dim * 4), dtype="<f4")
    if data.size != count * dim:
        raise InputError(f"{path}: truncated feature data")
    meta["hop_s"] = float(meta["hop_s"])
    meta["frame_s"] = float(meta["frame_s"])
    return data.reshape(count, dim), meta


# ---------------------------------------------------------------------------
# mono WAV input/output (PCM16 or float32)


def read_wav(path) -> AudioBuffer:
    from scipy.io import wavfile

    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise InputError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise InputError(f"{path}: unsupported WAV sample format {data.dtype}")
    return AudioBuffer(samples, int(rate))


def write_wav(path, audio: AudioBuffer, pcm16: bool = True) -> None:
    from scipy.io import wavfile

    if pcm16:
        clipped = np.clip(audio.samples, -1.0, 32767.0 / 32768.0)
        wavfile.write(path, audio.sample_rate, (clipped * 32768.0).round().astype(np.int16))
    else:
        wavfile.write(path, audio.sample_rate, audio.samples.astype(np.float32))
