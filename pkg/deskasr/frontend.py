"""
Audio frontend: WAV input, 80-dim log-Mel filterbank features, global CMVN and
SpecAugment.

Features use 25 ms Hamming windows every 10 ms at 16 kHz, a 512-point FFT and
80 HTK-Mel triangular filters over 0-8000 Hz; each frame is log(E + 1e-10).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.io import wavfile

from .errors import FrontendError
from .numerics.rng import Rng

logger = logging.getLogger(__name__)

SAMPLE_RATE = 16000
WINDOW_LENGTH = 400  # 25 ms
HOP_LENGTH = 160  # 10 ms
N_FFT = 512
NUM_MEL_BINS = 80
MEL_LOW_HZ = 0.0
MEL_HIGH_HZ = 8000.0
LOG_FLOOR = 1e-10
VARIANCE_FLOOR = 1e-10


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise FrontendError(
                f"sample rate {self.sample_rate} Hz is not supported; audio must be {SAMPLE_RATE} Hz mono"
            )
        if np.ndim(self.samples) != 1:
            raise FrontendError(f"expected mono audio, got samples of shape {np.shape(self.samples)}")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FeatureMatrix:
    frames: np.ndarray
    frame_shift_ms: int = 10
    frame_length_ms: int = 25

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != NUM_MEL_BINS:
            raise FrontendError(f"feature matrix must be T x {NUM_MEL_BINS}, got {self.frames.shape}")

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])


@dataclass(frozen=True)
class CmvnStats:
    mean: np.ndarray
    variance: np.ndarray
    frame_count: int


@dataclass(frozen=True)
class SpecAugmentPolicy:
    num_freq_masks: int = 2
    max_freq_width: int = 10
    num_time_masks: int = 2
    max_time_width: int = 50
    max_time_ratio: float = 0.2
    enabled: bool = True

    def __post_init__(self):
        for name in ("num_freq_masks", "max_freq_width", "num_time_masks", "max_time_width"):
            if getattr(self, name) < 0:
                raise ValueError(f"SpecAugment {name} must be nonnegative")
        if self.max_freq_width > NUM_MEL_BINS:
            raise ValueError(f"SpecAugment max_freq_width must be at most {NUM_MEL_BINS}")
        if not 0.0 <= self.max_time_ratio <= 1.0:
            raise ValueError("SpecAugment max_time_ratio must lie in [0, 1]")

    @classmethod
    def disabled(cls) -> "SpecAugmentPolicy":
        return cls(enabled=False)


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------


def read_wav(path: str | Path) -> Waveform:
    """Read a 16 kHz mono WAV holding 16-bit integer or 32-bit float samples."""
    try:
        rate, data = wavfile.read(str(path))
    except FileNotFoundError:
        raise FrontendError(f"audio file not found: {path}") from None
    except ValueError as exc:
        raise FrontendError(f"unreadable WAV file {path}: {exc}") from None
    if data.ndim != 1:
        raise FrontendError(f"{path}: {data.shape[1]} channels found, only mono is supported")
    if data.dtype == np.int16:
        samples = data.astype(np.float32) / 32768.0
    elif data.dtype == np.float32:
        samples = data
    else:
        raise FrontendError(f"{path}: sample format {data.dtype} is not supported (int16 or float32 only)")
    if rate != SAMPLE_RATE:
        raise FrontendError(f"{path}: sample rate {rate} Hz, expected {SAMPLE_RATE} Hz (no resampling)")
    return Waveform(samples, rate)


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    """Write float samples in [-1, 1] as 16-bit PCM."""
    pcm = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), sample_rate, pcm)


# ---------------------------------------------------------------------------
# Filterbank
# ---------------------------------------------------------------------------


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def expected_num_frames(num_samples: int) -> int:
    if num_samples < WINDOW_LENGTH:
        return 0
    return 1 + (num_samples - WINDOW_LENGTH) // HOP_LENGTH


def _mel_edges() -> np.ndarray:
    return np.linspace(hz_to_mel(MEL_LOW_HZ), hz_to_mel(MEL_HIGH_HZ), NUM_MEL_BINS + 2)


def mel_center_frequencies() -> np.ndarray:
    """Centre frequency in Hz of each of the 80 filters."""
    return mel_to_hz(_mel_edges()[1:-1])


@lru_cache(maxsize=1)
def mel_filterbank() -> np.ndarray:
    """(80, N_FFT // 2 + 1) triangular weights, triangles drawn on the Mel axis."""
    edges = _mel_edges()
    bin_mels = hz_to_mel(np.arange(N_FFT // 2 + 1) * SAMPLE_RATE / N_FFT)
    left, centre, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_mels[None, :] - left) / (centre - left)
    falling = (right - bin_mels[None, :]) / (right - centre)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    weights.setflags(write=False)
    return weights


def compute_fbank(waveform: Waveform) -> FeatureMatrix:
    samples = np.asarray(waveform.samples, dtype=np.float64)
    if len(samples) < WINDOW_LENGTH:
        raise FrontendError(
            f"audio shorter than one window: {len(samples)} samples < {WINDOW_LENGTH} (25 ms at 16 kHz)"
        )
    frames = sliding_window_view(samples, WINDOW_LENGTH)[::HOP_LENGTH]
    spectrum = np.fft.rfft(frames * np.hamming(WINDOW_LENGTH), n=N_FFT, axis=-1)
    power = spectrum.real**2 + spectrum.imag**2
    energies = power @ mel_filterbank().T
    return FeatureMatrix(np.log(energies + LOG_FLOOR).astype(np.float32))


# ---------------------------------------------------------------------------
# CMVN
# ---------------------------------------------------------------------------


def fit_cmvn(corpus: Sequence[FeatureMatrix]) -> CmvnStats:
    """Population mean and variance over every frame of every utterance."""
    blocks = [f.frames.astype(np.float64) for f in corpus if f.num_frames]
    if not blocks:
        raise FrontendError("cannot fit CMVN statistics on an empty corpus")
    stacked = np.concatenate(blocks, axis=0)
    mean = stacked.mean(axis=0)
    variance = np.maximum(stacked.var(axis=0), VARIANCE_FLOOR)
    logger.debug("CMVN fitted", extra={"metrics": {"utterances": len(blocks), "frames": int(stacked.shape[0])}})
    return CmvnStats(mean, variance, int(stacked.shape[0]))


def apply_cmvn(features: FeatureMatrix, stats: CmvnStats) -> FeatureMatrix:
    out = (features.frames.astype(np.float64) - stats.mean) / np.sqrt(stats.variance)
    return FeatureMatrix(out.astype(features.frames.dtype))


def invert_cmvn(features: FeatureMatrix, stats: CmvnStats) -> FeatureMatrix:
    out = features.frames.astype(np.float64) * np.sqrt(stats.variance) + stats.mean
    return FeatureMatrix(out.astype(features.frames.dtype))


def identity_cmvn() -> CmvnStats:
    return CmvnStats(np.zeros(NUM_MEL_BINS), np.ones(NUM_MEL_BINS), 0)


def cmvn_to_lines(stats: CmvnStats) -> list[str]:
    values = [*stats.mean.tolist(), *stats.variance.tolist()]
    return [repr(float(v)) for v in values] + [str(int(stats.frame_count))]


def cmvn_from_lines(lines: Sequence[str]) -> CmvnStats:
    values = [line.strip() for line in lines if line.strip()]
    if len(values) != 2 * NUM_MEL_BINS + 1:
        raise FrontendError(f"CMVN file must hold {2 * NUM_MEL_BINS + 1} values, found {len(values)}")
    numbers = np.array([float(v) for v in values[:-1]])
    return CmvnStats(numbers[:NUM_MEL_BINS], numbers[NUM_MEL_BINS:], int(values[-1]))


def save_cmvn(stats: CmvnStats, path: str | Path) -> None:
    Path(path).write_text("\n".join(cmvn_to_lines(stats)) + "\n", encoding="utf-8")


def load_cmvn(path: str | Path) -> CmvnStats:
    return cmvn_from_lines(Path(path).read_text(encoding="utf-8").splitlines())


# ---------------------------------------------------------------------------
# SpecAugment
# ---------------------------------------------------------------------------


def spec_augment(features: FeatureMatrix, policy: SpecAugmentPolicy, rng: Rng) -> FeatureMatrix:
    """Zero random frequency bands and time spans; a disabled policy is the identity."""
    if not policy.enabled:
        return features
    frames = features.frames.copy()
    num_frames = frames.shape[0]
    for _ in range(policy.num_freq_masks):
        width = int(rng.integers(0, policy.max_freq_width + 1))
        start = int(rng.integers(0, NUM_MEL_BINS - width + 1))
        frames[:, start : start + width] = 0.0
    time_cap = min(policy.max_time_width, int(policy.max_time_ratio * num_frames))
    for _ in range(policy.num_time_masks):
        width = int(rng.integers(0, time_cap + 1))
        start = int(rng.integers(0, num_frames - width + 1))
        frames[start : start + width, :] = 0.0
    return FeatureMatrix(frames)


def pad_features(batch: Sequence[FeatureMatrix], dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """Stack utterances into (B, T_max, 80) with zero padding; returns (array, lengths)."""
    if not batch:
        raise FrontendError("cannot pad an empty batch")
    lengths = np.array([f.num_frames for f in batch], dtype=np.int64)
    out = np.zeros((len(batch), int(lengths.max()), NUM_MEL_BINS), dtype=dtype)
    for i, f in enumerate(batch):
        out[i, : f.num_frames] = f.frames
    return out, lengths


def load_features(path: str | Path, stats: CmvnStats | None = None) -> FeatureMatrix:
    """WAV file to (optionally normalised) features."""
    features = compute_fbank(read_wav(path))
    return apply_cmvn(features, stats) if stats is not None else features
