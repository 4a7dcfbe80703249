"""STFT analysis/resynthesis and log-mel features.

Frames are centered: the signal is reflect-padded by n_fft/2 on both sides
so frame t is centered at t*hop, which keeps masks and posteriors aligned
in time. Resynthesis is weighted overlap-add with a synthesis Hann window
and window-sum normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer
from .errors import ConfigError

LOG_MEL_FLOOR = 1e-10


def hann_periodic(n: int) -> np.ndarray:
    """Periodic Hann window (the DFT-even variant used for COLA hops)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class StftConfig:
    n_fft: int = 2048
    hop: int = 512

    def __post_init__(self):
        if self.n_fft <= 0 or (self.n_fft & (self.n_fft - 1)) != 0:
            raise ConfigError(f"n_fft must be a positive power of two, got {self.n_fft}")
        if not 0 < self.hop <= self.n_fft:
            raise ConfigError(f"hop must be in (0, n_fft], got {self.hop}")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    def hop_seconds(self, sample_rate: int) -> float:
        return self.hop / sample_rate


@dataclass(frozen=True)
class Spectrogram:
    """One-sided complex STFT frames, T x (n_fft/2 + 1)."""

    frames: np.ndarray
    config: StftConfig
    sample_rate: int
    num_samples: int | None = None  # original length, for istft trimming

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.complex128)
        if frames.ndim != 2 or frames.shape[1] != self.config.n_bins:
            raise ConfigError(
                f"spectrogram must be T x {self.config.n_bins}, got {frames.shape}"
            )
        if frames.size and not np.all(np.isfinite(frames)):
            raise ConfigError("spectrogram entries must be finite")
        object.__setattr__(self, "frames", frames)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.frames)


@dataclass(frozen=True)
class FeatureMatrix:
    """T x n_mels log-mel energies plus the frame hop in seconds."""

    values: np.ndarray
    frame_hop_seconds: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ConfigError(f"feature matrix must be 2-D, got shape {values.shape}")
        if values.size and not np.all(np.isfinite(values)):
            raise ConfigError("feature entries must be finite")
        object.__setattr__(self, "values", values)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]


def stft(buf: AudioBuffer, cfg: StftConfig) -> Spectrogram:
    """Hann-windowed one-sided STFT of the center-padded signal."""
    x = buf.samples
    original_len = len(x)
    if len(x) < cfg.n_fft:
        x = np.concatenate([x, np.zeros(cfg.n_fft - len(x))])
    pad = cfg.n_fft // 2
    padded = np.pad(x, pad, mode="reflect")
    n_frames = (len(padded) - cfg.n_fft) // cfg.hop + 1
    window = hann_periodic(cfg.n_fft)
    starts = np.arange(n_frames) * cfg.hop
    idx = starts[:, None] + np.arange(cfg.n_fft)[None, :]
    frames = np.fft.rfft(padded[idx] * window, axis=1)
    return Spectrogram(frames, cfg, buf.sample_rate, num_samples=original_len)


def istft(spec: Spectrogram) -> AudioBuffer:
    """Weighted overlap-add resynthesis.

    Requires hop <= n_fft/2 so the squared Hann window overlaps everywhere;
    the synthesis divides by the accumulated window-sum-of-squares, making
    stft -> istft an identity up to float error.
    """
    cfg = spec.config
    if cfg.hop > cfg.n_fft // 2:
        raise ConfigError(
            f"istft requires hop <= n_fft/2 for overlap-add, got hop={cfg.hop}"
        )
    n_frames = spec.frames.shape[0]
    window = hann_periodic(cfg.n_fft)
    total = (n_frames - 1) * cfg.hop + cfg.n_fft if n_frames else cfg.n_fft
    signal = np.zeros(total)
    weight = np.zeros(total)
    time_frames = np.fft.irfft(spec.frames, n=cfg.n_fft, axis=1) * window
    for t in range(n_frames):
        start = t * cfg.hop
        signal[start : start + cfg.n_fft] += time_frames[t]
        weight[start : start + cfg.n_fft] += window**2
    signal /= np.maximum(weight, 1e-12)
    pad = cfg.n_fft // 2
    # analysis frames overrun the padded signal's tail, so the usable span
    # runs from the left pad up to whatever the frames actually covered
    if spec.num_samples is not None:
        end = min(total, pad + spec.num_samples)
    else:
        end = total - pad
    signal = signal[pad:end]
    return AudioBuffer(signal, spec.sample_rate)


def mel_from_hz(f: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def hz_from_mel(m: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int, n_fft: int, sample_rate: int, fmin: float, fmax: float
) -> np.ndarray:
    """Triangular HTK-mel filterbank, shape (n_mels, n_fft/2 + 1)."""
    if not 0 <= fmin < fmax <= sample_rate / 2:
        raise ConfigError(
            f"band edges must satisfy 0 <= fmin < fmax <= Nyquist, "
            f"got fmin={fmin}, fmax={fmax}, sr={sample_rate}"
        )
    mel_points = np.linspace(mel_from_hz(fmin), mel_from_hz(fmax), n_mels + 2)
    hz_points = hz_from_mel(mel_points)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    bank = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(n_mels):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        up = (bin_freqs - left) / max(center - left, 1e-12)
        down = (right - bin_freqs) / max(right - center, 1e-12)
        bank[m] = np.maximum(0.0, np.minimum(up, down))
    return bank


def log_mel(
    spec: Spectrogram, n_mels: int = 40, fmin: float = 50.0, fmax: float | None = None
) -> FeatureMatrix:
    """Log-energy of the power spectrum through the mel filterbank."""
    if fmax is None:
        fmax = spec.sample_rate / 2
    bank = mel_filterbank(n_mels, spec.config.n_fft, spec.sample_rate, fmin, fmax)
    power = np.abs(spec.frames) ** 2
    energies = power @ bank.T
    values = np.log(np.maximum(energies, LOG_MEL_FLOOR))
    return FeatureMatrix(values, spec.config.hop_seconds(spec.sample_rate))
