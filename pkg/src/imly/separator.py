"""REPET-SIM foreground/background separation.

The background is modeled, per frame, as the element-wise median over the
most similar frames found in a cosine self-similarity matrix; whatever the
median cannot explain is foreground. Applied to non-vocal material the
foreground stem carries the transient, speech-like residue the rest of the
pipeline feeds on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioBuffer
from .dsp import Spectrogram, StftConfig, istft, stft
from .errors import AudioTooShortError, ConfigError

SIMILARITY_BLOCK = 256
MASK_EPS = 1e-10


@dataclass(frozen=True)
class SeparatorConfig:
    k_neighbors: int = 30
    min_spacing_seconds: float = 1.0
    mask_exponent: float = 1.0  # UI "mask hardness"
    stft: StftConfig = field(default_factory=lambda: StftConfig(2048, 512))
    max_duration_seconds: float = 120.0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ConfigError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if self.min_spacing_seconds < 0:
            raise ConfigError("min_spacing_seconds must be >= 0")
        if self.mask_exponent < 0:
            raise ConfigError("mask_exponent must be >= 0")

    def min_spacing_frames(self, sample_rate: int) -> int:
        return int(round(self.min_spacing_seconds * sample_rate / self.stft.hop))


def similarity_matrix(mag: np.ndarray) -> np.ndarray:
    """Cosine similarity between magnitude frames, computed in blocks.

    Zero-norm frames get similarity 0 to everything and 1 to themselves.
    """
    mag = np.asarray(mag, dtype=np.float64)
    n = mag.shape[0]
    norms = np.linalg.norm(mag, axis=1)
    zero = norms < 1e-300
    unit = mag / np.where(zero, 1.0, norms)[:, None]
    unit[zero] = 0.0
    sim = np.empty((n, n))
    for i in range(0, n, SIMILARITY_BLOCK):
        bi = unit[i : i + SIMILARITY_BLOCK]
        for j in range(0, n, SIMILARITY_BLOCK):
            sim[i : i + SIMILARITY_BLOCK, j : j + SIMILARITY_BLOCK] = bi @ unit[
                j : j + SIMILARITY_BLOCK
            ].T
    sim = np.clip((sim + sim.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(sim, 1.0)
    return sim


def select_neighbors(
    similarities: np.ndarray, frame: int, k: int, min_spacing: int
) -> list[int]:
    """Greedy top-k selection with a spacing exclusion window.

    The frame itself is always taken first; remaining candidates are walked
    in descending similarity (ties to the lower index) and skipped when
    within ``min_spacing`` frames of anything already selected.
    """
    n = len(similarities)
    order = np.lexsort((np.arange(n), -similarities))
    blocked = np.zeros(n, dtype=bool)

    def block(center: int) -> None:
        if min_spacing > 0:
            blocked[max(0, center - min_spacing + 1) : center + min_spacing] = True
        else:
            blocked[center] = True

    chosen = [frame]
    block(frame)
    for idx in order:
        if len(chosen) >= k:
            break
        idx = int(idx)
        if blocked[idx]:
            continue
        chosen.append(idx)
        block(idx)
    return chosen


def repeating_model(
    mag: np.ndarray, sim: np.ndarray, cfg: SeparatorConfig, sample_rate: int
) -> np.ndarray:
    """Per-frame median over the selected most-similar frames."""
    mag = np.asarray(mag, dtype=np.float64)
    if sim.shape[0] != mag.shape[0]:
        raise ConfigError(
            f"similarity matrix ({sim.shape[0]} frames) does not match "
            f"magnitude ({mag.shape[0]} frames)"
        )
    spacing = cfg.min_spacing_frames(sample_rate)
    model = np.empty_like(mag)
    for j in range(mag.shape[0]):
        rows = select_neighbors(sim[j], j, cfg.k_neighbors, spacing)
        model[j] = np.median(mag[rows], axis=0)
    return model


def soft_mask(mag: np.ndarray, repeating: np.ndarray, exponent: float = 1.0) -> np.ndarray:
    """Background mask: (min(repeating, mag) / mag)^p, in [0, 1]."""
    mag = np.asarray(mag, dtype=np.float64)
    repeating = np.asarray(repeating, dtype=np.float64)
    ratio = np.minimum(repeating, mag) / np.maximum(mag, MASK_EPS)
    return np.clip(ratio, 0.0, 1.0) ** exponent


def separate(
    buf: AudioBuffer, cfg: SeparatorConfig | None = None
) -> tuple[AudioBuffer, AudioBuffer]:
    """Split audio into (foreground, background) stems.

    The mask scales magnitudes only; the original phase is kept, so with
    mask exponent 1 the two stems sum back to the input exactly (up to the
    overlap-add round trip).
    """
    cfg = cfg or SeparatorConfig()
    if len(buf) < cfg.stft.n_fft:
        raise AudioTooShortError(
            f"need at least {cfg.stft.n_fft} samples, got {len(buf)}"
        )
    if buf.duration_seconds > cfg.max_duration_seconds:
        raise ConfigError(
            f"input of {buf.duration_seconds:.1f}s exceeds the "
            f"{cfg.max_duration_seconds:.0f}s separation limit (O(T^2) similarity)"
        )
    spec = stft(buf, cfg.stft)
    mag = spec.magnitude
    sim = similarity_matrix(mag)
    repeating = repeating_model(mag, sim, cfg, buf.sample_rate)
    background_mask = soft_mask(mag, repeating, cfg.mask_exponent)
    bg_frames = spec.frames * background_mask
    fg_frames = spec.frames * (1.0 - background_mask)
    background = istft(Spectrogram(bg_frames, cfg.stft, buf.sample_rate, spec.num_samples))
    foreground = istft(Spectrogram(fg_frames, cfg.stft, buf.sample_rate, spec.num_samples))
    return foreground, background


def separation_mask(buf: AudioBuffer, cfg: SeparatorConfig | None = None) -> np.ndarray:
    """Background soft mask alone (T x F), for dumps and inspection."""
    cfg = cfg or SeparatorConfig()
    if len(buf) < cfg.stft.n_fft:
        raise AudioTooShortError(
            f"need at least {cfg.stft.n_fft} samples, got {len(buf)}"
        )
    spec = stft(buf, cfg.stft)
    mag = spec.magnitude
    repeating = repeating_model(mag, similarity_matrix(mag), cfg, buf.sample_rate)
    return soft_mask(mag, repeating, cfg.mask_exponent)
