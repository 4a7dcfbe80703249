"""Synthetic phoneme-coded audio for desk-scale training and demos.

Each phoneme is rendered as a deterministic ~100 ms burst: the noisy
fricatives S, SH, Z, F, TH become band-limited high-frequency noise and
every other phoneme a distinct pure tone. A recognizer trained on this
corpus inherits the association between high-band noise and sibilants,
which the rest of the system leans on.
"""

from __future__ import annotations

import numpy as np

from .audio_io import DEFAULT_SAMPLE_RATE, AudioBuffer
from .errors import ConfigError
from .phoneme_recognizer import (
    PHONEME_TO_INDEX,
    PHONEMES,
    FeatureMatrix,
    PhonemeSequence,
    extract_features,
)

PHONE_SECONDS = 0.1
GAP_SECONDS = 0.03
EDGE_RAMP_SECONDS = 0.005
BURST_RMS = 0.15

# high-band noise codes (Hz); everything else is a pure tone below 4 kHz
NOISE_BANDS: dict[str, tuple[float, float]] = {
    "S": (6000.0, 9000.0),
    "SH": (4000.0, 7000.0),
    "Z": (5000.0, 8000.0),
    "F": (6500.0, 9500.0),
    "TH": (5500.0, 8500.0),
}

TONE_MIN_HZ = 250.0
TONE_STEP_HZ = 95.0


def _tone_frequencies() -> dict[str, float]:
    freqs = {}
    rank = 0
    for symbol in PHONEMES:
        if symbol not in NOISE_BANDS:
            freqs[symbol] = TONE_MIN_HZ + TONE_STEP_HZ * rank
            rank += 1
    return freqs


TONE_HZ = _tone_frequencies()


def _envelope(length: int, sample_rate: int) -> np.ndarray:
    ramp = max(1, int(round(EDGE_RAMP_SECONDS * sample_rate)))
    env = np.ones(length)
    fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
    env[:ramp] = fade
    env[-ramp:] *= fade[::-1]
    return env


def render_phoneme(index: int, sample_rate: int = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    """Deterministic audio burst encoding one phoneme index."""
    if not 1 <= index <= len(PHONEMES):
        raise ConfigError(f"phoneme index out of range: {index}")
    symbol = PHONEMES[index - 1]
    length = int(round(PHONE_SECONDS * sample_rate))
    if symbol in NOISE_BANDS:
        lo, hi = NOISE_BANDS[symbol]
        rng = np.random.default_rng(9000 + index)
        noise = rng.standard_normal(length)
        spectrum = np.fft.rfft(noise)
        freqs = np.fft.rfftfreq(length, 1.0 / sample_rate)
        spectrum[(freqs < lo) | (freqs > hi)] = 0.0
        burst = np.fft.irfft(spectrum, length)
    else:
        t = np.arange(length) / sample_rate
        burst = np.sin(2.0 * np.pi * TONE_HZ[symbol] * t)
    rms = float(np.sqrt(np.mean(burst**2)))
    burst = burst * (BURST_RMS / rms)
    return burst * _envelope(length, sample_rate)


def render_sequence(
    seq: PhonemeSequence, sample_rate: int = DEFAULT_SAMPLE_RATE
) -> AudioBuffer:
    """Concatenate phoneme bursts with short silent gaps."""
    gap = np.zeros(int(round(GAP_SECONDS * sample_rate)))
    pieces = []
    for index in seq.indices:
        pieces.append(render_phoneme(index, sample_rate))
        pieces.append(gap)
    samples = np.concatenate(pieces[:-1]) if pieces else np.zeros(0)
    return AudioBuffer(samples, sample_rate)


def build_corpus(
    num_examples: int = 20,
    seed: int = 0,
    min_len: int = 5,
    max_len: int = 8,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> list[tuple[AudioBuffer, PhonemeSequence]]:
    """Random phoneme sequences covering the whole alphabet, rendered to audio."""
    if min_len < 1 or max_len < min_len:
        raise ConfigError(f"bad length bounds: [{min_len}, {max_len}]")
    rng = np.random.default_rng(seed)
    lengths = [int(rng.integers(min_len, max_len + 1)) for _ in range(num_examples)]
    total = sum(lengths)
    # deal shuffled copies of the alphabet so every phoneme appears when
    # the corpus is big enough
    pool: list[int] = []
    while len(pool) < total:
        pool.extend(int(i) for i in rng.permutation(len(PHONEMES)) + 1)
    corpus = []
    offset = 0
    for length in lengths:
        seq = PhonemeSequence(tuple(pool[offset : offset + length]))
        offset += length
        corpus.append((render_sequence(seq, sample_rate), seq))
    return corpus


def corpus_features(
    corpus: list[tuple[AudioBuffer, PhonemeSequence]],
) -> list[tuple[FeatureMatrix, PhonemeSequence]]:
    return [(extract_features(buf), seq) for buf, seq in corpus]


def sibilant_indices() -> tuple[int, ...]:
    """Indices whose training audio is high-band noise."""
    return tuple(PHONEME_TO_INDEX[s] for s in sorted(NOISE_BANDS))
