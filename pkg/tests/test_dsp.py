"""STFT analysis/resynthesis and mel filterbank behavior."""

import numpy as np
import pytest

from imly.audio_io import AudioBuffer
from imly.dsp import (
    FeatureMatrix,
    Spectrogram,
    StftConfig,
    hann_periodic,
    hz_from_mel,
    istft,
    log_mel,
    mel_filterbank,
    mel_from_hz,
    stft,
)
from imly.errors import ConfigError

from oracles import snr_db

SR = 22050


def test_hann_periodic_shape_and_cola_sum():
    n, hop = 2048, 512
    w = hann_periodic(n)
    assert len(w) == n and w[0] == 0.0
    # periodic Hann tiles to a flat sum at 4x overlap
    cover = np.zeros(n * 4)
    for start in range(0, len(cover) - n + 1, hop):
        cover[start : start + n] += w
    interior = cover[n:-n]
    np.testing.assert_allclose(interior, interior[0], atol=1e-12)


def test_stft_config_validation():
    with pytest.raises(ConfigError, match="power of two"):
        StftConfig(n_fft=1000)
    with pytest.raises(ConfigError, match="hop"):
        StftConfig(n_fft=1024, hop=0)
    with pytest.raises(ConfigError, match="hop"):
        StftConfig(n_fft=1024, hop=2048)
    assert StftConfig().n_bins == 1025


def test_zero_input_gives_zero_spectrogram():
    spec = stft(AudioBuffer(np.zeros(5000), SR), StftConfig())
    assert np.all(spec.frames == 0)


def test_sine_at_bin_frequency_peaks_at_that_bin():
    cfg = StftConfig()
    k = 100
    freq = k * SR / cfg.n_fft
    t = np.arange(SR) / SR
    spec = stft(AudioBuffer(0.5 * np.sin(2 * np.pi * freq * t), SR), cfg)
    interior = spec.magnitude[2:-2]
    assert np.all(np.argmax(interior, axis=1) == k)


def test_stft_matches_naive_framing_oracle():
    """Every frame equals the windowed rfft of the identically padded signal."""
    rng = np.random.default_rng(7)
    x = rng.standard_normal(3000) * 0.3
    cfg = StftConfig(n_fft=512, hop=128)
    spec = stft(AudioBuffer(x, SR), cfg)

    padded = np.pad(x, cfg.n_fft // 2, mode="reflect")
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(cfg.n_fft) / cfg.n_fft)
    n_frames = (len(padded) - cfg.n_fft) // cfg.hop + 1
    assert spec.frames.shape == (n_frames, cfg.n_bins)
    for t in range(n_frames):
        frame = padded[t * cfg.hop : t * cfg.hop + cfg.n_fft] * w
        np.testing.assert_allclose(spec.frames[t], np.fft.rfft(frame), atol=1e-9)


def test_spectral_energy_matches_windowed_frame_energy():
    """One-sided |X|^2 with interior-bin doubling obeys the DFT energy identity."""
    rng = np.random.default_rng(3)
    x = rng.standard_normal(SR) * 0.2
    cfg = StftConfig()
    spec = stft(AudioBuffer(x, SR), cfg)
    mag2 = spec.magnitude**2
    freq_energy = float(
        (mag2[:, 0] + 2.0 * mag2[:, 1:-1].sum(axis=1) + mag2[:, -1]).sum()
    ) / cfg.n_fft

    padded = np.pad(x, cfg.n_fft // 2, mode="reflect")
    w = hann_periodic(cfg.n_fft)
    time_energy = 0.0
    for t in range(spec.frames.shape[0]):
        frame = padded[t * cfg.hop : t * cfg.hop + cfg.n_fft]
        time_energy += float(np.sum((frame * w) ** 2))
    assert abs(freq_energy - time_energy) / time_energy < 0.01


@pytest.mark.parametrize("length", [2048, 5000, 22050, 22050 + 317, 100])
def test_round_trip_snr(length):
    rng = np.random.default_rng(length)
    x = rng.uniform(-0.8, 0.8, length)
    out = istft(stft(AudioBuffer(x, SR), StftConfig()))
    assert len(out) == length
    assert snr_db(x, out.samples) >= 60.0


def test_round_trip_with_small_window():
    rng = np.random.default_rng(5)
    x = rng.uniform(-0.5, 0.5, 4321)
    out = istft(stft(AudioBuffer(x, SR), StftConfig(n_fft=512, hop=160)))
    assert len(out) == 4321
    assert snr_db(x, out.samples) >= 60.0


def test_istft_rejects_non_overlapping_hop():
    spec = stft(AudioBuffer(np.zeros(4096), SR), StftConfig(n_fft=2048, hop=1536))
    with pytest.raises(ConfigError, match="hop"):
        istft(spec)


def test_spectrogram_validates_shape():
    with pytest.raises(ConfigError, match="spectrogram"):
        Spectrogram(np.zeros((3, 7)), StftConfig(), SR)


def test_feature_matrix_validates():
    with pytest.raises(ConfigError, match="2-D"):
        FeatureMatrix(np.zeros(5), 0.01)
    with pytest.raises(ConfigError, match="finite"):
        FeatureMatrix(np.full((2, 2), np.inf), 0.01)


# ---------------------------------------------------------------------------
# Mel scale and filterbank


def test_mel_scale_round_trip_and_monotonicity():
    f = np.linspace(0.0, SR / 2, 200)
    np.testing.assert_allclose(hz_from_mel(mel_from_hz(f)), f, atol=1e-6)
    assert mel_from_hz(0.0) == 0.0
    assert np.all(np.diff(mel_from_hz(f)) > 0)


def test_filterbank_triangles_peak_at_one_inside_band():
    bank = mel_filterbank(40, 512, SR, 50.0, SR / 2)
    assert bank.shape == (40, 257)
    assert np.all(bank >= 0.0) and np.all(bank <= 1.0 + 1e-12)
    # peaks approach 1 where bins resolve the triangle
    assert np.max(bank) > 0.99
    assert np.all(bank.sum(axis=1) > 0)  # no empty filter at this resolution


def test_filterbank_rows_are_supported_on_their_band():
    n_fft = 1024
    bank = mel_filterbank(10, n_fft, SR, 100.0, 8000.0)
    edges = hz_from_mel(np.linspace(mel_from_hz(100.0), mel_from_hz(8000.0), 12))
    bin_freqs = np.arange(n_fft // 2 + 1) * SR / n_fft
    for m in range(10):
        active = bin_freqs[bank[m] > 0]
        if len(active):
            assert active.min() > edges[m] - 1e-9
            assert active.max() < edges[m + 2] + 1e-9


def test_filterbank_rejects_bad_edges():
    with pytest.raises(ConfigError, match="band edges"):
        mel_filterbank(10, 512, SR, 500.0, 100.0)
    with pytest.raises(ConfigError, match="band edges"):
        mel_filterbank(10, 512, SR, 50.0, SR)  # beyond Nyquist


def test_log_mel_applies_floor_on_silence():
    spec = stft(AudioBuffer(np.zeros(4096), SR), StftConfig(n_fft=512, hop=220))
    feats = log_mel(spec, n_mels=40, fmin=50.0)
    np.testing.assert_allclose(feats.values, np.log(1e-10))
    assert feats.frame_hop_seconds == 220 / SR
