"""WAV decoding/encoding and sample-rate conversion.

Everything downstream works on mono fixed-rate buffers, so this module
normalizes channel count and scaling at the boundary. Only RIFF/WAVE with
PCM16 or IEEE float32 payloads is accepted; output is always PCM16 mono.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    TruncatedDataError,
    UnsupportedCodecError,
    WavFormatError,
)

#: Pipeline-wide default working rate. Half of 44.1 kHz keeps STFT cost down
#: while leaving sibilant energy (several kHz) well below Nyquist.
DEFAULT_SAMPLE_RATE = 22050

_RESAMPLE_HALF_TAPS = 32  # 64-tap windowed-sinc kernel


@dataclass(frozen=True)
class AudioBuffer:
    """Mono sample sequence in [-1, 1] with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ConfigError(f"AudioBuffer samples must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ConfigError("AudioBuffer samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


def decode_wav(data: bytes) -> AudioBuffer:
    """Decode RIFF/WAVE bytes (PCM16 or float32, 1-2 channels) to mono.

    PCM16 samples map to [-1, 1) by division with 32768; stereo is averaged
    to mono. Raises ``WavFormatError``, ``UnsupportedCodecError``, or
    ``TruncatedDataError`` depending on what is wrong.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("not a RIFF/WAVE stream")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body_start = pos + 8
        if chunk_id == b"fmt ":
            if chunk_size < 16 or body_start + 16 > len(data):
                raise WavFormatError("fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", data, body_start)
        elif chunk_id == b"data":
            if body_start + chunk_size > len(data):
                raise TruncatedDataError(
                    f"data chunk declares {chunk_size} bytes, "
                    f"only {len(data) - body_start} available"
                )
            payload = data[body_start : body_start + chunk_size]
        # chunks are word-aligned
        pos = body_start + chunk_size + (chunk_size & 1)

    if fmt is None:
        raise WavFormatError("missing fmt chunk")
    if payload is None:
        raise WavFormatError("missing data chunk")

    codec, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if sample_rate <= 0:
        raise WavFormatError(f"invalid sample rate {sample_rate}")
    if channels not in (1, 2):
        raise UnsupportedCodecError(f"unsupported channel count {channels}")
    if codec == 1 and bits == 16:
        frame_bytes = 2 * channels
        usable = len(payload) - len(payload) % frame_bytes
        raw = np.frombuffer(payload[:usable], dtype="<i2").astype(np.float64)
        samples = raw / 32768.0
    elif codec == 3 and bits == 32:
        frame_bytes = 4 * channels
        usable = len(payload) - len(payload) % frame_bytes
        samples = np.frombuffer(payload[:usable], dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedCodecError(f"unsupported codec {codec} with {bits} bits")

    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    return AudioBuffer(np.clip(samples, -1.0, 1.0), sample_rate)


def encode_wav(buf: AudioBuffer) -> bytes:
    """Encode as PCM16 mono WAV.

    Samples are clamped to [-1, 1], scaled symmetrically by 32768, rounded
    to nearest, and saturated to the int16 range so that a decode/encode
    round trip stays within 1/32767.
    """
    clipped = np.clip(buf.samples, -1.0, 1.0)
    quantized = np.clip(np.rint(clipped * 32768.0), -32768, 32767).astype("<i2")
    payload = quantized.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        1,  # PCM
        1,  # mono
        buf.sample_rate,
        buf.sample_rate * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    return header + payload


def read_wav(path: str) -> AudioBuffer:
    with open(path, "rb") as fp:
        return decode_wav(fp.read())


def write_wav(path: str, buf: AudioBuffer) -> None:
    with open(path, "wb") as fp:
        fp.write(encode_wav(buf))


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Band-limited resampling with a 64-tap windowed-sinc kernel.

    Output length is round(len * target / source). Kernel weights are
    renormalized per output sample over the in-range taps, which keeps DC
    exactly flat up to the signal edges.
    """
    if target_rate <= 0:
        raise ConfigError(f"target rate must be positive, got {target_rate}")
    if target_rate == buf.sample_rate:
        return AudioBuffer(buf.samples.copy(), buf.sample_rate)

    n_in = len(buf.samples)
    ratio = target_rate / buf.sample_rate
    n_out = int(round(n_in * ratio))
    if n_out == 0 or n_in == 0:
        return AudioBuffer(np.zeros(0), target_rate)

    cutoff = min(1.0, ratio)  # relative to the source Nyquist
    x = buf.samples
    out = np.empty(n_out)
    half = _RESAMPLE_HALF_TAPS
    chunk = 65536
    for start in range(0, n_out, chunk):
        idx = np.arange(start, min(start + chunk, n_out))
        centers = idx / ratio
        base = np.floor(centers).astype(np.int64)
        num = np.zeros(len(idx))
        den = np.zeros(len(idx))
        for k in range(-half + 1, half + 1):
            j = base + k
            dt = centers - j
            w = cutoff * np.sinc(cutoff * dt) * (0.5 + 0.5 * np.cos(np.pi * dt / half))
            valid = (j >= 0) & (j < n_in)
            w = np.where(valid, w, 0.0)
            num += w * x[np.clip(j, 0, n_in - 1)]
            den += w
        out[idx] = num / np.where(np.abs(den) < 1e-12, 1.0, den)
    return AudioBuffer(np.clip(out, -1.0, 1.0), target_rate)
