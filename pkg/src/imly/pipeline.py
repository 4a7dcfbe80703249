"""End-to-end orchestration: separate, recognize, segment, decode, rank.

The acoustic stages run once per input and their products (segments plus
per-segment phoneme sequences and the posteriorgram) are cached by content
hash, so decoder-knob changes re-run only the phoneme-to-word search.
"""

from __future__ import annotations

import hashlib
import json
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from .audio_io import DEFAULT_SAMPLE_RATE, AudioBuffer, resample
from .errors import (
    AudioTooShortError,
    CacheMissError,
    ConfigError,
    DataError,
    ImlyError,
)
from .lexicon_lm import Lexicon, NGramLM, load_lexicon, load_lm
from .phoneme_recognizer import (
    AcousticModelParams,
    PhonemeSequence,
    Posteriorgram,
    beam_decode,
    extract_features,
    forward,
    load_params,
    phoneme_symbols,
)
from .separator import SeparatorConfig, separate
from .word_decoder import ChannelParams, DecoderConfig, decode_words, load_channel

MIN_INPUT_SECONDS = 0.5
RMS_FRAME_SECONDS = 0.025

#: decoder knobs that may be overridden without re-running the acoustic model
OVERRIDE_KEYS = ("lm_weight", "beam_width", "word_penalty", "p_sub", "p_del", "p_ins")


@dataclass(frozen=True)
class SegmentationConfig:
    """Foreground-RMS segmentation: one segment becomes one lyric line."""

    rms_threshold_factor: float = 0.5
    min_gap_seconds: float = 0.3
    min_segment_seconds: float = 0.5
    max_segment_seconds: float = 10.0

    def __post_init__(self):
        for name in (
            "rms_threshold_factor",
            "min_gap_seconds",
            "min_segment_seconds",
            "max_segment_seconds",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_segment_seconds <= self.min_segment_seconds:
            raise ConfigError("max_segment_seconds must exceed min_segment_seconds")


@dataclass(frozen=True)
class PipelineConfig:
    separator: SeparatorConfig = SeparatorConfig()
    use_separation: bool = True
    am_path: str | None = None
    lexicon_path: str | None = None
    lm_path: str | None = None
    channel_path: str | None = None
    decoder: DecoderConfig = DecoderConfig()
    segmentation: SegmentationConfig = SegmentationConfig()
    phoneme_beam_width: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.phoneme_beam_width < 1:
            raise ConfigError("phoneme_beam_width must be >= 1")


@dataclass(frozen=True)
class Models:
    acoustic: AcousticModelParams
    lexicon: Lexicon
    lm: NGramLM
    channel: ChannelParams
    fingerprints: dict[str, str]


def _file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fp:
        for chunk in iter(lambda: fp.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def load_models(cfg: PipelineConfig) -> Models:
    """Load every referenced model file, recording content fingerprints."""
    paths = {
        "acoustic_model": cfg.am_path,
        "lexicon": cfg.lexicon_path,
        "lm": cfg.lm_path,
        "channel": cfg.channel_path,
    }
    for name, path in paths.items():
        if path is None:
            raise ConfigError(f"no {name} path configured")
    fingerprints = {}
    for name, path in paths.items():
        try:
            fingerprints[name] = _file_sha256(path)
        except OSError as exc:
            raise DataError(f"cannot read {name} file {path}: {exc}") from exc
    return Models(
        acoustic=load_params(cfg.am_path),
        lexicon=load_lexicon(cfg.lexicon_path),
        lm=load_lm(cfg.lm_path),
        channel=load_channel(cfg.channel_path),
        fingerprints=fingerprints,
    )


# ---------------------------------------------------------------------------
# Segmentation


def segment(buf: AudioBuffer, cfg: SegmentationConfig) -> list[tuple[float, float]]:
    """Span detection by frame RMS against a median-relative threshold.

    Gaps shorter than min_gap merge, short segments drop, and segments over
    max_segment split recursively at the quietest eligible frame (ties go
    to the frame nearest the midpoint).
    """
    frame_len = max(1, int(round(RMS_FRAME_SECONDS * buf.sample_rate)))
    num_frames = len(buf) // frame_len
    if num_frames == 0:
        return []
    trimmed = buf.samples[: num_frames * frame_len].reshape(num_frames, frame_len)
    rms = np.sqrt(np.mean(trimmed**2, axis=1))
    threshold = cfg.rms_threshold_factor * float(np.median(rms))
    active = rms > threshold

    spans = _active_runs(active)
    spans = _merge_gaps(spans, _to_frames(cfg.min_gap_seconds, frame_len, buf.sample_rate))
    min_frames = _to_frames(cfg.min_segment_seconds, frame_len, buf.sample_rate)
    spans = [(a, b) for a, b in spans if b - a >= min_frames]
    max_frames = _to_frames(cfg.max_segment_seconds, frame_len, buf.sample_rate)
    out: list[tuple[int, int]] = []
    for span in spans:
        out.extend(_split_long(span, rms, max_frames, min_frames))
    seconds = frame_len / buf.sample_rate
    return [(a * seconds, min(b * seconds, buf.duration_seconds)) for a, b in out]


def _to_frames(seconds: float, frame_len: int, sample_rate: int) -> int:
    return max(1, int(round(seconds * sample_rate / frame_len)))


def _active_runs(active: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as half-open frame spans."""
    spans = []
    start = None
    for i, flag in enumerate(active):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            spans.append((start, i))
            start = None
    if start is not None:
        spans.append((start, len(active)))
    return spans


def _merge_gaps(spans: list[tuple[int, int]], min_gap: int) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for span in spans:
        if merged and span[0] - merged[-1][1] < min_gap:
            merged[-1] = (merged[-1][0], span[1])
        else:
            merged.append(span)
    return merged


def _split_long(
    span: tuple[int, int], rms: np.ndarray, max_frames: int, min_frames: int
) -> list[tuple[int, int]]:
    start, end = span
    if end - start <= max_frames:
        return [span]
    lo = start + min_frames
    hi = end - min_frames
    if lo >= hi:
        cut = (start + end) // 2
    else:
        window = rms[lo:hi]
        best = float(window.min())
        candidates = np.flatnonzero(window <= best) + lo
        mid = (start + end) / 2.0
        cut = int(min(candidates, key=lambda c: (abs(c - mid), c)))
    return _split_long((start, cut), rms, max_frames, min_frames) + _split_long(
        (cut, end), rms, max_frames, min_frames
    )


# ---------------------------------------------------------------------------
# Acoustic analysis (stages 1-2), cacheable


@dataclass(frozen=True)
class Analysis:
    """Everything the word decoder needs, produced once per input."""

    audio_hash: str
    stage_hash: str
    sample_rate: int
    duration_seconds: float
    segments: tuple[tuple[float, float], ...]
    phonemes: tuple[tuple[int, ...], ...]
    segment_errors: tuple[str | None, ...]
    posteriorgram: Posteriorgram = field(repr=False)

    @property
    def key(self) -> str:
        return f"{self.audio_hash}:{self.stage_hash}"


def prepare_input(buf: AudioBuffer) -> AudioBuffer:
    """Validate duration and bring audio to the working rate."""
    if buf.duration_seconds < MIN_INPUT_SECONDS:
        raise AudioTooShortError(
            f"need at least {MIN_INPUT_SECONDS} s of audio, got "
            f"{buf.duration_seconds:.3f} s"
        )
    return resample(buf, DEFAULT_SAMPLE_RATE)


def separate_stage(work: AudioBuffer, cfg: PipelineConfig) -> AudioBuffer:
    """Foreground extraction, or the input unchanged when disabled."""
    if not cfg.use_separation:
        return work
    foreground, _background = separate(work, cfg.separator)
    return foreground


def recognize_stage(
    work: AudioBuffer, fg: AudioBuffer, cfg: PipelineConfig, models: Models
) -> Analysis:
    """Features, posteriorgram, segmentation, per-segment phoneme decode."""
    features = extract_features(fg)
    post = forward(features, models.acoustic)
    spans = segment(fg, cfg.segmentation)
    phonemes: list[tuple[int, ...]] = []
    errors: list[str | None] = []
    hop_s = post.frame_hop_seconds
    num_frames = post.probs.shape[0]
    for start_s, end_s in spans:
        t0 = max(0, int(np.floor(start_s / hop_s)))
        t1 = min(num_frames, int(np.ceil(end_s / hop_s)))
        try:
            window = Posteriorgram(post.probs[t0:t1], hop_s)
            hyps = beam_decode(window, cfg.phoneme_beam_width)
            phonemes.append(hyps[0][0].indices if hyps else ())
            errors.append(None)
        except ImlyError as exc:  # recorded, not fatal
            phonemes.append(())
            errors.append(str(exc))
    return Analysis(
        audio_hash=audio_hash(work),
        stage_hash=stage_hash(cfg, models),
        sample_rate=work.sample_rate,
        duration_seconds=work.duration_seconds,
        segments=tuple(spans),
        phonemes=tuple(phonemes),
        segment_errors=tuple(errors),
        posteriorgram=post,
    )


def audio_hash(buf: AudioBuffer) -> str:
    digest = hashlib.sha256()
    digest.update(str(buf.sample_rate).encode())
    digest.update(np.ascontiguousarray(buf.samples).tobytes())
    return digest.hexdigest()


def _separator_echo(cfg: SeparatorConfig) -> dict:
    return {
        "k_neighbors": cfg.k_neighbors,
        "min_spacing_seconds": cfg.min_spacing_seconds,
        "mask_exponent": cfg.mask_exponent,
        "stft": {"n_fft": cfg.stft.n_fft, "hop": cfg.stft.hop},
        "max_duration_seconds": cfg.max_duration_seconds,
    }


def _segmentation_echo(cfg: SegmentationConfig) -> dict:
    return {
        "rms_threshold_factor": cfg.rms_threshold_factor,
        "min_gap_seconds": cfg.min_gap_seconds,
        "min_segment_seconds": cfg.min_segment_seconds,
        "max_segment_seconds": cfg.max_segment_seconds,
    }


def stage_hash(cfg: PipelineConfig, models: Models) -> str:
    """Hash of everything that shapes the cached acoustic analysis."""
    payload = {
        "use_separation": cfg.use_separation,
        "separator": _separator_echo(cfg.separator),
        "segmentation": _segmentation_echo(cfg.segmentation),
        "phoneme_beam_width": cfg.phoneme_beam_width,
        "acoustic_model": models.fingerprints["acoustic_model"],
    }
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")
    ).hexdigest()


# ---------------------------------------------------------------------------
# Stage 3: word decoding and result assembly


@dataclass(frozen=True)
class LyricResult:
    """Ranked lyric candidates per segment plus a reproducibility record."""

    seed: int
    config: dict
    config_hash: str
    fingerprints: dict[str, str]
    segments: tuple[dict, ...]

    def __post_init__(self):
        previous_end = -1.0
        for seg in self.segments:
            if seg["start_s"] < previous_end:
                raise DataError("segments must be time-ordered and non-overlapping")
            previous_end = seg["end_s"]
            scores = [c["score"] for c in seg["candidates"]]
            if scores != sorted(scores, reverse=True):
                raise DataError("candidates must be sorted by descending score")

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config,
            "config_hash": self.config_hash,
            "fingerprints": dict(self.fingerprints),
            "segments": [dict(seg) for seg in self.segments],
        }

    def to_json(self) -> str:
        return json.dumps(
            self.as_dict(), sort_keys=True, indent=2, ensure_ascii=False
        ) + "\n"


def effective_decoder(
    cfg: PipelineConfig, channel: ChannelParams, overrides: dict | None
) -> tuple[DecoderConfig, ChannelParams]:
    """Apply interactive decoder-knob overrides to the configured values."""
    decoder = cfg.decoder
    if not overrides:
        return decoder, channel
    unknown = set(overrides) - set(OVERRIDE_KEYS)
    if unknown:
        raise ConfigError(f"unknown override keys: {sorted(unknown)}")
    if "lm_weight" in overrides:
        decoder = replace(decoder, lm_weight=float(overrides["lm_weight"]))
    if "beam_width" in overrides:
        decoder = replace(decoder, beam_width=int(overrides["beam_width"]))
    if "word_penalty" in overrides:
        decoder = replace(decoder, word_insertion_penalty=float(overrides["word_penalty"]))
    if any(k in overrides for k in ("p_sub", "p_del", "p_ins")):
        p_sub = float(overrides.get("p_sub", channel.p_sub))
        p_del = float(overrides.get("p_del", channel.p_del))
        p_ins = float(overrides.get("p_ins", channel.p_ins))
        channel = ChannelParams(
            p_match=1.0 - p_sub - p_del, p_sub=p_sub, p_del=p_del, p_ins=p_ins
        )
    return decoder, channel


def config_echo(
    cfg: PipelineConfig, decoder: DecoderConfig, channel: ChannelParams
) -> dict:
    """Machine-independent record of every behavior-affecting setting."""
    return {
        "sample_rate": DEFAULT_SAMPLE_RATE,
        "use_separation": cfg.use_separation,
        "separator": _separator_echo(cfg.separator),
        "segmentation": _segmentation_echo(cfg.segmentation),
        "phoneme_beam_width": cfg.phoneme_beam_width,
        "decoder": {
            "beam_width": decoder.beam_width,
            "lm_weight": decoder.lm_weight,
            "word_insertion_penalty": decoder.word_insertion_penalty,
            "n_best": decoder.n_best,
            "max_insertions_per_gap": decoder.max_insertions_per_gap,
        },
        "channel": {
            "p_match": channel.p_match,
            "p_sub": channel.p_sub,
            "p_del": channel.p_del,
            "p_ins": channel.p_ins,
        },
    }


def decode_stage(
    analysis: Analysis,
    cfg: PipelineConfig,
    models: Models,
    overrides: dict | None = None,
) -> LyricResult:
    """Phoneme-to-word decoding of cached analysis into a final result."""
    decoder, channel = effective_decoder(cfg, models.channel, overrides)
    segments = []
    for i, (start_s, end_s) in enumerate(analysis.segments):
        entry: dict = {"start_s": start_s, "end_s": end_s, "candidates": []}
        if analysis.segment_errors[i] is not None:
            entry["error"] = analysis.segment_errors[i]
            segments.append(entry)
            continue
        observed = PhonemeSequence(analysis.phonemes[i])
        try:
            hyps = decode_words(observed, models.lexicon, models.lm, channel, decoder)
        except ImlyError as exc:  # recorded, not fatal
            entry["error"] = str(exc)
            segments.append(entry)
            continue
        entry["candidates"] = [
            {
                "text": " ".join(words),
                "score": score,
                "phonemes": phoneme_symbols(observed.indices),
            }
            for words, score in hyps
        ]
        segments.append(entry)
    echo = config_echo(cfg, decoder, channel)
    digest = hashlib.sha256(
        json.dumps(
            {"config": echo, "fingerprints": models.fingerprints}, sort_keys=True
        ).encode("utf-8")
    ).hexdigest()
    return LyricResult(
        seed=cfg.seed,
        config=echo,
        config_hash=digest,
        fingerprints=dict(models.fingerprints),
        segments=tuple(segments),
    )


# ---------------------------------------------------------------------------
# Cache and top-level entry points


class AnalysisCache:
    """LRU keyed by (audio hash, stage hash); safe for concurrent use."""

    def __init__(self, capacity: int = 100):
        if capacity < 1:
            raise ConfigError("cache capacity must be >= 1")
        self._capacity = capacity
        self._entries: OrderedDict[str, Analysis] = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key: str) -> Analysis | None:
        with self._lock:
            analysis = self._entries.get(key)
            if analysis is not None:
                self._entries.move_to_end(key)
            return analysis

    def put(self, analysis: Analysis) -> None:
        with self._lock:
            self._entries[analysis.key] = analysis
            self._entries.move_to_end(analysis.key)
            while len(self._entries) > self._capacity:
                self._entries.popitem(last=False)

    def drop(self, key: str) -> None:
        with self._lock:
            self._entries.pop(key, None)


def analyze(
    buf: AudioBuffer,
    cfg: PipelineConfig,
    models: Models,
    cache: AnalysisCache | None = None,
) -> Analysis:
    """Stages 1-2 with cache reuse."""
    work = prepare_input(buf)
    if cache is not None:
        key = f"{audio_hash(work)}:{stage_hash(cfg, models)}"
        cached = cache.get(key)
        if cached is not None:
            return cached
    fg = separate_stage(work, cfg)
    analysis = recognize_stage(work, fg, cfg, models)
    if cache is not None:
        cache.put(analysis)
    return analysis


def imagine(
    buf: AudioBuffer,
    cfg: PipelineConfig,
    models: Models | None = None,
    cache: AnalysisCache | None = None,
) -> LyricResult:
    """Full pipeline: audio in, ranked lyric lines out. Total on any input."""
    if models is None:
        models = load_models(cfg)
    analysis = analyze(buf, cfg, models, cache)
    return decode_stage(analysis, cfg, models)


def redecode(
    key: str,
    cfg: PipelineConfig,
    models: Models,
    cache: AnalysisCache,
    overrides: dict | None = None,
) -> LyricResult:
    """Stage-3-only rerun against a cached analysis."""
    analysis = cache.get(key)
    if analysis is None:
        raise CacheMissError(f"no cached analysis for key {key}")
    return decode_stage(analysis, cfg, models, overrides)
