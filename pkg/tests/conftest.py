"""Shared fixtures: one trained toy acoustic model and a full model directory.

Training runs once per session (the toy-training acceptance check reads the
recorded wall time), and every pipeline/service/CLI test reuses the same
model files.
"""

from __future__ import annotations

import os
import sys
import time
from importlib.resources import files
from types import SimpleNamespace

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from imly.audio_io import DEFAULT_SAMPLE_RATE, AudioBuffer, write_wav
from imly.lexicon_lm import save_lm, train_ngram
from imly.phoneme_recognizer import TrainConfig, save_params, train
from imly.pipeline import PipelineConfig, load_models
from imly.toydata import build_corpus, corpus_features
from imly.word_decoder import DEFAULT_CHANNEL, save_channel

TOY_TRAIN_CONFIG = TrainConfig(
    epochs=150, learning_rate=0.01, hidden_size=64, seed=0
)


@pytest.fixture(scope="session")
def toy_model():
    """Acoustic model trained on the 20-example synthetic corpus."""
    corpus = build_corpus(num_examples=20, seed=0)
    dataset = corpus_features(corpus)
    start = time.perf_counter()
    params = train(dataset, TOY_TRAIN_CONFIG)
    seconds = time.perf_counter() - start
    return SimpleNamespace(
        params=params, corpus=corpus, dataset=dataset, train_seconds=seconds
    )


@pytest.fixture(scope="session")
def corpus_lines():
    text = (files("imly") / "data" / "mini_corpus.txt").read_text(encoding="utf-8")
    return [line for line in text.splitlines() if line.strip()]


@pytest.fixture(scope="session")
def moderation_text():
    return (files("imly") / "data" / "sample_moderation.txt").read_text(
        encoding="utf-8"
    )


@pytest.fixture(scope="session")
def model_paths(tmp_path_factory, toy_model, corpus_lines):
    """Complete model directory: acoustic model, lexicon, LM, channel."""
    root = tmp_path_factory.mktemp("models")
    am = root / "am.imly"
    save_params(str(am), toy_model.params)
    lexicon = root / "lexicon.txt"
    lexicon.write_text(
        (files("imly") / "data" / "mini_lexicon.txt").read_text(encoding="utf-8"),
        encoding="utf-8",
    )
    lm_path = root / "lm.imly"
    save_lm(str(lm_path), train_ngram(corpus_lines, order=3, k=0.1))
    channel = root / "channel.imly"
    save_channel(str(channel), DEFAULT_CHANNEL)
    return SimpleNamespace(
        dir=str(root),
        am=str(am),
        lexicon=str(lexicon),
        lm=str(lm_path),
        channel=str(channel),
    )


@pytest.fixture(scope="session")
def pipeline_cfg(model_paths):
    return PipelineConfig(
        am_path=model_paths.am,
        lexicon_path=model_paths.lexicon,
        lm_path=model_paths.lm,
        channel_path=model_paths.channel,
    )


@pytest.fixture(scope="session")
def pipeline_models(pipeline_cfg):
    return load_models(pipeline_cfg)


@pytest.fixture(scope="session")
def noise_buffer():
    rng = np.random.default_rng(4242)
    samples = 0.1 * rng.standard_normal(3 * DEFAULT_SAMPLE_RATE)
    return AudioBuffer(samples, DEFAULT_SAMPLE_RATE)


@pytest.fixture(scope="session")
def noise_wav(tmp_path_factory, noise_buffer):
    path = tmp_path_factory.mktemp("audio") / "noise.wav"
    write_wav(str(path), noise_buffer)
    return str(path)
