"""Command-line entry point for every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
Results go to stdout or to files named in flags; diagnostics to stderr.
A key=value config file supplies defaults that explicit flags override,
and IMLY_DATA_DIR points at a directory of default model files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from dataclasses import replace

import numpy as np

from . import container, lexicon_lm, pipeline, toydata, word_decoder
from .audio_io import DEFAULT_SAMPLE_RATE, read_wav, resample, write_wav
from .errors import ConfigError, DataError
from .phoneme_recognizer import (
    PhonemeSequence,
    TrainConfig,
    beam_decode,
    extract_features,
    forward,
    load_params,
    phoneme_indices,
    phoneme_symbols,
    save_params,
    train,
)
from .separator import SeparatorConfig, separate

DATA_DIR_ENV = "IMLY_DATA_DIR"

_MODEL_DEFAULTS = {
    "am": "am.imly",
    "lexicon": "lexicon.txt",
    "lm": "lm.imly",
    "channel": "channel.imly",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imly",
        description="Imagined-lyrics pipeline: separate, recognize, decode.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("separate", help="split a WAV into foreground/background stems")
    p.add_argument("input", help="input WAV path")
    p.add_argument("--out-fg", help="foreground WAV path (default <input>.fg.wav)")
    p.add_argument("--out-bg", help="background WAV path (default <input>.bg.wav)")
    p.add_argument("--mask", help="also dump the soft mask as a tensor container")
    _common_flags(p)

    p = sub.add_parser("features", help="extract log-mel features from a WAV")
    p.add_argument("input", help="input WAV path")
    p.add_argument("--out", required=True, help="output tensor container path")
    _common_flags(p)

    p = sub.add_parser("train-am", help="train the acoustic model")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--data", help="directory of paired .wav/.txt examples")
    p.add_argument("--examples", type=int, default=20,
                   help="synthetic corpus size when --data is absent (default 20)")
    p.add_argument("--epochs", type=int, default=None, help="training epochs")
    p.add_argument("--hidden", type=int, default=None, help="GRU hidden size")
    p.add_argument("--lr", type=float, default=None, help="learning rate")
    _common_flags(p)

    p = sub.add_parser("transcribe", help="decode a WAV into phoneme symbols")
    p.add_argument("input", help="input WAV path")
    p.add_argument("--out", help="write symbols here instead of stdout")
    _common_flags(p)

    p = sub.add_parser("train-lm", help="train the lyrics n-gram language model")
    p.add_argument("corpus", help="text corpus, one line per lyric line")
    p.add_argument("--out", required=True, help="model path to write")
    p.add_argument("--order", type=int, default=3, help="n-gram order (default 3)")
    p.add_argument("--k", type=float, default=0.1, help="add-k constant (default 0.1)")
    p.add_argument("--moderation", help="keyword list; matching lines are dropped")
    _common_flags(p)

    p = sub.add_parser("estimate-channel", help="fit channel rates from aligned pairs")
    p.add_argument("pairs", help="text file, per line: CANONICAL | OBSERVED symbols")
    p.add_argument("--out", required=True, help="channel parameter path to write")
    _common_flags(p)

    p = sub.add_parser("imagine", help="full pipeline: WAV to ranked lyric lines")
    p.add_argument("input", help="input WAV path")
    p.add_argument("--out", help="write the result JSON here instead of stdout")
    _common_flags(p)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.add_argument("--port", type=int, default=None, help="port (default 8077)")
    _common_flags(p)

    return parser


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--am", help="acoustic model checkpoint path")
    p.add_argument("--lexicon", help="pronunciation lexicon path")
    p.add_argument("--lm", help="language model path")
    p.add_argument("--channel", help="channel parameter path")
    p.add_argument("--beam", type=int, default=None, help="word-decoder beam width")
    p.add_argument("--lm-weight", type=float, default=None, help="LM weight")
    p.add_argument("--no-separation", action="store_true", default=None,
                   help="feed audio to the recognizer without separation")


def parse_config_file(path: str) -> dict[str, str]:
    """UTF-8 key=value lines; blank lines and # comments ignored."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fp:
            for lineno, raw in enumerate(fp, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return values


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _as_bool(value: str, key: str) -> bool:
    low = value.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ConfigError(f"config key {key} expects a boolean, got {value!r}")


class Settings:
    """Flag > config file > environment > built-in default."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file = parse_config_file(args.config) if args.config else {}

    def get(self, key: str, default=None, convert=None):
        flag = getattr(self.args, key, None)
        if flag is not None:
            return flag
        if key in self.file:
            raw = self.file[key]
            if convert is bool:
                return _as_bool(raw, key)
            return convert(raw) if convert else raw
        return default

    def model_path(self, key: str) -> str | None:
        path = self.get(key)
        if path is not None:
            return path
        data_dir = os.environ.get(DATA_DIR_ENV)
        if data_dir:
            candidate = os.path.join(data_dir, _MODEL_DEFAULTS[key])
            if os.path.exists(candidate):
                return candidate
        return None

    def pipeline_config(self) -> pipeline.PipelineConfig:
        decoder = word_decoder.DecoderConfig(
            beam_width=self.get("beam", 64, int),
            lm_weight=self.get("lm_weight", 1.0, float),
        )
        no_sep = self.get("no_separation", False, bool)
        return pipeline.PipelineConfig(
            use_separation=not no_sep,
            am_path=self.model_path("am"),
            lexicon_path=self.model_path("lexicon"),
            lm_path=self.model_path("lm"),
            channel_path=self.model_path("channel"),
            decoder=decoder,
            seed=self.get("seed", 0, int),
        )


def run(argv: list[str]) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    handler = _HANDLERS[args.command]
    try:
        handler(Settings(args))
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _cmd_separate(s: Settings) -> None:
    args = s.args
    buf = read_wav(args.input)
    fg, bg = separate(buf, SeparatorConfig())
    out_fg = args.out_fg or args.input + ".fg.wav"
    out_bg = args.out_bg or args.input + ".bg.wav"
    write_wav(out_fg, fg)
    write_wav(out_bg, bg)
    total = float(np.sum(buf.samples**2))
    ratio = float(np.sum(fg.samples**2)) / total if total > 0 else 0.0
    payload = {
        "foreground": out_fg,
        "background": out_bg,
        "foreground_energy_ratio": ratio,
    }
    if args.mask:
        from .separator import separation_mask

        container.save_tensors(args.mask, {"mask": separation_mask(buf)})
        payload["mask"] = args.mask
    _emit(payload)


def _cmd_features(s: Settings) -> None:
    buf = resample(read_wav(s.args.input), DEFAULT_SAMPLE_RATE)
    feats = extract_features(buf)
    container.save_tensors(
        s.args.out,
        {
            "features": feats.values,
            "frame_hop_seconds": np.array([feats.frame_hop_seconds]),
        },
    )
    _emit({"out": s.args.out, "frames": feats.values.shape[0],
           "mels": feats.values.shape[1]})


def _cmd_train_am(s: Settings) -> None:
    args = s.args
    seed = s.get("seed", 0, int)
    if args.data:
        dataset = _load_paired_dataset(args.data)
    else:
        corpus = toydata.build_corpus(num_examples=args.examples, seed=seed)
        dataset = toydata.corpus_features(corpus)
    cfg = TrainConfig(seed=seed)
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    if args.hidden is not None:
        cfg = replace(cfg, hidden_size=args.hidden)
    if args.lr is not None:
        cfg = replace(cfg, learning_rate=args.lr)
    params = train(dataset, cfg)
    save_params(args.out, params)
    _emit({"out": args.out, "examples": len(dataset), "epochs": cfg.epochs,
           "hidden": cfg.hidden_size})


def _load_paired_dataset(data_dir: str):
    try:
        names = sorted(n for n in os.listdir(data_dir) if n.endswith(".wav"))
    except OSError as exc:
        raise DataError(f"cannot list {data_dir}: {exc}") from exc
    dataset = []
    for name in names:
        stem = name[: -len(".wav")]
        label_path = os.path.join(data_dir, stem + ".txt")
        if not os.path.exists(label_path):
            raise DataError(f"missing label file for {name}: {label_path}")
        buf = resample(read_wav(os.path.join(data_dir, name)), DEFAULT_SAMPLE_RATE)
        with open(label_path, encoding="utf-8") as fp:
            seq = PhonemeSequence(phoneme_indices(fp.read()))
        dataset.append((extract_features(buf), seq))
    if not dataset:
        raise DataError(f"no .wav examples found in {data_dir}")
    return dataset


def _cmd_transcribe(s: Settings) -> None:
    am_path = s.model_path("am")
    if am_path is None:
        raise ConfigError("transcribe needs an acoustic model (--am or IMLY_DATA_DIR)")
    params = load_params(am_path)
    buf = resample(read_wav(s.args.input), DEFAULT_SAMPLE_RATE)
    if not s.get("no_separation", False, bool):
        buf = separate(buf, SeparatorConfig())[0]
    feats = extract_features(buf)
    post = forward(feats, params)
    hyps = beam_decode(post, s.get("beam", 8, int))
    line = " ".join(phoneme_symbols(hyps[0][0].indices)) if hyps else ""
    if s.args.out:
        with open(s.args.out, "w", encoding="utf-8") as fp:
            fp.write(line + "\n")
    else:
        print(line)


def _cmd_train_lm(s: Settings) -> None:
    args = s.args
    try:
        with open(args.corpus, encoding="utf-8") as fp:
            lines = fp.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read corpus {args.corpus}: {exc}") from exc
    removed = 0
    if args.moderation:
        with open(args.moderation, encoding="utf-8") as fp:
            moderation = lexicon_lm.ModerationList.from_text(fp.read())
        lines, removed = lexicon_lm.moderate_corpus(lines, moderation)
    lm = lexicon_lm.train_ngram(lines, order=args.order, k=args.k)
    lexicon_lm.save_lm(args.out, lm)
    _emit({"out": args.out, "lines_kept": len(lines), "lines_removed": removed,
           "vocabulary_size": lm.vocab_size})


def _cmd_estimate_channel(s: Settings) -> None:
    pairs = []
    try:
        with open(s.args.pairs, encoding="utf-8") as fp:
            rows = fp.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read pairs file {s.args.pairs}: {exc}") from exc
    for lineno, row in enumerate(rows, start=1):
        if not row.strip():
            continue
        if "|" not in row:
            raise DataError(f"{s.args.pairs}:{lineno}: expected CANONICAL | OBSERVED")
        left, _, right = row.partition("|")
        pairs.append(
            (
                PhonemeSequence(phoneme_indices(left)),
                PhonemeSequence(phoneme_indices(right)),
            )
        )
    ch = word_decoder.estimate_channel(pairs)
    word_decoder.save_channel(s.args.out, ch)
    _emit({"out": s.args.out, "p_match": ch.p_match, "p_sub": ch.p_sub,
           "p_del": ch.p_del, "p_ins": ch.p_ins})


def _cmd_imagine(s: Settings) -> None:
    cfg = s.pipeline_config()
    buf = read_wav(s.args.input)
    result = pipeline.imagine(buf, cfg)
    text = result.to_json()
    if s.args.out:
        with open(s.args.out, "w", encoding="utf-8") as fp:
            fp.write(text)
    else:
        sys.stdout.write(text)


def _cmd_serve(s: Settings) -> None:
    import uvicorn

    from .service import create_app

    cfg = s.pipeline_config()
    app = create_app(cfg)
    port = s.get("port", 8077, int)
    uvicorn.run(app, host=s.args.host, port=port, log_level="warning")


_HANDLERS = {
    "separate": _cmd_separate,
    "features": _cmd_features,
    "train-am": _cmd_train_am,
    "transcribe": _cmd_transcribe,
    "train-lm": _cmd_train_lm,
    "estimate-channel": _cmd_estimate_channel,
    "imagine": _cmd_imagine,
    "serve": _cmd_serve,
}


if __name__ == "__main__":
    main()
