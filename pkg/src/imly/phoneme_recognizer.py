"""Recurrent acoustic model with CTC training and decoding.

A single-layer GRU plus affine/softmax emits per-frame distributions over
39 stress-stripped ARPAbet phonemes and a blank class. Decoding is total:
any audio yields a (possibly empty) phoneme sequence, with no speech/
non-speech gating anywhere.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import container
from .dsp import FeatureMatrix, StftConfig
from .errors import ConfigError, DataError, InfeasibleTargetError

log = logging.getLogger(__name__)

#: Recognizer feature frontend: ~23 ms windows every ~10 ms, 40 mel bands.
FEATURE_STFT = StftConfig(n_fft=512, hop=220)
NUM_MELS = 40
FEATURE_FMIN = 50.0
FEATURE_FMAX = 11025.0


def extract_features(buf) -> FeatureMatrix:
    """Log-mel energies with per-utterance mean/variance normalization.

    Raw log-mel values span tens of nats (the floor sits near -23), which
    stalls recurrent training; normalizing each mel band over the utterance
    is the standard frontend remedy and keeps decoding deterministic.
    """
    from .dsp import log_mel, stft

    spec = stft(buf, FEATURE_STFT)
    feats = log_mel(spec, n_mels=NUM_MELS, fmin=FEATURE_FMIN, fmax=FEATURE_FMAX)
    values = feats.values
    mean = values.mean(axis=0, keepdims=True)
    std = values.std(axis=0, keepdims=True)
    normalized = (values - mean) / np.maximum(std, 1e-8)
    return FeatureMatrix(normalized, feats.frame_hop_seconds)

#: Stress-stripped ARPAbet, indexed 1..39. Index 0 is the CTC blank.
PHONEMES = (
    "AA AE AH AO AW AY B CH D DH EH ER EY F G HH IH IY JH K L M N NG "
    "OW OY P R S SH T TH UH UW V W Y Z ZH"
).split()

BLANK = 0
NUM_CLASSES = len(PHONEMES) + 1  # 40

PHONEME_TO_INDEX = {p: i + 1 for i, p in enumerate(PHONEMES)}
INDEX_TO_PHONEME = {i + 1: p for i, p in enumerate(PHONEMES)}

MIN_TARGET_PHONEMES = 5  # every training example must carry at least this many


def phoneme_indices(symbols: list[str] | str) -> tuple[int, ...]:
    """Map ARPAbet symbols (stress digits allowed) to alphabet indices."""
    if isinstance(symbols, str):
        symbols = symbols.split()
    out = []
    for sym in symbols:
        base = sym.rstrip("012").upper()
        if base not in PHONEME_TO_INDEX:
            raise DataError(f"unknown phoneme symbol {sym!r}")
        out.append(PHONEME_TO_INDEX[base])
    return tuple(out)


def phoneme_symbols(indices) -> list[str]:
    return [INDEX_TO_PHONEME[int(i)] for i in indices]


@dataclass(frozen=True)
class PhonemeSequence:
    """Ordered phoneme indices (1..39), optionally with frame spans."""

    indices: tuple[int, ...]
    spans: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        for i in self.indices:
            if not 1 <= i < NUM_CLASSES:
                raise DataError(f"phoneme index {i} outside 1..{NUM_CLASSES - 1}")
        if self.spans is not None:
            if len(self.spans) != len(self.indices):
                raise DataError("spans must align one-to-one with indices")
            object.__setattr__(
                self, "spans", tuple((int(a), int(b)) for a, b in self.spans)
            )

    def __len__(self) -> int:
        return len(self.indices)

    def symbols(self) -> list[str]:
        return phoneme_symbols(self.indices)

    @classmethod
    def from_symbols(cls, symbols: list[str] | str) -> "PhonemeSequence":
        return cls(phoneme_indices(symbols))


@dataclass(frozen=True)
class Posteriorgram:
    """T x 40 per-frame class probabilities."""

    probs: np.ndarray
    frame_hop_seconds: float

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 2 or probs.shape[1] != NUM_CLASSES:
            raise ConfigError(f"posteriorgram must be T x {NUM_CLASSES}, got {probs.shape}")
        if probs.size:
            if not np.all(np.isfinite(probs)) or probs.min() < 0:
                raise ConfigError("posteriorgram entries must be finite and >= 0")
            sums = probs.sum(axis=1)
            if np.max(np.abs(sums - 1.0)) > 1e-6:
                raise ConfigError("posteriorgram rows must sum to 1 within 1e-6")
        object.__setattr__(self, "probs", probs)

    @property
    def num_frames(self) -> int:
        return self.probs.shape[0]


# ---------------------------------------------------------------------------
# Acoustic model


@dataclass
class AcousticModelParams:
    """Single-layer GRU (update z, reset r, candidate c) + affine output."""

    w_z: np.ndarray
    u_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_c: np.ndarray
    u_c: np.ndarray
    b_c: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        h, d = self.w_z.shape
        expected = {
            "w_z": (h, d), "u_z": (h, h), "b_z": (h,),
            "w_r": (h, d), "u_r": (h, h), "b_r": (h,),
            "w_c": (h, d), "u_c": (h, h), "b_c": (h,),
            "w_out": (NUM_CLASSES, h), "b_out": (NUM_CLASSES,),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ConfigError(f"parameter {name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"parameter {name} contains non-finite values")
            setattr(self, name, arr)

    @property
    def input_size(self) -> int:
        return self.w_z.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w_z.shape[0]

    def names(self) -> list[str]:
        return ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_c", "u_c", "b_c", "w_out", "b_out"]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.names()}

    @classmethod
    def init_random(
        cls, input_size: int = 40, hidden_size: int = 128, seed: int = 0
    ) -> "AcousticModelParams":
        rng = np.random.default_rng(seed)

        def mat(rows, cols):
            bound = 1.0 / np.sqrt(cols)
            return rng.uniform(-bound, bound, size=(rows, cols))

        h, d = hidden_size, input_size
        return cls(
            w_z=mat(h, d), u_z=mat(h, h), b_z=np.zeros(h),
            w_r=mat(h, d), u_r=mat(h, h), b_r=np.zeros(h),
            w_c=mat(h, d), u_c=mat(h, h), b_c=np.zeros(h),
            w_out=mat(NUM_CLASSES, h), b_out=np.zeros(NUM_CLASSES),
        )


def save_params(path: str, params: AcousticModelParams) -> None:
    container.save_tensors(path, {f"gru.{k}": v for k, v in params.as_dict().items()})


def load_params(path: str) -> AcousticModelParams:
    tensors = container.load_tensors(path)
    try:
        kwargs = {k.removeprefix("gru."): tensors[k].astype(np.float64)
                  for k in tensors if k.startswith("gru.")}
        return AcousticModelParams(**kwargs)
    except (KeyError, TypeError) as exc:
        raise DataError(f"checkpoint {path} is not an acoustic model: {exc}") from exc


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _gru_forward(features: np.ndarray, p: AcousticModelParams):
    """Run the recurrence, returning logits and the cache for backprop."""
    T = features.shape[0]
    h = np.zeros(p.hidden_size)
    zs, rs, cs, hs = [], [], [], []
    h_prevs = []
    for t in range(T):
        x = features[t]
        h_prevs.append(h)
        z = _sigmoid(p.w_z @ x + p.u_z @ h + p.b_z)
        r = _sigmoid(p.w_r @ x + p.u_r @ h + p.b_r)
        c = np.tanh(p.w_c @ x + p.u_c @ (r * h) + p.b_c)
        h = (1.0 - z) * c + z * h
        zs.append(z)
        rs.append(r)
        cs.append(c)
        hs.append(h)
    hidden = np.array(hs) if hs else np.zeros((0, p.hidden_size))
    logits = hidden @ p.w_out.T + p.b_out
    cache = (features, np.array(h_prevs) if h_prevs else np.zeros((0, p.hidden_size)),
             np.array(zs) if zs else None, np.array(rs) if rs else None,
             np.array(cs) if cs else None, hidden)
    return logits, cache


def _gru_backward(dlogits: np.ndarray, cache, p: AcousticModelParams) -> dict[str, np.ndarray]:
    """BPTT through the affine output and GRU; returns grads keyed by name."""
    features, h_prevs, zs, rs, cs, hidden = cache
    T = features.shape[0]
    g = {name: np.zeros_like(getattr(p, name)) for name in p.names()}
    g["w_out"] = dlogits.T @ hidden
    g["b_out"] = dlogits.sum(axis=0)
    dh_next = np.zeros(p.hidden_size)
    dhidden = dlogits @ p.w_out
    for t in range(T - 1, -1, -1):
        dh = dhidden[t] + dh_next
        x, h_prev = features[t], h_prevs[t]
        z, r, c = zs[t], rs[t], cs[t]
        dz = dh * (h_prev - c)
        dc = dh * (1.0 - z)
        dh_prev = dh * z
        dac = dc * (1.0 - c * c)
        g["w_c"] += np.outer(dac, x)
        g["u_c"] += np.outer(dac, r * h_prev)
        g["b_c"] += dac
        du = p.u_c.T @ dac
        dr = du * h_prev
        dh_prev = dh_prev + du * r
        daz = dz * z * (1.0 - z)
        g["w_z"] += np.outer(daz, x)
        g["u_z"] += np.outer(daz, h_prev)
        g["b_z"] += daz
        dh_prev = dh_prev + p.u_z.T @ daz
        dar = dr * r * (1.0 - r)
        g["w_r"] += np.outer(dar, x)
        g["u_r"] += np.outer(dar, h_prev)
        g["b_r"] += dar
        dh_prev = dh_prev + p.u_r.T @ dar
        dh_next = dh_prev
    return g


def _softmax(logits: np.ndarray) -> np.ndarray:
    if logits.size == 0:
        return logits.reshape(0, NUM_CLASSES)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(features: FeatureMatrix, params: AcousticModelParams) -> Posteriorgram:
    """Posterior class probabilities for each feature frame."""
    values = features.values
    if values.shape[1] != params.input_size:
        raise ConfigError(
            f"feature width {values.shape[1]} does not match model input "
            f"{params.input_size}"
        )
    logits, _ = _gru_forward(values, params)
    return Posteriorgram(_softmax(logits), features.frame_hop_seconds)


# ---------------------------------------------------------------------------
# CTC


def _augmented_labels(target: PhonemeSequence) -> np.ndarray:
    labels = np.zeros(2 * len(target) + 1, dtype=np.int64)
    labels[1::2] = target.indices
    return labels


def _check_feasible(T: int, target: PhonemeSequence) -> None:
    if len(target) == 0:
        raise InfeasibleTargetError("CTC target must be nonempty")
    dups = sum(
        1 for a, b in zip(target.indices, target.indices[1:]) if a == b
    )
    needed = len(target) + dups
    if T < needed:
        raise InfeasibleTargetError(
            f"target needs at least {needed} frames, posteriorgram has {T}"
        )


def _ctc_alphas(logp: np.ndarray, labels: np.ndarray) -> np.ndarray:
    T, S = logp.shape[0], len(labels)
    alpha = np.full((T, S), -np.inf)
    alpha[0, 0] = logp[0, labels[0]]
    alpha[0, 1] = logp[0, labels[1]]
    skip_ok = np.zeros(S, dtype=bool)
    skip_ok[2:] = (labels[2:] != BLANK) & (labels[2:] != labels[:-2])
    for t in range(1, T):
        stay = alpha[t - 1]
        step = np.concatenate(([-np.inf], alpha[t - 1, :-1]))
        skip = np.concatenate(([-np.inf, -np.inf], alpha[t - 1, :-2]))
        skip = np.where(skip_ok, skip, -np.inf)
        alpha[t] = np.logaddexp(np.logaddexp(stay, step), skip) + logp[t, labels]
    return alpha


def _ctc_betas(logp: np.ndarray, labels: np.ndarray) -> np.ndarray:
    T, S = logp.shape[0], len(labels)
    beta = np.full((T, S), -np.inf)
    beta[T - 1, S - 1] = logp[T - 1, labels[S - 1]]
    beta[T - 1, S - 2] = logp[T - 1, labels[S - 2]]
    skip_ok = np.zeros(S, dtype=bool)
    skip_ok[:-2] = (labels[:-2] != BLANK) & (labels[:-2] != labels[2:])
    for t in range(T - 2, -1, -1):
        stay = beta[t + 1]
        step = np.concatenate((beta[t + 1, 1:], [-np.inf]))
        skip = np.concatenate((beta[t + 1, 2:], [-np.inf, -np.inf]))
        skip = np.where(skip_ok, skip, -np.inf)
        beta[t] = np.logaddexp(np.logaddexp(stay, step), skip) + logp[t, labels]
    return beta


def ctc_loss(post: Posteriorgram, target: PhonemeSequence) -> float:
    """Negative log probability of the target under all CTC alignments."""
    _check_feasible(post.num_frames, target)
    with np.errstate(divide="ignore"):
        logp = np.log(post.probs)
    labels = _augmented_labels(target)
    alpha = _ctc_alphas(logp, labels)
    total = np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    return float(-total)


def ctc_grad(post: Posteriorgram, target: PhonemeSequence) -> np.ndarray:
    """Gradient of ctc_loss w.r.t. pre-softmax logits: softmax - occupancy."""
    _check_feasible(post.num_frames, target)
    with np.errstate(divide="ignore"):
        logp = np.log(post.probs)
    labels = _augmented_labels(target)
    alpha = _ctc_alphas(logp, labels)
    beta = _ctc_betas(logp, labels)
    total = np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    # gamma has the frame emission counted twice (once in alpha, once in beta)
    log_gamma = alpha + beta - logp[:, labels] - total
    occupancy = np.zeros_like(post.probs)
    gamma = np.exp(log_gamma)
    for s, lab in enumerate(labels):
        occupancy[:, lab] += gamma[:, s]
    return post.probs - occupancy


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainConfig:
    epochs: int = 80
    learning_rate: float = 0.01
    momentum: float = 0.9
    grad_clip: float = 5.0
    hidden_size: int = 128
    seed: int = 0


def train(
    dataset: list[tuple[FeatureMatrix, PhonemeSequence]],
    cfg: TrainConfig | None = None,
) -> AcousticModelParams:
    """SGD with momentum over per-example CTC gradients.

    Mirrors the training-data constraint that every example carries at
    least five phonemes; shorter targets are rejected with their index.
    """
    cfg = cfg or TrainConfig()
    if not dataset:
        raise DataError("training dataset is empty")
    for i, (_, target) in enumerate(dataset):
        if len(target) < MIN_TARGET_PHONEMES:
            raise DataError(
                f"example {i} has only {len(target)} phonemes; "
                f"every example must contain at least {MIN_TARGET_PHONEMES}"
            )
    input_size = dataset[0][0].values.shape[1]
    rng = np.random.default_rng(cfg.seed)
    params = AcousticModelParams.init_random(
        input_size, cfg.hidden_size, seed=int(rng.integers(2**31))
    )
    velocity = {name: np.zeros_like(getattr(params, name)) for name in params.names()}
    started = time.monotonic()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        losses = []
        for idx in order:
            features, target = dataset[idx]
            logits, cache = _gru_forward(features.values, params)
            post = Posteriorgram(_softmax(logits), features.frame_hop_seconds)
            losses.append(ctc_loss(post, target))
            dlogits = ctc_grad(post, target)
            grads = _gru_backward(dlogits, cache, params)
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if norm > cfg.grad_clip:
                scale = cfg.grad_clip / norm
                for name in grads:
                    grads[name] *= scale
            for name in grads:
                velocity[name] = cfg.momentum * velocity[name] + grads[name]
                arr = getattr(params, name)
                arr -= cfg.learning_rate * velocity[name]
        log.info(
            "epoch %d/%d mean ctc loss %.4f (%.1fs)",
            epoch + 1, cfg.epochs, float(np.mean(losses)), time.monotonic() - started,
        )
    return params


# ---------------------------------------------------------------------------
# Decoding


def greedy_decode(post: Posteriorgram) -> PhonemeSequence:
    """Per-frame argmax, collapse repeats, drop blanks; spans recorded."""
    if post.num_frames == 0:
        return PhonemeSequence((), ())
    best = np.argmax(post.probs, axis=1)  # argmax takes the lower index on ties
    indices: list[int] = []
    spans: list[tuple[int, int]] = []
    t = 0
    T = len(best)
    while t < T:
        run_start = t
        label = best[t]
        while t < T and best[t] == label:
            t += 1
        if label != BLANK:
            indices.append(int(label))
            spans.append((run_start, t))
    return PhonemeSequence(tuple(indices), tuple(spans))


def beam_decode(
    post: Posteriorgram, width: int
) -> list[tuple[PhonemeSequence, float]]:
    """CTC prefix beam search; n-best collapsed sequences with log-probs.

    Hypotheses are merged by collapsed prefix with separate blank-ending
    and symbol-ending probabilities; ties break lexicographically so the
    result is deterministic.
    """
    if width < 1:
        raise ConfigError(f"beam width must be >= 1, got {width}")
    if post.num_frames == 0:
        return [(PhonemeSequence(()), 0.0)]
    with np.errstate(divide="ignore"):
        logp = np.log(post.probs)
    # prefix -> [log P(ending in blank), log P(ending in last symbol)]
    beams: dict[tuple[int, ...], list[float]] = {(): [0.0, -np.inf]}
    for t in range(post.num_frames):
        frame = logp[t]
        next_beams: dict[tuple[int, ...], list[float]] = {}

        def add(prefix, which, value):
            if value == -np.inf:
                return
            entry = next_beams.setdefault(prefix, [-np.inf, -np.inf])
            entry[which] = np.logaddexp(entry[which], value)

        for prefix, (p_b, p_nb) in beams.items():
            total = np.logaddexp(p_b, p_nb)
            add(prefix, 0, total + frame[BLANK])
            if prefix:
                add(prefix, 1, p_nb + frame[prefix[-1]])
            for c in range(1, NUM_CLASSES):
                extended = prefix + (c,)
                if prefix and c == prefix[-1]:
                    add(extended, 1, p_b + frame[c])
                else:
                    add(extended, 1, total + frame[c])
        ranked = sorted(
            next_beams.items(),
            key=lambda kv: (-np.logaddexp(kv[1][0], kv[1][1]), kv[0]),
        )
        beams = dict(ranked[:width])
    results = [
        (PhonemeSequence(prefix), float(np.logaddexp(p_b, p_nb)))
        for prefix, (p_b, p_nb) in beams.items()
    ]
    results.sort(key=lambda item: (-item[1], item[0].indices))
    return results[:width]
