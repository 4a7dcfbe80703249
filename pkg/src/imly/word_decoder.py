"""Noisy-channel phoneme-to-word decoding.

The channel model treats the recognizer output as a corrupted copy of a
canonical pronunciation: each canonical phoneme is kept, substituted, or
deleted, and a capped geometric number of uniform insertions appears in
each gap (one gap before every canonical symbol plus a trailing gap).
``decode_words`` searches word sequences from a pronunciation trie under
this channel plus an n-gram language model.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import container
from .errors import ConfigError, DataError, LexiconError
from .lexicon_lm import SENT_END, Lexicon, NGramLM, TrieNode
from .phoneme_recognizer import NUM_CLASSES, PhonemeSequence

NUM_PHONEMES = NUM_CLASSES - 1  # insertion symbols are uniform over these
NUM_OTHER_PHONEMES = NUM_PHONEMES - 1  # substitutions exclude the original
MAX_INSERTIONS_PER_GAP = 2

PROB_FLOOR = 1e-3
EM_ITERATIONS = 10
#: 1/this share of the beam is held for word-boundary (root) states
_ROOT_RESERVE_FRACTION = 8

_LOG_INS_UNIFORM = math.log(1.0 / NUM_PHONEMES)
_EPSILON_DEPTH_LIMIT = 256


@dataclass(frozen=True)
class ChannelParams:
    """Per-symbol keep/substitute/delete rates and per-gap insertion rate."""

    p_match: float
    p_sub: float
    p_del: float
    p_ins: float

    def __post_init__(self):
        for name in ("p_match", "p_sub", "p_del", "p_ins"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.p_ins >= 1.0:
            raise ConfigError(f"p_ins must be < 1, got {self.p_ins}")
        total = self.p_match + self.p_sub + self.p_del
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"p_match + p_sub + p_del must be 1, got {total}")


CLEAN_CHANNEL = ChannelParams(p_match=1.0, p_sub=0.0, p_del=0.0, p_ins=0.0)
DEFAULT_CHANNEL = ChannelParams(p_match=0.8, p_sub=0.1, p_del=0.1, p_ins=0.05)


@dataclass(frozen=True)
class DecoderConfig:
    beam_width: int = 64
    lm_weight: float = 1.0
    word_insertion_penalty: float = 0.0
    n_best: int = 5
    max_insertions_per_gap: int = MAX_INSERTIONS_PER_GAP

    def __post_init__(self):
        if self.beam_width < 1:
            raise ConfigError(f"beam_width must be >= 1, got {self.beam_width}")
        if self.n_best < 1:
            raise ConfigError(f"n_best must be >= 1, got {self.n_best}")
        if self.max_insertions_per_gap < 0:
            raise ConfigError(
                f"max_insertions_per_gap must be >= 0, got {self.max_insertions_per_gap}"
            )


def _indices(seq) -> tuple[int, ...]:
    if isinstance(seq, PhonemeSequence):
        return seq.indices
    return tuple(int(i) for i in seq)


# ---------------------------------------------------------------------------
# Generative channel


def corrupt(seq: PhonemeSequence, ch: ChannelParams, seed: int) -> PhonemeSequence:
    """Sample one corrupted copy of ``seq`` from the channel."""
    rng = np.random.default_rng(seed)
    canonical = _indices(seq)
    out: list[int] = []

    def insertions():
        count = 0
        while count < MAX_INSERTIONS_PER_GAP and rng.random() < ch.p_ins:
            out.append(int(rng.integers(1, NUM_CLASSES)))
            count += 1

    for symbol in canonical:
        insertions()
        u = rng.random()
        if u < ch.p_match:
            out.append(symbol)
        elif u < ch.p_match + ch.p_sub:
            r = int(rng.integers(1, NUM_PHONEMES))  # 1..38
            out.append(r if r < symbol else r + 1)
        # else: deleted
    insertions()
    return PhonemeSequence(tuple(out))


def _gap_weights(ch: ChannelParams, cap: int) -> list[float]:
    """G(m): probability of exactly m insertions in one gap (m = 0..cap)."""
    weights = [(ch.p_ins**m) * (1.0 - ch.p_ins) for m in range(cap)]
    weights.append(ch.p_ins**cap)
    return weights


def channel_logprob(
    observed: PhonemeSequence,
    canonical: PhonemeSequence,
    ch: ChannelParams,
    max_insertions_per_gap: int = MAX_INSERTIONS_PER_GAP,
) -> float:
    """Log of the total probability that corrupt(canonical) == observed.

    Sums over every edit path with a gap-block dynamic program: advance one
    canonical symbol via match/substitute/delete, then absorb 0..cap
    insertions from the following gap.
    """
    obs = _indices(observed)
    can = _indices(canonical)
    total = _channel_forward(obs, can, ch, max_insertions_per_gap, None)
    return math.log(total) if total > 0.0 else -math.inf


def _channel_forward(
    obs: tuple[int, ...],
    can: tuple[int, ...],
    ch: ChannelParams,
    cap: int,
    counts: "np.ndarray | None",
):
    """Gap-block DP; with ``counts`` given, also accumulate expected event
    counts (match, sub, del, ins, gap-stop) via the expectation semiring.

    Returns the total probability; expected counts, scaled by it, are added
    into ``counts`` in place.
    """
    length, j_max = len(can), len(obs)
    gap = _gap_weights(ch, cap)
    uniform = 1.0 / NUM_PHONEMES
    sub_each = ch.p_sub / NUM_OTHER_PHONEMES
    with_counts = counts is not None

    # cell value: probability, plus (when estimating) probability-weighted
    # expected counts of each event type along paths into the cell
    def zero():
        return [0.0, np.zeros(5)] if with_counts else [0.0]

    def times(cell, p, events=None):
        if not with_counts:
            return [cell[0] * p]
        vec = cell[1] * p
        if events is not None:
            vec = vec + cell[0] * p * events
        return [cell[0] * p, vec]

    def plus(a, b):
        if not with_counts:
            return [a[0] + b[0]]
        return [a[0] + b[0], a[1] + b[1]]

    def gap_events(m):
        if not with_counts:
            return None
        vec = np.zeros(5)
        vec[3] = m
        if m < cap:
            vec[4] = 1.0
        return vec

    def event(kind):
        if not with_counts:
            return None
        vec = np.zeros(5)
        vec[kind] = 1.0
        return vec

    # after[j]: obs[:j] generated, current canonical prefix and its trailing
    # gap complete
    after = [zero() for _ in range(j_max + 1)]
    for j in range(min(cap, j_max) + 1):
        after[j] = times([1.0, np.zeros(5)] if with_counts else [1.0],
                         gap[j] * uniform**j, gap_events(j))
    for i in range(1, length + 1):
        mid = [zero() for _ in range(j_max + 1)]
        for j in range(j_max + 1):
            cell = times(after[j], ch.p_del, event(2))
            if j >= 1:
                if obs[j - 1] == can[i - 1]:
                    step = times(after[j - 1], ch.p_match, event(0))
                else:
                    step = times(after[j - 1], sub_each, event(1))
                cell = plus(cell, step)
            mid[j] = cell
        nxt = [zero() for _ in range(j_max + 1)]
        for j in range(j_max + 1):
            cell = zero()
            for m in range(min(cap, j) + 1):
                cell = plus(
                    cell, times(mid[j - m], gap[m] * uniform**m, gap_events(m))
                )
            nxt[j] = cell
        after = nxt
    final = after[j_max]
    if with_counts and final[0] > 0.0:
        counts += final[1] / final[0]
    return final[0]


def estimate_channel(
    pairs: list[tuple[PhonemeSequence, PhonemeSequence]],
    iterations: int = EM_ITERATIONS,
) -> ChannelParams:
    """Fit channel rates to (canonical, observed) pairs by EM.

    Starts from a uniform-noise initializer and runs a fixed number of
    iterations; rates are floored at 1e-3 so no event becomes impossible.
    """
    if not pairs:
        raise DataError("estimate_channel requires at least one pair")
    ch = ChannelParams(p_match=1 / 3, p_sub=1 / 3, p_del=1 / 3, p_ins=0.5)
    for _ in range(iterations):
        counts = np.zeros(5)
        for canonical, observed in pairs:
            _channel_forward(
                _indices(observed),
                _indices(canonical),
                ch,
                MAX_INSERTIONS_PER_GAP,
                counts,
            )
        e_match, e_sub, e_del, e_ins, e_stop = counts
        symbol_total = e_match + e_sub + e_del
        if symbol_total <= 0.0 and e_ins + e_stop <= 0.0:
            break  # no pair is explainable; keep current estimate
        if symbol_total > 0.0:
            rates = np.maximum(
                np.array([e_match, e_sub, e_del]) / symbol_total, PROB_FLOOR
            )
            rates /= rates.sum()
        else:
            rates = np.array([ch.p_match, ch.p_sub, ch.p_del])
        gap_total = e_ins + e_stop
        p_ins = e_ins / gap_total if gap_total > 0.0 else ch.p_ins
        p_ins = min(max(p_ins, PROB_FLOOR), 1.0 - PROB_FLOOR)
        ch = ChannelParams(
            p_match=float(rates[0]),
            p_sub=float(rates[1]),
            p_del=float(rates[2]),
            p_ins=float(p_ins),
        )
    return ch


def save_channel(path: str, ch: ChannelParams) -> None:
    container.save_tensors(
        path,
        {"channel.params": np.array([ch.p_match, ch.p_sub, ch.p_del, ch.p_ins])},
    )


def load_channel(path: str) -> ChannelParams:
    tensors = container.load_tensors(path)
    try:
        p_match, p_sub, p_del, p_ins = (
            float(x) for x in np.asarray(tensors["channel.params"]).ravel()
        )
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path} is not a channel parameter file: {exc}") from exc
    # stored as float32; renormalize so the sum-to-one invariant holds exactly
    total = p_match + p_sub + p_del
    if total <= 0:
        raise DataError(f"{path} holds degenerate channel rates")
    return ChannelParams(
        p_match=p_match / total, p_sub=p_sub / total, p_del=p_del / total, p_ins=p_ins
    )


# ---------------------------------------------------------------------------
# Best-path (Viterbi) channel score, used to audit decoder output


def channel_best_path_logprob(
    observed: PhonemeSequence,
    canonical: PhonemeSequence | Sequence[PhonemeSequence],
    ch: ChannelParams,
    max_insertions_per_gap: int = MAX_INSERTIONS_PER_GAP,
) -> float:
    """Log-weight of the single best edit path, with the decoder's weights.

    The word decoder scores transitions as log p_match, log(p_sub/38),
    log p_del, and log(p_ins/39) per insertion (capped per gap) without the
    geometric stop factor, so its channel component is this quantity rather
    than ``channel_logprob``. ``canonical`` may be a list of per-word
    chunks; word boundaries are invisible to the channel, so this equals
    the score of the concatenated sequence.
    """
    if isinstance(canonical, PhonemeSequence):
        can = _indices(canonical)
    else:
        can = tuple(i for chunk in canonical for i in _indices(chunk))
    obs = _indices(observed)
    cap = max_insertions_per_gap
    j_max = len(obs)
    log_w = _transition_logs(ch)

    def extend_insertions(grid: list[list[float]]) -> None:
        for j in range(j_max + 1):
            for g in range(cap):
                if grid[j][g] > neg and j < j_max:
                    cand = grid[j][g] + log_w.ins
                    if cand > grid[j + 1][g + 1]:
                        grid[j + 1][g + 1] = cand

    # dp[j][g]: best score having consumed obs[:j], g insertions in open gap
    neg = -math.inf
    dp = [[neg] * (cap + 1) for _ in range(j_max + 1)]
    dp[0][0] = 0.0
    extend_insertions(dp)
    for symbol in can:
        nxt = [[neg] * (cap + 1) for _ in range(j_max + 1)]
        for j in range(j_max + 1):
            best_here = max(dp[j])
            if best_here == neg:
                continue
            if best_here + log_w.p_del > nxt[j][0]:
                nxt[j][0] = best_here + log_w.p_del
            if j < j_max:
                w = log_w.p_match if obs[j] == symbol else log_w.sub
                if best_here + w > nxt[j + 1][0]:
                    nxt[j + 1][0] = best_here + w
        extend_insertions(nxt)
        dp = nxt
    return max(dp[j_max])


@dataclass(frozen=True)
class _TransitionLogs:
    p_match: float
    sub: float
    p_del: float
    ins: float


def _transition_logs(ch: ChannelParams) -> _TransitionLogs:
    def safe_log(x: float) -> float:
        return math.log(x) if x > 0.0 else -math.inf

    return _TransitionLogs(
        p_match=safe_log(ch.p_match),
        sub=safe_log(ch.p_sub / NUM_OTHER_PHONEMES),
        p_del=safe_log(ch.p_del),
        ins=safe_log(ch.p_ins) + _LOG_INS_UNIFORM,
    )


# ---------------------------------------------------------------------------
# Lattice word decoding


class _State:
    """Search state: words emitted, trie position, insertions in open gap."""
    __slots__ = ("score", "words", "node", "ins")

    def __init__(self, score: float, words: tuple[str, ...], node: TrieNode, ins: int):
        self.score = score
        self.words = words
        self.node = node
        self.ins = ins

    def key(self):
        return (self.words, self.node.node_id, self.ins)

    def order(self):
        # higher score first, then lexicographically smaller word sequence
        return (-self.score, self.words, self.node.node_id, self.ins)


def decode_words(
    observed: PhonemeSequence,
    lexicon: Lexicon,
    lm: NGramLM,
    ch: ChannelParams,
    cfg: DecoderConfig = DecoderConfig(),
) -> list[tuple[tuple[str, ...], float]]:
    """Beam search for the word sequences most likely to underlie ``observed``.

    States live on a pronunciation-trie position; the search consumes
    observed symbols left to right, pruning per observed index. Words are
    emitted at trie terminals with the language model folded in at weight
    ``lm_weight``; a hypothesis is accepted once every observed symbol is
    consumed and the trie position is back at the root. Ties break toward
    the lexicographically smaller word sequence.

    The search runs as a ladder of beams at power-of-two widths up to
    ``beam_width``, n-best lists max-merged across lanes. A single pruned
    beam does not guarantee that widening it never loses hypotheses; the
    nested ladder makes the top-1 score monotone in ``beam_width`` by
    construction. Lanes wide enough never to prune are final: wider ones
    would retrace them, so the ladder stops there.
    """
    if not lexicon.pronunciations:
        raise LexiconError("cannot decode with an empty lexicon")
    obs = _indices(observed)
    log_w = _transition_logs(ch)

    finals: dict[tuple[str, ...], float] = {}
    lane = 1
    while True:
        lane_finals, pruned = _decode_lane(obs, lexicon, lm, cfg, log_w, lane)
        for words, score in lane_finals.items():
            if words not in finals or score > finals[words]:
                finals[words] = score
        if not pruned or lane * 2 > cfg.beam_width:
            break
        lane *= 2

    ranked = sorted(finals.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[: cfg.n_best]


def _decode_lane(
    obs: tuple[int, ...],
    lexicon: Lexicon,
    lm: NGramLM,
    cfg: DecoderConfig,
    log_w: _TransitionLogs,
    width: int,
) -> tuple[dict[tuple[str, ...], float], bool]:
    """One full beam pass at a fixed width; reports whether pruning bit."""
    j_max = len(obs)
    slices: list[dict] = [dict() for _ in range(j_max + 1)]
    start = _State(0.0, (), lexicon.root, 0)
    slices[0][start.key()] = start

    pruned = False
    for j in range(j_max):
        pool, hit = _epsilon_closure(slices[j], lexicon.root, lm, cfg, log_w, width)
        pruned = pruned or hit
        symbol = obs[j]
        target = slices[j + 1]
        for state in pool.values():
            for edge, child in state.node.children.items():
                w = log_w.p_match if edge == symbol else log_w.sub
                if w > -math.inf:
                    _offer(target, _State(state.score + w, state.words, child, 0))
            if state.ins < cfg.max_insertions_per_gap and log_w.ins > -math.inf:
                _offer(
                    target,
                    _State(state.score + log_w.ins, state.words, state.node, state.ins + 1),
                )

    lane_finals, hit = _harvest_finals(slices[j_max], lexicon.root, lm, cfg, log_w, width)
    return lane_finals, pruned or hit


def _harvest_finals(
    seeds: dict, root: TrieNode, lm: NGramLM, cfg: DecoderConfig, log_w, width: int
) -> tuple[dict[tuple[str, ...], float], bool]:
    """Expand the last slice through epsilon moves, collecting root visits.

    Acceptance must not depend on a completed hypothesis out-competing the
    partial states it extends, so every state that lands on the root is
    recorded here the moment it appears. With nonpositive word bonuses a
    state can never produce a final above its own score, which lets the
    frontier drop anything at or below the current n-best cutoff; the
    depth limit backstops configs with positive word bonuses.
    """
    finals: dict[tuple[str, ...], float] = {}

    def absorb(state: _State) -> None:
        if state.node is root:
            total = state.score + cfg.lm_weight * lm.log_probability(
                _lm_context(lm, state.words), SENT_END
            )
            if math.isfinite(total) and (
                state.words not in finals or total > finals[state.words]
            ):
                finals[state.words] = total

    visited = dict(seeds)
    pruned = _prune(visited, width, root)
    frontier = list(visited.values())
    for state in frontier:
        absorb(state)
    monotone = cfg.word_insertion_penalty <= 0.0 and cfg.lm_weight >= 0.0
    for _ in range(_EPSILON_DEPTH_LIMIT):
        if not frontier:
            break
        improved = []
        for state in frontier:
            for nxt in _successors(state, root, lm, cfg, log_w):
                if _offer(visited, nxt):
                    improved.append(nxt)
        cutoff = -math.inf
        if monotone and len(finals) >= cfg.n_best:
            # sound drop: epsilon moves only lower a monotone config's score
            cutoff = sorted(finals.values(), reverse=True)[cfg.n_best - 1]
        frontier = []
        for state in improved:
            if visited.get(state.key()) is state:
                absorb(state)
                if state.score > cutoff:
                    frontier.append(state)
        frontier.sort(key=_State.order)
        if len(frontier) > width:
            del frontier[width:]
            pruned = True
    return finals, pruned


def _lm_context(lm: NGramLM, words: tuple[str, ...]) -> tuple[str, ...]:
    if lm.order <= 1:
        return ()
    context = lm.start_context() + tuple(lm.normalize_word(w) for w in words)
    return context[-(lm.order - 1) :]


def _offer(pool: dict, state: _State) -> bool:
    """Merge a state into a pool keyed by (words, trie node, gap count)."""
    key = state.key()
    existing = pool.get(key)
    if existing is None or state.score > existing.score:
        pool[key] = state
        return True
    return False


def _epsilon_closure(
    pool: dict, root: TrieNode, lm: NGramLM, cfg: DecoderConfig, log_w, width: int
) -> tuple[dict, bool]:
    """Expand deletions and word emissions, which consume no observed symbol.

    Runs to a fixpoint with beam pruning between rounds; a depth limit
    guards the degenerate channels where deletion is free. Also reports
    whether pruning removed anything, so callers can tell an exact pass
    from a truncated one.
    """
    pool = dict(pool)
    pruned = _prune(pool, width, root)
    frontier = list(pool.values())
    for _ in range(_EPSILON_DEPTH_LIMIT):
        if not frontier:
            break
        improved = []
        for state in frontier:
            for nxt in _successors(state, root, lm, cfg, log_w):
                if _offer(pool, nxt):
                    improved.append(nxt)
        pruned = _prune(pool, width, root) or pruned
        frontier = [s for s in improved if pool.get(s.key()) is s]
    return pool, pruned


def _successors(state: _State, root: TrieNode, lm: NGramLM, cfg: DecoderConfig, log_w):
    out = []
    if log_w.p_del > -math.inf:
        for edge in sorted(state.node.children):
            out.append(
                _State(state.score + log_w.p_del, state.words, state.node.children[edge], 0)
            )
    for word in state.node.words:
        lm_term = cfg.lm_weight * lm.log_probability(_lm_context(lm, state.words), word)
        score = state.score + lm_term + cfg.word_insertion_penalty
        if math.isfinite(score):
            # the open insertion gap continues across the word boundary:
            # the channel sees one concatenated phoneme string
            out.append(_State(score, state.words + (word,), root, state.ins))
    return out


def _prune(pool: dict, beam_width: int, root: TrieNode) -> bool:
    """Keep the best ``beam_width`` states, reserving slots for root states.

    On inputs far from any lexicon word the in-word hypotheses cluster so
    tightly that every word-boundary state would be evicted at birth,
    starving the search of completions; a small reserved share keeps the
    best boundary states alive regardless. Returns True iff states were
    dropped.
    """
    if len(pool) <= beam_width:
        return False
    ranked = sorted(pool.values(), key=_State.order)
    reserve = beam_width // _ROOT_RESERVE_FRACTION  # 0 for tiny beams: plain top-K
    best_roots = [s for s in ranked if s.node is root][:reserve]
    keep = {s.key() for s in best_roots}
    budget = beam_width - len(keep)
    for state in ranked:
        if budget == 0:
            break
        if state.key() not in keep:
            keep.add(state.key())
            budget -= 1
    for state in ranked:
        if state.key() not in keep:
            del pool[state.key()]
    return True
