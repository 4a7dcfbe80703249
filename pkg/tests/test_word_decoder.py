"""Noisy channel model and lattice word decoding."""

import math

import numpy as np
import pytest

from imly.errors import ConfigError, DataError, LexiconError
from imly.lexicon_lm import SENT_END, Lexicon, parse_lexicon, train_ngram
from imly.phoneme_recognizer import NUM_CLASSES, PHONEME_TO_INDEX, PhonemeSequence
from imly.word_decoder import (
    CLEAN_CHANNEL,
    DEFAULT_CHANNEL,
    ChannelParams,
    DecoderConfig,
    channel_best_path_logprob,
    channel_logprob,
    corrupt,
    decode_words,
    estimate_channel,
    load_channel,
    save_channel,
)

from oracles import (
    channel_best_logweight,
    channel_plan_prob,
    channel_total_prob,
    decode_exhaustive,
)

S, AH, N, M = (PHONEME_TO_INDEX[p] for p in ("S", "AH", "N", "M"))
TEST_CHANNEL = ChannelParams(p_match=0.7, p_sub=0.15, p_del=0.15, p_ins=0.2)


def _seq(*indices) -> PhonemeSequence:
    return PhonemeSequence(tuple(indices))


# ---------------------------------------------------------------------------
# Parameter validation


def test_channel_params_validation():
    assert CLEAN_CHANNEL.p_match == 1.0
    assert DEFAULT_CHANNEL.p_match + DEFAULT_CHANNEL.p_sub + DEFAULT_CHANNEL.p_del == 1.0
    with pytest.raises(ConfigError, match="must be in"):
        ChannelParams(1.2, -0.1, -0.1, 0.0)
    with pytest.raises(ConfigError, match="must be 1"):
        ChannelParams(0.5, 0.1, 0.1, 0.0)
    with pytest.raises(ConfigError, match="p_ins must be < 1"):
        ChannelParams(1.0, 0.0, 0.0, 1.0)


def test_decoder_config_validation():
    with pytest.raises(ConfigError, match="beam_width"):
        DecoderConfig(beam_width=0)
    with pytest.raises(ConfigError, match="n_best"):
        DecoderConfig(n_best=0)
    with pytest.raises(ConfigError, match="max_insertions_per_gap"):
        DecoderConfig(max_insertions_per_gap=-1)


# ---------------------------------------------------------------------------
# Generative corruption


def test_corrupt_is_deterministic_per_seed():
    seq = _seq(S, AH, N, M, S)
    a = corrupt(seq, DEFAULT_CHANNEL, seed=3)
    b = corrupt(seq, DEFAULT_CHANNEL, seed=3)
    assert a.indices == b.indices
    outputs = {corrupt(seq, DEFAULT_CHANNEL, seed=s).indices for s in range(20)}
    assert len(outputs) > 1


def test_corrupt_identity_under_clean_channel():
    seq = _seq(S, AH, N)
    for seed in range(5):
        assert corrupt(seq, CLEAN_CHANNEL, seed).indices == seq.indices


def test_corrupt_length_bounds():
    seq = _seq(S, AH, N, M)
    no_ins = ChannelParams(0.5, 0.25, 0.25, 0.0)
    no_del = ChannelParams(0.9, 0.1, 0.0, 0.3)
    for seed in range(50):
        assert len(corrupt(seq, no_ins, seed)) <= len(seq)
        out = corrupt(seq, no_del, seed)
        # every canonical symbol survives; at most 2 insertions per gap
        assert len(seq) <= len(out) <= len(seq) + 2 * (len(seq) + 1)


def test_corrupt_frequencies_match_channel_density():
    ch = ChannelParams(0.6, 0.2, 0.2, 0.3)
    canonical = _seq(S)
    trials = 20000
    counts: dict[tuple[int, ...], int] = {}
    for seed in range(trials):
        out = corrupt(canonical, ch, seed).indices
        counts[out] = counts.get(out, 0) + 1
    for obs in [(), (S,), (AH,), (AH, S)]:
        expected = math.exp(channel_logprob(PhonemeSequence(obs), canonical, ch))
        assert counts.get(obs, 0) / trials == pytest.approx(expected, abs=0.02)


# ---------------------------------------------------------------------------
# Total channel probability


def test_channel_logprob_hand_case_clean():
    seq = _seq(S, AH, N)
    assert channel_logprob(seq, seq, CLEAN_CHANNEL) == pytest.approx(0.0)
    assert channel_logprob(_seq(S, AH), seq, CLEAN_CHANNEL) == -math.inf


def test_channel_logprob_matches_coin_recursion():
    rng = np.random.default_rng(31)
    for _ in range(200):
        n = int(rng.integers(0, 4))
        m = int(rng.integers(0, 4))
        can = tuple(int(x) for x in rng.integers(1, NUM_CLASSES, n))
        obs = tuple(int(x) for x in rng.integers(1, NUM_CLASSES, m))
        expected = channel_total_prob(obs, can, TEST_CHANNEL)
        got = math.exp(channel_logprob(PhonemeSequence(obs), PhonemeSequence(can), TEST_CHANNEL))
        assert got == pytest.approx(expected, abs=1e-12)


def test_coin_recursion_matches_literal_plan_enumeration():
    # anchors the recursion oracle itself to a direct transcription of the
    # generative process: ops in {match,sub,del}^n, gap sizes in {0,1,2}
    rng = np.random.default_rng(32)
    for _ in range(40):
        n = int(rng.integers(0, 3))
        m = int(rng.integers(0, 4))
        can = tuple(int(x) for x in rng.integers(1, 6, n))
        obs = tuple(int(x) for x in rng.integers(1, 6, m))
        assert channel_total_prob(obs, can, TEST_CHANNEL) == pytest.approx(
            channel_plan_prob(obs, can, TEST_CHANNEL), abs=1e-15
        )


def _quotient_total(canonical: tuple[int, ...], ch: ChannelParams, other: int) -> float:
    """Sum channel probability over all possible observations.

    Observed symbols are grouped into equivalence classes (each canonical
    symbol, or "anything else"); the channel never compares observed symbols
    to each other, so probability is constant within a class and the class
    size is a simple multiplicity.
    """
    import itertools

    distinct = tuple(dict.fromkeys(canonical))
    assert other not in distinct
    alphabet = distinct + (other,)
    other_count = (NUM_CLASSES - 1) - len(distinct)
    max_len = len(canonical) + 2 * (len(canonical) + 1)
    total = 0.0
    for L in range(max_len + 1):
        for obs in itertools.product(alphabet, repeat=L):
            p = math.exp(channel_logprob(PhonemeSequence(obs), PhonemeSequence(canonical), ch))
            total += p * other_count ** sum(1 for x in obs if x == other)
    return total


@pytest.mark.parametrize("canonical", [(), (S,), (S, N)])
def test_channel_distribution_sums_to_one(canonical):
    assert _quotient_total(canonical, TEST_CHANNEL, other=AH) == pytest.approx(
        1.0, abs=1e-9
    )


# ---------------------------------------------------------------------------
# Channel estimation


def test_estimate_channel_requires_pairs():
    with pytest.raises(DataError, match="at least one pair"):
        estimate_channel([])


def test_estimate_channel_on_clean_pairs():
    pair = (_seq(S, AH, N), _seq(S, AH, N))
    ch = estimate_channel([pair] * 3)
    assert ch.p_match > 0.99
    assert ch.p_ins <= 0.0011  # floored


def test_estimate_channel_on_pure_deletion():
    ch = estimate_channel([(_seq(S), PhonemeSequence(()))])
    assert ch.p_del > 0.9


def test_estimate_channel_recovers_known_rates():
    truth = ChannelParams(0.8, 0.1, 0.1, 0.05)
    rng = np.random.default_rng(99)
    pairs = []
    for i in range(200):
        L = int(rng.integers(3, 7))
        can = PhonemeSequence(tuple(int(x) for x in rng.integers(1, NUM_CLASSES, L)))
        pairs.append((can, corrupt(can, truth, seed=5000 + i)))
    est = estimate_channel(pairs)
    assert est.p_match == pytest.approx(truth.p_match, abs=0.02)
    assert est.p_sub == pytest.approx(truth.p_sub, abs=0.02)
    assert est.p_del == pytest.approx(truth.p_del, abs=0.02)
    assert est.p_ins == pytest.approx(truth.p_ins, abs=0.02)


def test_channel_save_load_round_trip(tmp_path):
    path = str(tmp_path / "channel.imly")
    save_channel(path, DEFAULT_CHANNEL)
    loaded = load_channel(path)
    # float32 storage, renormalized on load
    assert loaded.p_match == pytest.approx(DEFAULT_CHANNEL.p_match, abs=1e-6)
    assert loaded.p_sub == pytest.approx(DEFAULT_CHANNEL.p_sub, abs=1e-6)
    assert loaded.p_del == pytest.approx(DEFAULT_CHANNEL.p_del, abs=1e-6)
    assert loaded.p_ins == pytest.approx(DEFAULT_CHANNEL.p_ins, abs=1e-6)


def test_load_channel_rejects_wrong_container(tmp_path):
    from imly import container

    path = str(tmp_path / "other.imly")
    container.save_tensors(path, {"gru.b_out": np.zeros(40)})
    with pytest.raises(DataError, match="not a channel parameter file"):
        load_channel(path)


# ---------------------------------------------------------------------------
# Best-path channel score


def test_best_path_matches_max_recursion_oracle():
    rng = np.random.default_rng(33)
    channels = [DEFAULT_CHANNEL, TEST_CHANNEL, ChannelParams(0.85, 0.15, 0.0, 0.1)]
    for trial in range(100):
        ch = channels[trial % len(channels)]
        n = int(rng.integers(0, 5))
        m = int(rng.integers(0, 7))
        can = tuple(int(x) for x in rng.integers(1, NUM_CLASSES, n))
        obs = tuple(int(x) for x in rng.integers(1, NUM_CLASSES, m))
        got = channel_best_path_logprob(PhonemeSequence(obs), PhonemeSequence(can), ch)
        expected = channel_best_logweight(obs, can, ch)
        if math.isinf(expected):
            assert got == expected
        else:
            assert got == pytest.approx(expected, abs=1e-9)


def test_best_path_ignores_word_boundaries():
    rng = np.random.default_rng(34)
    for _ in range(20):
        a = tuple(int(x) for x in rng.integers(1, NUM_CLASSES, rng.integers(0, 4)))
        b = tuple(int(x) for x in rng.integers(1, NUM_CLASSES, rng.integers(1, 4)))
        obs = PhonemeSequence(tuple(int(x) for x in rng.integers(1, NUM_CLASSES, 5)))
        chunked = channel_best_path_logprob(
            obs, [PhonemeSequence(a), PhonemeSequence(b)], DEFAULT_CHANNEL
        )
        joined = channel_best_path_logprob(obs, PhonemeSequence(a + b), DEFAULT_CHANNEL)
        assert chunked == joined


# ---------------------------------------------------------------------------
# Word decoding

LEXICON_TEXT = """\
SUN  S AH1 N
SON  S AH1 N
MOON  M UW1 N
STONE  S T OW1 N
RAIN  R EY1 N
GOLD  G OW1 L D
"""

CORPUS = [
    "the sun and the moon",
    "son of the stone",
    "rain on gold",
    "sun rain sun",
    "moon stone gold",
]


@pytest.fixture(scope="module")
def lexicon():
    return parse_lexicon(LEXICON_TEXT)


@pytest.fixture(scope="module")
def lm():
    return train_ngram(CORPUS, order=3, k=0.1)


def test_decode_rejects_empty_lexicon(lm):
    with pytest.raises(LexiconError, match="empty lexicon"):
        decode_words(_seq(S), Lexicon({}), lm, DEFAULT_CHANNEL)


def test_decode_empty_observation_prefers_silence(lexicon, lm):
    cfg = DecoderConfig(beam_width=16, n_best=3)
    results = decode_words(PhonemeSequence(()), lexicon, lm, DEFAULT_CHANNEL, cfg)
    words, score = results[0]
    assert words == ()
    expected = cfg.lm_weight * lm.log_probability(lm.start_context(), SENT_END)
    assert score == pytest.approx(expected, abs=1e-12)


def test_decode_clean_channel_recovers_exact_word(lexicon, lm):
    obs = PhonemeSequence(lexicon.pronunciations["moon"][0])
    results = decode_words(obs, lexicon, lm, CLEAN_CHANNEL, DecoderConfig(beam_width=8))
    assert results[0][0] == ("moon",)
    context = lm.start_context()
    expected = lm.log_probability(context, "moon") + lm.log_probability(
        ("<s>", "moon")[-(lm.order - 1):], SENT_END
    )
    assert results[0][1] == pytest.approx(expected, abs=1e-12)


def test_decode_breaks_exact_ties_lexicographically():
    lex = parse_lexicon("SUN  S AH1 N\nSON  S AH1 N\n")
    lm_sym = train_ngram(["sun", "son"], order=2, k=0.1)
    obs = PhonemeSequence(lex.pronunciations["sun"][0])
    results = decode_words(obs, lex, lm_sym, DEFAULT_CHANNEL, DecoderConfig(beam_width=16))
    assert results[0][0] == ("son",)
    assert results[1][0] == ("sun",)
    assert results[0][1] == pytest.approx(results[1][1], abs=1e-12)


def test_decode_scores_are_descending(lexicon, lm):
    rng = np.random.default_rng(35)
    for _ in range(5):
        obs = PhonemeSequence(tuple(int(x) for x in rng.integers(1, NUM_CLASSES, 5)))
        results = decode_words(obs, lexicon, lm, DEFAULT_CHANNEL, DecoderConfig())
        scores = [score for _, score in results]
        assert scores == sorted(scores, reverse=True)
        assert len(results) >= 1


def test_decode_matches_exhaustive_oracle(lexicon, lm):
    rng = np.random.default_rng(36)
    ch = ChannelParams(0.85, 0.15, 0.0, 0.1)  # oracle requires p_del == 0
    cfg = DecoderConfig(beam_width=1 << 20, n_best=5)
    entries = list(lexicon.pronunciations.items())
    for _ in range(10):
        m = int(rng.integers(0, 7))
        obs = tuple(int(x) for x in rng.integers(1, NUM_CLASSES, m))
        expected = decode_exhaustive(obs, entries, lm, ch, cfg)
        got = decode_words(PhonemeSequence(obs), lexicon, lm, ch, cfg)
        assert [w for w, _ in got] == [w for w, _ in expected]
        for (_, gs), (_, es) in zip(got, expected):
            assert gs == pytest.approx(es, abs=1e-9)


def test_decode_top_score_is_monotone_in_beam_width(lexicon, lm):
    rng = np.random.default_rng(37)
    for _ in range(5):
        obs = PhonemeSequence(tuple(int(x) for x in rng.integers(1, NUM_CLASSES, 6)))
        best = -math.inf
        for width in (1, 4, 16, 64):
            cfg = DecoderConfig(beam_width=width, n_best=1)
            hyps = decode_words(obs, lexicon, lm, DEFAULT_CHANNEL, cfg)
            # a very narrow beam may strand every lane mid-word and emit nothing
            score = hyps[0][1] if hyps else -math.inf
            assert score >= best - 1e-12
            best = max(best, score)


def test_decode_scores_decompose_into_channel_and_lm(lexicon, lm):
    import itertools

    rng = np.random.default_rng(38)
    cfg = DecoderConfig(beam_width=1024, n_best=5, word_insertion_penalty=-0.1)
    prons = lexicon.pronunciations
    for _ in range(5):
        obs = PhonemeSequence(tuple(int(x) for x in rng.integers(1, NUM_CLASSES, 5)))
        for words, score in decode_words(obs, lexicon, lm, DEFAULT_CHANNEL, cfg):
            # product() of zero iterables yields one empty combo, so the
            # empty word sequence scores the empty canonical string
            channel = max(
                channel_best_path_logprob(
                    obs,
                    PhonemeSequence(tuple(i for pron in combo for i in pron)),
                    DEFAULT_CHANNEL,
                    cfg.max_insertions_per_gap,
                )
                for combo in itertools.product(*(prons[w] for w in words))
            )
            lm_total = 0.0
            context = lm.start_context()
            for word in words + (SENT_END,):
                lm_total += lm.log_probability(context, word)
                context = (context + (word,))[-(lm.order - 1):]
            recomputed = channel + cfg.lm_weight * lm_total + cfg.word_insertion_penalty * len(words)
            assert score == pytest.approx(recomputed, abs=1e-9)


def test_closed_loop_corrupt_then_decode_smoke(lexicon, lm):
    gen = ChannelParams(0.85, 0.10, 0.05, 0.0)
    cfg = DecoderConfig(beam_width=64, n_best=5)
    words_list = sorted(lexicon.pronunciations)
    hits = 0
    for t in range(20):
        r = np.random.default_rng(600 + t)
        w = words_list[int(r.integers(0, len(words_list)))]
        obs = corrupt(PhonemeSequence(lexicon.pronunciations[w][0]), gen, seed=700 + t)
        results = decode_words(obs, lexicon, lm, DEFAULT_CHANNEL, cfg)
        hits += any(words == (w,) for words, _ in results)
    assert hits >= 17
