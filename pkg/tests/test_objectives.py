import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from deskt5.corpus import Document, ParallelPair
from deskt5.objectives import (NoiseSpec, Objective, _choose_spans, build_example, build_nmt, num_masked,
                               num_spans, reconstruct, render_example, span_corrupt)
from deskt5.vocab import EOS, SEP, build_vocab, decode, encode

V = build_vocab(["en", "de", "fr"], 100)
NOISE = NoiseSpec()


def brute_force_masks(maskable, m, s):
    """Every boolean mask over maskable positions with m masked tokens in s runs."""
    n = len(maskable)
    out = set()
    idx = [i for i in range(n) if maskable[i]]
    for chosen in itertools.combinations(idx, m):
        mask = [False] * n
        for i in chosen:
            mask[i] = True
        runs = sum(1 for i in range(n) if mask[i] and (i == 0 or not mask[i - 1]))
        if runs == s:
            out.add(tuple(mask))
    return out


def spans_to_mask(spans, n):
    mask = [False] * n
    for a, b in spans:
        for i in range(a, b):
            mask[i] = True
    return tuple(mask)


@pytest.mark.parametrize("n,density,mu", [(100, 0.15, 3.0), (10, 0.15, 3.0), (3, 0.15, 3.0), (2, 0.5, 1.0),
                                          (7, 0.5, 3.0), (50, 0.3, 2.0)])
def test_masked_count_formula(n, density, mu):
    m = min(max(round(n * density), 1), n - 1)
    assert num_masked(n, density) == m
    assert num_spans(m, mu) == max(1, round(m / mu))


def test_round_half_to_even():
    # 10 * 0.25 = 2.5 rounds to 2, 14 * 0.25 = 3.5 rounds to 4
    assert num_masked(10, 0.25) == 2
    assert num_masked(14, 0.25) == 4


def test_worked_example():
    # n = 100: 15 masked tokens in round(15 / 3) = 5 spans
    rng = np.random.default_rng(0)
    toks = encode(V, "x" * 100)
    inp, tgt = span_corrupt(toks, NOISE, rng, V)
    assert sum(not V.is_sentinel(t) for t in inp) == 85
    assert [t for t in inp if V.is_sentinel(t)] == [V.sentinel(i) for i in range(5)]
    assert [t for t in tgt if V.is_sentinel(t)] == [V.sentinel(i) for i in range(6)]
    assert tgt[-1] == EOS


@pytest.mark.parametrize("n", range(2, 13))
def test_placements_in_brute_force_set(n):
    for density, mu in ((0.15, 3.0), (0.4, 2.0), (0.5, 1.0)):
        m = num_masked(n, density)
        s = min(num_spans(m, mu), m)
        valid = brute_force_masks([True] * n, m, s)
        rng = np.random.default_rng(n)
        for _ in range(200):
            mask = spans_to_mask(_choose_spans([True] * n, NoiseSpec(density, mu), 99, rng), n)
            assert sum(mask) == m
            if valid:
                assert mask in valid


@pytest.mark.parametrize("n,sep_at", [(9, 4), (12, 5), (8, 0), (11, 10)])
def test_exempt_placements_in_brute_force_set(n, sep_at):
    maskable = [i != sep_at for i in range(n)]
    noise = NoiseSpec(0.4, 2.0)
    m = num_masked(n - 1, noise.noise_density)
    rng = np.random.default_rng(0)
    for _ in range(300):
        spans = _choose_spans(maskable, noise, 99, rng)
        mask = spans_to_mask(spans, n)
        assert mask in brute_force_masks(maskable, m, len(spans))
        assert not mask[sep_at]


def test_placement_is_uniform():
    n, noise = 8, NoiseSpec(0.4, 1.5)
    m = num_masked(n, noise.noise_density)
    s = num_spans(m, noise.mean_span_length)
    valid = sorted(brute_force_masks([True] * n, m, s))
    rng = np.random.default_rng(1)
    draws = Counter(spans_to_mask(_choose_spans([True] * n, noise, 99, rng), n) for _ in range(20_000))
    obs = [draws[v] for v in valid]
    assert sum(obs) == 20_000
    assert stats.chisquare(obs).pvalue > 0.001


def test_exempt_placement_is_uniform():
    n = 9
    maskable = [i != 4 for i in range(n)]
    noise = NoiseSpec(0.5, 2.0)
    m = num_masked(8, 0.5)
    s = num_spans(m, 2.0)
    valid = sorted(brute_force_masks(maskable, m, s))
    rng = np.random.default_rng(2)
    draws = Counter(spans_to_mask(_choose_spans(maskable, noise, 99, rng), n) for _ in range(20_000))
    assert set(draws) <= set(valid)
    assert stats.chisquare([draws[v] for v in valid]).pvalue > 0.001


def test_span_corrupt_too_short_and_specials():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="at least 2"):
        span_corrupt(encode(V, "a"), NOISE, rng, V)
    with pytest.raises(ValueError, match="special"):
        span_corrupt(encode(V, "ab") + [SEP] + encode(V, "cd"), NOISE, rng, V)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 255), min_size=2, max_size=120), st.floats(0.05, 0.9), st.floats(1.0, 6.0),
       st.integers(0, 2**32 - 1))
def test_reconstruct_inverts_span_corrupt(byte_vals, density, mu, seed):
    toks = [V.byte_offset + b for b in byte_vals]
    inp, tgt = span_corrupt(toks, NoiseSpec(density, mu), np.random.default_rng(seed), V)
    assert reconstruct(inp, tgt, V) == toks
    masked = len(toks) - sum(not V.is_sentinel(t) for t in inp)
    assert masked == num_masked(len(toks), density)


def test_reconstruct_rejects_bad_targets():
    s0, s1, s2 = V.sentinel(0), V.sentinel(1), V.sentinel(2)
    a, b = encode(V, "ab")
    assert reconstruct([a, s0, b], [s0, a, s1, EOS], V) == [a, a, b]
    with pytest.raises(ValueError, match="out of order"):
        reconstruct([a, s0, b], [s0, a, s2, EOS], V)
    with pytest.raises(ValueError, match="missing"):
        reconstruct([s0, a, s1], [s0, b, EOS], V)
    with pytest.raises(ValueError, match="expected S_0"):
        reconstruct([s1, a], [s0, b, s1, a, EOS], V)
    with pytest.raises(ValueError, match="start with a sentinel"):
        reconstruct([s0], [a, s0, EOS], V)


def test_nmt_format():
    ex = build_nmt(ParallelPair("en", "de", "hello", "hallo"), V)
    assert ex.input == (V.lang_code("de"), *encode(V, "hello"))
    assert ex.target == (*encode(V, "hallo"), EOS)
    assert decode(V, ex.input) == "<2de>hello"


def test_tlm_keeps_separator_and_has_no_lang_code():
    rng = np.random.default_rng(0)
    pair = ParallelPair("en", "de", "the cat sat", "die katze sass")
    for _ in range(200):
        ex = build_example(Objective.TLM, pair, V, NoiseSpec(0.5, 2.0), rng)
        assert ex.input.count(SEP) == 1
        assert not any(V.is_lang_code(t) for t in ex.input)
        assert reconstruct(ex.input, ex.target, V) == encode(V, pair.src_text) + [SEP] + encode(V, pair.tgt_text)


def test_denoised_variants():
    rng = np.random.default_rng(0)
    pair = ParallelPair("en", "fr", "good morning", "bonjour")
    d = build_example(Objective.DENOISED_NMT, pair, V, NOISE, rng)
    assert d.input[0] == V.lang_code("fr")
    assert any(V.is_sentinel(t) for t in d.input)
    assert d.target == (*encode(V, "bonjour"), EOS)
    dl = build_example(Objective.DENOISED_NMT_LM, pair, V, NOISE, rng)
    assert dl.target == (*encode(V, "bonjour"), SEP, *encode(V, "good morning"), EOS)


def test_short_inputs_skipped_and_type_errors():
    rng = np.random.default_rng(0)
    assert build_example(Objective.MLM, Document("en", "a"), V, NOISE, rng) is None
    assert build_example(Objective.DENOISED_NMT, ParallelPair("en", "de", "a", "b"), V, NOISE, rng) is None
    with pytest.raises(TypeError):
        build_example(Objective.NMT, Document("en", "abc"), V, NOISE, rng)


def test_render_example():
    ex = build_nmt(ParallelPair("en", "de", "hi", "hallo"), V)
    text = render_example(ex, V)
    assert "<2de>hi" in text and "hallo<eos>" in text and "en->de" in text


def test_objective_values():
    assert [o.value for o in Objective] == ["mlm", "tlm", "nmt", "dnmt", "dnmt-lm"]
    assert [o.uses_lang_code for o in Objective] == [False, False, True, True, True]
