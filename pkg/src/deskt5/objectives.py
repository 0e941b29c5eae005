"""Text-to-text pre-training objectives: MLM span corruption, TLM, NMT and the
two denoised NMT variants.

Only NMT-family inputs carry a leading ``<2xx>`` target-language token; MLM
and TLM inputs never do.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .corpus import Document, ParallelPair
from .vocab import EOS, SEP, Vocab, encode


class Objective(str, enum.Enum):
    MLM = "mlm"
    TLM = "tlm"
    NMT = "nmt"
    DENOISED_NMT = "dnmt"
    DENOISED_NMT_LM = "dnmt-lm"

    @property
    def uses_lang_code(self) -> bool:
        return self not in (Objective.MLM, Objective.TLM)


PARALLEL_OBJECTIVES = (Objective.TLM, Objective.NMT, Objective.DENOISED_NMT, Objective.DENOISED_NMT_LM)


@dataclass(frozen=True)
class NoiseSpec:
    noise_density: float = 0.15
    mean_span_length: float = 3.0

    def __post_init__(self):
        if not 0.0 < self.noise_density < 1.0:
            raise ValueError(f"noise_density must be in (0, 1), got {self.noise_density}")
        if self.mean_span_length < 1.0:
            raise ValueError(f"mean_span_length must be >= 1, got {self.mean_span_length}")


@dataclass(frozen=True)
class Example:
    objective: Objective
    input: tuple
    target: tuple
    langs: tuple  # (src, tgt or None)

    @property
    def num_tokens(self) -> int:
        return len(self.input) + len(self.target)


def num_masked(n: int, noise_density: float) -> int:
    """Masked-token count for ``n`` maskable tokens. Rounds half to even."""
    return min(max(round(n * noise_density), 1), n - 1)


def num_spans(m: int, mean_span_length: float) -> int:
    return max(1, round(m / mean_span_length))


def _random_composition(total: int, parts: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random split of ``total`` into ``parts`` positive integers."""
    if parts == 1:
        return np.array([total])
    cuts = np.sort(rng.choice(np.arange(1, total), size=parts - 1, replace=False))
    return np.diff(np.concatenate(([0], cuts, [total])))


def _place_spans(n: int, m: int, s: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Uniform placement of a random composition of ``m`` into ``s`` spans over
    ``n`` positions with at least one unmasked position between spans."""
    lengths = _random_composition(m, s, rng)
    free = n - m - (s - 1)
    # stars and bars: s+1 non-negative gap excesses summing to `free`
    bars = np.sort(rng.choice(free + s, size=s, replace=False))
    excess = np.diff(np.concatenate(([-1], bars, [free + s]))) - 1
    spans = []
    pos = int(excess[0])
    for i, length in enumerate(lengths):
        spans.append((pos, pos + int(length)))
        pos += int(length) + 1 + int(excess[i + 1])
    return spans


@lru_cache(maxsize=4096)
def _mask_counts(maskable: tuple, m: int, s: int):
    """Suffix counts of valid masks: ways[i][t][r][prev_masked]."""
    n = len(maskable)
    ways = [[[[0, 0] for _ in range(s + 2)] for _ in range(m + 1)] for _ in range(n + 1)]
    for prev in (0, 1):
        ways[n][0][0][prev] = 1
    for i in range(n - 1, -1, -1):
        for t in range(m + 1):
            for r in range(s + 1):
                for prev in (0, 1):
                    w = ways[i + 1][t][r][0]
                    if maskable[i] and t > 0:
                        nr = r if prev else r - 1
                        if nr >= 0:
                            w += ways[i + 1][t - 1][nr][1]
                    ways[i][t][r][prev] = w
    return ways


def _dp_spans(maskable: Sequence[bool], m: int, s: int, rng) -> Optional[list[tuple[int, int]]]:
    """Exact uniform sample over valid masks; None when no mask exists."""
    key = tuple(bool(x) for x in maskable)
    ways = _mask_counts(key, m, s)
    n = len(key)
    if ways[0][m][s][0] == 0:
        return None
    mask = []
    t, r, prev = m, s, 0
    for i in range(n):
        stay = ways[i + 1][t][r][0]
        total = ways[i][t][r][prev]
        take = total - stay
        # counts can exceed int64, so draw in floating point
        if take and rng.random() * total >= stay:
            if not prev:
                r -= 1
            t -= 1
            prev = 1
            mask.append(True)
        else:
            prev = 0
            mask.append(False)
    return _runs(mask)


def _runs(mask: Sequence[bool]) -> list[tuple[int, int]]:
    spans = []
    start = None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        elif not v and start is not None:
            spans.append((start, i))
            start = None
    if start is not None:
        spans.append((start, len(mask)))
    return spans


def _choose_spans(maskable: Sequence[bool], noise: NoiseSpec, max_spans: int,
                  rng: np.random.Generator) -> list[tuple[int, int]]:
    n_total = len(maskable)
    n = int(sum(maskable))
    if n < 2:
        raise ValueError(f"span corruption needs at least 2 maskable tokens, got {n}")
    m = num_masked(n, noise.noise_density)
    s0 = min(num_spans(m, noise.mean_span_length), m, max_spans)
    exempt = n != n_total
    tried = []
    for s in list(range(s0, 0, -1)) + list(range(s0 + 1, min(m, max_spans) + 1)):
        if m + s - 1 > n_total:
            continue
        tried.append(s)
        if not exempt:
            return _place_spans(n_total, m, s, rng)
        for _ in range(64):
            spans = _place_spans(n_total, m, s, rng)
            if all(all(maskable[a:b]) for a, b in spans):
                return spans
        spans = _dp_spans(maskable, m, s, rng)
        if spans is not None:
            return spans
    raise ValueError(f"no valid placement of {m} masked tokens (span counts tried: {tried})")


def span_corrupt(tokens: Sequence[int], noise: NoiseSpec, rng: np.random.Generator, vocab: Vocab,
                 exempt: Sequence[int] = ()) -> tuple[list[int], list[int]]:
    """Replace random spans with sentinels.

    Returns ``(corrupted, span_target)`` where span i in ``corrupted`` is
    replaced by sentinel S_i and ``span_target`` is
    ``S_0 span_0 S_1 span_1 ... S_s EOS``. Tokens whose id is in ``exempt`` are
    never masked and do not count towards the masking budget.
    """
    tokens = [int(t) for t in tokens]
    for t in tokens:
        if vocab.is_special(t) and t not in exempt:
            raise ValueError(f"span_corrupt input contains special token {t}")
    exempt_set = set(exempt)
    maskable = [t not in exempt_set for t in tokens]
    # the terminal sentinel S_s must exist too
    spans = _choose_spans(maskable, noise, vocab.sentinel_count - 1, rng)
    corrupted: list[int] = []
    target: list[int] = []
    pos = 0
    for i, (a, b) in enumerate(spans):
        corrupted.extend(tokens[pos:a])
        corrupted.append(vocab.sentinel(i))
        target.append(vocab.sentinel(i))
        target.extend(tokens[a:b])
        pos = b
    corrupted.extend(tokens[pos:])
    target.append(vocab.sentinel(len(spans)))
    target.append(EOS)
    return corrupted, target


def reconstruct(corrupted: Sequence[int], span_target: Sequence[int], vocab: Vocab) -> list[int]:
    """Splice the spans of ``span_target`` back into ``corrupted``."""
    body = list(span_target)
    if body and body[-1] == EOS:
        body.pop()
    spans: dict[int, list[int]] = {}
    current = None
    for tok in body:
        if vocab.is_sentinel(tok):
            current = vocab.sentinel_index(tok)
            if current in spans:
                raise ValueError(f"sentinel S_{current} repeated in span target")
            if spans and current != max(spans) + 1:
                raise ValueError(f"sentinel S_{current} out of order in span target")
            spans[current] = []
        elif current is None:
            raise ValueError("span target does not start with a sentinel")
        else:
            spans[current].append(tok)

    out: list[int] = []
    expected = 0
    for tok in corrupted:
        if vocab.is_sentinel(tok):
            idx = vocab.sentinel_index(tok)
            if idx != expected:
                raise ValueError(f"sentinel S_{idx} in corrupted input, expected S_{expected}")
            if idx not in spans:
                raise ValueError(f"sentinel S_{idx} missing from span target")
            out.extend(spans[idx])
            expected += 1
        else:
            out.append(tok)
    extra = [i for i in spans if i >= expected and spans[i]]
    if extra:
        raise ValueError(f"span target carries content for unused sentinels {extra}")
    return out


def build_mlm(doc: Document, v: Vocab, noise: NoiseSpec, rng) -> Optional[Example]:
    toks = encode(v, doc.text)
    if len(toks) < 2:
        return None
    inp, tgt = span_corrupt(toks, noise, rng, v)
    return Example(Objective.MLM, tuple(inp), tuple(tgt), (doc.lang, None))


def build_tlm(pair: ParallelPair, v: Vocab, noise: NoiseSpec, rng) -> Optional[Example]:
    src = encode(v, pair.src_text)
    tgt = encode(v, pair.tgt_text)
    if not src or not tgt:
        return None
    concat = src + [SEP] + tgt
    inp, target = span_corrupt(concat, noise, rng, v, exempt=(SEP,))
    return Example(Objective.TLM, tuple(inp), tuple(target), (pair.src_lang, pair.tgt_lang))


def build_nmt(pair: ParallelPair, v: Vocab) -> Example:
    code = v.lang_code(pair.tgt_lang)
    inp = [code] + encode(v, pair.src_text)
    tgt = encode(v, pair.tgt_text) + [EOS]
    return Example(Objective.NMT, tuple(inp), tuple(tgt), (pair.src_lang, pair.tgt_lang))


def _masked_source(pair: ParallelPair, v: Vocab, noise: NoiseSpec, rng) -> Optional[list[int]]:
    code = v.lang_code(pair.tgt_lang)
    src = encode(v, pair.src_text)
    if len(src) < 2:
        return None
    masked, _ = span_corrupt(src, noise, rng, v)
    return [code] + masked


def build_denoised_nmt(pair: ParallelPair, v: Vocab, noise: NoiseSpec, rng) -> Optional[Example]:
    inp = _masked_source(pair, v, noise, rng)
    if inp is None:
        return None
    tgt = encode(v, pair.tgt_text) + [EOS]
    return Example(Objective.DENOISED_NMT, tuple(inp), tuple(tgt), (pair.src_lang, pair.tgt_lang))


def build_denoised_nmt_lm(pair: ParallelPair, v: Vocab, noise: NoiseSpec, rng) -> Optional[Example]:
    inp = _masked_source(pair, v, noise, rng)
    if inp is None:
        return None
    tgt = encode(v, pair.tgt_text) + [SEP] + encode(v, pair.src_text) + [EOS]
    return Example(Objective.DENOISED_NMT_LM, tuple(inp), tuple(tgt), (pair.src_lang, pair.tgt_lang))


def build_example(objective: Objective, item, v: Vocab, noise: NoiseSpec, rng) -> Optional[Example]:
    """Dispatch on objective. Returns None for inputs too short to corrupt."""
    objective = Objective(objective)
    if objective is Objective.MLM:
        if isinstance(item, ParallelPair):
            item = Document(item.src_lang, item.src_text)
        return build_mlm(item, v, noise, rng)
    if not isinstance(item, ParallelPair):
        raise TypeError(f"{objective.value} needs a ParallelPair, got {type(item).__name__}")
    if objective is Objective.TLM:
        return build_tlm(item, v, noise, rng)
    if objective is Objective.NMT:
        return build_nmt(item, v)
    if objective is Objective.DENOISED_NMT:
        return build_denoised_nmt(item, v, noise, rng)
    return build_denoised_nmt_lm(item, v, noise, rng)


def render_example(ex: Example, v: Vocab) -> str:
    from .vocab import decode

    src, tgt = ex.langs
    langs = src if tgt is None else f"{src}->{tgt}"
    return (f"objective: {ex.objective.value}  langs: {langs}\n"
            f"input  ({len(ex.input):3d}): {decode(v, ex.input)}\n"
            f"target ({len(ex.target):3d}): {decode(v, ex.target)}")
