"""Temperature-based language sampling and the monolingual/parallel mixture."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, Iterable, Iterator, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np

from .corpus import CorpusStats, Document, ParallelPair

DEFAULT_ALPHA = 0.3
DEFAULT_PARALLEL_RATIO = 0.10


@dataclass(frozen=True)
class MixtureSpec:
    alpha: float = DEFAULT_ALPHA
    parallel_ratio: float = DEFAULT_PARALLEL_RATIO
    seed: int = 0
    # "pairs": q over language pairs; "target": q over target languages, then a
    # pair within the chosen target language proportionally to its count.
    pair_sampling: str = "pairs"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.parallel_ratio <= 1.0:
            raise ValueError(f"parallel_ratio must be in [0, 1], got {self.parallel_ratio}")
        if self.pair_sampling not in ("pairs", "target"):
            raise ValueError(f"pair_sampling must be 'pairs' or 'target', got {self.pair_sampling!r}")


@dataclass(frozen=True)
class Distribution:
    keys: tuple
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != (len(self.keys),):
            raise ValueError("keys and probs must have the same length")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be non-negative and sum to 1")
        object.__setattr__(self, "keys", tuple(self.keys))
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cdf", np.cumsum(probs))

    def prob(self, key) -> float:
        return float(self.probs[self.keys.index(key)])

    def as_dict(self) -> dict:
        return dict(zip(self.keys, self.probs.tolist()))


def language_probs(counts: Mapping[Hashable, int], alpha: float) -> Distribution:
    """p(k) proportional to q(k)**alpha, with q the empirical share of each key."""
    if not counts:
        raise ValueError("counts must be non-empty")
    keys = sorted(counts)
    for k in keys:
        if counts[k] <= 0:
            raise ValueError(f"count for {k!r} must be positive, got {counts[k]}")
    c = np.array([counts[k] for k in keys], dtype=np.float64)
    # log-space keeps tiny shares from underflowing at small alpha
    logw = alpha * (np.log(c) - np.log(c.sum()))
    w = np.exp(logw - logw.max())
    p = w / w.sum()
    # absorb the last ulp of rounding so the 1e-12 normalization check always holds
    p[-1] = max(0.0, 1.0 - p[:-1].sum())
    return Distribution(tuple(keys), p)


def sample_language(d: Distribution, rng: np.random.Generator):
    i = int(np.searchsorted(d._cdf, rng.random(), side="right"))
    i = min(i, len(d.keys) - 1)
    # searchsorted can land on a zero-probability tail key only through cdf rounding
    while d.probs[i] == 0.0:
        i -= 1
    return d.keys[i]


class RawTask(NamedTuple):
    kind: str  # "mono" or "parallel"
    key: Union[str, tuple]
    item: Union[Document, ParallelPair]


class _Cycler:
    """Endless per-key iterator; reshuffles with the shared generator at each epoch."""

    def __init__(self, items: Sequence, rng: np.random.Generator):
        self.items = list(items)
        self.rng = rng
        self.order: np.ndarray = np.empty(0, dtype=np.int64)
        self.pos = 0
        self.epochs = 0

    def next(self):
        if self.pos >= len(self.order):
            self.order = self.rng.permutation(len(self.items))
            self.pos = 0
            self.epochs += 1
        item = self.items[self.order[self.pos]]
        self.pos += 1
        return item


def _group(items: Iterable, keyfn) -> dict:
    out: dict = defaultdict(list)
    for it in items:
        out[keyfn(it)].append(it)
    return dict(out)


class MixedStream:
    """Infinite, seeded stream of RawTask drawn from a two-stage mixture.

    Each draw first picks the parallel side with probability
    ``spec.parallel_ratio``, then a language (monolingual side) or a language
    pair (parallel side) from the temperature-scaled distribution, then the
    next example of that key.
    """

    def __init__(self, mono_corpus: Iterable[Document], parallel_corpus: Iterable[ParallelPair],
                 stats: Optional[CorpusStats], spec: MixtureSpec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        mono = _group(mono_corpus, lambda d: d.lang)
        par = _group(parallel_corpus, lambda p: p.key)
        if stats is None:
            stats = CorpusStats({k: len(v) for k, v in mono.items()}, {k: len(v) for k, v in par.items()})
        self.stats = stats

        r = spec.parallel_ratio
        self.mono_dist = self.pair_dist = None
        self.target_pairs: dict = {}
        if r < 1.0:
            counts = {k: c for k, c in stats.mono_counts.items() if c > 0}
            if not counts:
                raise ValueError("monolingual side selected with nonzero probability but corpus is empty")
            missing = [k for k in counts if not mono.get(k)]
            if missing:
                raise ValueError(f"stats list languages absent from the monolingual corpus: {missing}")
            self.mono_dist = language_probs(counts, spec.alpha)
        if r > 0.0:
            counts = {k: c for k, c in stats.pair_counts.items() if c > 0}
            if not counts:
                raise ValueError("parallel side selected with nonzero probability but corpus is empty")
            missing = [k for k in counts if not par.get(k)]
            if missing:
                raise ValueError(f"stats list pairs absent from the parallel corpus: {missing}")
            if spec.pair_sampling == "pairs":
                self.pair_dist = language_probs(counts, spec.alpha)
            else:
                by_tgt: dict = defaultdict(int)
                for (s, t), c in counts.items():
                    by_tgt[t] += c
                self.pair_dist = language_probs(by_tgt, spec.alpha)
                for t in by_tgt:
                    sub = {k: c for k, c in counts.items() if k[1] == t}
                    self.target_pairs[t] = language_probs(sub, 1.0)
        self._mono = {k: _Cycler(v, self.rng) for k, v in sorted(mono.items())}
        self._par = {k: _Cycler(v, self.rng) for k, v in sorted(par.items())}

    def __iter__(self) -> Iterator[RawTask]:
        return self

    def __next__(self) -> RawTask:
        parallel = self.rng.random() < self.spec.parallel_ratio
        if parallel:
            key = sample_language(self.pair_dist, self.rng)
            if self.target_pairs:
                key = sample_language(self.target_pairs[key], self.rng)
            return RawTask("parallel", key, self._par[key].next())
        key = sample_language(self.mono_dist, self.rng)
        return RawTask("mono", key, self._mono[key].next())


def mixed_stream(mono_corpus: Iterable[Document], parallel_corpus: Iterable[ParallelPair],
                 stats: Optional[CorpusStats], spec: MixtureSpec) -> MixedStream:
    return MixedStream(mono_corpus, parallel_corpus, stats, spec)
