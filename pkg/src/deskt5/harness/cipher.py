"""Synthetic cipher languages.

A derived language is a fixed substitution of the 26 lowercase letters of a
base language, optionally combined with reversed word order. Translation
between any two languages is therefore exact and rule-checkable.
"""
from __future__ import annotations

import itertools
import json
import string
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..corpus import (Document, ParallelPair, load_monolingual, load_parallel, write_monolingual,
                      write_parallel)

LETTERS = string.ascii_lowercase


@dataclass(frozen=True)
class DerivedLang:
    code: str
    perm_seed: Optional[int]  # None keeps letters unchanged
    order: str = "identity"   # or "reverse"

    def __post_init__(self):
        if self.order not in ("identity", "reverse"):
            raise ValueError(f"word-order rule must be 'identity' or 'reverse', got {self.order!r}")


def make_words(n: int, rng: np.random.Generator, min_len: int = 2, max_len: int = 6,
               alphabet: str = LETTERS) -> tuple[str, ...]:
    cap = sum(len(alphabet) ** k for k in range(min_len, max_len + 1))
    if n > cap:
        raise ValueError(f"cannot make {n} distinct words of length {min_len}-{max_len} from {len(alphabet)} letters")
    words: list[str] = []
    seen = set()
    while len(words) < n:
        k = int(rng.integers(min_len, max_len + 1))
        w = "".join(rng.choice(list(alphabet), size=k))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return tuple(words)


@dataclass(frozen=True)
class CipherSpec:
    base_lang: str
    derived: tuple[DerivedLang, ...]
    words: tuple[str, ...]
    min_words: int = 3
    max_words: int = 6
    zipf: float = 1.0  # word frequency exponent; 0 is uniform

    def __post_init__(self):
        codes = [self.base_lang] + [d.code for d in self.derived]
        dupes = sorted({c for c in codes if codes.count(c) > 1})
        if dupes:
            raise ValueError(f"duplicate language codes: {dupes}")
        if not self.words:
            raise ValueError("word list is empty")
        if len(set(self.words)) != len(self.words):
            raise ValueError("word list contains duplicates")
        bad = [w for w in self.words if not w or any(ch not in LETTERS for ch in w)]
        if bad:
            raise ValueError(f"words must be non-empty lowercase ascii: {bad[:3]}")
        if not 1 <= self.min_words <= self.max_words:
            raise ValueError("need 1 <= min_words <= max_words")

    @property
    def langs(self) -> tuple[str, ...]:
        return (self.base_lang,) + tuple(d.code for d in self.derived)

    def derived_lang(self, code: str) -> DerivedLang:
        for d in self.derived:
            if d.code == code:
                return d
        raise KeyError(f"unknown derived language {code!r}")

    def permutation(self, code: str) -> str:
        """Image of ``a..z`` under the language's letter substitution."""
        d = self.derived_lang(code)
        if d.perm_seed is None:
            return LETTERS
        perm = np.random.default_rng(d.perm_seed).permutation(len(LETTERS))
        return "".join(LETTERS[i] for i in perm)

    def encipher(self, text: str, code: str) -> str:
        if code == self.base_lang:
            return text
        d = self.derived_lang(code)
        words = text.split(" ")
        if d.order == "reverse":
            words.reverse()
        return " ".join(words).translate(str.maketrans(LETTERS, self.permutation(code)))

    def decipher(self, text: str, code: str) -> str:
        if code == self.base_lang:
            return text
        d = self.derived_lang(code)
        plain = text.translate(str.maketrans(self.permutation(code), LETTERS))
        words = plain.split(" ")
        if d.order == "reverse":
            words.reverse()
        return " ".join(words)

    def translate(self, text: str, src: str, tgt: str) -> str:
        return self.encipher(self.decipher(text, src), tgt)

    def capacity(self) -> int:
        w = len(self.words)
        return sum(w ** k for k in range(self.min_words, self.max_words + 1))

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "CipherSpec":
        derived = tuple(DerivedLang(**d) for d in data["derived"])
        return cls(data["base_lang"], derived, tuple(data["words"]), data["min_words"],
                   data["max_words"], data.get("zipf", 1.0))


DESK_ALPHABET = "abcdef"


def default_cipher_spec(seed: int = 0, num_words: int = 200, word_len=(2, 3), sentence_len=(2, 3),
                        alphabet: str = DESK_ALPHABET) -> CipherSpec:
    """Six languages: ``en`` plus five ciphers, two of them with reversed word order.

    Base words use a six-letter alphabet and sentences are short so that a
    two-layer model can learn the ciphers from about 10k parallel examples.
    Each cipher still permutes all 26 letters.
    """
    rng = np.random.default_rng([seed, 7])
    words = make_words(num_words, rng, word_len[0], word_len[1], alphabet)
    derived = (
        DerivedLang("xa", 101, "identity"),
        DerivedLang("xb", 102, "reverse"),
        DerivedLang("xc", 103, "identity"),
        DerivedLang("xd", 104, "reverse"),
        DerivedLang("xe", 105, "identity"),
    )
    return CipherSpec("en", derived, words, sentence_len[0], sentence_len[1])


@dataclass(frozen=True)
class CorpusSizes:
    mono: dict = field(default_factory=lambda: {"en": 4000, "xa": 3000, "xb": 2000,
                                                "xc": 1500, "xd": 1000, "xe": 600})
    # per derived language; each contributes base->derived and derived->base pairs
    parallel: dict = field(default_factory=lambda: {"xa": 1500, "xb": 1200, "xc": 900,
                                                    "xd": 600, "xe": 400})
    task_train: int = 4000  # per source language of the downstream task
    task_val: int = 20
    task_test: int = 100


@dataclass
class CipherCorpus:
    spec: CipherSpec
    mono: list[Document]
    parallel: list[ParallelPair]
    task_train: list[ParallelPair]
    task_val: list[ParallelPair]
    task_test: list[ParallelPair]
    paths: dict = field(default_factory=dict)

    FILES = {"mono": "mono.tsv", "parallel": "parallel.tsv", "task_train": "task_train.tsv",
             "task_val": "task_val.tsv", "task_test": "task_test.tsv", "spec": "cipher.json"}

    def write(self, out_dir) -> dict:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        write_monolingual(d / self.FILES["mono"], self.mono)
        for name in ("parallel", "task_train", "task_val", "task_test"):
            write_parallel(d / self.FILES[name], getattr(self, name))
        with open(d / self.FILES["spec"], "w", encoding="utf-8") as f:
            json.dump(self.spec.to_json(), f, indent=1)
        self.paths = {k: d / v for k, v in self.FILES.items()}
        return self.paths

    @classmethod
    def read(cls, in_dir) -> "CipherCorpus":
        d = Path(in_dir)
        with open(d / cls.FILES["spec"], encoding="utf-8") as f:
            spec = CipherSpec.from_json(json.load(f))
        langs = spec.langs
        corpus = cls(spec,
                     list(load_monolingual(d / cls.FILES["mono"], langs)),
                     *(list(load_parallel(d / cls.FILES[n], langs))
                       for n in ("parallel", "task_train", "task_val", "task_test")))
        corpus.paths = {k: d / v for k, v in cls.FILES.items()}
        return corpus


def _sentences(spec: CipherSpec, n: int, rng: np.random.Generator) -> list[str]:
    cap = spec.capacity()
    if n > cap:
        raise ValueError(f"requested {n} unique sentences but the word list only allows {cap}")
    if 2 * n > cap:
        everything = [" ".join(ws) for k in range(spec.min_words, spec.max_words + 1)
                      for ws in itertools.product(spec.words, repeat=k)]
        return [everything[i] for i in rng.choice(len(everything), size=n, replace=False)]
    ranks = np.arange(1, len(spec.words) + 1, dtype=np.float64)
    weights = ranks ** -spec.zipf
    weights /= weights.sum()
    out: list[str] = []
    seen = set()
    while len(out) < n:
        k = int(rng.integers(spec.min_words, spec.max_words + 1))
        idx = rng.choice(len(spec.words), size=k, p=weights)
        s = " ".join(spec.words[i] for i in idx)
        if s not in seen:
            seen.add(s)
            out.append(s)
    return out


def gen_cipher_corpus(spec: CipherSpec, sizes: CorpusSizes = CorpusSizes(), rng=0,
                      out_dir=None) -> CipherCorpus:
    """Build monolingual, parallel and downstream-task splits from disjoint base sentences.

    The downstream task is translation from every derived language into the
    base language. Task validation and test sentences never occur anywhere
    else in the corpus.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    derived = [d.code for d in spec.derived]
    unknown = set(sizes.mono) - set(spec.langs) | set(sizes.parallel) - set(derived)
    if unknown:
        raise ValueError(f"sizes mention unknown languages: {sorted(unknown)}")
    n_task = sizes.task_train + sizes.task_val + sizes.task_test
    needed = (sum(sizes.mono.values()) + 2 * sum(sizes.parallel.values()) + n_task * len(derived))
    pool = iter(_sentences(spec, needed, rng))

    def take(n):
        return [next(pool) for _ in range(n)]

    mono = []
    for lang in spec.langs:
        for s in take(sizes.mono.get(lang, 0)):
            mono.append(Document(lang, spec.encipher(s, lang)))
    parallel = []
    base = spec.base_lang
    for code in derived:
        n = sizes.parallel.get(code, 0)
        for s in take(n):
            parallel.append(ParallelPair(base, code, s, spec.encipher(s, code)))
        for s in take(n):
            parallel.append(ParallelPair(code, base, spec.encipher(s, code), s))
    splits: dict[str, list[ParallelPair]] = {"task_train": [], "task_val": [], "task_test": []}
    for code in derived:
        for name, n in (("task_train", sizes.task_train), ("task_val", sizes.task_val),
                        ("task_test", sizes.task_test)):
            splits[name].extend(ParallelPair(code, base, spec.encipher(s, code), s) for s in take(n))
    corpus = CipherCorpus(spec, mono, parallel, **splits)
    if out_dir is not None:
        corpus.write(out_dir)
    return corpus


def rule_based_translate(spec: CipherSpec, pairs: Sequence[ParallelPair]) -> list[str]:
    """Reference translations computed from the stored permutations."""
    return [spec.translate(p.src_text, p.src_lang, p.tgt_lang) for p in pairs]
