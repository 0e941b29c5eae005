"""Monolingual and parallel corpora stored as tab-separated UTF-8 files.

Monolingual records are ``lang<TAB>text``; parallel records are
``src_lang<TAB>tgt_lang<TAB>src_text<TAB>tgt_text``. One record per line,
newline (0x0A) terminated. Blank lines are skipped.
"""
from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass
from typing import Collection, Iterable, Iterator, Optional


class CorpusFormatError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True)
class Document:
    lang: str
    text: str


@dataclass(frozen=True)
class ParallelPair:
    src_lang: str
    tgt_lang: str
    src_text: str
    tgt_text: str

    @property
    def key(self) -> tuple[str, str]:
        return (self.src_lang, self.tgt_lang)


@dataclass(frozen=True)
class CorpusStats:
    mono_counts: dict
    pair_counts: dict

    @property
    def mono_total(self) -> int:
        return sum(self.mono_counts.values())

    @property
    def pair_total(self) -> int:
        return sum(self.pair_counts.values())


def _records(path, nfields: int) -> Iterator[tuple[int, list[str]]]:
    with open(path, "rb") as f:
        for lineno, raw in enumerate(f, start=1):
            if raw.endswith(b"\n"):
                raw = raw[:-1]
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise CorpusFormatError(path, lineno, f"invalid UTF-8: {e}") from None
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != nfields:
                raise CorpusFormatError(path, lineno, f"expected {nfields} fields, got {len(fields)}")
            yield lineno, fields


def _check_lang(path, lineno, lang, langs):
    if not lang:
        raise CorpusFormatError(path, lineno, "empty language code")
    if langs is not None and lang not in langs:
        raise CorpusFormatError(path, lineno, f"unknown language {lang!r}")


def load_monolingual(path, langs: Optional[Collection[str]] = None) -> Iterator[Document]:
    for lineno, (lang, text) in _records(path, 2):
        _check_lang(path, lineno, lang, langs)
        if not text.strip():
            raise CorpusFormatError(path, lineno, "empty text")
        yield Document(lang, text)


def load_parallel(path, langs: Optional[Collection[str]] = None) -> Iterator[ParallelPair]:
    for lineno, (src_lang, tgt_lang, src, tgt) in _records(path, 4):
        _check_lang(path, lineno, src_lang, langs)
        _check_lang(path, lineno, tgt_lang, langs)
        if src_lang == tgt_lang:
            raise CorpusFormatError(path, lineno, f"same-language pair {src_lang!r}")
        if not src.strip() or not tgt.strip():
            raise CorpusFormatError(path, lineno, "empty text")
        yield ParallelPair(src_lang, tgt_lang, src, tgt)


def _check_field(value: str, what: str):
    if "\t" in value or "\n" in value:
        raise ValueError(f"{what} contains a tab or newline: {value!r}")


def write_monolingual(path, docs: Iterable[Document]) -> int:
    n = 0
    with open(path, "wb") as f:
        for d in docs:
            _check_field(d.lang, "lang")
            _check_field(d.text, "text")
            f.write(f"{d.lang}\t{d.text}\n".encode("utf-8"))
            n += 1
    return n


def write_parallel(path, pairs: Iterable[ParallelPair]) -> int:
    n = 0
    with open(path, "wb") as f:
        for p in pairs:
            for value, what in ((p.src_lang, "src_lang"), (p.tgt_lang, "tgt_lang"),
                                (p.src_text, "src_text"), (p.tgt_text, "tgt_text")):
                _check_field(value, what)
            f.write(f"{p.src_lang}\t{p.tgt_lang}\t{p.src_text}\t{p.tgt_text}\n".encode("utf-8"))
            n += 1
    return n


def stats_from_items(docs: Iterable[Document] = (), pairs: Iterable[ParallelPair] = ()) -> CorpusStats:
    mono = Counter(d.lang for d in docs)
    par = Counter(p.key for p in pairs)
    return CorpusStats(dict(mono), dict(par))


def corpus_stats(mono_paths: Iterable[os.PathLike] = (), parallel_paths: Iterable[os.PathLike] = ()) -> CorpusStats:
    mono: Counter = Counter()
    par: Counter = Counter()
    for path in mono_paths:
        mono.update(d.lang for d in load_monolingual(path))
    for path in parallel_paths:
        par.update(p.key for p in load_parallel(path))
    return CorpusStats(dict(mono), dict(par))
