"""Byte-level vocabulary with reserved control, sentinel and language-code ids.

Layout (a pure function of the language codes and the sentinel count)::

    0            PAD
    1            EOS
    2            SEP
    3 ..         sentinels S_0 .. S_{k-1}
    3 + k ..     language codes, in the given order
    byte_offset  raw byte 0 (256 ids follow)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

PAD = 0
EOS = 1
SEP = 2
NUM_CONTROL = 3
NUM_BYTES = 256

DEFAULT_SENTINELS = 100


@dataclass(frozen=True)
class Vocab:
    lang_codes: tuple[str, ...]
    sentinel_count: int = DEFAULT_SENTINELS
    _lang_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lang_codes", tuple(self.lang_codes))
        if self.sentinel_count < 1:
            raise ValueError(f"sentinel_count must be >= 1, got {self.sentinel_count}")
        if not self.lang_codes:
            raise ValueError("at least one language code is required")
        seen = set()
        for code in self.lang_codes:
            if code in seen:
                raise ValueError(f"duplicate language code {code!r}")
            seen.add(code)
        index = {code: self.lang_offset + i for i, code in enumerate(self.lang_codes)}
        object.__setattr__(self, "_lang_index", index)

    @property
    def sentinel_offset(self) -> int:
        return NUM_CONTROL

    @property
    def lang_offset(self) -> int:
        return NUM_CONTROL + self.sentinel_count

    @property
    def byte_offset(self) -> int:
        return self.lang_offset + len(self.lang_codes)

    @property
    def size(self) -> int:
        return self.byte_offset + NUM_BYTES

    def sentinel(self, i: int) -> int:
        if not 0 <= i < self.sentinel_count:
            raise IndexError(f"sentinel index {i} out of range [0, {self.sentinel_count})")
        return self.sentinel_offset + i

    def lang_code(self, code: str) -> int:
        try:
            return self._lang_index[code]
        except KeyError:
            raise KeyError(f"unknown language code {code!r}") from None

    def is_sentinel(self, tok: int) -> bool:
        return self.sentinel_offset <= tok < self.lang_offset

    def sentinel_index(self, tok: int) -> int:
        return tok - self.sentinel_offset

    def is_lang_code(self, tok: int) -> bool:
        return self.lang_offset <= tok < self.byte_offset

    def is_byte(self, tok: int) -> bool:
        return self.byte_offset <= tok < self.size

    def is_special(self, tok: int) -> bool:
        return 0 <= tok < self.byte_offset

    def token_name(self, tok: int) -> str:
        """Bracketed surface form of a non-byte id, e.g. ``<S_0>`` or ``<2de>``."""
        if tok == PAD:
            return "<pad>"
        if tok == EOS:
            return "<eos>"
        if tok == SEP:
            return "<sep>"
        if self.is_sentinel(tok):
            return f"<S_{self.sentinel_index(tok)}>"
        if self.is_lang_code(tok):
            return f"<2{self.lang_codes[tok - self.lang_offset]}>"
        raise ValueError(f"token id {tok} is not a special token")

    def layout(self) -> dict:
        return {"lang_codes": list(self.lang_codes), "sentinel_count": self.sentinel_count}


def build_vocab(lang_codes: Iterable[str], sentinel_count: int = DEFAULT_SENTINELS) -> Vocab:
    return Vocab(tuple(lang_codes), sentinel_count)


def encode(v: Vocab, text: str) -> list[int]:
    off = v.byte_offset
    return [off + b for b in text.encode("utf-8")]


def decode(v: Vocab, ids: Sequence[int]) -> str:
    """Render ids as text; runs of byte tokens are UTF-8 decoded, specials bracketed."""
    parts: list[str] = []
    buf = bytearray()
    off = v.byte_offset
    for tok in ids:
        tok = int(tok)
        if not 0 <= tok < v.size:
            raise ValueError(f"token id {tok} out of range for vocab of size {v.size}")
        if tok >= off:
            buf.append(tok - off)
            continue
        if buf:
            parts.append(buf.decode("utf-8", errors="replace"))
            buf.clear()
        parts.append(v.token_name(tok))
    if buf:
        parts.append(buf.decode("utf-8", errors="replace"))
    return "".join(parts)


def check_ids(v: Vocab, ids: Sequence[int]) -> None:
    for tok in ids:
        if not 0 <= int(tok) < v.size:
            raise ValueError(f"token id {tok} out of range for vocab of size {v.size}")
