"""Byte-level token codec with language-prefix conditioning.

Words are rendered to UTF-8 bytes, optionally preceded by a language
prefix ``<tag>:`` that is itself plain bytes, then mapped to token ids.
Id layout: 0=PAD, 1=EOS, 2=BOS, byte value b at id b+3 (vocab 259).
A reserved wildcard tag ``unk`` stands in for "language unknown" and is
what zero-shot prediction conditions on.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from typing import Sequence

from .errors import InvalidInputError, InvalidTagError

PAD_ID = 0
EOS_ID = 1
BOS_ID = 2
BYTE_OFFSET = 3
VOCAB_SIZE = 256 + BYTE_OFFSET

_TAG_RE = re.compile(r"^[a-z0-9-]{2,16}$")
_PREFIX_RE = re.compile(r"^<([a-z0-9-]{2,16})>:$")


@dataclass(frozen=True)
class LanguageTag:
    """Lowercase language/variety code, e.g. ``eng-us`` or ``spa``."""

    code: str

    def __post_init__(self):
        if not _TAG_RE.match(self.code):
            raise InvalidTagError(
                f"bad language tag {self.code!r}: need 2-16 chars from [a-z0-9-]"
            )

    def prefix(self) -> str:
        """Render as the input prefix ``<code>:``."""
        return f"<{self.code}>:"

    @classmethod
    def from_prefix(cls, text: str) -> "LanguageTag":
        m = _PREFIX_RE.match(text)
        if m is None:
            raise InvalidTagError(f"not a language prefix: {text!r}")
        return cls(m.group(1))

    def __str__(self) -> str:
        return self.code


UNK_TAG = LanguageTag("unk")


def encode(word: str, tag: LanguageTag | None = None) -> list[int]:
    """Encode a word (optionally prefix-conditioned) to token ids ending in EOS."""
    if not word:
        raise InvalidInputError("cannot encode an empty word")
    if "\n" in word or "\t" in word:
        raise InvalidInputError(f"word contains tab/newline: {word!r}")
    if tag is not None and not isinstance(tag, LanguageTag):
        raise InvalidTagError(f"tag must be a LanguageTag, got {type(tag).__name__}")
    text = tag.prefix() + word if tag is not None else word
    return [b + BYTE_OFFSET for b in text.encode("utf-8")] + [EOS_ID]


def decode(ids: Sequence[int]) -> tuple[str, bool]:
    """Map token ids back to a string.

    Strips PAD/EOS/BOS wherever they occur; invalid UTF-8 runs are
    replaced with U+FFFD rather than rejected, since model output may be
    arbitrary bytes. Returns (text, replaced_flag).
    """
    raw = bytearray()
    for i in ids:
        if not 0 <= i < VOCAB_SIZE:
            raise InvalidInputError(f"token id {i} outside [0, {VOCAB_SIZE - 1}]")
        if i >= BYTE_OFFSET:
            raw.append(i - BYTE_OFFSET)
    data = bytes(raw)
    try:
        return data.decode("utf-8"), False
    except UnicodeDecodeError:
        return data.decode("utf-8", errors="replace"), True


def mask_language_tags(
    batch: Sequence[tuple[str, LanguageTag]],
    rate: float,
    rng: random.Random,
) -> list[tuple[str, LanguageTag]]:
    """Replace each entry's tag with ``unk`` independently with probability ``rate``.

    Words and ordering are untouched; masking decisions come solely from
    ``rng``, so a fixed seed reproduces the outcome exactly.
    """
    if not 0.0 <= rate <= 1.0:
        raise InvalidInputError(f"mask rate {rate} outside [0, 1]")
    out = []
    for word, tag in batch:
        if rng.random() < rate:
            out.append((word, UNK_TAG))
        else:
            out.append((word, tag))
    return out
