"""Synthetic substitution languages for experiments and tests.

Each language is a deterministic grapheme-to-phone mapping; words are
seeded random grapheme strings and pronunciations are the mapped
phones joined with spaces. The predefined mappings are arranged so
that pairs of languages agree on some graphemes and conflict on
others, which is what prefix conditioning and wildcard-tag masking are
supposed to sort out.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .codec import LanguageTag
from .errors import ConfigError, InvalidInputError
from .lexicon import Lexicon, LexiconEntry

# 12 Latin graphemes. bravo conflicts with alpha on a, c, e, g, h, i
# and agrees on b, d, f, j, k, l.
ALPHA_MAP = {
    "a": "ɑ", "b": "b", "c": "k", "d": "d", "e": "ɛ", "f": "f",
    "g": "ɡ", "h": "h", "i": "ɪ", "j": "j", "k": "k", "l": "l",
}
BRAVO_MAP = {
    "a": "æ", "b": "b", "c": "s", "d": "d", "e": "e", "f": "f",
    "g": "ʒ", "h": "x", "i": "i", "j": "j", "k": "k", "l": "l",
}
# delta shares 8 graphemes with alpha and renames 4, a near-neighbor
# for transfer experiments.
DELTA_MAP = {
    "a": "ɑ", "b": "b", "c": "t͡ʃ", "d": "d", "e": "ø", "f": "f",
    "g": "ɡ", "h": "h", "i": "y", "j": "j", "k": "q", "l": "l",
}
# omega: Greek-script graphemes, phones disjoint from every map above.
OMEGA_MAP = {
    "α": "ɸ", "β": "β", "γ": "ɣ", "δ": "ð", "ε": "œ", "ζ": "ʝ",
    "η": "ħ", "θ": "θ", "ι": "ɨ", "κ": "χ", "λ": "ʎ", "μ": "ɱ",
}
# 16 graphemes, one-to-one and conflict-free: an orthography where
# spelling fully determines sound.
TRANSPARENT_MAP = {
    "a": "ɑ", "b": "b", "d": "d", "e": "ɛ", "f": "f", "g": "ɡ",
    "i": "ɪ", "k": "k", "l": "l", "m": "m", "n": "n", "o": "ɔ",
    "p": "p", "r": "r", "s": "s", "t": "t",
}


@dataclass(frozen=True)
class SynthSpec:
    tag: str
    mapping: dict
    n_words: int
    seed: int
    min_len: int = 3
    max_len: int = 8

    def __post_init__(self):
        if not self.mapping:
            raise ConfigError("mapping must be non-empty")
        if self.n_words < 1:
            raise ConfigError("n_words must be positive")
        if not 1 <= self.min_len <= self.max_len:
            raise ConfigError("need 1 <= min_len <= max_len")


def apply_mapping(word: str, mapping: dict) -> str:
    """Pronounce a word: map each grapheme, join phones with spaces."""
    try:
        return " ".join(mapping[ch] for ch in word)
    except KeyError as exc:
        raise InvalidInputError(f"grapheme {exc.args[0]!r} not in mapping") from exc


def make_lexicon(spec: SynthSpec) -> Lexicon:
    """Sample n_words unique words and pronounce them with the mapping."""
    rng = random.Random(spec.seed)
    graphemes = sorted(spec.mapping)
    capacity = sum(len(graphemes) ** n for n in range(spec.min_len, spec.max_len + 1))
    if spec.n_words > capacity:
        raise ConfigError(
            f"cannot draw {spec.n_words} unique words from {capacity} possible"
        )
    seen: set[str] = set()
    words: list[str] = []
    while len(words) < spec.n_words:
        length = rng.randint(spec.min_len, spec.max_len)
        word = "".join(rng.choice(graphemes) for _ in range(length))
        if word not in seen:
            seen.add(word)
            words.append(word)
    tag = LanguageTag(spec.tag)
    entries = [
        LexiconEntry(tag, w, (apply_mapping(w, spec.mapping),)) for w in words
    ]
    return Lexicon(tag, entries)
