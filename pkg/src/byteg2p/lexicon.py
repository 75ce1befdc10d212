"""Pronunciation dictionary parsing, merging, filtering, and splitting.

On-disk format is TSV: one ``word<TAB>pronunciation`` line per
pronunciation variant, UTF-8, LF line endings, no header. A word with
several pronunciations occupies several lines but one LexiconEntry.
"""

from __future__ import annotations

import random
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .codec import LanguageTag
from .errors import FormatError, InsufficientDataError, InvalidInputError


@dataclass(frozen=True)
class LexiconEntry:
    """One word and its pronunciation variants (distinct, order-preserving)."""

    language: LanguageTag
    word: str
    pronunciations: tuple[str, ...]

    def __post_init__(self):
        if not self.word or "\t" in self.word or "\n" in self.word:
            raise InvalidInputError(f"bad word {self.word!r}")
        if not self.pronunciations or any(not p for p in self.pronunciations):
            raise InvalidInputError(f"word {self.word!r} has empty pronunciations")
        if len(set(self.pronunciations)) != len(self.pronunciations):
            raise InvalidInputError(f"word {self.word!r} has duplicate pronunciations")


@dataclass
class Lexicon:
    """All entries of one language; words are unique across entries."""

    language: LanguageTag
    entries: list[LexiconEntry]

    def __post_init__(self):
        words = [e.word for e in self.entries]
        if len(set(words)) != len(words):
            raise InvalidInputError(f"duplicate words in {self.language} lexicon")
        for e in self.entries:
            if e.language != self.language:
                raise InvalidInputError(
                    f"entry {e.word!r} tagged {e.language}, lexicon is {self.language}"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def words(self) -> list[str]:
        return [e.word for e in self.entries]


@dataclass(frozen=True)
class SplitSpec:
    """Sizes and seed for a train/dev/test partition."""

    dev_size: int
    test_size: int
    seed: int

    def __post_init__(self):
        if self.dev_size < 0 or self.test_size < 0:
            raise InvalidInputError("split sizes must be non-negative")


def parse_dictionary(
    lines: Iterable[str], language: LanguageTag
) -> tuple[Lexicon, list[int]]:
    """Parse TSV lines into a lexicon.

    Blank lines are skipped. A line without exactly one tab, or with an
    empty word or pronunciation, is recorded as malformed (1-based line
    number) and skipped. More than 10% malformed lines fails the parse.
    Repeated identical lines collapse; distinct pronunciations of one
    word accumulate in first-seen order.
    """
    entries: dict[str, list[str]] = {}
    malformed: list[int] = []
    n_content = 0
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        n_content += 1
        parts = line.split("\t")
        if len(parts) != 2:
            malformed.append(lineno)
            continue
        word, pron = parts[0].strip(), parts[1].strip()
        if not word or not pron:
            malformed.append(lineno)
            continue
        prons = entries.setdefault(word, [])
        if pron not in prons:
            prons.append(pron)
    if n_content and len(malformed) > 0.1 * n_content:
        raise FormatError(
            f"{len(malformed)}/{n_content} lines malformed (>10%) in {language} input"
        )
    if not entries:
        raise FormatError(f"no entries parsed for {language}")
    lex = Lexicon(
        language,
        [LexiconEntry(language, w, tuple(ps)) for w, ps in entries.items()],
    )
    return lex, malformed


def serialize(lexicon: Lexicon) -> str:
    """Inverse of parse: one TSV line per pronunciation, entry order kept."""
    out = []
    for e in lexicon.entries:
        for p in e.pronunciations:
            out.append(f"{e.word}\t{p}\n")
    return "".join(out)


def merge(sources: Mapping[str, Lexicon], priority: Sequence[str] = ()) -> Lexicon:
    """Merge same-language lexicons, union-by-word.

    Within a word, pronunciations from all sources are kept and deduped;
    ordering is by source priority (names in ``priority`` first, in that
    order, then remaining sources in mapping order), then by occurrence
    order inside a source. Entries come out sorted by word.
    """
    if not sources:
        raise InvalidInputError("nothing to merge")
    langs = {lex.language for lex in sources.values()}
    if len(langs) != 1:
        raise InvalidInputError(f"mixed languages in merge: {sorted(map(str, langs))}")
    language = langs.pop()
    unknown = [name for name in priority if name not in sources]
    if unknown:
        raise InvalidInputError(f"priority names not among sources: {unknown}")
    ordered = list(priority) + [n for n in sources if n not in priority]

    merged: dict[str, list[str]] = {}
    for name in ordered:
        for entry in sources[name].entries:
            prons = merged.setdefault(entry.word, [])
            for p in entry.pronunciations:
                if p not in prons:
                    prons.append(p)
    return Lexicon(
        language,
        [LexiconEntry(language, w, tuple(merged[w])) for w in sorted(merged)],
    )


def _is_clean_word(word: str) -> bool:
    # Letters, combining marks, and modifier letters only; anything with
    # digits, punctuation or symbols goes.
    return all(unicodedata.category(ch)[0] in ("L", "M") for ch in word)


def filter_wordlist(
    words: Sequence[tuple[str, int]], threshold: int
) -> list[str]:
    """Keep words at/above the frequency threshold whose characters are all
    letters, combining marks, or modifier letters."""
    if any(freq < 0 for _, freq in words):
        raise InvalidInputError("negative frequency in wordlist")
    return [w for w, freq in words if freq >= threshold and w and _is_clean_word(w)]


def partition(
    lexicon: Lexicon, spec: SplitSpec
) -> tuple[Lexicon, Lexicon, Lexicon]:
    """Seeded word-level split into (train, dev, test).

    All pronunciations of a word travel together. The shuffle is a
    uniform Fisher-Yates over words driven by ``spec.seed``; dev takes
    the first ``dev_size`` shuffled words, test the next ``test_size``,
    train the remainder. Each split preserves the input entry order.
    """
    need = spec.dev_size + spec.test_size + 1
    if len(lexicon) < need:
        raise InsufficientDataError(
            f"{lexicon.language}: {len(lexicon)} entries, need at least {need} "
            f"(short by {need - len(lexicon)})"
        )
    idx = list(range(len(lexicon.entries)))
    random.Random(spec.seed).shuffle(idx)
    dev_idx = set(idx[: spec.dev_size])
    test_idx = set(idx[spec.dev_size : spec.dev_size + spec.test_size])

    train, dev, test = [], [], []
    for i, entry in enumerate(lexicon.entries):
        if i in dev_idx:
            dev.append(entry)
        elif i in test_idx:
            test.append(entry)
        else:
            train.append(entry)
    lang = lexicon.language
    return Lexicon(lang, train), Lexicon(lang, dev), Lexicon(lang, test)


def eligible_languages(
    lexicons: Sequence[Lexicon], min_entries: int
) -> list[LanguageTag]:
    """Tags of lexicons with strictly more than ``min_entries`` words, sorted."""
    tags = [lex.language for lex in lexicons if len(lex) > min_entries]
    return sorted(tags, key=lambda t: t.code)
