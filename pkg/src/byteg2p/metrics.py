"""Phone segmentation, PER/WER scoring, evaluation reports, rank correlation.

PER is Levenshtein edit operations over phone sequences divided by the
reference length, in percent, minimized over reference variants; it is
deliberately never clamped at 100. WER is exact-match failure rate
against any reference variant, compared after segmentation.
"""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass, field
from typing import Sequence

from .codec import LanguageTag, encode
from .errors import (
    G2PError,
    InvalidInputError,
    InvalidReferenceError,
    UndefinedCorrelationError,
)

TIE_BARS = ("͡", "͜")


def segment_phones(ipa: str) -> list[str]:
    """Split an IPA string into phones.

    Space-separated input splits on spaces. Otherwise each base
    character starts a phone and collects its combining marks and
    modifier letters (aspiration, length, palatalization, ...); a tie
    bar joins the two flanking characters into a single phone.
    """
    if not ipa:
        return []
    if " " in ipa:
        return [p for p in ipa.split(" ") if p]
    phones: list[str] = []
    join_next = False
    for ch in ipa:
        cat = unicodedata.category(ch)
        attaches = cat.startswith("M") or cat == "Lm"
        if phones and (attaches or join_next):
            phones[-1] += ch
        else:
            phones.append(ch)
        join_next = ch in TIE_BARS
    return phones


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit insert/delete/substitute costs."""
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        ai = a[i - 1]
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            best = prev[j - 1] + (ai != b[j - 1])
            up = prev[j] + 1
            if up < best:
                best = up
            left = cur[j - 1] + 1
            if left < best:
                best = left
            cur[j] = best
        prev = cur
    return prev[m]


def phone_error_rate(
    hyp: Sequence[str], refs: Sequence[Sequence[str]]
) -> float:
    """Minimum over references of 100 * edit_distance(hyp, ref) / len(ref)."""
    if not refs:
        raise InvalidReferenceError("no reference pronunciations")
    if any(len(r) == 0 for r in refs):
        raise InvalidReferenceError("zero-length reference pronunciation")
    return min(100.0 * edit_distance(hyp, r) / len(r) for r in refs)


def word_error_rate(
    preds: Sequence[str], refs: Sequence[Sequence[str]]
) -> float:
    """Percent of words whose prediction exactly matches no reference.

    Strings are compared as segmented phone sequences, so spacing
    conventions do not affect the outcome.
    """
    if len(preds) != len(refs):
        raise InvalidInputError(
            f"got {len(preds)} predictions for {len(refs)} references"
        )
    if not preds:
        raise InvalidInputError("empty evaluation set")
    if any(not r for r in refs):
        raise InvalidReferenceError("word with no reference pronunciations")
    wrong = 0
    for pred, variants in zip(preds, refs):
        seg = segment_phones(pred)
        if not any(seg == segment_phones(v) for v in variants):
            wrong += 1
    return 100.0 * wrong / len(preds)


def _fractional_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1  # 1-based average rank of the tie run
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson over fractional (tie-averaged) ranks."""
    if len(x) != len(y):
        raise InvalidInputError("length mismatch")
    if len(x) < 2:
        raise UndefinedCorrelationError("need at least 2 points")
    rx, ry = _fractional_ranks(x), _fractional_ranks(y)
    mx = sum(rx) / len(rx)
    my = sum(ry) / len(ry)
    dx = [a - mx for a in rx]
    dy = [b - my for b in ry]
    sxx = sum(a * a for a in dx)
    syy = sum(b * b for b in dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("zero rank variance")
    return sum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)


@dataclass(frozen=True)
class LanguageScore:
    language: str
    word_count: int
    per: float
    wer: float


@dataclass
class EvalReport:
    """Per-language PER/WER rows plus aggregates.

    Within a language PER is micro-averaged (total edit operations over
    total phones of each word's best-matching reference). The headline
    aggregate is the unweighted mean over languages; the all-words micro
    aggregate is carried alongside for comparison.
    """

    rows: list[LanguageScore] = field(default_factory=list)
    aggregate_per: float = 0.0
    aggregate_wer: float = 0.0
    micro_per: float = 0.0
    micro_wer: float = 0.0
    size_per_spearman: float | None = None

    def to_dict(self) -> dict:
        return {
            "averaging": "per-language micro; aggregate is unweighted mean over languages",
            "rows": [
                {
                    "language": r.language,
                    "words": r.word_count,
                    "per": r.per,
                    "wer": r.wer,
                }
                for r in self.rows
            ],
            "aggregate": {"per": self.aggregate_per, "wer": self.aggregate_wer},
            "micro": {"per": self.micro_per, "wer": self.micro_wer},
            "size_per_spearman": self.size_per_spearman,
        }

    def to_text(self) -> str:
        lines = [
            "# per-language micro PER; aggregate = unweighted mean over languages",
            f"{'language':<12} {'words':>6}  PER/WER(%)",
        ]
        for r in self.rows:
            lines.append(f"{r.language:<12} {r.word_count:>6}  {r.per:.1f}/{r.wer:.1f}")
        lines.append(
            f"{'aggregate':<12} {sum(r.word_count for r in self.rows):>6}  "
            f"{self.aggregate_per:.1f}/{self.aggregate_wer:.1f}"
        )
        if self.size_per_spearman is not None:
            lines.append(f"spearman(train size, PER) = {self.size_per_spearman:.2f}")
        return "\n".join(lines) + "\n"


def score_language(
    preds: Sequence[str | G2PError],
    refs: Sequence[Sequence[str]],
) -> tuple[float, float]:
    """Micro PER and WER for one language.

    A failed prediction counts as an empty hypothesis: fully deleted
    reference, word wrong.
    """
    if len(preds) != len(refs):
        raise InvalidInputError("prediction/reference count mismatch")
    total_ops = 0
    total_len = 0
    ok_preds: list[str] = []
    for pred, variants in zip(preds, refs):
        if not variants or any(not v for v in variants):
            raise InvalidReferenceError("missing or empty reference pronunciation")
        hyp = [] if isinstance(pred, G2PError) else segment_phones(pred)
        best = None
        for v in variants:
            ref_seg = segment_phones(v)
            d = edit_distance(hyp, ref_seg)
            ratio = d / len(ref_seg)
            if best is None or ratio < best[0]:
                best = (ratio, d, len(ref_seg))
        total_ops += best[1]
        total_len += best[2]
        ok_preds.append("" if isinstance(pred, G2PError) else pred)
    per = 100.0 * total_ops / total_len
    wer = word_error_rate(ok_preds, refs)
    return per, wer


def evaluate(
    model,
    test_lexicons,
    decode_config=None,
    *,
    tag_override: LanguageTag | None = None,
    train_sizes: dict[str, int] | None = None,
    batch_size: int = 256,
    use_language_prefixes: bool = True,
) -> EvalReport:
    """Beam-decode every test word with its language tag and score PER/WER.

    ``tag_override`` substitutes a fixed conditioning tag (the ``unk``
    wildcard for zero-shot scoring). ``train_sizes`` (tag -> training
    word count) adds the Spearman correlation between size and PER.
    """
    from .decoding import DecodeConfig, batch_decode

    cfg = decode_config or DecodeConfig()
    rows = []
    all_ops = 0.0
    all_len = 0.0
    all_words = 0
    all_wrong = 0.0
    for lex in sorted(test_lexicons, key=lambda l: l.language.code):
        if not lex.entries:
            raise InvalidInputError(f"empty test lexicon for {lex.language}")
        if not use_language_prefixes:
            tag = None
        else:
            tag = tag_override if tag_override is not None else lex.language
        srcs = [encode(e.word, tag) for e in lex.entries]
        preds: list[str | G2PError] = []
        for start in range(0, len(srcs), batch_size):
            for item in batch_decode(model, srcs[start : start + batch_size], cfg):
                if isinstance(item, G2PError):
                    preds.append(item)
                else:
                    preds.append(item[0].text)
        refs = [e.pronunciations for e in lex.entries]
        per, wer = score_language(preds, refs)
        rows.append(LanguageScore(lex.language.code, len(lex.entries), per, wer))
        all_words += len(lex.entries)
        all_wrong += wer * len(lex.entries) / 100.0
        for pred, variants in zip(preds, refs):
            hyp = [] if isinstance(pred, G2PError) else segment_phones(pred)
            best = min(
                (edit_distance(hyp, segment_phones(v)) / len(segment_phones(v)),
                 edit_distance(hyp, segment_phones(v)), len(segment_phones(v)))
                for v in variants
            )
            all_ops += best[1]
            all_len += best[2]

    report = EvalReport(rows=rows)
    if rows:
        report.aggregate_per = sum(r.per for r in rows) / len(rows)
        report.aggregate_wer = sum(r.wer for r in rows) / len(rows)
        report.micro_per = 100.0 * all_ops / all_len
        report.micro_wer = 100.0 * all_wrong / all_words
    if train_sizes is not None:
        report.size_per_spearman = spearman_rho(
            [float(train_sizes[r.language]) for r in rows],
            [r.per for r in rows],
        )
    return report
