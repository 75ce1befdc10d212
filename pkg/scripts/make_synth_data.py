"""Emit raw pronunciation TSVs for the synthetic language family.

Writes one file per (language, source) into --out-dir in the shape the
ingest command expects: `<tag>.tsv` or `<tag>__<source>.tsv`, one
word<TAB>pronunciation pair per line. alpha gets two sources whose
entries overlap, with the web source carrying a glottal-stop variant,
so merge priority and variant accumulation have something to chew on.
"""

import argparse
import os

from byteg2p.synth import (
    ALPHA_MAP,
    BRAVO_MAP,
    DELTA_MAP,
    OMEGA_MAP,
    TRANSPARENT_MAP,
    SynthSpec,
    apply_mapping,
    make_lexicon,
)


def write_tsv(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for word, pron in rows:
            f.write(f"{word}\t{pron}\n")
    print(f"wrote {len(rows):5d} entries -> {path}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--words", type=int, default=1200, help="words per language")
    args = ap.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)

    specs = {
        "alpha": ALPHA_MAP,
        "bravo": BRAVO_MAP,
        "delta": DELTA_MAP,
        "omega": OMEGA_MAP,
        "lucid": TRANSPARENT_MAP,
    }
    for offset, (tag, mapping) in enumerate(specs.items()):
        lex = make_lexicon(
            SynthSpec(tag=tag, mapping=mapping, n_words=args.words, seed=args.seed + offset)
        )
        rows = [(e.word, p) for e in lex.entries for p in e.pronunciations]
        if tag == "alpha":
            write_tsv(os.path.join(args.out_dir, "alpha__books.tsv"), rows)
            # overlapping second source: first tenth again, glottalized
            web = [(w, f"{p} ʔ") for w, p in rows[: len(rows) // 10]]
            write_tsv(os.path.join(args.out_dir, "alpha__web.tsv"), web)
        else:
            write_tsv(os.path.join(args.out_dir, f"{tag}.tsv"), rows)

    sample = make_lexicon(SynthSpec(tag="alpha", mapping=ALPHA_MAP, n_words=1, seed=args.seed))
    word = sample.entries[0].word
    print(f"example: {word!r} -> {apply_mapping(word, ALPHA_MAP)!r}")


if __name__ == "__main__":
    main()
