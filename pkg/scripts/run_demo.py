"""End-to-end demo on synthetic data: ingest, partition, train, predict, eval.

Everything lands under --workdir. Deliberately small so it finishes in
a couple of minutes on one CPU core; pass --epochs 40 or more if you
want respectable error rates rather than a quick smoke run.
"""

import argparse
import json
import os

from byteg2p.cli import main as g2p
from byteg2p.synth import ALPHA_MAP, BRAVO_MAP, SynthSpec, make_lexicon

TINY_MODEL = {
    "d_model": 64,
    "n_heads": 2,
    "d_ff": 128,
    "n_encoder_layers": 2,
    "n_decoder_layers": 2,
    "max_src_len": 64,
    "max_tgt_len": 48,
    "dropout": 0.0,
}


def step(argv):
    print(f"$ g2p {' '.join(argv)}")
    code = g2p(argv)
    if code != 0:
        raise SystemExit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--words", type=int, default=600, help="words per language")
    ap.add_argument("--epochs", type=int, default=12)
    args = ap.parse_args()

    raw = os.path.join(args.workdir, "raw")
    os.makedirs(raw, exist_ok=True)
    for offset, (tag, mapping) in enumerate((("alpha", ALPHA_MAP), ("bravo", BRAVO_MAP))):
        lex = make_lexicon(
            SynthSpec(tag=tag, mapping=mapping, n_words=args.words, seed=args.seed + offset)
        )
        with open(os.path.join(raw, f"{tag}.tsv"), "w", encoding="utf-8") as f:
            for e in lex.entries:
                for p in e.pronunciations:
                    f.write(f"{e.word}\t{p}\n")

    curated = os.path.join(args.workdir, "curated")
    splits = os.path.join(args.workdir, "splits")
    run_dir = os.path.join(args.workdir, "run")
    cfg_path = os.path.join(args.workdir, "run.json")
    with open(cfg_path, "w", encoding="utf-8") as f:
        json.dump(
            {
                "model": TINY_MODEL,
                "train": {
                    "learning_rate": 1e-3,
                    "effective_batch_size": 32,
                    "epochs": args.epochs,
                },
            },
            f,
            indent=2,
        )

    step(["ingest", "--data-dir", raw, "--out-dir", curated])
    step([
        "partition", "--data-dir", curated, "--out-dir", splits,
        "--dev", "30", "--test", "60", "--min-entries", "150",
        "--seed", str(args.seed),
    ])
    step([
        "train", "--splits", splits, "--out-dir", run_dir,
        "--config", cfg_path, "--seed", str(args.seed),
    ])
    checkpoint = os.path.join(run_dir, "model.cg2p")
    sample = make_lexicon(
        SynthSpec(tag="alpha", mapping=ALPHA_MAP, n_words=3, seed=args.seed + 99)
    )
    step(["predict", "--checkpoint", checkpoint, "--tag", "alpha", "--beam", "5",
          *[e.word for e in sample.entries]])
    step(["eval", "--checkpoint", checkpoint, "--splits", splits, "--beam", "5"])
    print(f"artifacts under {args.workdir}: curated/, splits/, run/")


if __name__ == "__main__":
    main()
