"""Command line interface.

Six subcommands cover the pipeline end to end: ingest merges raw
dictionaries into one canonical TSV per language, partition cuts
seeded train/dev/test splits, train and finetune produce checkpoints,
predict pronounces words, eval scores a checkpoint against splits.

Exit codes are stable: 0 success, 2 configuration problems, 3 data or
checkpoint problems, 4 numeric breakdowns, 1 anything else.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys

from .checkpoint import load_model, save_model
from .codec import LanguageTag, UNK_TAG, encode
from .config import Paths, RunConfig, load_run_config, materialize
from .decoding import DecodeConfig, batch_decode
from .errors import (
    ConfigError,
    FormatError,
    G2PError,
    IncompatibleConfigError,
    InsufficientDataError,
    InvalidInputError,
)
from .lexicon import (
    Lexicon,
    SplitSpec,
    merge,
    parse_dictionary,
    partition,
    serialize,
)
from .metrics import evaluate
from .training import TrainConfig, finetune, train

INGEST_MANIFEST = "ingest_manifest.json"
SPLIT_MANIFEST = "split_manifest.json"

STANDARD_DEV, STANDARD_TEST, STANDARD_MIN = 50, 500, 3000
LOW_RESOURCE_DEV, LOW_RESOURCE_TEST, LOW_RESOURCE_MIN = 50, 200, 250


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _comma_list(text: str) -> list[str]:
    return [t for t in text.split(",") if t]


# -- ingest -------------------------------------------------------------------


def _scan_raw_dir(data_dir: str):
    """Collect raw lexicons grouped by language tag.

    Files are ``<tag>.tsv`` or ``<tag>__<source>.tsv``. Returns, per
    tag, a source-name keyed mapping of parsed lexicons plus the
    malformed-line count dropped from each language's files.
    """
    try:
        names = sorted(os.listdir(data_dir))
    except OSError as exc:
        raise InvalidInputError(f"cannot list {data_dir}: {exc}") from exc
    grouped: dict[str, dict[str, Lexicon]] = {}
    dropped: dict[str, int] = {}
    for name in names:
        if not name.endswith(".tsv"):
            continue
        stem = name[: -len(".tsv")]
        tag_text, _, source = stem.partition("__")
        source = source or "default"
        tag = LanguageTag(tag_text)
        path = os.path.join(data_dir, name)
        try:
            with open(path, "r", encoding="utf-8") as f:
                lex, malformed = parse_dictionary(f, tag)
        except FormatError as exc:
            raise FormatError(f"{name}: {exc}") from exc
        except OSError as exc:
            raise InvalidInputError(f"cannot read {path}: {exc}") from exc
        if malformed:
            _warn(f"{name}: dropped {len(malformed)} malformed lines")
        if source in grouped.get(tag.code, {}):
            raise InvalidInputError(f"{name}: duplicate source {source!r} for {tag}")
        grouped.setdefault(tag.code, {})[source] = lex
        dropped[tag.code] = dropped.get(tag.code, 0) + len(malformed)
    if not grouped:
        raise InvalidInputError(f"no .tsv dictionaries found in {data_dir}")
    return grouped, dropped


def cmd_ingest(args) -> int:
    grouped, dropped = _scan_raw_dir(args.data_dir)
    if args.languages:
        missing = [t for t in args.languages if t not in grouped]
        if missing:
            raise InvalidInputError(f"no dictionaries for languages: {missing}")
        grouped = {t: grouped[t] for t in args.languages}
    priority = args.priority or []
    os.makedirs(args.out_dir, exist_ok=True)
    manifest: dict = {"format": "g2p-ingest/1", "languages": {}}
    for tag in sorted(grouped):
        sources = grouped[tag]
        known = [p for p in priority if p in sources]
        merged = merge(sources, priority=known)
        text = serialize(merged)
        _atomic_write(os.path.join(args.out_dir, f"{tag}.tsv"), text)
        manifest["languages"][tag] = {
            "entries": len(merged),
            "pronunciations": sum(len(e.pronunciations) for e in merged.entries),
            "malformed": dropped.get(tag, 0),
            "sha256": _digest(text),
        }
    _atomic_write(os.path.join(args.out_dir, INGEST_MANIFEST), _json_text(manifest))
    total = sum(v["entries"] for v in manifest["languages"].values())
    print(f"ingested {len(grouped)} languages, {total} entries into {args.out_dir}")
    return 0


# -- partition ------------------------------------------------------------------


def _read_canonical(data_dir: str, tag: str) -> Lexicon:
    path = os.path.join(data_dir, f"{tag}.tsv")
    try:
        with open(path, "r", encoding="utf-8") as f:
            lex, malformed = parse_dictionary(f, LanguageTag(tag))
    except OSError as exc:
        raise InvalidInputError(f"cannot read lexicon {path}: {exc}") from exc
    if malformed:
        raise FormatError(f"{path}: malformed lines {malformed}")
    return lex


def cmd_partition(args) -> int:
    dev_size = args.dev if args.dev is not None else (
        LOW_RESOURCE_DEV if args.low_resource else STANDARD_DEV
    )
    test_size = args.test if args.test is not None else (
        LOW_RESOURCE_TEST if args.low_resource else STANDARD_TEST
    )
    min_entries = args.min_entries if args.min_entries is not None else (
        LOW_RESOURCE_MIN if args.low_resource else STANDARD_MIN
    )
    manifest_path = os.path.join(args.data_dir, INGEST_MANIFEST)
    if not os.path.exists(manifest_path):
        raise InvalidInputError(
            f"no ingest manifest at {manifest_path}; run `g2p ingest` first"
        )
    with open(manifest_path, "r", encoding="utf-8") as f:
        ingest_manifest = json.load(f)
    available = sorted(ingest_manifest.get("languages", {}))
    if not available:
        raise InvalidInputError(f"{manifest_path} lists no languages")
    if args.languages:
        missing = [t for t in args.languages if t not in available]
        if missing:
            raise InvalidInputError(f"languages not in ingest manifest: {missing}")
        available = sorted(args.languages)

    lexicons = {tag: _read_canonical(args.data_dir, tag) for tag in available}
    eligible = [t for t in available if len(lexicons[t]) > min_entries]
    ineligible = {t: len(lexicons[t]) for t in available if t not in eligible}
    if ineligible:
        listing = ", ".join(f"{t} ({n})" for t, n in sorted(ineligible.items()))
        _warn(f"ineligible languages (need more than {min_entries} entries): {listing}")
    if not eligible:
        raise InsufficientDataError(
            f"no language has more than {min_entries} entries"
        )

    os.makedirs(args.out_dir, exist_ok=True)
    spec = SplitSpec(dev_size=dev_size, test_size=test_size, seed=args.seed)
    manifest: dict = {
        "format": "g2p-splits/1",
        "seed": args.seed,
        "dev_size": dev_size,
        "test_size": test_size,
        "min_entries": min_entries,
        "low_resource": bool(args.low_resource),
        "languages": {},
        "ineligible": ineligible,
    }
    for tag in eligible:
        splits = dict(zip(("train", "dev", "test"), partition(lexicons[tag], spec)))
        os.makedirs(os.path.join(args.out_dir, tag), exist_ok=True)
        manifest["languages"][tag] = {}
        for split_name, lex in splits.items():
            text = serialize(lex)
            rel = f"{tag}/{split_name}.tsv"
            _atomic_write(os.path.join(args.out_dir, rel), text)
            manifest["languages"][tag][split_name] = {
                "path": rel,
                "words": len(lex),
                "sha256": _digest(text),
            }
    _atomic_write(os.path.join(args.out_dir, SPLIT_MANIFEST), _json_text(manifest))
    print(
        f"partitioned {len(eligible)} languages "
        f"(dev {dev_size}, test {test_size}) into {args.out_dir}"
    )
    return 0


# -- split loading ----------------------------------------------------------


def _load_split_manifest(splits: str) -> tuple[dict, str]:
    path = os.path.join(splits, SPLIT_MANIFEST) if os.path.isdir(splits) else splits
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except OSError as exc:
        raise InvalidInputError(f"cannot read split manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(manifest.get("languages"), dict) or not manifest["languages"]:
        raise InvalidInputError(f"{path} lists no languages")
    return manifest, os.path.dirname(path)


def _read_split(manifest: dict, base_dir: str, tag: str, split: str) -> Lexicon:
    try:
        rel = manifest["languages"][tag][split]["path"]
    except KeyError:
        raise InvalidInputError(f"manifest has no {split} split for {tag!r}") from None
    path = os.path.join(base_dir, rel)
    try:
        with open(path, "r", encoding="utf-8") as f:
            lex, malformed = parse_dictionary(f, LanguageTag(tag))
    except OSError as exc:
        raise InvalidInputError(f"cannot read split {path}: {exc}") from exc
    if malformed:
        raise FormatError(f"{path}: malformed lines {malformed}")
    return lex


def _select_languages(manifest: dict, requested: list[str] | None) -> list[str]:
    available = sorted(manifest["languages"])
    if not requested:
        return available
    missing = [t for t in requested if t not in available]
    if missing:
        raise InvalidInputError(f"languages not in split manifest: {missing}")
    return sorted(requested)


# -- train / finetune --------------------------------------------------------


def _resolve_run(args, *, need_checkpoint: bool = False) -> RunConfig:
    """Merge the config file with command-line overrides."""
    run = load_run_config(args.config)
    splits = args.splits or run.paths.split_manifest
    if splits is None:
        raise ConfigError("no splits given: pass --splits or set paths.split_manifest")
    out_dir = args.out_dir or run.paths.out_dir
    if out_dir is None:
        raise ConfigError("no output dir given: pass --out-dir or set paths.out_dir")
    checkpoint_in = getattr(args, "checkpoint", None) or run.paths.checkpoint_in
    if need_checkpoint and checkpoint_in is None:
        raise ConfigError(
            "no checkpoint given: pass --checkpoint or set paths.checkpoint_in"
        )
    updates = {}
    for field in ("seed", "epochs", "checkpoint_every"):
        value = getattr(args, field, None)
        if value is not None:
            updates[field] = value
    if args.languages:
        updates["language_filter"] = tuple(sorted(args.languages))
    train_cfg = dataclasses.replace(run.train, **updates) if updates else run.train
    paths = Paths(
        data_dir=run.paths.data_dir,
        split_manifest=splits,
        checkpoint_in=checkpoint_in,
        out_dir=out_dir,
    )
    return dataclasses.replace(run, train=train_cfg, paths=paths)


def _write_train_outputs(out_dir: str, model, run: RunConfig, report, langs) -> None:
    save_model(
        os.path.join(out_dir, "model.cg2p"),
        model,
        step=report.steps,
        train_config=run.train.to_dict(),
    )
    payload = {
        "seed": run.train.seed,
        "languages": langs,
        "config": run.to_dict(),
        "report": report.to_dict(),
    }
    _atomic_write(os.path.join(out_dir, "report.json"), _json_text(payload))


def _summary_line(report) -> str:
    parts = [f"{report.steps} steps", f"final loss {report.final_loss:.4f}"]
    if report.selected_dev_per is not None:
        parts.append(
            f"best dev PER {report.selected_dev_per:.2f} at epoch {report.selected_epoch}"
        )
    return ", ".join(parts)


def cmd_train(args) -> int:
    run = _resolve_run(args)
    manifest, base_dir = _load_split_manifest(run.paths.split_manifest)
    langs = _select_languages(manifest, list(run.train.language_filter or ()))
    run = materialize(run, n_languages=len(langs))
    if len(langs) == 1 and run.train.unk_mask_rate == 0:
        _warn("single-language run: wildcard tag masking disabled")
    train_lexicons = [_read_split(manifest, base_dir, t, "train") for t in langs]
    dev_lexicons = [_read_split(manifest, base_dir, t, "dev") for t in langs]
    out_dir = run.paths.out_dir
    os.makedirs(out_dir, exist_ok=True)
    keep_epochs = bool(run.train.checkpoint_every) or args.resume
    model, report = train(
        run.model,
        run.train,
        train_lexicons,
        dev_lexicons,
        checkpoint_dir=out_dir if keep_epochs else None,
        resume=args.resume,
        log=lambda line: print(line, file=sys.stderr),
    )
    _write_train_outputs(out_dir, model, run, report, langs)
    print(f"trained on {', '.join(langs)}: {_summary_line(report)}")
    return 0


def _config_mismatch(expected, actual) -> str | None:
    for field in dataclasses.fields(expected):
        if getattr(expected, field.name) != getattr(actual, field.name):
            return field.name
    return None


def cmd_finetune(args) -> int:
    run = _resolve_run(args, need_checkpoint=True)
    pretrained, header = load_model(run.paths.checkpoint_in)
    if args.config is not None:
        differing = _config_mismatch(pretrained.config, run.model)
        if differing is not None:
            raise IncompatibleConfigError(
                f"config model section disagrees with the checkpoint "
                f"on {differing!r}; omit the model section or make them agree"
            )
    run = dataclasses.replace(run, model=pretrained.config)
    manifest, base_dir = _load_split_manifest(run.paths.split_manifest)
    langs = _select_languages(manifest, list(run.train.language_filter or ()))
    run = materialize(run, n_languages=len(langs))
    train_lexicons = [_read_split(manifest, base_dir, t, "train") for t in langs]
    dev_lexicons = [_read_split(manifest, base_dir, t, "dev") for t in langs]
    out_dir = run.paths.out_dir
    os.makedirs(out_dir, exist_ok=True)
    model, report = finetune(
        pretrained,
        run.train,
        train_lexicons,
        dev_lexicons,
        checkpoint_dir=out_dir if run.train.checkpoint_every else None,
        log=lambda line: print(line, file=sys.stderr),
    )
    _write_train_outputs(out_dir, model, run, report, langs)
    print(f"finetuned on {', '.join(langs)}: {_summary_line(report)}")
    return 0


# -- predict / eval ----------------------------------------------------------


def _checkpoint_used_prefixes(header: dict) -> bool:
    return bool(header.get("train_config", {}).get("use_language_prefixes", True))


def _parse_tag(text: str) -> LanguageTag:
    return UNK_TAG if text == UNK_TAG.code else LanguageTag(text)


def cmd_predict(args) -> int:
    model, header = load_model(args.checkpoint)
    if args.words:
        words = list(args.words)
    elif args.input is not None:
        try:
            with open(args.input, "r", encoding="utf-8") as f:
                words = [line.strip() for line in f if line.strip()]
        except OSError as exc:
            raise InvalidInputError(f"cannot read {args.input}: {exc}") from exc
    else:
        words = [line.strip() for line in sys.stdin if line.strip()]
    if not words:
        return 0
    tag = None
    if args.tag is not None:
        if not _checkpoint_used_prefixes(header):
            raise ConfigError(
                "checkpoint was trained without language prefixes; drop --tag"
            )
        tag = _parse_tag(args.tag)
    elif _checkpoint_used_prefixes(header):
        _warn("checkpoint was trained with language prefixes; consider --tag")
    cfg = DecodeConfig(beam_size=args.beam, max_len=args.max_len)
    results = batch_decode(model, [encode(w, tag) for w in words], cfg)
    n_best = max(1, args.n_best)
    failed = False
    for word, result in zip(words, results):
        if isinstance(result, G2PError):
            _warn(f"{word!r}: {result}")
            failed = True
            continue
        for cand in result[:n_best]:
            print(f"{word}\t{cand.text}\t{cand.log_prob:.4f}")
    return 3 if failed else 0


def cmd_eval(args) -> int:
    model, header = load_model(args.checkpoint)
    manifest, base_dir = _load_split_manifest(args.splits)
    langs = _select_languages(manifest, args.languages)
    lexicons = [_read_split(manifest, base_dir, t, args.split) for t in langs]
    tag_override = _parse_tag(args.tag_override) if args.tag_override else None
    train_sizes = None
    if args.correlate:
        train_sizes = {
            t: manifest["languages"][t]["train"]["words"] for t in langs
        }
    cfg = DecodeConfig(beam_size=args.beam, max_len=args.max_len)
    report = evaluate(
        model,
        lexicons,
        cfg,
        tag_override=tag_override,
        train_sizes=train_sizes,
        use_language_prefixes=_checkpoint_used_prefixes(header),
    )
    text = report.to_text()
    print(text, end="")
    out_dir = args.out_dir or os.path.dirname(args.checkpoint) or "."
    os.makedirs(out_dir, exist_ok=True)
    payload = {
        "checkpoint": args.checkpoint,
        "checkpoint_step": header.get("step"),
        "train_config": header.get("train_config"),
        "split": args.split,
        "split_seed": manifest.get("seed"),
        "languages": langs,
        "tag_override": args.tag_override,
        "decode": {
            "beam_size": cfg.beam_size,
            "max_len": cfg.max_len,
            "length_penalty": cfg.length_penalty,
        },
        "report": report.to_dict(),
    }
    _atomic_write(os.path.join(out_dir, "eval_report.json"), _json_text(payload))
    _atomic_write(os.path.join(out_dir, "eval_report.txt"), text)
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="g2p",
        description="byte-level multilingual grapheme-to-phoneme toolkit",
        epilog=(
            "exit codes: 0 success, 2 configuration error, "
            "3 data or checkpoint error, 4 numeric error, 1 other"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="merge raw dictionaries into canonical TSVs")
    p.add_argument("--data-dir", required=True,
                   help="directory of raw <tag>.tsv or <tag>__<source>.tsv files")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--languages", type=_comma_list, default=None)
    p.add_argument("--priority", type=_comma_list, default=None,
                   help="source names whose pronunciations come first")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("partition", help="cut seeded train/dev/test splits")
    p.add_argument("--data-dir", required=True, help="ingest output directory")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--languages", type=_comma_list, default=None)
    p.add_argument("--dev", type=int, default=None, help="dev words per language")
    p.add_argument("--test", type=int, default=None, help="test words per language")
    p.add_argument("--min-entries", type=int, default=None,
                   help="strict eligibility floor on entry count")
    p.add_argument("--low-resource", action="store_true",
                   help="small-split defaults: dev 50, test 200, floor 250")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_partition)

    for name, helptext in (
        ("train", "train a model on partitioned splits"),
        ("finetune", "continue training a checkpoint on new splits"),
    ):
        p = sub.add_parser(name, help=helptext)
        if name == "finetune":
            p.add_argument("--checkpoint", default=None,
                           help="pretrained model to start from")
        p.add_argument("--splits", default=None,
                       help="split manifest (or its directory)")
        p.add_argument("--out-dir", default=None)
        p.add_argument("--config", default=None, help="JSON run config")
        p.add_argument("--languages", type=_comma_list, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--checkpoint-every", type=int, default=None,
                       help="write an epoch checkpoint every N epochs")
        if name == "train":
            p.add_argument("--resume", action="store_true",
                           help="continue from the newest epoch checkpoint in out-dir")
            p.set_defaults(func=cmd_train)
        else:
            p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("predict", help="pronounce words with a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tag", default=None,
                   help="language tag to condition on (unk for zero-shot)")
    p.add_argument("--input", default=None, help="file of words, one per line")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--n-best", type=int, default=1)
    p.add_argument("words", nargs="*", help="words; stdin lines when omitted")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score a checkpoint on partitioned splits")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--split", choices=("dev", "test"), default="test")
    p.add_argument("--languages", type=_comma_list, default=None)
    p.add_argument("--tag-override", default=None,
                   help="condition every word on this tag instead (unk for zero-shot)")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--correlate", action="store_true",
                   help="rank correlation of train size vs PER across languages")
    p.add_argument("--out-dir", default=None,
                   help="report directory (default: beside the checkpoint)")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except G2PError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
