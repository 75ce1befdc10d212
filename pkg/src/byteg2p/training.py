"""Training: multilingual batching, tag masking, AdamW, dev selection.

Every source of randomness in an epoch (example order, wildcard tag
masking, dropout) is drawn from a stream keyed on (seed, epoch index,
purpose), never from state carried across epochs. Together with
epoch-boundary checkpoints of weights and optimizer moments this makes
a resumed run arithmetically identical to an uninterrupted one.

Gradient accumulation sums per-token loss gradients over micro batches
and divides once by the total target token count, so chunking matches
the full-batch token mean exactly (given a deterministic forward pass,
i.e. dropout 0).

The returned weights are those of the best dev-PER evaluation, ties
resolved to the earliest; dev scoring uses greedy decoding, final test
scoring elsewhere uses beam search.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import time
from dataclasses import dataclass, field

import torch

from .checkpoint import load_model, load_optimizer, save_model, save_optimizer
from .codec import LanguageTag, UNK_TAG, encode, mask_language_tags
from .errors import ConfigError, G2PError, InsufficientDataError, InvalidInputError
from .lexicon import Lexicon
from .metrics import EvalReport, evaluate, score_language
from .model import (
    ByteTransformer,
    ModelConfig,
    cross_entropy_loss,
    init_params,
    make_batch,
)
from .optim import AdamWConfig, AdamWState, adamw_step


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    effective_batch_size: int = 512
    micro_batch_size: int | None = None
    epochs: int = 10
    weight_decay: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    unk_mask_rate: float = 0.15
    seed: int = 0
    eval_every: int = 0
    language_filter: tuple[str, ...] | None = None
    use_language_prefixes: bool = True
    checkpoint_every: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate!r}")
        if not isinstance(self.effective_batch_size, int) or self.effective_batch_size < 1:
            raise ConfigError(
                f"effective_batch_size must be a positive int, got {self.effective_batch_size!r}"
            )
        if self.micro_batch_size is not None:
            if not isinstance(self.micro_batch_size, int) or self.micro_batch_size < 1:
                raise ConfigError(
                    f"micro_batch_size must be a positive int, got {self.micro_batch_size!r}"
                )
            if self.effective_batch_size % self.micro_batch_size != 0:
                raise ConfigError(
                    f"micro_batch_size {self.micro_batch_size} must divide "
                    f"effective_batch_size {self.effective_batch_size}"
                )
        if not isinstance(self.epochs, int) or self.epochs < 0:
            raise ConfigError(f"epochs must be a non-negative int, got {self.epochs!r}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay!r}")
        if not 0.0 <= self.unk_mask_rate <= 1.0:
            raise ConfigError(f"unk_mask_rate must be in [0, 1], got {self.unk_mask_rate!r}")
        if self.eval_every < 0 or self.checkpoint_every < 0:
            raise ConfigError("eval_every and checkpoint_every must be >= 0")
        if self.language_filter is not None:
            object.__setattr__(self, "language_filter", tuple(self.language_filter))
            if not self.language_filter:
                raise ConfigError("language_filter must be None or non-empty")

    def adamw(self) -> AdamWConfig:
        return AdamWConfig(
            lr=self.learning_rate,
            beta1=self.adam_beta1,
            beta2=self.adam_beta2,
            eps=self.adam_eps,
            weight_decay=self.weight_decay,
        )

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "effective_batch_size": self.effective_batch_size,
            "micro_batch_size": self.micro_batch_size,
            "epochs": self.epochs,
            "weight_decay": self.weight_decay,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "unk_mask_rate": self.unk_mask_rate,
            "seed": self.seed,
            "eval_every": self.eval_every,
            "language_filter": list(self.language_filter) if self.language_filter else None,
            "use_language_prefixes": self.use_language_prefixes,
            "checkpoint_every": self.checkpoint_every,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("language_filter") is not None:
            d["language_filter"] = tuple(d["language_filter"])
        return cls(**d)


@dataclass
class TrainReport:
    """History of dev evaluations and which checkpoint was selected.

    The selected entry is the minimum dev PER, earliest step on ties.
    """

    history: list[dict] = field(default_factory=list)
    loss_history: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    selected_step: int | None = None
    selected_epoch: int | None = None
    selected_dev_per: float | None = None
    epochs_run: int = 0
    steps: int = 0
    final_loss: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "history": self.history,
            "loss_history": self.loss_history,
            "epoch_seconds": self.epoch_seconds,
            "selected_step": self.selected_step,
            "selected_epoch": self.selected_epoch,
            "selected_dev_per": self.selected_dev_per,
            "epochs_run": self.epochs_run,
            "steps": self.steps,
            "final_loss": self.final_loss,
        }


def epoch_stream(seed: int, epoch: int, label: str) -> random.Random:
    """Deterministic RNG for one purpose within one epoch."""
    digest = hashlib.blake2b(
        f"{seed}:{epoch}:{label}".encode("utf-8"), digest_size=8
    ).digest()
    return random.Random(int.from_bytes(digest, "big"))


def _filter_lexicons(lexicons, language_filter):
    if language_filter is None:
        return list(lexicons)
    wanted = set(language_filter)
    kept = [lex for lex in lexicons if lex.language.code in wanted]
    missing = wanted - {lex.language.code for lex in kept}
    if missing:
        raise InvalidInputError(f"language_filter names absent languages: {sorted(missing)}")
    return kept


def build_pairs(
    lexicons: list[Lexicon], *, use_prefixes: bool, model_config: ModelConfig
) -> list[tuple[str, LanguageTag | None, str]]:
    """Flatten lexicons into (word, tag, pronunciation) training pairs.

    Every pronunciation variant is an independent example. Order
    follows the language-sorted lexicon list, then entry order, then
    variant order.
    """
    seen_tags = set()
    pairs: list[tuple[str, LanguageTag | None, str]] = []
    for lex in sorted(lexicons, key=lambda l: l.language.code):
        if lex.language.code in seen_tags:
            raise InvalidInputError(f"duplicate training lexicon for {lex.language}")
        seen_tags.add(lex.language.code)
        tag = lex.language if use_prefixes else None
        for entry in lex.entries:
            src = encode(entry.word, tag)
            if len(src) > model_config.max_src_len:
                raise InvalidInputError(
                    f"word {entry.word!r} encodes to {len(src)} tokens, "
                    f"source limit is {model_config.max_src_len}"
                )
            for pron in entry.pronunciations:
                tgt = encode(pron)
                if len(tgt) > model_config.max_tgt_len:
                    raise InvalidInputError(
                        f"pronunciation {pron!r} encodes to {len(tgt)} tokens, "
                        f"target limit is {model_config.max_tgt_len}"
                    )
                pairs.append((entry.word, tag, pron))
    if not pairs:
        raise InsufficientDataError("no training pairs")
    return pairs


def _epoch_batches(pairs, config: TrainConfig, epoch: int):
    """Yield effective-batch lists of (src_ids, tgt_ids), seeded per epoch."""
    order = list(range(len(pairs)))
    epoch_stream(config.seed, epoch, "shuffle").shuffle(order)
    mask_rng = epoch_stream(config.seed, epoch, "mask")
    shuffled = [pairs[i] for i in order]
    if config.use_language_prefixes and config.unk_mask_rate > 0:
        masked = mask_language_tags(
            [(w, t) for w, t, _ in shuffled], config.unk_mask_rate, mask_rng
        )
        shuffled = [(w, t, p) for (w, t), (_, _, p) in zip(masked, shuffled)]
    for start in range(0, len(shuffled), config.effective_batch_size):
        chunk = shuffled[start : start + config.effective_batch_size]
        yield [(encode(w, t), encode(p)) for w, t, p in chunk]


def _accumulated_step(model, examples, opt_state, opt_config, micro_size):
    """One optimizer step over `examples`, chunked into micro batches.

    Gradients of the token loss sum are accumulated and divided by the
    total token count, matching the full-batch token mean exactly.
    """
    params = dict(model.named_tensors())
    names = sorted(params)
    grad_sums = {n: torch.zeros_like(params[n]) for n in names}
    total_tokens = 0
    total_loss = 0.0
    size = micro_size or len(examples)
    for start in range(0, len(examples), size):
        chunk = examples[start : start + size]
        batch = make_batch([s for s, _ in chunk], [t for _, t in chunk])
        logits = model.forward(batch, train=True)
        mean_loss, count = cross_entropy_loss(logits, batch.tgt_out, batch.tgt_mask)
        loss_sum = mean_loss * count
        grads = torch.autograd.grad(loss_sum, [params[n] for n in names])
        for n, g in zip(names, grads):
            grad_sums[n] += g.detach()
        total_tokens += count
        total_loss += float(loss_sum.detach())
    for n in names:
        grad_sums[n] /= total_tokens
    adamw_step(params, grad_sums, opt_state, opt_config)
    return total_loss / total_tokens, total_tokens


def dev_macro_scores(model, dev_lexicons, *, use_prefixes: bool = True) -> tuple[float, float]:
    """Greedy-decoded macro PER and WER over dev lexicons."""
    from .decoding import greedy_decode_batch

    pers, wers = [], []
    for lex in sorted(dev_lexicons, key=lambda l: l.language.code):
        tag = lex.language if use_prefixes else None
        srcs = [encode(e.word, tag) for e in lex.entries]
        preds = [
            c if isinstance(c, G2PError) else c.text
            for c in greedy_decode_batch(model, srcs)
        ]
        per, wer = score_language(preds, [e.pronunciations for e in lex.entries])
        pers.append(per)
        wers.append(wer)
    return sum(pers) / len(pers), sum(wers) / len(wers)


CHECKPOINT_RE = re.compile(r"^epoch(\d{4})\.model\.cg2p$")


def checkpoint_paths(directory: str, epoch: int) -> tuple[str, str]:
    stem = os.path.join(directory, f"epoch{epoch:04d}")
    return stem + ".model.cg2p", stem + ".optim.cg2p"


def latest_checkpoint(directory: str) -> int | None:
    """Highest completed-epoch number with both model and optimizer files."""
    best = None
    try:
        names = os.listdir(directory)
    except OSError:
        return None
    for name in names:
        m = CHECKPOINT_RE.match(name)
        if m:
            epoch = int(m.group(1))
            if os.path.exists(checkpoint_paths(directory, epoch)[1]):
                best = epoch if best is None else max(best, epoch)
    return best


def resume_state(directory: str) -> tuple[ByteTransformer, AdamWState, int] | None:
    """Load the newest epoch checkpoint pair, or None when there is none."""
    epoch = latest_checkpoint(directory)
    if epoch is None:
        return None
    model_path, optim_path = checkpoint_paths(directory, epoch)
    model, _ = load_model(model_path)
    state = load_optimizer(optim_path, dict(model.named_tensors()))
    return model, state, epoch


BEST_MODEL = "best.model.cg2p"
BEST_META = "best.json"


def _save_best(directory: str, model, meta: dict) -> None:
    save_model(os.path.join(directory, BEST_MODEL), model, step=meta["step"])
    tmp = os.path.join(directory, BEST_META + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(meta, f, sort_keys=True)
    os.replace(tmp, os.path.join(directory, BEST_META))


def _load_best_meta(directory: str) -> dict | None:
    try:
        with open(os.path.join(directory, BEST_META), "r", encoding="utf-8") as f:
            meta = json.load(f)
    except (OSError, json.JSONDecodeError):
        return None
    if not os.path.exists(os.path.join(directory, BEST_MODEL)):
        return None
    return meta


def _snapshot(model) -> dict[str, torch.Tensor]:
    return {n: p.detach().clone() for n, p in model.named_tensors().items()}


def _restore(model, weights: dict[str, torch.Tensor]) -> None:
    with torch.no_grad():
        for n, p in model.named_tensors().items():
            p.copy_(weights[n])


def _run(
    model: ByteTransformer,
    train_lexicons: list[Lexicon],
    dev_lexicons: list[Lexicon] | None,
    config: TrainConfig,
    *,
    opt_state: AdamWState | None,
    start_epoch: int,
    checkpoint_dir: str | None,
    log,
    prior_best: dict | None = None,
) -> TrainReport:
    train_lexicons = _filter_lexicons(train_lexicons, config.language_filter)
    if dev_lexicons is not None:
        dev_lexicons = _filter_lexicons(dev_lexicons, config.language_filter)
        train_tags = {lex.language.code for lex in train_lexicons}
        dev_tags = {lex.language.code for lex in dev_lexicons}
        if train_tags - dev_tags:
            raise InvalidInputError(
                f"no dev split for trained languages: {sorted(train_tags - dev_tags)}"
            )
    pairs = build_pairs(
        train_lexicons, use_prefixes=config.use_language_prefixes,
        model_config=model.config,
    )
    params = dict(model.named_tensors())
    if opt_state is None:
        opt_state = AdamWState.for_params(params)
    opt_config = config.adamw()
    if checkpoint_dir is not None:
        os.makedirs(checkpoint_dir, exist_ok=True)

    report = TrainReport()
    report.steps = opt_state.step
    best_weights = None
    if prior_best is not None and dev_lexicons:
        # selection state recovered from an interrupted run; its weights
        # stay on disk until something beats them
        report.selected_dev_per = prior_best["dev_per"]
        report.selected_step = prior_best["step"]
        report.selected_epoch = prior_best["epoch"]

    def run_dev_eval(epoch_no: int, train_loss: float) -> None:
        nonlocal best_weights
        per, wer = dev_macro_scores(
            model, dev_lexicons, use_prefixes=config.use_language_prefixes
        )
        report.history.append(
            {"step": opt_state.step, "epoch": epoch_no, "train_loss": train_loss,
             "dev_per": per, "dev_wer": wer}
        )
        if report.selected_dev_per is None or per < report.selected_dev_per:
            report.selected_dev_per = per
            report.selected_step = opt_state.step
            report.selected_epoch = epoch_no
            best_weights = _snapshot(model)
            if checkpoint_dir is not None:
                _save_best(
                    checkpoint_dir, model,
                    {"dev_per": per, "step": opt_state.step, "epoch": epoch_no},
                )
        if log is not None:
            log(
                f"step {opt_state.step} epoch {epoch_no} loss {train_loss:.4f} "
                f"dev PER {per:.2f} WER {wer:.2f}"
            )

    for epoch in range(start_epoch, config.epochs):
        epoch_started = time.monotonic()
        torch.manual_seed(epoch_stream(config.seed, epoch, "dropout").getrandbits(63))
        epoch_loss = 0.0
        epoch_tokens = 0
        for examples in _epoch_batches(pairs, config, epoch):
            mean_loss, tokens = _accumulated_step(
                model, examples, opt_state, opt_config, config.micro_batch_size
            )
            report.steps = opt_state.step
            epoch_loss += mean_loss * tokens
            epoch_tokens += tokens
            if dev_lexicons and config.eval_every and opt_state.step % config.eval_every == 0:
                run_dev_eval(epoch + 1, mean_loss)
        mean_epoch_loss = epoch_loss / epoch_tokens
        report.loss_history.append(mean_epoch_loss)
        report.final_loss = mean_epoch_loss
        report.epochs_run = epoch + 1

        if dev_lexicons and not config.eval_every:
            run_dev_eval(epoch + 1, mean_epoch_loss)
        elif log is not None:
            log(f"epoch {epoch + 1}/{config.epochs} loss {mean_epoch_loss:.4f}")
        if checkpoint_dir is not None and config.checkpoint_every:
            if (epoch + 1) % config.checkpoint_every == 0 or epoch + 1 == config.epochs:
                model_path, optim_path = checkpoint_paths(checkpoint_dir, epoch + 1)
                save_model(model_path, model, step=opt_state.step,
                           train_config=config.to_dict())
                save_optimizer(optim_path, opt_state)
        report.epoch_seconds.append(time.monotonic() - epoch_started)

    if dev_lexicons and config.eval_every and report.epochs_run and (
        not report.history or report.history[-1]["step"] != opt_state.step
    ):
        run_dev_eval(report.epochs_run, report.final_loss)
    if best_weights is not None:
        _restore(model, best_weights)
    elif prior_best is not None and report.selected_dev_per is not None:
        best_model, _ = load_model(os.path.join(checkpoint_dir, BEST_MODEL))
        _restore(model, _snapshot(best_model))
    return report


def train(
    model_config: ModelConfig,
    config: TrainConfig,
    train_lexicons: list[Lexicon],
    dev_lexicons: list[Lexicon] | None = None,
    *,
    checkpoint_dir: str | None = None,
    resume: bool = False,
    log=None,
) -> tuple[ByteTransformer, TrainReport]:
    """Train a freshly initialized model; returns the best-dev weights.

    With epochs 0 the initial parameters come back untouched with an
    empty history. `resume` continues from the newest epoch checkpoint
    in `checkpoint_dir` and reproduces the uninterrupted run exactly.
    """
    opt_state = None
    start_epoch = 0
    model = None
    prior_best = None
    if resume and checkpoint_dir is not None:
        resumed = resume_state(checkpoint_dir)
        if resumed is not None:
            model, opt_state, start_epoch = resumed
            if model.config != model_config:
                raise ConfigError(
                    "checkpoint in checkpoint_dir does not match model_config"
                )
            prior_best = _load_best_meta(checkpoint_dir)
    if model is None:
        model = init_params(model_config, seed=config.seed)
    report = _run(
        model, train_lexicons, dev_lexicons, config,
        opt_state=opt_state, start_epoch=start_epoch,
        checkpoint_dir=checkpoint_dir, log=log, prior_best=prior_best,
    )
    return model, report


def finetune(
    pretrained: ByteTransformer,
    config: TrainConfig,
    train_lexicons: list[Lexicon],
    dev_lexicons: list[Lexicon] | None = None,
    *,
    checkpoint_dir: str | None = None,
    log=None,
) -> tuple[ByteTransformer, TrainReport]:
    """Continue training from pretrained weights with a fresh optimizer.

    The passed-in model is never mutated; a copy is trained.
    """
    model = ByteTransformer(pretrained.config)
    _restore(model, _snapshot(pretrained))
    report = _run(
        model, train_lexicons, dev_lexicons, config,
        opt_state=None, start_epoch=0, checkpoint_dir=checkpoint_dir, log=log,
    )
    return model, report


def zero_shot_eval(model, unseen_lexicons, decode_config=None) -> EvalReport:
    """Score test lexicons of languages the model never saw, conditioning
    every word on the wildcard tag."""
    return evaluate(model, unseen_lexicons, decode_config, tag_override=UNK_TAG)
