"""Batched beam search over byte tokens.

All sources in a call are decoded in lockstep: one encoder pass, then
one decoder pass per output position over every live hypothesis.
Selection uses a stable descending sort over the flattened
(beam, token) score matrix, so ties resolve toward the lower beam
index and then the lower token id, making results independent of
batch composition. Finished hypotheses retire to a per-source pool;
a source stops once no live continuation can outscore its best
finished candidate, or at max_len.

Malformed sources inside a batch do not abort it: each one yields a
G2PError object at its index and the rest decode normally.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .codec import BOS_ID, EOS_ID, PAD_ID, VOCAB_SIZE, decode as decode_ids
from .errors import ConfigError, G2PError, InvalidInputError, NumericError


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 5
    max_len: int = 64
    length_penalty: float = 0.0

    def __post_init__(self):
        if not isinstance(self.beam_size, int) or self.beam_size < 1:
            raise ConfigError(f"beam_size must be a positive int, got {self.beam_size!r}")
        if not isinstance(self.max_len, int) or self.max_len < 1:
            raise ConfigError(f"max_len must be a positive int, got {self.max_len!r}")
        if not self.length_penalty >= 0.0:
            raise ConfigError(f"length_penalty must be >= 0, got {self.length_penalty!r}")


@dataclass(frozen=True)
class Candidate:
    """One decoded hypothesis.

    ids are the generated tokens, ending in EOS unless truncated at
    max_len. score is log_prob / len(ids) ** length_penalty. lossy is
    True when the byte sequence was not valid UTF-8 and text contains
    replacement characters.
    """

    ids: tuple[int, ...]
    text: str
    log_prob: float
    score: float
    finished: bool
    lossy: bool


def _normalized(log_prob: float, length: int, alpha: float) -> float:
    if alpha == 0.0:
        return log_prob
    return log_prob / (length ** alpha)


def _check_src(src, index: int, max_src_len: int) -> InvalidInputError | None:
    if len(src) == 0:
        return InvalidInputError(f"source {index} is empty")
    if len(src) > max_src_len:
        return InvalidInputError(
            f"source {index} has {len(src)} tokens, limit is {max_src_len}"
        )
    if any(not (0 <= t < VOCAB_SIZE) for t in src):
        return InvalidInputError(f"source {index} contains out-of-range token ids")
    return None


def _decode_valid(model, srcs, cfg: DecodeConfig) -> list[list[Candidate]]:
    n = len(srcs)
    k = cfg.beam_size
    alpha = cfg.length_penalty
    # the decoder cannot consume prefixes beyond its configured target length
    max_steps = min(cfg.max_len, model.config.max_tgt_len)
    device = model.embedding.device

    src_len = max(len(s) for s in srcs)
    src = torch.full((n, src_len), PAD_ID, dtype=torch.long, device=device)
    src_mask = torch.zeros((n, src_len), dtype=torch.bool, device=device)
    for i, s in enumerate(srcs):
        src[i, : len(s)] = torch.tensor(s, dtype=torch.long)
        src_mask[i, : len(s)] = True

    with torch.no_grad():
        enc = model.encode(src, src_mask, train=False)
        # every beam of a source attends to the same encoder states
        enc = enc.repeat_interleave(k, dim=0)
        beam_src_mask = src_mask.repeat_interleave(k, dim=0)

        ids = torch.full((n * k, 1), BOS_ID, dtype=torch.long, device=device)
        scores = torch.full((n, k), float("-inf"), dtype=torch.float32, device=device)
        scores[:, 0] = 0.0
        pools: list[list[tuple[float, tuple[int, ...], float]]] = [[] for _ in range(n)]
        done = [False] * n

        for step in range(max_steps):
            logits = model.decode(enc, beam_src_mask, ids, train=False)[:, -1, :]
            if not torch.isfinite(logits).all():
                raise NumericError("non-finite decoder logits")
            log_probs = torch.log_softmax(logits.float(), dim=-1).view(n, k, VOCAB_SIZE)
            cand = (scores.unsqueeze(-1) + log_probs).view(n, k * VOCAB_SIZE)
            take = min(2 * k, k * VOCAB_SIZE)
            sorted_scores, sorted_idx = torch.sort(cand, dim=-1, descending=True, stable=True)
            top_scores = sorted_scores[:, :take].tolist()
            top_idx = sorted_idx[:, :take].tolist()

            new_ids = torch.full((n * k, step + 2), PAD_ID, dtype=torch.long, device=device)
            new_scores = torch.full((n, k), float("-inf"), dtype=torch.float32, device=device)
            ids_list = ids.view(n, k, -1).tolist()
            for b in range(n):
                if done[b]:
                    continue
                slot = 0
                for sc, flat in zip(top_scores[b], top_idx[b]):
                    if slot == k or sc == float("-inf"):
                        break
                    parent, tok = divmod(flat, VOCAB_SIZE)
                    hyp = tuple(ids_list[b][parent][1:]) + (tok,)
                    if tok == EOS_ID:
                        pools[b].append((_normalized(sc, len(hyp), alpha), hyp, sc))
                        pools[b].sort(key=lambda t: (-t[0], t[1]))
                        del pools[b][k:]
                    else:
                        row = b * k + slot
                        new_ids[row, : step + 1] = ids[b * k + parent]
                        new_ids[row, step + 1] = tok
                        new_scores[b, slot] = sc
                        slot += 1
                best_finished = max((p[0] for p in pools[b]), default=float("-inf"))
                best_live = new_scores[b].max().item()
                if alpha > 0.0 and best_live > float("-inf"):
                    # optimistic bound: the shortest possible finished length
                    # maximizes a length-normalized score for negative logs
                    best_live = best_live / (max_steps ** alpha)
                if best_live <= best_finished or best_live == float("-inf"):
                    done[b] = True
            ids = new_ids
            scores = new_scores
            if all(done):
                break

        results: list[list[Candidate]] = []
        ids_list = ids.view(n, k, -1).tolist()
        scores_list = scores.tolist()
        for b in range(n):
            finished = [(norm, hyp, raw, True) for norm, hyp, raw in pools[b]]
            if not finished:
                finished = [
                    (_normalized(raw, len(row) - 1, alpha), tuple(row[1:]), raw, False)
                    for row, raw in zip(ids_list[b], scores_list[b])
                    if raw > float("-inf")
                ]
            finished.sort(key=lambda t: (-t[0], t[1]))
            out = []
            for norm, hyp, raw, fin in finished[:k]:
                text, lossy = decode_ids(list(hyp))
                out.append(Candidate(hyp, text, raw, norm, fin, lossy))
            results.append(out)
    return results


def batch_decode(
    model, srcs, config: DecodeConfig | None = None
) -> list[list[Candidate] | G2PError]:
    """Beam-decode a batch of source token sequences.

    Returns one result per source, in order: either up to beam_size
    finished candidates sorted by descending score (lexicographic
    token ids breaking exact ties), or a G2PError describing why that
    source could not be decoded. Truncated hypotheses are returned
    only when nothing finished.
    """
    cfg = config or DecodeConfig()
    if not isinstance(srcs, (list, tuple)) or not srcs:
        raise InvalidInputError("no source sequences to decode")
    errors = {i: e for i, s in enumerate(srcs)
              if (e := _check_src(s, i, model.config.max_src_len)) is not None}
    valid = [i for i in range(len(srcs)) if i not in errors]
    results: list[list[Candidate] | G2PError] = [None] * len(srcs)  # type: ignore[list-item]
    if valid:
        decoded = _decode_valid(model, [srcs[i] for i in valid], cfg)
        for i, cands in zip(valid, decoded):
            results[i] = cands
    for i, err in errors.items():
        results[i] = err
    return results


def beam_search(model, src, config: DecodeConfig | None = None) -> list[Candidate]:
    """Decode a single source; identical to a one-element batch_decode."""
    result = batch_decode(model, [src], config)[0]
    if isinstance(result, G2PError):
        raise result
    return result


def greedy_decode(model, src, config: DecodeConfig | None = None) -> Candidate:
    """Argmax decode of one source: each step takes the highest-probability
    token (ties to the lowest id) until EOS or max_len.

    Equivalent to beam search with beam_size 1. The result carries the
    decoded text, its cumulative log probability, and whether UTF-8
    decoding was lossy.
    """
    cfg = config or DecodeConfig()
    return beam_search(model, src, DecodeConfig(1, cfg.max_len, cfg.length_penalty))[0]


def greedy_decode_batch(
    model, srcs, config: DecodeConfig | None = None
) -> list[Candidate | G2PError]:
    """Batched greedy decode; per-source errors come back at their index."""
    cfg = config or DecodeConfig()
    results = batch_decode(model, srcs, DecodeConfig(1, cfg.max_len, cfg.length_penalty))
    return [r if isinstance(r, G2PError) else r[0] for r in results]


def sequence_log_prob(model, src, target_ids) -> float:
    """Teacher-forced log probability of target_ids (ending in EOS) given src."""
    if not target_ids or target_ids[-1] != EOS_ID:
        raise InvalidInputError("target must be non-empty and end with EOS")
    err = _check_src(src, 0, model.config.max_src_len)
    if err is not None:
        raise err
    if len(target_ids) > model.config.max_tgt_len:
        raise InvalidInputError(
            f"target has {len(target_ids)} tokens, limit is {model.config.max_tgt_len}"
        )
    device = model.embedding.device
    src_t = torch.tensor([src], dtype=torch.long, device=device)
    src_mask = torch.ones_like(src_t, dtype=torch.bool)
    tgt_in = torch.tensor([[BOS_ID] + list(target_ids[:-1])], dtype=torch.long, device=device)
    with torch.no_grad():
        enc = model.encode(src_t, src_mask, train=False)
        logits = model.decode(enc, src_mask, tgt_in, train=False)
        log_probs = torch.log_softmax(logits.float(), dim=-1)[0]
        total = 0.0
        for pos, tok in enumerate(target_ids):
            total += log_probs[pos, tok].item()
    return total
