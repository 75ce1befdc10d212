"""Byte-vocabulary transformer encoder-decoder.

Architecture follows the T5 family: pre-layer RMS normalization without
bias terms, relative-position bias added to self-attention logits (one
bucket table per stack, shared across its layers, none on
cross-attention), ReLU feed-forward, and a token embedding shared
between encoder input, decoder input, and the output projection. The
output projection is rescaled by d_model**-0.5 to compensate for the
shared embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .codec import BOS_ID, EOS_ID, PAD_ID, VOCAB_SIZE
from .errors import ConfigError, DegenerateBatchError, InvalidInputError

NEG_INF = float("-inf")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters. Defaults are the desk-scale tiny model."""

    vocab_size: int = VOCAB_SIZE
    d_model: int = 128
    n_heads: int = 4
    d_ff: int = 512
    n_encoder_layers: int = 3
    n_decoder_layers: int = 3
    max_src_len: int = 128
    max_tgt_len: int = 64
    rel_pos_buckets: int = 32
    rel_pos_max_distance: int = 128
    dropout: float = 0.1

    def __post_init__(self):
        if self.vocab_size != VOCAB_SIZE:
            raise ConfigError(f"vocab_size must be {VOCAB_SIZE}, got {self.vocab_size}")
        positive = (
            "d_model", "n_heads", "d_ff", "n_encoder_layers", "n_decoder_layers",
            "max_src_len", "max_tgt_len", "rel_pos_buckets", "rel_pos_max_distance",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"n_heads {self.n_heads} must divide d_model {self.d_model}"
            )
        if self.rel_pos_buckets < 4 or self.rel_pos_buckets % 2 != 0:
            raise ConfigError("rel_pos_buckets must be an even count of at least 4")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout {self.dropout} outside [0, 1)")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Batch:
    """Padded tensors for one forward pass.

    tgt_in is tgt_out shifted right with BOS at position 0; the masks
    mark exactly the non-PAD positions.
    """

    src: torch.Tensor        # [B, S] long
    src_mask: torch.Tensor   # [B, S] bool
    tgt_in: torch.Tensor     # [B, T] long
    tgt_out: torch.Tensor    # [B, T] long
    tgt_mask: torch.Tensor   # [B, T] bool


def make_batch(
    src_seqs: Sequence[Sequence[int]],
    tgt_seqs: Sequence[Sequence[int]],
    device: torch.device | str = "cpu",
) -> Batch:
    """Pad encoded source/target id sequences into a Batch.

    Target sequences are the desired outputs ending in EOS; the
    BOS-shifted decoder inputs are derived here.
    """
    if len(src_seqs) != len(tgt_seqs) or not src_seqs:
        raise InvalidInputError("need equal, non-zero numbers of sources and targets")
    bsz = len(src_seqs)
    s_len = max(len(s) for s in src_seqs)
    t_len = max(len(t) for t in tgt_seqs)
    src = torch.full((bsz, s_len), PAD_ID, dtype=torch.long, device=device)
    tgt_in = torch.full((bsz, t_len), PAD_ID, dtype=torch.long, device=device)
    tgt_out = torch.full((bsz, t_len), PAD_ID, dtype=torch.long, device=device)
    src_mask = torch.zeros(bsz, s_len, dtype=torch.bool, device=device)
    tgt_mask = torch.zeros(bsz, t_len, dtype=torch.bool, device=device)
    for i, (s, t) in enumerate(zip(src_seqs, tgt_seqs)):
        if not s or not t:
            raise InvalidInputError(f"empty sequence at index {i}")
        src[i, : len(s)] = torch.tensor(s, dtype=torch.long)
        tgt_out[i, : len(t)] = torch.tensor(t, dtype=torch.long)
        tgt_in[i, 0] = BOS_ID
        tgt_in[i, 1 : len(t)] = tgt_out[i, : len(t) - 1]
        src_mask[i, : len(s)] = True
        tgt_mask[i, : len(t)] = True
    return Batch(src, src_mask, tgt_in, tgt_out, tgt_mask)


def relative_position_bucket(
    relative_position: torch.Tensor | int,
    *,
    bidirectional: bool,
    num_buckets: int,
    max_distance: int,
) -> torch.Tensor | int:
    """Bucket a signed relative distance (key_pos - query_pos).

    Bidirectional bucketing splits the table into sign halves; causal
    bucketing folds positive (future) offsets to bucket 0. Small
    distances get exact buckets, then logarithmic ones out to
    max_distance, clamped beyond.
    """
    scalar = not torch.is_tensor(relative_position)
    rel = torch.as_tensor(relative_position, dtype=torch.long)
    buckets = torch.zeros_like(rel)
    if bidirectional:
        num_buckets //= 2
        buckets = buckets + (rel > 0).long() * num_buckets
        n = rel.abs()
    else:
        n = (-rel).clamp(min=0)
    max_exact = num_buckets // 2
    is_small = n < max_exact
    large = max_exact + (
        torch.log(n.float().clamp(min=1) / max_exact)
        / math.log(max_distance / max_exact)
        * (num_buckets - max_exact)
    ).long()
    large = large.clamp(max=num_buckets - 1)
    buckets = buckets + torch.where(is_small, n, large)
    return int(buckets) if scalar else buckets


class RMSNorm(nn.Module):
    """T5 layer norm: scale-only, no mean subtraction, no bias."""

    def __init__(self, d: int, eps: float = 1e-6):
        super().__init__()
        self.gain = nn.Parameter(torch.ones(d))
        self.eps = eps

    def forward(self, x):
        var = x.pow(2).mean(-1, keepdim=True)
        return self.gain * x * torch.rsqrt(var + self.eps)


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q = nn.Linear(d_model, d_model, bias=False)
        self.k = nn.Linear(d_model, d_model, bias=False)
        self.v = nn.Linear(d_model, d_model, bias=False)
        self.o = nn.Linear(d_model, d_model, bias=False)

    def forward(self, query, kv, mask, bias=None):
        """mask: [B, 1, Tq or 1, Tk] bool, True where attention is allowed.
        bias: [1, H, Tq, Tk] additive logits or None."""
        bsz, q_len, _ = query.shape
        k_len = kv.shape[1]

        def split(x):
            return x.view(bsz, -1, self.n_heads, self.d_head).transpose(1, 2)

        q, k, v = split(self.q(query)), split(self.k(kv)), split(self.v(kv))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.d_head)
        if bias is not None:
            scores = scores + bias
        scores = scores.masked_fill(~mask, NEG_INF)
        attn = F.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(bsz, q_len, -1)
        return self.o(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int):
        super().__init__()
        self.wi = nn.Linear(d_model, d_ff, bias=False)
        self.wo = nn.Linear(d_ff, d_model, bias=False)

    def forward(self, x):
        return self.wo(F.relu(self.wi(x)))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff)
        self.norm1 = RMSNorm(cfg.d_model)
        self.norm2 = RMSNorm(cfg.d_model)


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff)
        self.norm1 = RMSNorm(cfg.d_model)
        self.norm2 = RMSNorm(cfg.d_model)
        self.norm3 = RMSNorm(cfg.d_model)


class ByteTransformer(nn.Module):
    """Encoder-decoder over the 259-id byte vocabulary."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.embedding = nn.Parameter(torch.empty(config.vocab_size, config.d_model))
        self.enc_layers = nn.ModuleList(
            EncoderLayer(config) for _ in range(config.n_encoder_layers)
        )
        self.dec_layers = nn.ModuleList(
            DecoderLayer(config) for _ in range(config.n_decoder_layers)
        )
        self.enc_rel_bias = nn.Parameter(
            torch.zeros(config.rel_pos_buckets, config.n_heads)
        )
        self.dec_rel_bias = nn.Parameter(
            torch.zeros(config.rel_pos_buckets, config.n_heads)
        )
        self.enc_norm = RMSNorm(config.d_model)
        self.dec_norm = RMSNorm(config.d_model)

    # -- pieces ----------------------------------------------------------

    def _rel_bias(self, q_len: int, k_len: int, *, decoder: bool) -> torch.Tensor:
        cfg = self.config
        pos_q = torch.arange(q_len).unsqueeze(1)
        pos_k = torch.arange(k_len).unsqueeze(0)
        buckets = relative_position_bucket(
            pos_k - pos_q,
            bidirectional=not decoder,
            num_buckets=cfg.rel_pos_buckets,
            max_distance=cfg.rel_pos_max_distance,
        )
        table = self.dec_rel_bias if decoder else self.enc_rel_bias
        return table[buckets].permute(2, 0, 1).unsqueeze(0)  # [1, H, Tq, Tk]

    def _check_ids(self, ids: torch.Tensor, limit: int, what: str):
        if ids.dim() != 2:
            raise InvalidInputError(f"{what} ids must be 2-D, got {tuple(ids.shape)}")
        if ids.shape[1] > limit:
            raise InvalidInputError(
                f"{what} length {ids.shape[1]} exceeds configured maximum {limit}"
            )
        if ids.numel() and (ids.min() < 0 or ids.max() >= self.config.vocab_size):
            raise InvalidInputError(f"{what} ids outside [0, {self.config.vocab_size})")

    def _dropout(self, x, train: bool):
        return F.dropout(x, self.config.dropout, training=train)

    def encode(self, src: torch.Tensor, src_mask: torch.Tensor, train: bool = False):
        self._check_ids(src, self.config.max_src_len, "source")
        x = self.embedding[src]
        key_mask = src_mask[:, None, None, :]
        bias = self._rel_bias(src.shape[1], src.shape[1], decoder=False)
        for layer in self.enc_layers:
            h = layer.norm1(x)
            x = x + self._dropout(layer.self_attn(h, h, key_mask, bias), train)
            x = x + self._dropout(layer.ff(layer.norm2(x)), train)
        return self.enc_norm(x)

    def decode(
        self,
        enc_out: torch.Tensor,
        src_mask: torch.Tensor,
        tgt_in: torch.Tensor,
        tgt_mask: torch.Tensor | None = None,
        train: bool = False,
    ):
        """Returns logits [B, T, vocab]. tgt_mask=None treats all positions as valid."""
        self._check_ids(tgt_in, self.config.max_tgt_len, "target")
        t_len = tgt_in.shape[1]
        if tgt_mask is None:
            tgt_mask = torch.ones_like(tgt_in, dtype=torch.bool)
        causal = torch.tril(torch.ones(t_len, t_len, dtype=torch.bool))
        self_mask = causal[None, None] & tgt_mask[:, None, None, :]
        cross_mask = src_mask[:, None, None, :]
        bias = self._rel_bias(t_len, t_len, decoder=True)

        x = self.embedding[tgt_in]
        for layer in self.dec_layers:
            h = layer.norm1(x)
            x = x + self._dropout(layer.self_attn(h, h, self_mask, bias), train)
            x = x + self._dropout(
                layer.cross_attn(layer.norm2(x), enc_out, cross_mask), train
            )
            x = x + self._dropout(layer.ff(layer.norm3(x)), train)
        x = self.dec_norm(x)
        return (x @ self.embedding.t()) / math.sqrt(self.config.d_model)

    def forward(self, batch: Batch, train: bool = False):
        enc = self.encode(batch.src, batch.src_mask, train)
        return self.decode(enc, batch.src_mask, batch.tgt_in, batch.tgt_mask, train)

    # -- bookkeeping ------------------------------------------------------

    def named_tensors(self) -> dict[str, torch.Tensor]:
        return dict(self.named_parameters())

    def assert_finite(self):
        for name, p in self.named_parameters():
            if not torch.isfinite(p).all():
                raise ConfigError(f"non-finite values in parameter {name}")


def init_params(config: ModelConfig, seed: int) -> ByteTransformer:
    """Build a model with fan-in-scaled normal weights, unit norm gains,
    and zeroed relative-position tables. Deterministic in the seed."""
    model = ByteTransformer(config)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in sorted(model.named_parameters()):
            if name.endswith("rel_bias"):
                p.zero_()
            elif name.endswith("gain"):
                p.fill_(1.0)
            elif name == "embedding":
                p.normal_(0.0, config.d_model ** -0.5, generator=gen)
            else:
                fan_in = p.shape[1]
                p.normal_(0.0, fan_in ** -0.5, generator=gen)
    return model


def cross_entropy_loss(
    logits: torch.Tensor, tgt_out: torch.Tensor, tgt_mask: torch.Tensor
) -> tuple[torch.Tensor, int]:
    """Mean negative log-likelihood over non-PAD target positions.

    Returns (scalar loss, token count); PAD positions contribute zero.
    """
    if logits.shape[:2] != tgt_out.shape or tgt_out.shape != tgt_mask.shape:
        raise InvalidInputError(
            f"shape mismatch: logits {tuple(logits.shape)}, targets {tuple(tgt_out.shape)}"
        )
    count = int(tgt_mask.sum())
    if count == 0:
        raise DegenerateBatchError("no valid target tokens in batch")
    logp = F.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, tgt_out.unsqueeze(-1)).squeeze(-1)
    loss = (nll * tgt_mask).sum() / count
    return loss, count


def loss_and_grads(
    model: ByteTransformer, batch: Batch
) -> tuple[float, int, dict[str, torch.Tensor]]:
    """Exact gradients of the batch loss for every named parameter.

    Runs the deterministic (dropout-free) forward path.
    """
    logits = model(batch, train=False)
    loss, count = cross_entropy_loss(logits, batch.tgt_out, batch.tgt_mask)
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(loss, params, allow_unused=False)
    return float(loss.detach()), count, dict(zip(names, grads))
