import math

import pytest
import torch

from byteg2p.codec import EOS_ID, PAD_ID, VOCAB_SIZE
from byteg2p.errors import ConfigError, DegenerateBatchError, InvalidInputError
from byteg2p.model import (
    ByteTransformer,
    ModelConfig,
    cross_entropy_loss,
    init_params,
    loss_and_grads,
    make_batch,
    relative_position_bucket,
)

LN_VOCAB = math.log(259)


def _bucket_oracle(rel, bidirectional, num_buckets, max_distance):
    """Independent scalar port of the bucketing rule: half the buckets
    cover exact small offsets, the rest are log-spaced out to
    max_distance; bidirectional splits buckets by sign first."""
    bucket = 0
    n = num_buckets
    if bidirectional:
        n //= 2
        if rel > 0:
            bucket += n
        rel = abs(rel)
    else:
        rel = -min(rel, 0)
    max_exact = n // 2
    if rel < max_exact:
        return bucket + rel
    log_ratio = math.log(rel / max_exact) / math.log(max_distance / max_exact)
    val = max_exact + int(log_ratio * (n - max_exact))
    return bucket + min(val, n - 1)


@pytest.mark.parametrize("bidirectional", [True, False])
def test_bucket_matches_oracle_exhaustively(bidirectional):
    rels = torch.arange(-512, 513)
    got = relative_position_bucket(
        rels, bidirectional=bidirectional, num_buckets=32, max_distance=128
    )
    for rel, g in zip(rels.tolist(), got.tolist()):
        assert g == _bucket_oracle(rel, bidirectional, 32, 128), rel


def test_bucket_range_and_monotonicity():
    rels = torch.arange(0, 2000)
    got = relative_position_bucket(
        -rels, bidirectional=False, num_buckets=32, max_distance=128
    ).tolist()
    assert all(0 <= b < 32 for b in got)
    assert got == sorted(got)
    assert got[-1] == 31


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=256)
    with pytest.raises(ConfigError):
        ModelConfig(d_model=60, n_heads=7)
    with pytest.raises(ConfigError):
        ModelConfig(rel_pos_buckets=5)
    with pytest.raises(ConfigError):
        ModelConfig(d_ff=0)


def test_config_dict_roundtrip_is_strict():
    cfg = ModelConfig(d_model=64, n_heads=2)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"d_model": 64, "bogus": 1})


def test_make_batch_shifts_targets(tiny_config):
    batch = make_batch([[10, 11, EOS_ID]], [[20, 21, EOS_ID]])
    assert batch.tgt_in.tolist() == [[2, 20, 21]]
    assert batch.tgt_out.tolist() == [[20, 21, EOS_ID]]
    assert batch.tgt_mask.all()


def test_make_batch_pads_ragged():
    batch = make_batch([[10, EOS_ID], [10, 11, 12, EOS_ID]], [[20, EOS_ID], [20, EOS_ID]])
    assert batch.src.shape == (2, 4)
    assert batch.src[0].tolist() == [10, EOS_ID, PAD_ID, PAD_ID]
    assert batch.src_mask.tolist() == [[True, True, False, False], [True] * 4]


def test_init_is_seed_deterministic(tiny_config):
    a = init_params(tiny_config, seed=11)
    b = init_params(tiny_config, seed=11)
    c = init_params(tiny_config, seed=12)
    for name, pa in a.named_tensors().items():
        assert torch.equal(pa, b.named_tensors()[name])
    assert any(
        not torch.equal(pa, c.named_tensors()[name])
        for name, pa in a.named_tensors().items()
    )


def test_init_gains_one_biases_absent(tiny_config):
    model = init_params(tiny_config, seed=0)
    names = list(model.named_tensors())
    assert not any(n.endswith(".bias") for n in names)
    for n, p in model.named_tensors().items():
        if n.endswith(".gain"):
            assert torch.equal(p, torch.ones_like(p))
        if "rel_bias" in n:
            assert torch.equal(p, torch.zeros_like(p))


def test_init_loss_close_to_uniform(tiny_config):
    model = init_params(tiny_config, seed=3)
    srcs = [[10, 20, 30, EOS_ID], [40, 50, EOS_ID]]
    tgts = [[60, 70, EOS_ID], [80, EOS_ID]]
    batch = make_batch(srcs, tgts)
    with torch.no_grad():
        logits = model.forward(batch, train=False)
        loss, count = cross_entropy_loss(logits, batch.tgt_out, batch.tgt_mask)
    assert count == 5
    assert abs(float(loss) - LN_VOCAB) / LN_VOCAB < 0.05


def test_decoder_is_causal(tiny_model):
    src = torch.tensor([[10, 11, EOS_ID]])
    src_mask = torch.ones_like(src, dtype=torch.bool)
    tgt_a = torch.tensor([[2, 20, 21, 22]])
    tgt_b = torch.tensor([[2, 20, 99, 77]])
    with torch.no_grad():
        enc = tiny_model.encode(src, src_mask, train=False)
        la = tiny_model.decode(enc, src_mask, tgt_a, train=False)
        lb = tiny_model.decode(enc, src_mask, tgt_b, train=False)
    assert torch.allclose(la[:, :2], lb[:, :2], atol=1e-6)
    assert not torch.allclose(la[:, 2:], lb[:, 2:], atol=1e-4)


def test_padding_does_not_change_logits(tiny_model):
    from byteg2p.model import Batch

    plain = make_batch([[10, 11, 12, EOS_ID]], [[20, 21, EOS_ID]])

    def _pad_cols(t, n, value):
        fill = torch.full((t.shape[0], n), value, dtype=t.dtype)
        return torch.cat([t, fill], dim=1)

    padded = Batch(
        src=_pad_cols(plain.src, 5, PAD_ID),
        src_mask=_pad_cols(plain.src_mask, 5, False),
        tgt_in=_pad_cols(plain.tgt_in, 4, PAD_ID),
        tgt_out=_pad_cols(plain.tgt_out, 4, PAD_ID),
        tgt_mask=_pad_cols(plain.tgt_mask, 4, False),
    )
    with torch.no_grad():
        la = tiny_model.forward(plain, train=False)
        lb = tiny_model.forward(padded, train=False)
    assert torch.allclose(la, lb[:, : la.shape[1]], atol=1e-6)


def test_batch_composition_does_not_change_logits(tiny_model):
    a = [[10, 11, EOS_ID]]
    b = [[30, 31, 32, 33, EOS_ID]]
    ta, tb = [[20, EOS_ID]], [[40, 41, 42, EOS_ID]]
    with torch.no_grad():
        alone = tiny_model.forward(make_batch(a, ta), train=False)
        together = tiny_model.forward(make_batch(a + b, ta + tb), train=False)
    assert torch.allclose(alone[0, :2], together[0, :2], atol=1e-6)


def test_forward_rejects_bad_ids(tiny_model, tiny_config):
    with pytest.raises(InvalidInputError):
        tiny_model.forward(make_batch([[VOCAB_SIZE]], [[20, EOS_ID]]), train=False)
    too_long = [[10] * (tiny_config.max_src_len + 1) + [EOS_ID]]
    with pytest.raises(InvalidInputError):
        tiny_model.forward(make_batch(too_long, [[20, EOS_ID]]), train=False)


def test_cross_entropy_rejects_all_masked(tiny_model):
    batch = make_batch([[10, EOS_ID]], [[20, EOS_ID]])
    logits = tiny_model.forward(batch, train=False)
    with pytest.raises(DegenerateBatchError):
        cross_entropy_loss(logits, batch.tgt_out, torch.zeros_like(batch.tgt_mask))


def test_loss_and_grads_covers_every_tensor(tiny_model):
    batch = make_batch([[10, 11, EOS_ID]], [[20, 21, EOS_ID]])
    loss, count, grads = loss_and_grads(tiny_model, batch)
    assert count == 3
    assert math.isfinite(loss)
    assert set(grads) == set(tiny_model.named_tensors())
    assert all(torch.isfinite(g).all() for g in grads.values())


def test_dropout_is_seeded(tiny_config):
    cfg_dict = tiny_config.to_dict()
    cfg_dict["dropout"] = 0.2
    model = init_params(ModelConfig.from_dict(cfg_dict), seed=0)
    batch = make_batch([[10, 11, EOS_ID]], [[20, 21, EOS_ID]])
    torch.manual_seed(42)
    a = model.forward(batch, train=True)
    torch.manual_seed(42)
    b = model.forward(batch, train=True)
    assert torch.equal(a, b)
    torch.manual_seed(43)
    c = model.forward(batch, train=True)
    assert not torch.equal(a, c)


def test_shared_embedding_ties_output_head(tiny_model, tiny_config):
    # output logits are the decoder state projected onto the input
    # embedding table, rescaled by 1/sqrt(d)
    src = torch.tensor([[10, EOS_ID]])
    mask = torch.ones_like(src, dtype=torch.bool)
    tgt_in = torch.tensor([[2, 20]])
    with torch.no_grad():
        enc = tiny_model.encode(src, mask, train=False)
        logits = tiny_model.decode(enc, mask, tgt_in, train=False)
    assert logits.shape == (1, 2, VOCAB_SIZE)
    with torch.no_grad():
        tiny_model.embedding[57].add_(1.0)
        bumped = tiny_model.decode(enc, mask, tgt_in, train=False)
        tiny_model.embedding[57].sub_(1.0)
    delta = (bumped - logits).abs()
    assert delta[..., :57].max() == 0
    assert delta[..., 58:].max() == 0
    assert delta[..., 57].min() > 0
