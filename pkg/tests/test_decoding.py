import pytest
import torch

from byteg2p.codec import EOS_ID, LanguageTag, VOCAB_SIZE, decode, encode
from byteg2p.decoding import (
    Candidate,
    DecodeConfig,
    batch_decode,
    beam_search,
    greedy_decode,
    greedy_decode_batch,
    sequence_log_prob,
)
from byteg2p.errors import ConfigError, G2PError, InvalidInputError

CFG3 = DecodeConfig(beam_size=3, max_len=8)


def _srcs(*words, tag=None):
    return [encode(w, tag) for w in words]


def test_config_validation():
    with pytest.raises(ConfigError):
        DecodeConfig(beam_size=0)
    with pytest.raises(ConfigError):
        DecodeConfig(max_len=0)
    with pytest.raises(ConfigError):
        DecodeConfig(length_penalty=-0.5)
    with pytest.raises(ConfigError):
        DecodeConfig(beam_size=2.0)


def test_beam_returns_sorted_distinct_candidates(tiny_model):
    cands = beam_search(tiny_model, encode("cat"), CFG3)
    assert 1 <= len(cands) <= 3
    assert all(isinstance(c, Candidate) for c in cands)
    scores = [c.score for c in cands]
    assert scores == sorted(scores, reverse=True)
    assert len({c.ids for c in cands}) == len(cands)


def test_greedy_equals_beam_one(tiny_model):
    for word in ["cat", "xylophone", "ab"]:
        src = encode(word)
        g = greedy_decode(tiny_model, src, DecodeConfig(beam_size=1, max_len=8))
        b = beam_search(tiny_model, src, DecodeConfig(beam_size=1, max_len=8))[0]
        assert g.ids == b.ids
        assert g.log_prob == pytest.approx(b.log_prob, abs=1e-6)


def test_candidate_log_prob_matches_teacher_forcing(tiny_model):
    for c in beam_search(tiny_model, encode("dog"), CFG3):
        if not c.finished:
            continue
        assert c.ids[-1] == EOS_ID
        want = sequence_log_prob(tiny_model, encode("dog"), list(c.ids))
        assert c.log_prob == pytest.approx(want, abs=1e-5)


def test_candidate_text_is_decoded_ids(tiny_model):
    for c in beam_search(tiny_model, encode("pie"), CFG3):
        text, lossy = decode(list(c.ids))
        assert (c.text, c.lossy) == (text, lossy)


def test_score_applies_length_penalty(tiny_model):
    cfg = DecodeConfig(beam_size=2, max_len=6, length_penalty=0.6)
    for c in beam_search(tiny_model, encode("cab"), cfg):
        assert c.score == pytest.approx(c.log_prob / len(c.ids) ** 0.6, rel=1e-12)
    for c in beam_search(tiny_model, encode("cab"), CFG3):
        assert c.score == c.log_prob


def test_two_runs_are_identical(tiny_model):
    a = beam_search(tiny_model, encode("tie"), CFG3)
    b = beam_search(tiny_model, encode("tie"), CFG3)
    assert [(c.ids, c.log_prob, c.score) for c in a] == [
        (c.ids, c.log_prob, c.score) for c in b
    ]


def test_batch_of_one_matches_single(tiny_model):
    src = encode("solo", LanguageTag("alpha"))
    single = beam_search(tiny_model, src, CFG3)
    [batched] = batch_decode(tiny_model, [src], CFG3)
    assert [c.ids for c in single] == [c.ids for c in batched]
    for a, b in zip(single, batched):
        assert a.log_prob == pytest.approx(b.log_prob, abs=1e-6)


def test_batch_is_composition_invariant(tiny_model):
    words = ["cat", "dog", "pig"]  # equal lengths keep padding identical
    srcs = _srcs(*words)
    full = batch_decode(tiny_model, srcs, CFG3)
    perm = batch_decode(tiny_model, [srcs[2], srcs[0], srcs[1]], CFG3)
    assert [c.ids for c in full[0]] == [c.ids for c in perm[1]]
    assert [c.ids for c in full[2]] == [c.ids for c in perm[0]]
    for a, b in zip(full[1], perm[2]):
        assert a.log_prob == pytest.approx(b.log_prob, abs=1e-6)


def test_mixed_lengths_match_individual_decodes(tiny_model):
    srcs = _srcs("a", "abcdefgh", "xyz")
    batched = batch_decode(tiny_model, srcs, CFG3)
    for src, got in zip(srcs, batched):
        alone = beam_search(tiny_model, src, CFG3)
        assert [c.ids for c in alone] == [c.ids for c in got]
        for a, b in zip(alone, got):
            assert a.log_prob == pytest.approx(b.log_prob, abs=1e-4)


def test_bad_sources_fail_per_index(tiny_model):
    good = encode("ok")
    batch = [good, [], good, [VOCAB_SIZE + 7], [5] * 200]
    out = batch_decode(tiny_model, batch, CFG3)
    assert isinstance(out[0], list) and isinstance(out[2], list)
    assert [c.ids for c in out[0]] == [c.ids for c in out[2]]
    assert isinstance(out[1], G2PError) and "1" in str(out[1])
    assert isinstance(out[3], G2PError)
    assert isinstance(out[4], G2PError) and "200" in str(out[4])


def test_all_bad_batch_returns_only_errors(tiny_model):
    out = batch_decode(tiny_model, [[], [VOCAB_SIZE]], CFG3)
    assert all(isinstance(e, G2PError) for e in out)


def test_empty_batch_rejected(tiny_model):
    with pytest.raises(InvalidInputError):
        batch_decode(tiny_model, [], CFG3)
    with pytest.raises(InvalidInputError):
        beam_search(tiny_model, [], CFG3)


def test_truncation_respects_max_len(tiny_model):
    cfg = DecodeConfig(beam_size=2, max_len=1)
    for c in beam_search(tiny_model, encode("long"), cfg):
        assert len(c.ids) == 1
        assert c.finished == (c.ids[-1] == EOS_ID)
    huge = DecodeConfig(beam_size=2, max_len=10_000)
    for c in beam_search(tiny_model, encode("long"), huge):
        assert len(c.ids) <= tiny_model.config.max_tgt_len


def test_greedy_batch_mirrors_greedy(tiny_model):
    srcs = [encode("one"), [], encode("two")]
    out = greedy_decode_batch(tiny_model, srcs, DecodeConfig(beam_size=1, max_len=8))
    assert isinstance(out[1], G2PError)
    for i in (0, 2):
        alone = greedy_decode(tiny_model, srcs[i], DecodeConfig(beam_size=1, max_len=8))
        assert out[i].ids == alone.ids


def test_sequence_log_prob_requires_eos(tiny_model):
    src = encode("word")
    with pytest.raises(InvalidInputError):
        sequence_log_prob(tiny_model, src, [70, 71])
    with pytest.raises(InvalidInputError):
        sequence_log_prob(tiny_model, src, [])
    got = sequence_log_prob(tiny_model, src, [70, 71, EOS_ID])
    assert got < 0.0


def test_sequence_log_prob_sums_stepwise_terms(tiny_model):
    # chain rule: score of [a, EOS] is the sum of per-step conditionals
    src = encode("sum")
    from byteg2p.model import make_batch

    target = [70, 75, EOS_ID]
    batch = make_batch([src], [target])
    with torch.no_grad():
        logits = tiny_model.forward(batch, train=False)
        logp = torch.log_softmax(logits, dim=-1)
    want = sum(logp[0, t, tok].item() for t, tok in enumerate(target))
    assert sequence_log_prob(tiny_model, src, target) == pytest.approx(want, abs=1e-5)
