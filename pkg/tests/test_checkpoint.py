import json
import os
import struct
import zlib

import numpy as np
import pytest
import torch

from byteg2p.checkpoint import (
    load_model,
    load_optimizer,
    save_model,
    save_optimizer,
)
from byteg2p.errors import CheckpointError
from byteg2p.model import init_params, make_batch, loss_and_grads
from byteg2p.optim import AdamWConfig, AdamWState, adamw_step


def _parse_container(path):
    """Independent reader for the container layout: magic, u32 LE
    version, u64 LE header length, JSON header with a tensor directory,
    packed little-endian float32 payloads, trailing CRC-32."""
    blob = open(path, "rb").read()
    assert blob[:4] == b"CG2P"
    (version,) = struct.unpack("<I", blob[4:8])
    assert version == 1
    (crc,) = struct.unpack("<I", blob[-4:])
    assert crc == zlib.crc32(blob[:-4])
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + hlen])
    offset = 16 + hlen
    tensors = {}
    for entry in header["tensors"]:
        n = entry["numel"]
        assert entry["dtype"] == "float32"
        assert n == int(np.prod(entry["shape"])) if entry["shape"] else 1
        raw = blob[offset : offset + 4 * n]
        tensors[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"])
        offset += 4 * n
    assert offset == len(blob) - 4
    return header, tensors


def _rewrite_header(path, mutate):
    blob = open(path, "rb").read()
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + hlen])
    mutate(header)
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    body = blob[:8] + struct.pack("<Q", len(hb)) + hb + blob[16 + hlen : -4]
    body += struct.pack("<I", zlib.crc32(body))
    open(path, "wb").write(body)


def _opt_state(model):
    batch = make_batch([[10, 11, 4]], [[20, 21, 1]])
    state = AdamWState.for_params(model.named_tensors())
    cfg = AdamWConfig(lr=1e-3)
    for _ in range(2):
        _, _, grads = loss_and_grads(model, batch)
        adamw_step(model.named_tensors(), grads, state, cfg)
    return state


def test_model_roundtrip_is_bit_exact(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=7)
    path = str(tmp_path / "m.cg2p")
    save_model(path, model, step=123)
    loaded, header = load_model(path)
    assert header["step"] == 123
    assert loaded.config == tiny_config
    for name, p in model.named_tensors().items():
        assert torch.equal(p, loaded.named_tensors()[name]), name
    assert not os.path.exists(path + ".tmp")


def test_layout_matches_independent_parser(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=1)
    path = str(tmp_path / "m.cg2p")
    save_model(path, model, step=5, train_config={"seed": 3})
    header, tensors = _parse_container(path)
    assert header["kind"] == "model"
    assert header["step"] == 5
    assert header["train_config"] == {"seed": 3}
    named = model.named_tensors()
    assert set(tensors) == set(named)
    assert [e["name"] for e in header["tensors"]] == sorted(named)
    for name, arr in tensors.items():
        assert np.array_equal(arr, named[name].detach().numpy())


def test_train_config_roundtrips(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=2)
    path = str(tmp_path / "m.cg2p")
    tc = {"seed": 9, "learning_rate": 0.001, "epochs": 4}
    save_model(path, model, step=1, train_config=tc)
    _, header = load_model(path)
    assert header["train_config"] == tc


def test_optimizer_roundtrip(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=3)
    state = _opt_state(model)
    path = str(tmp_path / "o.cg2p")
    save_optimizer(path, state, step=2)
    loaded = load_optimizer(path, model.named_tensors())
    assert loaded.step == 2
    for name in state.m:
        assert torch.equal(loaded.m[name], state.m[name])
        assert torch.equal(loaded.v[name], state.v[name])
    assert any(state.v[n].abs().sum() > 0 for n in state.v)


def test_resave_overwrites_atomically(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=0)
    path = str(tmp_path / "m.cg2p")
    save_model(path, model, step=1)
    save_model(path, model, step=2)
    _, header = load_model(path)
    assert header["step"] == 2


def test_wrong_kind_is_rejected(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=0)
    mpath, opath = str(tmp_path / "m.cg2p"), str(tmp_path / "o.cg2p")
    save_model(mpath, model, step=0)
    save_optimizer(opath, _opt_state(model), step=0)
    with pytest.raises(CheckpointError, match="not a model"):
        load_model(opath)
    with pytest.raises(CheckpointError, match="not an optimizer"):
        load_optimizer(mpath, model.named_tensors())


def test_numel_shape_disagreement_detected(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=0)
    path = str(tmp_path / "m.cg2p")
    save_model(path, model, step=0)

    def bump_numel(header):
        header["tensors"][0]["numel"] += 1

    _rewrite_header(path, bump_numel)
    with pytest.raises(CheckpointError, match="elements"):
        load_model(path)


def test_config_tensor_shape_mismatch_detected(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=0)
    path = str(tmp_path / "m.cg2p")
    save_model(path, model, step=0)

    def shrink_buckets(header):
        header["model_config"]["rel_pos_buckets"] = 16

    _rewrite_header(path, shrink_buckets)
    with pytest.raises(CheckpointError, match="shape"):
        load_model(path)


def test_missing_tensor_detected(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=0)
    path = str(tmp_path / "m.cg2p")
    save_model(path, model, step=0)
    blob = open(path, "rb").read()
    (hlen,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + hlen])
    dropped = header["tensors"].pop()
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = blob[16 + hlen : -4]
    payload = payload[: len(payload) - 4 * dropped["numel"]]
    body = blob[:8] + struct.pack("<Q", len(hb)) + hb + payload
    body += struct.pack("<I", zlib.crc32(body))
    open(path, "wb").write(body)
    with pytest.raises(CheckpointError, match="missing"):
        load_model(path)


def test_single_byte_corruption_always_detected(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=0)
    path = str(tmp_path / "m.cg2p")
    save_model(path, model, step=0)
    blob = bytearray(open(path, "rb").read())
    rng = np.random.default_rng(0)
    positions = rng.choice(len(blob), size=48, replace=False)
    for pos in positions.tolist():
        corrupted = bytearray(blob)
        corrupted[pos] ^= 0x5A
        open(path, "wb").write(bytes(corrupted))
        with pytest.raises(CheckpointError):
            load_model(path)


def test_truncation_detected(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=0)
    path = str(tmp_path / "m.cg2p")
    save_model(path, model, step=0)
    blob = open(path, "rb").read()
    for cut in (10, len(blob) // 2, len(blob) - 1):
        open(path, "wb").write(blob[:cut])
        with pytest.raises(CheckpointError):
            load_model(path)


def test_trailing_bytes_detected(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=0)
    path = str(tmp_path / "m.cg2p")
    save_model(path, model, step=0)
    blob = open(path, "rb").read()
    body = blob[:-4] + b"\x00\x00\x00\x00"
    body += struct.pack("<I", zlib.crc32(body))
    open(path, "wb").write(body)
    with pytest.raises(CheckpointError, match="trailing"):
        load_model(path)


def test_nonfinite_tensor_refused_on_save(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=0)
    with torch.no_grad():
        model.embedding[0, 0] = float("nan")
    path = str(tmp_path / "m.cg2p")
    with pytest.raises(CheckpointError, match="non-finite"):
        save_model(path, model, step=0)
    assert not os.path.exists(path)
    assert not os.path.exists(path + ".tmp")


def test_nonfinite_payload_refused_on_load(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=0)
    path = str(tmp_path / "m.cg2p")
    save_model(path, model, step=0)
    blob = bytearray(open(path, "rb").read())
    (hlen,) = struct.unpack("<Q", blob[8:16])
    inf = struct.pack("<f", float("inf"))
    start = 16 + hlen
    blob[start : start + 4] = inf
    body = bytes(blob[:-4])
    body += struct.pack("<I", zlib.crc32(body))
    open(path, "wb").write(body)
    with pytest.raises(CheckpointError, match="non-finite"):
        load_model(path)


def test_optimizer_coverage_checked(tiny_config, tmp_path):
    model = init_params(tiny_config, seed=0)
    state = _opt_state(model)
    dropped = sorted(state.m)[0]
    del state.m[dropped]
    del state.v[dropped]
    path = str(tmp_path / "o.cg2p")
    save_optimizer(path, state, step=1)
    with pytest.raises(CheckpointError, match="cover"):
        load_optimizer(path, model.named_tensors())
