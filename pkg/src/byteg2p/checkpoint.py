"""Self-describing checkpoint container.

Layout: magic ``CG2P``, u32 little-endian format version, u64
little-endian header length, a UTF-8 JSON header, the tensor payloads
as float32 little-endian in header directory order, and a trailing
CRC-32 of everything before it. The header carries the model
configuration, the training step, and an ordered directory of tensor
names and shapes, so a file is loadable without outside context.
Optimizer moments live in a sibling container with ``m.`` and ``v.``
prefixed tensor names.
"""

from __future__ import annotations

import json
import os
import struct
import zlib

import numpy as np
import torch

from .errors import CheckpointError
from .model import ByteTransformer, ModelConfig
from .optim import AdamWState

MAGIC = b"CG2P"
VERSION = 1


def _write_container(path: str, header: dict, tensors: list[tuple[str, torch.Tensor]]) -> None:
    directory = []
    payloads = []
    for name, t in tensors:
        if not torch.isfinite(t).all():
            raise CheckpointError(f"refusing to write non-finite tensor {name}")
        arr = t.detach().to(torch.float32).cpu().numpy()
        directory.append(
            {"name": name, "shape": list(arr.shape), "numel": int(arr.size),
             "dtype": "float32"}
        )
        payloads.append(arr.astype("<f4", copy=False).tobytes())
    full_header = dict(header)
    full_header["tensors"] = directory
    header_bytes = json.dumps(full_header, sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<I", VERSION) + struct.pack("<Q", len(header_bytes))
    body += header_bytes + b"".join(payloads)
    body += struct.pack("<I", zlib.crc32(body))
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(body)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def _read_container(path: str) -> tuple[dict, dict[str, torch.Tensor]]:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < 20:
        raise CheckpointError(f"{path}: truncated container")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported container version {version}")
    (crc_stored,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) != crc_stored:
        raise CheckpointError(f"{path}: CRC mismatch, file is corrupt")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    header_end = 16 + header_len
    if header_end > len(blob) - 4:
        raise CheckpointError(f"{path}: header length exceeds file size")
    try:
        header = json.loads(blob[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    if not isinstance(header.get("tensors"), list):
        raise CheckpointError(f"{path}: header has no tensor directory")
    tensors: dict[str, torch.Tensor] = {}
    offset = header_end
    for entry in header["tensors"]:
        try:
            name, shape, numel = entry["name"], entry["shape"], int(entry["numel"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: malformed directory entry: {exc}") from exc
        if entry.get("dtype") != "float32":
            raise CheckpointError(f"{path}: tensor {name} has unsupported dtype")
        if numel != int(np.prod(shape, dtype=np.int64) if shape else 1):
            raise CheckpointError(
                f"{path}: tensor {name} directory claims {numel} elements "
                f"for shape {shape}"
            )
        end = offset + 4 * numel
        if end > len(blob) - 4:
            raise CheckpointError(f"{path}: payload truncated at tensor {name}")
        arr = np.frombuffer(blob[offset:end], dtype="<f4").reshape(shape)
        t = torch.from_numpy(arr.copy())
        if not torch.isfinite(t).all():
            raise CheckpointError(f"{path}: tensor {name} contains non-finite values")
        tensors[name] = t
        offset = end
    if offset != len(blob) - 4:
        raise CheckpointError(f"{path}: {len(blob) - 4 - offset} trailing payload bytes")
    return header, tensors


def save_model(
    path: str,
    model: ByteTransformer,
    *,
    step: int,
    train_config: dict | None = None,
) -> None:
    header = {
        "kind": "model",
        "model_config": model.config.to_dict(),
        "step": int(step),
    }
    if train_config is not None:
        header["train_config"] = train_config
    _write_container(path, header, sorted(model.named_tensors().items()))


def load_model(path: str) -> tuple[ByteTransformer, dict]:
    header, tensors = _read_container(path)
    if header.get("kind") != "model":
        raise CheckpointError(f"{path}: not a model checkpoint")
    try:
        config = ModelConfig.from_dict(header["model_config"])
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: bad model config in header: {exc}") from exc
    model = ByteTransformer(config)
    expected = dict(model.named_tensors())
    if set(expected) != set(tensors):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise CheckpointError(
            f"{path}: tensor directory mismatch (missing {missing}, unexpected {extra})"
        )
    with torch.no_grad():
        for name, param in expected.items():
            stored = tensors[name]
            if tuple(stored.shape) != tuple(param.shape):
                raise CheckpointError(
                    f"{path}: tensor {name} has shape {tuple(stored.shape)}, "
                    f"expected {tuple(param.shape)}"
                )
            param.copy_(stored)
    return model, header


def save_optimizer(path: str, state: AdamWState, *, step: int | None = None) -> None:
    tensors = []
    for name in sorted(state.m):
        tensors.append((f"m.{name}", state.m[name]))
    for name in sorted(state.v):
        tensors.append((f"v.{name}", state.v[name]))
    header = {"kind": "optimizer", "step": int(step if step is not None else state.step)}
    _write_container(path, header, tensors)


def load_optimizer(path: str, params: dict[str, torch.Tensor]) -> AdamWState:
    header, tensors = _read_container(path)
    if header.get("kind") != "optimizer":
        raise CheckpointError(f"{path}: not an optimizer checkpoint")
    m: dict[str, torch.Tensor] = {}
    v: dict[str, torch.Tensor] = {}
    for name, t in tensors.items():
        if name.startswith("m."):
            m[name[2:]] = t
        elif name.startswith("v."):
            v[name[2:]] = t
        else:
            raise CheckpointError(f"{path}: unexpected tensor {name}")
    for side, got in (("m", m), ("v", v)):
        if set(got) != set(params):
            raise CheckpointError(
                f"{path}: {side} moments do not cover the model parameters"
            )
        for name, t in got.items():
            if tuple(t.shape) != tuple(params[name].shape):
                raise CheckpointError(
                    f"{path}: moment {side}.{name} has shape {tuple(t.shape)}, "
                    f"expected {tuple(params[name].shape)}"
                )
    return AdamWState(step=int(header.get("step", 0)), m=m, v=v)
