"""Versioned binary container for models and adaptation runs.

Layout (all integers little-endian)::

    magic      8 bytes   b"CLTTACK\\x00"
    version    uint32    FORMAT_VERSION
    hlen       uint32    length of the JSON header in bytes
    header     hlen      UTF-8 JSON, sorted keys: {"kind", "meta", "tensors": [{"name", "shape"}, ...]}
    payload    ...       every tensor as float64 '<f8', row-major, in header order
    crc32      uint32    zlib.crc32 of everything above

The same bytes come out for the same inputs, so checkpoints can be diffed.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from .bank import MemoryBank
from .netcore import Adam, BatchNorm, MlpModel

MAGIC = b"CLTTACK\x00"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_container(path, kind: str, meta: dict, tensors: Dict[str, np.ndarray]) -> None:
    entries = [{"name": n, "shape": list(np.shape(t))} for n, t in tensors.items()]
    header = json.dumps({"kind": kind, "meta": meta, "tensors": entries}, sort_keys=True).encode()
    body = bytearray(MAGIC)
    body += struct.pack("<II", FORMAT_VERSION, len(header))
    body += header
    for t in tensors.values():
        body += np.ascontiguousarray(t, dtype="<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(body))
    atomic_write_bytes(path, bytes(body))


def read_container(path) -> Tuple[str, dict, Dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 12 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) != crc:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupted or truncated")
    version, hlen = struct.unpack("<II", raw[len(MAGIC):len(MAGIC) + 8])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    start = len(MAGIC) + 8
    try:
        header = json.loads(raw[start:start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header") from exc
    offset = start + hlen
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(raw) - 4:
            raise CheckpointError(f"{path}: payload shorter than header declares")
        tensors[entry["name"]] = np.frombuffer(raw, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw) - 4:
        raise CheckpointError(f"{path}: {len(raw) - 4 - offset} trailing bytes after payload")
    return header["kind"], header["meta"], tensors


def save_model(path, model: MlpModel, meta: dict = None) -> None:
    info = {"dims": model.dims, "seed": model.seed,
            "momentum": [bn.momentum for bn in model.norms], **(meta or {})}
    write_container(path, "model", info, model.state_arrays())


def _model_from(meta: dict, tensors: Dict[str, np.ndarray], path) -> MlpModel:
    dims = [int(d) for d in meta["dims"]]
    n_layers = len(dims) - 1
    try:
        weights = [tensors[f"fc{k}.weight"] for k in range(n_layers)]
        biases = [tensors[f"fc{k}.bias"] for k in range(n_layers)]
        norms = [BatchNorm(tensors[f"bn{k}.gamma"], tensors[f"bn{k}.beta"], tensors[f"bn{k}.running_mean"],
                           tensors[f"bn{k}.running_var"], meta["momentum"][k]) for k in range(n_layers - 1)]
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing tensor {exc}") from exc
    for k, w in enumerate(weights):
        if w.shape != (dims[k], dims[k + 1]):
            raise CheckpointError(f"{path}: fc{k}.weight has shape {w.shape}, dims say {(dims[k], dims[k + 1])}")
    return MlpModel(dims, weights, biases, norms, seed=int(meta["seed"]))


def load_model(path) -> Tuple[MlpModel, dict]:
    kind, meta, tensors = read_container(path)
    if kind != "model":
        raise CheckpointError(f"{path}: expected a model checkpoint, found {kind!r}")
    return _model_from(meta, tensors, path), meta


def save_run(path, model: MlpModel, optimizer: Adam, bank: MemoryBank, meta: dict = None) -> None:
    """Model, optimizer moments and memory bank in one container."""
    tensors = dict(model.state_arrays())
    for name in sorted(optimizer.m):
        tensors[f"adam.m.{name}"] = optimizer.m[name]
        tensors[f"adam.v.{name}"] = optimizer.v[name]
    tensors["bank.rows"] = bank.rows
    info = {"dims": model.dims, "seed": model.seed, "momentum": [bn.momentum for bn in model.norms],
            "adam": {"lr": optimizer.lr, "beta1": optimizer.beta1, "beta2": optimizer.beta2,
                     "eps": optimizer.eps, "step": optimizer.step_count},
            "bank_capacity": bank.capacity, **(meta or {})}
    write_container(path, "run", info, tensors)


def load_run(path) -> Tuple[MlpModel, Adam, MemoryBank, dict]:
    kind, meta, tensors = read_container(path)
    if kind != "run":
        raise CheckpointError(f"{path}: expected a run checkpoint, found {kind!r}")
    model = _model_from(meta, tensors, path)
    a = meta["adam"]
    opt = Adam(a["lr"], a["beta1"], a["beta2"], a["eps"])
    opt.step_count = a["step"]
    for name, t in tensors.items():
        if name.startswith("adam.m."):
            opt.m[name[len("adam.m."):]] = t
        elif name.startswith("adam.v."):
            opt.v[name[len("adam.v."):]] = t
    bank = MemoryBank(model.n_classes, meta["bank_capacity"])
    bank.rows = tensors["bank.rows"].reshape(-1, model.n_classes)
    return model, opt, bank, meta
