"""Deterministic binary checkpoints.

Layout (little-endian):
    magic "VGCK" | version u8 | header_len u32 | header (UTF-8 JSON, sorted keys) | arrays

The header records the model config, the optimizer step, free-form metadata
and the name and shape of every array; the arrays follow as raw float64 in
header order.  Identical state always produces identical bytes.
"""
import json
import struct

import numpy as np

from .model import ModelConfig, ModelState
from .optim import AdamState

MAGIC = b"VGCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _sections(state, opt):
    yield "param", state.params
    yield "buffer", state.buffers
    if opt is not None:
        yield "adam_m", opt.m
        yield "adam_v", opt.v


def dumps(state, opt=None, meta=None):
    entries, blobs = [], []
    for kind, arrays in _sections(state, opt):
        for name, arr in arrays.items():
            a = np.ascontiguousarray(arr, dtype="<f8")
            entries.append([kind, name, list(a.shape)])
            blobs.append(a.tobytes())
    header = {"config": state.config.to_dict(), "arrays": entries,
              "adam_step": None if opt is None else opt.step, "meta": meta or {}}
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<BI", VERSION, len(hb)) + hb + b"".join(blobs)


def loads(data):
    if data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if len(data) < 9:
        raise CheckpointError("truncated checkpoint header")
    version, hlen = struct.unpack_from("<BI", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(data[9:9 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    cfg = ModelConfig.from_dict(header["config"])
    pos = 9 + hlen
    out = {"param": {}, "buffer": {}, "adam_m": {}, "adam_v": {}}
    for kind, name, shape in header["arrays"]:
        n = int(np.prod(shape, dtype=np.int64)) * 8
        if pos + n > len(data):
            raise CheckpointError("truncated checkpoint data")
        out[kind][name] = np.frombuffer(data, "<f8", n // 8, pos).reshape(shape).astype(np.float64)
        pos += n
    if pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint data")
    state = ModelState(cfg, out["param"], out["buffer"])
    opt = None
    if header["adam_step"] is not None:
        opt = AdamState(header["adam_step"], out["adam_m"], out["adam_v"])
    return state, opt, header["meta"]


def save_checkpoint(path, state, opt=None, meta=None):
    data = dumps(state, opt, meta)
    with open(path, "wb") as f:
        f.write(data)
    return len(data)


def load_checkpoint(path):
    with open(path, "rb") as f:
        return loads(f.read())
