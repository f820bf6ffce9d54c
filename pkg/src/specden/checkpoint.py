"""Training checkpoints in a small little-endian binary format.

Layout (all integers unsigned little-endian)::

    magic      8 bytes  b"SPDNCKPT"
    version    u32      (1)
    epoch      u32      last completed epoch
    seed       u64      training seed
    adam_t     u64      optimizer step counter
    cfg_len    u32      length of the UTF-8 JSON experiment config that follows
    cfg        cfg_len bytes
    count      u32      number of arrays in the shape table
    table      count x (name_len u16, name bytes, ndim u8, ndim x u32 extents)
    data       the arrays in table order as raw float64 ('<f8'), C order

Array names: ``param:<name>``, ``adam.m:<name>``, ``adam.v:<name>`` for each
parameter, and ``sn.u:<layer>``, ``sn.v:<layer>``, ``sn.s:<layer>``
(``[beta, last_estimate]``) for each spectral-norm state.

Every random draw during training comes from a counter-based generator
keyed on ``(seed, epoch, ...)``, so seed and epoch are the complete RNG
state: resuming from a checkpoint continues the run bit for bit.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .train import TrainState, init_state

MAGIC = b"SPDNCKPT"
VERSION = 1
_HEAD = struct.Struct("<8sIIQQ")


class CheckpointError(ValueError):
    pass


def _arrays(state: TrainState) -> list[tuple[str, np.ndarray]]:
    named = list(state.model.named_parameters())
    out = [(f"param:{n}", p.data) for n, p in named]
    out += [(f"adam.m:{n}", m) for (n, _), m in zip(named, state.opt.m)]
    out += [(f"adam.v:{n}", v) for (n, _), v in zip(named, state.opt.v)]
    if state.lipschitz is not None:
        for name, st in state.lipschitz.states.items():
            out += [(f"sn.u:{name}", st.u), (f"sn.v:{name}", st.v),
                    (f"sn.s:{name}", np.array([st.beta, st.last_estimate]))]
    return out


def encode(state: TrainState, cfg: ExperimentConfig) -> bytes:
    arrays = _arrays(state)
    cfg_bytes = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    parts = [_HEAD.pack(MAGIC, VERSION, state.epoch, cfg.seed, state.opt.t),
             struct.pack("<I", len(cfg_bytes)), cfg_bytes, struct.pack("<I", len(arrays))]
    for name, a in arrays:
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack(f"<B{a.ndim}I", a.ndim, *a.shape))
    for _, a in arrays:
        parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return b"".join(parts)


def decode(data: bytes) -> tuple[TrainState, ExperimentConfig]:
    if len(data) < _HEAD.size or data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    _, version, epoch, seed, adam_t = _HEAD.unpack_from(data, 0)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        off = _HEAD.size
        (cfg_len,) = struct.unpack_from("<I", data, off)
        off += 4
        cfg = ExperimentConfig.from_dict(json.loads(data[off:off + cfg_len].decode()))
        off += cfg_len
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        table = []
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off:off + nlen].decode()
            off += nlen
            (ndim,) = struct.unpack_from("<B", data, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            table.append((name, shape))
        arrays = {}
        for name, shape in table:
            n = int(np.prod(shape, dtype=np.int64))
            if off + 8 * n > len(data):
                raise CheckpointError("truncated checkpoint data")
            arrays[name] = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64).reshape(shape)
            off += 8 * n
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint: {e}") from e
    if off != len(data):
        raise CheckpointError(f"{len(data) - off} trailing bytes in checkpoint")
    if seed != cfg.seed:
        raise CheckpointError("seed in header disagrees with stored config")

    state = init_state(cfg.model, cfg.train)
    named = list(state.model.named_parameters())

    def take(key: str, like: np.ndarray) -> np.ndarray:
        if key not in arrays:
            raise CheckpointError(f"missing array {key}")
        a = arrays.pop(key)
        if a.shape != like.shape:
            raise CheckpointError(f"{key} has shape {a.shape}, expected {like.shape}")
        return a

    for i, (n, p) in enumerate(named):
        p.data = take(f"param:{n}", p.data)
        state.opt.m[i] = take(f"adam.m:{n}", p.data)
        state.opt.v[i] = take(f"adam.v:{n}", p.data)
    if state.lipschitz is not None:
        for name, st in state.lipschitz.states.items():
            st.u = take(f"sn.u:{name}", st.u)
            st.v = take(f"sn.v:{name}", st.v)
            st.beta, st.last_estimate = (float(x) for x in take(f"sn.s:{name}", np.zeros(2)))
    if arrays:
        raise CheckpointError(f"unexpected arrays in checkpoint: {sorted(arrays)[:3]}")
    state.opt.t = adam_t
    state.epoch = epoch
    return state, cfg


def save_checkpoint(path, state: TrainState, cfg: ExperimentConfig) -> None:
    Path(path).write_bytes(encode(state, cfg))


def load_checkpoint(path) -> tuple[TrainState, ExperimentConfig]:
    return decode(Path(path).read_bytes())
