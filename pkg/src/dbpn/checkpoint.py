"""Little-endian chunked checkpoint files.

Layout::

    b"DBPN"                      magic
    u32 version
    u32 n, n bytes               NetworkConfig as UTF-8 JSON
    u32 n, n bytes               training state as UTF-8 JSON (may be "{}")
    u32 block count
    per block:
        u32 n, n bytes           parameter name
        u8  width                bytes per value: 4 (float32) or 8 (float64)
        u32 rank, rank * u32     shape
        raw values               little-endian, C order

Adam moment buffers are stored as extra blocks named ``adam.m/<param>`` and
``adam.v/<param>``.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import DbpnNetwork, NetworkConfig, build
from .optim import Adam

MAGIC = b"DBPN"
VERSION = 1


class CheckpointError(ValueError):
    """Raised for files that are not compatible DBPN checkpoints."""


@dataclass
class Checkpoint:
    net: DbpnNetwork
    train_state: dict = field(default_factory=dict)
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)

    def restore_optimizer(self, opt: Adam) -> None:
        """Copy saved moments and step counters into ``opt`` (built over ``self.net``)."""
        if not self.adam_m:
            return
        st = self.train_state.get("adam", {})
        for i, p in enumerate(opt.params):
            opt.state.m[i][...] = self.adam_m[p.name]
            opt.state.v[i][...] = self.adam_v[p.name]
        opt.state.t = int(st.get("t", 0))
        opt.state.lr = float(st.get("lr", opt.state.lr))
        opt.state.beta1 = float(st.get("beta1", opt.state.beta1))
        opt.state.beta2 = float(st.get("beta2", opt.state.beta2))
        opt.state.eps = float(st.get("eps", opt.state.eps))


def _write_bytes(buf, data: bytes) -> None:
    buf.write(struct.pack("<I", len(data)))
    buf.write(data)


def _write_block(buf, name: str, arr: np.ndarray) -> None:
    width = arr.dtype.itemsize
    if arr.dtype.kind != "f" or width not in (4, 8):
        raise TypeError(f"{name}: cannot store dtype {arr.dtype}")
    _write_bytes(buf, name.encode("utf-8"))
    buf.write(struct.pack("<B", width))
    buf.write(struct.pack("<I", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def save_checkpoint(path, net: DbpnNetwork, optimizer: Adam | None = None, train_state: dict | None = None) -> None:
    state = dict(train_state or {})
    blocks: list[tuple[str, np.ndarray]] = [(name, p.data) for name, p in net.named_parameters()]
    if optimizer is not None:
        s = optimizer.state
        state["adam"] = {"t": s.t, "lr": s.lr, "beta1": s.beta1, "beta2": s.beta2, "eps": s.eps}
        for p, m, v in zip(optimizer.params, s.m, s.v):
            blocks.append((f"adam.m/{p.name}", m))
            blocks.append((f"adam.v/{p.name}", v))
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    _write_bytes(buf, json.dumps(net.config.to_dict(), sort_keys=True).encode("utf-8"))
    _write_bytes(buf, json.dumps(state, sort_keys=True).encode("utf-8"))
    buf.write(struct.pack("<I", len(blocks)))
    for name, arr in blocks:
        _write_block(buf, name, arr)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint; nothing is constructed unless the whole file parses."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    r = _Reader(path.read_bytes(), path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a DBPN checkpoint (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version} is not supported (expected {VERSION})")
    try:
        config = NetworkConfig.from_dict(json.loads(r.blob().decode("utf-8")))
        state = json.loads(r.blob().decode("utf-8"))
    except (ValueError, TypeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    blocks: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.blob().decode("utf-8")
        width = struct.unpack("<B", r.take(1))[0]
        if width not in (4, 8):
            raise CheckpointError(f"{path}: block {name} has unsupported value width {width}")
        rank = r.u32()
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank))
        count = int(np.prod(shape, dtype=np.int64))
        dt = np.dtype("<f4" if width == 4 else "<f8")
        blocks[name] = np.frombuffer(r.take(count * width), dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    if r.pos != len(r.data):
        raise CheckpointError(f"{path}: trailing bytes after last block")

    params = {k: v for k, v in blocks.items() if not k.startswith("adam.")}
    dtype = next(iter(params.values())).dtype if params else np.float32
    net = build(config, seed=0, dtype=dtype.type)
    named = dict(net.named_parameters())
    if set(named) != set(params):
        missing = sorted(set(named) - set(params))[:3]
        extra = sorted(set(params) - set(named))[:3]
        raise CheckpointError(f"{path}: parameter set mismatch (missing {missing}, unexpected {extra})")
    for name, p in named.items():
        if params[name].shape != p.shape:
            raise CheckpointError(f"{path}: {name} has shape {params[name].shape}, expected {p.shape}")
    for name, p in named.items():
        p.data[...] = params[name]
    first = {k[len("adam.m/") :]: arr for k, arr in blocks.items() if k.startswith("adam.m/")}
    second = {k[len("adam.v/") :]: arr for k, arr in blocks.items() if k.startswith("adam.v/")}
    return Checkpoint(net, state, first, second)
