"""Binary checkpoint format for parameter stores.

Layout (all integers little-endian):

    magic   4 bytes  b"BTMU"
    version u32      currently 1
    prec    u8       0 = float32, 1 = float64
    step    u64      iterations completed
    total   u64      configured total iteration count
    count   u32      number of records
    records, each:
        name_len u16, name utf-8 bytes
        ndim     u8,  extents u32 * ndim
        elements little-endian IEEE-754 (f32 or f64 per `prec`)

Parameter records come first (sorted by name), then momentum buffers under
``opt/momentum/<name>`` (sorted), so identical stores serialize to identical
bytes and save -> load -> save round-trips are byte-exact.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import CheckpointError, ConfigError
from .params import ParamStore

MAGIC = b"BTMU"
VERSION = 1
_MOMENTUM_PREFIX = "opt/momentum/"


def _pack_record(name, arr, dtype_code):
    encoded = name.encode("utf-8")
    parts = [struct.pack("<H", len(encoded)), encoded, struct.pack("<B", arr.ndim)]
    parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
    parts.append(np.ascontiguousarray(arr, dtype=dtype_code).tobytes())
    return b"".join(parts)


def serialize(store: ParamStore) -> bytes:
    prec = 1 if store.dtype == np.dtype(np.float64) else 0
    dtype_code = "<f8" if prec else "<f4"
    names = store.names()
    head = MAGIC + struct.pack("<IBQQI", VERSION, prec, store.step,
                               store.iter_total, 2 * len(names))
    body = [head]
    for name in names:
        body.append(_pack_record(name, store[name].data, dtype_code))
    for name in names:
        body.append(_pack_record(_MOMENTUM_PREFIX + name, store.momentum[name], dtype_code))
    return b"".join(body)


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.path = path
        self.pos = 0

    def read(self, n, what):
        if self.pos + n > len(self.blob):
            raise CheckpointError(
                f"{self.path}: truncated checkpoint — needed {n} bytes for "
                f"{what} at offset {self.pos}, file has {len(self.blob)}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.read(struct.calcsize(fmt), what))


def deserialize(blob: bytes, path="<bytes>") -> ParamStore:
    r = _Reader(blob, path)
    if r.read(4, "magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic at offset 0 — not a checkpoint file")
    version, prec, step, iter_total, count = r.unpack("<IBQQI", "header")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if prec not in (0, 1):
        raise CheckpointError(f"{path}: bad precision flag {prec}")
    dtype = np.float64 if prec else np.float32
    dtype_code = "<f8" if prec else "<f4"
    itemsize = 8 if prec else 4

    store = ParamStore(dtype)
    store.step = step
    store.iter_total = iter_total
    for i in range(count):
        (name_len,) = r.unpack("<H", f"record {i} name length")
        name = r.read(name_len, f"record {i} name").decode("utf-8")
        (ndim,) = r.unpack("<B", f"'{name}' ndim")
        shape = r.unpack(f"<{ndim}I", f"'{name}' shape") if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        raw = r.read(size * itemsize, f"'{name}' elements")
        arr = np.frombuffer(raw, dtype=dtype_code).reshape(shape).astype(dtype)
        if name.startswith(_MOMENTUM_PREFIX):
            target = name[len(_MOMENTUM_PREFIX):]
            if target not in store:
                raise CheckpointError(f"{path}: momentum for unknown parameter '{target}'")
            if store[target].data.shape != arr.shape:
                raise CheckpointError(f"{path}: momentum shape mismatch for '{target}'")
            store.momentum[target] = arr
        else:
            store.add(name, arr)
    if r.pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - r.pos} trailing bytes at offset {r.pos}")
    return store


def save_checkpoint(store: ParamStore, path):
    try:
        with open(path, "wb") as fh:
            fh.write(serialize(store))
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> ParamStore:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return deserialize(blob, str(path))


def check_shapes(store: ParamStore, expected: dict):
    """Raise ConfigError naming every parameter whose shape disagrees."""
    problems = []
    for name in sorted(set(expected) | set(store.names())):
        if name not in store:
            problems.append(f"{name}: missing from checkpoint")
        elif name not in expected:
            problems.append(f"{name}: not in current model")
        elif tuple(store[name].data.shape) != tuple(expected[name]):
            problems.append(
                f"{name}: checkpoint {tuple(store[name].data.shape)} vs model {tuple(expected[name])}")
    if problems:
        raise ConfigError("checkpoint incompatible with model config: " + "; ".join(problems))
