"""Binary snapshots of a :class:`~awrascle.solver.State`.

Layout: a 40-byte little-endian header followed by ``(1 + dim)`` arrays of
``grid_points**dim`` float64 values (rho, then each w component), each laid
out with the first axis varying fastest.

======  ======  =====================================
offset  type    field
======  ======  =====================================
0       5s      magic ``b"ARMV1"``
5       u8      format version
6       u8      dim
7       u8      padding (zero)
8       u32     grid_points
12      f64     gamma
20      f64     t
28      12x     reserved (zero)
======  ======  =====================================
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .solver import State

__all__ = ["MAGIC", "VERSION", "HEADER", "SnapshotError", "write_snapshot", "read_snapshot", "is_snapshot"]

MAGIC = b"ARMV1"
VERSION = 1
HEADER = struct.Struct("<5sBBBIdd12x")
_F64 = np.dtype("<f8")


class SnapshotError(OSError):
    pass


def encode(state: State) -> bytes:
    header = HEADER.pack(MAGIC, VERSION, state.dim, 0, state.points, float(state.gamma), float(state.t))
    fields = [state.rho] + list(state.w)
    return header + b"".join(np.asarray(f, dtype=_F64).ravel(order="F").tobytes() for f in fields)


def decode(data: bytes, source: str = "<bytes>") -> State:
    if len(data) < HEADER.size:
        raise SnapshotError(f"{source}: truncated header ({len(data)} bytes)")
    magic, version, dim, _, points, gamma, t = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"{source}: unsupported version {version}")
    if dim not in (1, 2, 3) or points < 1:
        raise SnapshotError(f"{source}: invalid header (dim={dim}, grid_points={points})")
    count = points**dim
    expected = HEADER.size + (1 + dim) * count * _F64.itemsize
    if len(data) != expected:
        raise SnapshotError(f"{source}: payload length {len(data)} does not match header (expected {expected})")
    flat = np.frombuffer(data, dtype=_F64, offset=HEADER.size).astype(float)
    shape = (points,) * dim
    arrays = [flat[i * count : (i + 1) * count].reshape(shape, order="F") for i in range(1 + dim)]
    return State(t, arrays[0], np.stack(arrays[1:]), gamma)


def write_snapshot(path, state: State) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(encode(state))
    os.replace(tmp, path)


def read_snapshot(path) -> State:
    with open(path, "rb") as fh:
        return decode(fh.read(), str(path))


def is_snapshot(path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(len(MAGIC)) == MAGIC
    except OSError:
        return False
