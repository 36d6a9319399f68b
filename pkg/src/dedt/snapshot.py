"""Versioned binary snapshot of the committee and the auxiliary model.

Layout (little endian)::

    b"DEDT"  u16 version
    u32 C, u32 k, u32 capacity, u32 dim
    C x { u64 count, u64 next_seq,
          f64[count*dim] features, i8[count] labels, i64[count] times, i64[count] seq }
    b"AUX1"  u32 dim, f64 lambda, u32 epochs, i64 last_trained (-1: never)
    u8 has_weights, f64[dim+1] weights (if present)
    u32 window frames, per frame { i64 t, u64 rows, f64[rows*dim] features, i8[rows] labels }
"""
from __future__ import annotations

import io
import struct

import numpy as np

from .auxiliary import AuxiliaryModel
from .committee import Committee, CommitteeMember, sq_norms

MAGIC = b"DEDT"
AUX_TAG = b"AUX1"
VERSION = 1


class SnapshotError(ValueError):
    pass


def _write_array(out, arr, dtype):
    out.write(np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<")).tobytes())


def dumps(committee: Committee, aux: AuxiliaryModel) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<H", VERSION))
    first = committee[0]
    out.write(struct.pack("<IIII", len(committee), first.k, first.capacity, first.dim))
    for mem in committee:
        out.write(struct.pack("<QQ", len(mem), mem.next_seq))
        _write_array(out, mem.features, "f8")
        _write_array(out, mem.labels, "i1")
        _write_array(out, mem.times, "i8")
        _write_array(out, mem.seq, "i8")

    out.write(AUX_TAG)
    last = -1 if aux.last_trained is None else aux.last_trained
    out.write(struct.pack("<IdIq", aux.dim, aux.lam, aux.epochs, last))
    out.write(struct.pack("<B", aux.weights is not None))
    if aux.weights is not None:
        _write_array(out, aux.weights, "f8")
    out.write(struct.pack("<I", len(aux.window_labels)))
    for f, l, t in zip(aux.window_features, aux.window_labels, aux.window_times):
        out.write(struct.pack("<qQ", t, len(l)))
        _write_array(out, f, "f8")
        _write_array(out, l, "i1")
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise SnapshotError("snapshot is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, count: int, dtype: str) -> np.ndarray:
        dt = np.dtype(dtype).newbyteorder("<")
        return np.frombuffer(self.take(count * dt.itemsize), dtype=dt).astype(dt.newbyteorder("="))


def loads(data: bytes) -> tuple[Committee, AuxiliaryModel]:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise SnapshotError("not a DEDT snapshot (bad magic)")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    C, k, capacity, dim = r.unpack("<IIII")
    members = []
    for _ in range(C):
        count, next_seq = r.unpack("<QQ")
        mem = CommitteeMember(k, capacity, dim)
        mem.features = r.array(count * dim, "f8").reshape(count, dim)
        mem.sqnorms = sq_norms(mem.features)
        mem.labels = r.array(count, "i1").astype(np.float64)
        mem.times = r.array(count, "i8")
        mem.seq = r.array(count, "i8")
        mem.next_seq = int(next_seq)
        members.append(mem)

    if r.take(4) != AUX_TAG:
        raise SnapshotError("missing AUX1 section")
    adim, lam, epochs, last = r.unpack("<IdIq")
    aux = AuxiliaryModel(adim, lam, epochs)
    aux.last_trained = None if last < 0 else int(last)
    (has_weights,) = r.unpack("<B")
    if has_weights:
        aux.weights = r.array(adim + 1, "f8")
    (frames,) = r.unpack("<I")
    for _ in range(frames):
        t, rows = r.unpack("<qQ")
        aux.window_features.append(r.array(rows * adim, "f8").reshape(rows, adim))
        aux.window_labels.append(r.array(rows, "i1").astype(np.float64))
        aux.window_times.append(int(t))
    if r.pos != len(data):
        raise SnapshotError("trailing bytes after snapshot")
    return Committee(members), aux


def save_snapshot(path, committee: Committee, aux: AuxiliaryModel) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(committee, aux))


def load_snapshot(path) -> tuple[Committee, AuxiliaryModel]:
    with open(path, "rb") as fh:
        return loads(fh.read())
