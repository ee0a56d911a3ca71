"""NNW1 weight container: bit-exact binary serialization of model state.

Layout, all little-endian:
    magic "NNW1" | u32 version | u32 entry count |
    per entry: u16 name length | name (utf-8) | u8 ndim | u32 dims... | f64 data

Entries cover parameters and running statistics in the model's canonical
traversal order, so load(save(model)) reproduces forward passes bit-exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import DimensionError, FormatError
from .layers import Layer, named_state

MAGIC = b"NNW1"
VERSION = 1


def save_weights(model: Layer, path) -> None:
    entries = named_state(model)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(entries)))
        for name, arr in entries:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_weights(model: Layer, path) -> None:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r} (want {MAGIC!r})")
    if len(data) < 12:
        raise FormatError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} (want {VERSION})")
    pos = 12
    entries = named_state(model)
    if count != len(entries):
        raise DimensionError(
            f"{path}: file has {count} state entries, model expects {len(entries)}")
    for name, arr in entries:
        try:
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            file_name = data[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dims = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            nbytes = 8 * int(np.prod(dims, dtype=np.int64)) if ndim else 8
            payload = data[pos:pos + nbytes]
            if len(payload) != nbytes:
                raise FormatError(f"{path}: truncated data for entry {file_name!r}")
            pos += nbytes
        except struct.error as e:
            raise FormatError(f"{path}: truncated entry near offset {pos}: {e}") from e
        if file_name != name:
            raise DimensionError(
                f"{path}: entry {file_name!r} does not match model layer {name!r}")
        if tuple(dims) != arr.shape:
            raise DimensionError(
                f"{path}: layer {name!r}: file shape {tuple(dims)} != model shape {arr.shape}")
        arr[...] = np.frombuffer(payload, dtype="<f8").reshape(arr.shape)
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes after last entry")
