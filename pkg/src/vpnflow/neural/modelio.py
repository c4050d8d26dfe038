"""NNMD1 model files.

Layout (all integers little-endian)::

    b"NNMD1" | u8 arch (0 = MLP, 1 = LSTM) | u32 array count
    per array: u16 name length | UTF-8 name | u32 rows | u32 cols | rows*cols f64 (row-major)
    LSTM only: trailing u32 step_width

Vectors (LSTM biases) are stored as (n, 1).
"""
from __future__ import annotations

import os
import struct

import numpy as np

from vpnflow.errors import BadMagicError, DatasetFormatError, ShortFileError, TrailingDataError
from vpnflow.neural.lstm import LstmParameters
from vpnflow.neural.mlp import MlpParameters

MAGIC = b"NNMD1"
ARCH_TAGS = {"mlp": 0, "lstm": 1}


def encode_model(params) -> bytes:
    arrays = params.arrays()
    parts = [MAGIC, struct.pack("<BI", ARCH_TAGS[params.arch], len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack("<II", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    if params.arch == "lstm":
        parts.append(struct.pack("<I", params.step_width))
    return b"".join(parts)


def decode_model(data: bytes):
    if data[:5] != MAGIC:
        raise BadMagicError(f"bad NNMD1 magic {data[:5]!r}")
    pos = 5

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise ShortFileError(f"NNMD1 file truncated at byte {pos}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    tag, count = struct.unpack("<BI", take(5))
    if tag not in ARCH_TAGS.values():
        raise DatasetFormatError(f"unknown NNMD1 arch tag {tag}")
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        rows, cols = struct.unpack("<II", take(8))
        arrays[name] = np.frombuffer(take(rows * cols * 8), dtype="<f8").reshape(rows, cols).astype(np.float64)
    try:
        if tag == ARCH_TAGS["mlp"]:
            params = MlpParameters.from_arrays(arrays)
        else:
            (step_width,) = struct.unpack("<I", take(4))
            params = LstmParameters.from_arrays(arrays, step_width)
    except KeyError as exc:
        raise DatasetFormatError(f"NNMD1 file is missing array {exc}") from None
    if pos != len(data):
        raise TrailingDataError(f"{len(data) - pos} trailing bytes in NNMD1 file")
    return params


def write_model(params, destination) -> None:
    blob = encode_model(params)
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "wb") as fh:
            fh.write(blob)
    else:
        destination.write(blob)


def read_model(source):
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return decode_model(fh.read())
    if isinstance(source, (bytes, bytearray)):
        return decode_model(bytes(source))
    return decode_model(source.read())
