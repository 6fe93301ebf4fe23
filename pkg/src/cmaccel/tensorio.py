"""Tensor files: a one-line JSON header ``{"dtype": ..., "shape": [...]}`` followed by raw
little-endian row-major data."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

DTYPES = {"int8": "<i1", "int32": "<i4", "int64": "<i8"}


def dumps(arr: np.ndarray, dtype: str) -> bytes:
    if dtype not in DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}")
    a = np.asarray(arr)
    info = np.iinfo(DTYPES[dtype])
    if a.size and (a.min() < info.min or a.max() > info.max):
        raise ValueError(f"values do not fit in {dtype}")
    header = json.dumps({"dtype": dtype, "shape": list(a.shape)}, sort_keys=True).encode() + b"\n"
    return header + a.astype(DTYPES[dtype]).tobytes(order="C")


def loads(data: bytes) -> np.ndarray:
    nl = data.find(b"\n")
    if nl < 0:
        raise ValueError("tensor file has no header line")
    try:
        header = json.loads(data[:nl])
        dt = DTYPES[header["dtype"]]
        shape = tuple(int(s) for s in header["shape"])
    except (ValueError, KeyError, TypeError) as e:
        raise ValueError(f"malformed tensor header: {e}") from e
    body = data[nl + 1:]
    n = int(np.prod(shape)) if shape else 1
    if len(body) != n * np.dtype(dt).itemsize:
        raise ValueError(f"tensor body has {len(body)} bytes, header promises {n} x {header['dtype']}")
    return np.frombuffer(body, dtype=dt).reshape(shape).astype(np.int64)


def save(path: str | Path, arr: np.ndarray, dtype: str) -> None:
    Path(path).write_bytes(dumps(arr, dtype))


def load(path: str | Path) -> np.ndarray:
    return loads(Path(path).read_bytes())


def as_frames(arr: np.ndarray, frame_shape: tuple[int, ...]) -> list[np.ndarray]:
    """Accept either one frame or a leading frame dimension."""
    if arr.shape == tuple(frame_shape):
        return [arr]
    if arr.ndim == len(frame_shape) + 1 and arr.shape[1:] == tuple(frame_shape):
        return list(arr)
    raise ValueError(f"tensor shape {arr.shape} matches neither {tuple(frame_shape)} nor (N, *{tuple(frame_shape)})")
