"""On-disk array containers.

Two formats are supported:

* the native container: a directory holding ``meta.json`` (shape, dtype,
  plus caller metadata) and ``data.bin`` with the raw little-endian
  IEEE-754 payload in row-major order;
* read-only import of NPY v1.0 single-array files (``<f4``/``<f8``,
  C-order only).

All writes go through a temp-file-then-rename so an interrupted write
never leaves a half-updated container behind.
"""

from __future__ import annotations

import ast
import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, IntegrityError

_DTYPES = {"f32le": np.dtype("<f4"), "f64le": np.dtype("<f8")}
_DTYPE_TAGS = {v: k for k, v in _DTYPES.items()}

META_NAME = "meta.json"
DATA_NAME = "data.bin"


def dtype_for_tag(tag: str) -> np.dtype:
    try:
        return _DTYPES[tag]
    except KeyError:
        raise FormatError(f"unsupported dtype tag {tag!r}; expected one of {sorted(_DTYPES)}")


def tag_for_dtype(dtype) -> str:
    dtype = np.dtype(dtype).newbyteorder("<")
    try:
        return _DTYPE_TAGS[dtype]
    except KeyError:
        raise FormatError(f"unsupported array dtype {dtype}; use float32 or float64")


def atomic_write_bytes(path: Path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def canonical_json(obj) -> str:
    """Deterministic JSON serialization (stable key order, no whitespace drift)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ": "), indent=2) + "\n"


def write_array_container(path, array: np.ndarray, dtype_tag: str = "f32le", **meta) -> None:
    """Persist ``array`` under ``path`` (a directory) with extra header fields."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    dt = dtype_for_tag(dtype_tag)
    arr = np.ascontiguousarray(array, dtype=dt)
    header = {"shape": list(arr.shape), "dtype": dtype_tag}
    header.update(meta)
    atomic_write_bytes(path / DATA_NAME, arr.tobytes())
    atomic_write_text(path / META_NAME, canonical_json(header))


def read_array_container(path) -> tuple[np.ndarray, dict]:
    """Load a native container; returns (array, full header dict)."""
    path = Path(path)
    meta_path = path / META_NAME
    if not meta_path.is_file():
        raise FormatError(f"{path}: missing {META_NAME}")
    try:
        meta = json.loads(meta_path.read_text("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{meta_path}: corrupt header ({exc})")
    for key in ("shape", "dtype"):
        if key not in meta:
            raise FormatError(f"{meta_path}: header missing {key!r}")
    shape = tuple(int(s) for s in meta["shape"])
    dt = dtype_for_tag(meta["dtype"])
    payload = (path / DATA_NAME).read_bytes() if (path / DATA_NAME).is_file() else None
    if payload is None:
        raise FormatError(f"{path}: missing {DATA_NAME}")
    expected = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    if len(payload) != expected:
        raise IntegrityError(
            f"{path}: payload holds {len(payload)} bytes but header "
            f"shape {shape} ({meta['dtype']}) needs {expected}")
    arr = np.frombuffer(payload, dtype=dt).reshape(shape)
    return arr.copy(), meta


def read_npy(path) -> np.ndarray:
    """Strict NPY v1.0 reader: little-endian f4/f8, C-order only."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 10 or raw[:6] != b"\x93NUMPY":
        raise FormatError(f"{path}: not an NPY file (bad magic)")
    major, minor = raw[6], raw[7]
    if (major, minor) != (1, 0):
        raise FormatError(f"{path}: NPY version {major}.{minor} unsupported; need 1.0")
    (hlen,) = struct.unpack("<H", raw[8:10])
    header_end = 10 + hlen
    if len(raw) < header_end:
        raise IntegrityError(f"{path}: truncated NPY header")
    try:
        header = ast.literal_eval(raw[10:header_end].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"{path}: unparseable NPY header ({exc})")
    if not isinstance(header, dict) or not {"descr", "fortran_order", "shape"} <= set(header):
        raise FormatError(f"{path}: NPY header missing required keys")
    descr = header["descr"]
    if descr not in ("<f4", "<f8"):
        raise FormatError(f"{path}: dtype {descr!r} not accepted; only <f4/<f8")
    if header["fortran_order"]:
        raise FormatError(f"{path}: Fortran-order arrays not accepted")
    shape = tuple(int(s) for s in header["shape"])
    dt = np.dtype(descr)
    payload = raw[header_end:]
    expected = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    if len(payload) != expected:
        raise IntegrityError(
            f"{path}: NPY payload holds {len(payload)} bytes, shape {shape} needs {expected}")
    return np.frombuffer(payload, dtype=dt).reshape(shape).copy()
