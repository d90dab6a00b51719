"""Self-contained NPY v1.0 reader and writer.

Implements the published NPY grammar directly so persisted arrays can be
verified against third-party readers: magic ``\\x93NUMPY``, version bytes
1.0, a little-endian uint16 header length, then an ASCII dict literal with
exactly the keys descr / fortran_order / shape, space-padded with a
trailing newline so the data block starts on a 64-byte boundary. Data is
always written C-contiguous and little-endian.
"""

from __future__ import annotations

import ast
import io
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"\x93NUMPY"
_ALIGN = 64

# dtypes this package persists; anything else is rejected on both paths.
_SUPPORTED_DESCRS = {"<f4", "<f8", "<i8", "<u8"}


def _header_text(descr: str, shape: tuple[int, ...]) -> bytes:
    shape_repr = "(" + ", ".join(str(int(n)) for n in shape) + ("," if len(shape) == 1 else "") + ")"
    text = "{'descr': '%s', 'fortran_order': False, 'shape': %s, }" % (descr, shape_repr)
    base = len(MAGIC) + 2 + 2 + len(text) + 1  # magic, version, hlen, text, newline
    pad = (-base) % _ALIGN
    return (text + " " * pad + "\n").encode("latin1")


def write_npy_stream(f, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    descr = arr.dtype.str
    if descr not in _SUPPORTED_DESCRS:
        raise FormatError(f"unsupported dtype for NPY output: {arr.dtype}")
    header = _header_text(descr, arr.shape)
    f.write(MAGIC)
    f.write(bytes([1, 0]))
    f.write(struct.pack("<H", len(header)))
    f.write(header)
    f.write(arr.tobytes(order="C"))


def write_npy(path, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        write_npy_stream(f, arr)


def npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_npy_stream(buf, arr)
    return buf.getvalue()


def read_npy_stream(f) -> np.ndarray:
    magic = f.read(len(MAGIC))
    if magic != MAGIC:
        raise FormatError(f"bad NPY magic {magic!r}")
    version = f.read(2)
    if version != bytes([1, 0]):
        raise FormatError(f"unsupported NPY version {tuple(version)}")
    (hlen,) = struct.unpack("<H", f.read(2))
    header = f.read(hlen)
    if len(header) != hlen:
        raise FormatError("truncated NPY header")
    try:
        meta = ast.literal_eval(header.decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"unparseable NPY header: {exc}") from exc
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise FormatError(f"NPY header keys must be descr/fortran_order/shape, got {sorted(meta)}")
    descr, fortran, shape = meta["descr"], meta["fortran_order"], meta["shape"]
    if fortran is not False:
        raise FormatError("fortran_order arrays are not supported")
    if not isinstance(descr, str) or descr not in _SUPPORTED_DESCRS:
        raise FormatError(f"unsupported NPY descr {descr!r}")
    if not isinstance(shape, tuple) or not all(isinstance(n, int) and n >= 0 for n in shape):
        raise FormatError(f"bad NPY shape {shape!r}")
    dtype = np.dtype(descr)
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    data = f.read(count * dtype.itemsize)
    if len(data) != count * dtype.itemsize:
        raise FormatError("NPY data block shorter than the header promises")
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()


def read_npy(path) -> np.ndarray:
    with open(path, "rb") as f:
        return read_npy_stream(f)
