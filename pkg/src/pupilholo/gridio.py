"""Raw float grids with a 16-byte header.

Header layout: ``rows`` and ``cols`` as uint32, a 4-byte dtype tag
(``f32`` or ``c64``, NUL padded) and a 4-byte endianness tag (``LE`` or
``BE``). The integers use the byte order named by the endianness tag.
"""

from __future__ import annotations

import struct

import numpy as np

HEADER_SIZE = 16
_TAGS = {b"f32": np.float32, b"c64": np.complex64}


def write_grid(path: str, grid: np.ndarray, byteorder: str = "little") -> None:
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError("only 2D grids can be dumped")
    tag = b"c64" if np.iscomplexobj(grid) else b"f32"
    prefix = "<" if byteorder == "little" else ">"
    dtype = np.dtype(_TAGS[tag]).newbyteorder(prefix)
    header = struct.pack(prefix + "II4s4s", grid.shape[0], grid.shape[1], tag,
                         b"LE" if byteorder == "little" else b"BE")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(grid, dtype=dtype).tobytes())


def read_grid(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
        payload = fh.read()
    if len(header) != HEADER_SIZE:
        raise ValueError(f"{path}: truncated header")
    order = header[12:16].rstrip(b"\0")
    if order not in (b"LE", b"BE"):
        raise ValueError(f"{path}: bad endianness tag {order!r}")
    prefix = "<" if order == b"LE" else ">"
    rows, cols, tag, _ = struct.unpack(prefix + "II4s4s", header)
    tag = tag.rstrip(b"\0")
    if tag not in _TAGS:
        raise ValueError(f"{path}: unknown dtype tag {tag!r}")
    dtype = np.dtype(_TAGS[tag]).newbyteorder(prefix)
    data = np.frombuffer(payload, dtype=dtype)
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} samples, found {data.size}")
    return data.reshape(rows, cols).astype(_TAGS[tag])

