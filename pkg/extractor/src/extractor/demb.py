"""Writer for the DEMB embedding file format.

Implemented against the documented byte layout so the core tooling can read
the output; this package deliberately has no dependency on the core library.

    magic   4 bytes  "DEMB"
    version u16      1
    flags   u16      bit 0: labels present
    rows    u32
    dim     u32
    payload rows * dim float32 little-endian, row-major
    labels  rows int32 little-endian (only when flag bit 0; -1 = unlabeled)
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional

import numpy as np

_HEADER = struct.Struct("<4sHHII")
_MAGIC = b"DEMB"
_VERSION = 1
_FLAG_LABELS = 1


def write_embeddings(path, matrix: np.ndarray, labels: Optional[np.ndarray] = None) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValueError("matrix must be 2-D")
    rows, dim = matrix.shape
    flags = 0
    parts = [matrix.tobytes()]
    if labels is not None:
        labels = np.ascontiguousarray(labels, dtype="<i4").ravel()
        if labels.shape[0] != rows:
            raise ValueError(f"{labels.shape[0]} labels for {rows} rows")
        flags |= _FLAG_LABELS
        parts.append(labels.tobytes())
    header = _HEADER.pack(_MAGIC, _VERSION, flags, rows, dim)
    Path(path).write_bytes(header + b"".join(parts))
