"""fvecs / ivecs files: per record a little-endian int32 dimension followed by that many 4-byte values."""
from __future__ import annotations

from pathlib import Path

import numpy as np


class VecsFormatError(ValueError):
    pass


def _read(path: str | Path, dtype: str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw:
        return np.empty((0, 0), dtype=np.dtype(dtype).newbyteorder("="))
    if len(raw) < 4:
        raise VecsFormatError(f"{path}: truncated header at byte offset 0")
    d = int(np.frombuffer(raw, "<i4", count=1)[0])
    if d <= 0:
        raise VecsFormatError(f"{path}: invalid dimension {d} at byte offset 0")
    rec = 4 * (d + 1)
    n, tail = divmod(len(raw), rec)
    words = np.frombuffer(raw, "<i4", count=n * (d + 1)).reshape(n, d + 1)
    bad = np.flatnonzero(words[:, 0] != d)
    if bad.size:
        row = int(bad[0])
        raise VecsFormatError(
            f"{path}: record {row} at byte offset {row * rec} has dimension {int(words[row, 0])}, expected {d}")
    if tail:
        raise VecsFormatError(f"{path}: truncated record at byte offset {n * rec}")
    body = np.frombuffer(raw, dtype, count=n * (d + 1)).reshape(n, d + 1)[:, 1:]
    return np.ascontiguousarray(body).astype(np.dtype(dtype).newbyteorder("="))


def _write(path: str | Path, x: np.ndarray, dtype: str) -> None:
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError("expected a 2-d array")
    n, d = x.shape
    out = np.empty((n, d + 1), dtype="<i4")
    out[:, 0] = d
    out[:, 1:] = np.ascontiguousarray(x, dtype=dtype).view("<i4")
    Path(path).write_bytes(out.tobytes())


def load_fvecs(path: str | Path) -> np.ndarray:
    return _read(path, "<f4")


def save_fvecs(path: str | Path, x) -> None:
    _write(path, x, "<f4")


def load_ivecs(path: str | Path) -> np.ndarray:
    return _read(path, "<i4")


def save_ivecs(path: str | Path, x) -> None:
    _write(path, x, "<i4")
