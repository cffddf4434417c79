"""Binary file plumbing shared by the dataset and checkpoint formats:
typed corruption errors, a little-endian cursor reader, atomic writes.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

__all__ = [
    "FormatError",
    "BadMagicError",
    "VersionMismatchError",
    "TruncatedFileError",
    "DimensionMismatchError",
    "Reader",
    "atomic_write_bytes",
]


class FormatError(Exception):
    """Base class for file-format corruption errors."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class DimensionMismatchError(FormatError):
    pass


class Reader:
    """Cursor over an in-memory buffer; raises typed errors, never IndexError."""

    def __init__(self, data: bytes, name: str = "<buffer>"):
        self._data = data
        self._pos = 0
        self._name = name

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise TruncatedFileError(
                f"{self._name}: needed {n} bytes at offset {self._pos}, "
                f"only {len(self._data) - self._pos} remain"
            )
        chunk = self._data[self._pos:self._pos + n]
        self._pos += n
        return chunk

    def expect_magic(self, magic: bytes):
        got = self._take(len(magic))
        if got != magic:
            raise BadMagicError(f"{self._name}: bad magic {got!r}, expected {magic!r}")

    def read_u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def read_f32_array(self, count: int) -> np.ndarray:
        raw = self._take(4 * count)
        return np.frombuffer(raw, dtype="<f4", count=count).copy()

    def read_f64_array(self, count: int) -> np.ndarray:
        raw = self._take(8 * count)
        return np.frombuffer(raw, dtype="<f8", count=count).copy()

    def at_end(self) -> bool:
        return self._pos == len(self._data)


def atomic_write_bytes(path: str, data: bytes):
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
