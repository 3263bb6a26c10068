"""Seeded randomness and bit-exact tensor serialization shared by all modules.

Every source of randomness in the toolkit flows through :class:`RngStream`,
a counter-based (Philox) stream addressed by ``(seed, stream_id)``.  Child
streams are derived by mixing purpose tags into the stream id, so a training
run can hand out independent, replayable streams per step and per purpose
without any shared mutable state.

Arrays are stored in the "SOMT" single-tensor container and the "SOMA"
named-tensor archive.  Both formats are little-endian and round-trip
bit-exactly.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RngStream",
    "FileFormatError",
    "TruncatedFileError",
    "save_tensor",
    "load_tensor",
    "tensor_to_bytes",
    "tensor_from_bytes",
    "save_archive",
    "load_archive",
    "atomic_write_bytes",
]

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One round of splitmix64; a cheap, well-mixed 64-bit permutation."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


def _mix_tag(stream_id: int, tag: int | str) -> int:
    if isinstance(tag, str):
        t = _fnv1a64(tag.encode("utf-8"))
    else:
        t = tag & _MASK64
    return _splitmix64((stream_id ^ _splitmix64(t)) & _MASK64)


@dataclass
class RngStream:
    """Deterministic random stream addressed by ``(seed, stream_id)``.

    Identical ``(seed, stream_id)`` replay an identical value sequence for
    an identical sequence of draw calls; distinct stream ids are
    statistically independent (distinct 128-bit Philox keys).  ``counter``
    records how many draw calls this stream has served.
    """

    seed: int
    stream_id: int = 0
    counter: int = field(default=0, compare=False)

    def __post_init__(self):
        self._gen = np.random.Generator(
            np.random.Philox(key=[self.seed & _MASK64, self.stream_id & _MASK64])
        )

    def child(self, *tags: int | str) -> "RngStream":
        """Derive an independent stream by mixing purpose tags into the id."""
        sid = self.stream_id
        for tag in tags:
            sid = _mix_tag(sid, tag)
        return RngStream(self.seed, sid)

    def normal(self, shape=(), dtype=np.float64) -> np.ndarray:
        """I.i.d. standard normal samples of the given shape."""
        self.counter += 1
        return self._gen.standard_normal(size=shape, dtype=dtype)

    def uniform(self, low=0.0, high=1.0, shape=()) -> np.ndarray:
        self.counter += 1
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Uniform integers in ``[low, high)``."""
        self.counter += 1
        return self._gen.integers(low, high, size=shape)

    def poisson(self, lam: float) -> int:
        self.counter += 1
        return int(self._gen.poisson(lam))

    def permutation(self, n: int) -> np.ndarray:
        self.counter += 1
        return self._gen.permutation(n)


# --------------------------------------------------------------------------
# SOMT / SOMA serialization
# --------------------------------------------------------------------------

_SOMT_MAGIC = b"SOMT"
_SOMA_MAGIC = b"SOMA"
_VERSION = 1

_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1, np.dtype("u1"): 2}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}


class FileFormatError(ValueError):
    """Raised when a file does not follow the SOMT/SOMA/PGM format."""


class TruncatedFileError(FileFormatError):
    """Raised when a payload is shorter than its header promises."""


def _dtype_code(arr: np.ndarray) -> int:
    dt = np.dtype(arr.dtype).newbyteorder("<")
    if dt not in _DTYPE_CODES:
        raise ValueError(f"unsupported dtype {arr.dtype}; expected f32, f64 or u8")
    return _DTYPE_CODES[dt]


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    code = _dtype_code(arr)
    arr = np.asarray(arr, dtype=_CODE_DTYPES[code], order="C")
    head = _SOMT_MAGIC + struct.pack("<HBB", _VERSION, code, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    return head + dims + arr.tobytes(order="C")


def tensor_from_bytes(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one SOMT record at ``offset``; returns (array, next offset)."""
    if buf[offset : offset + 4] != _SOMT_MAGIC:
        raise FileFormatError(
            f"bad magic {buf[offset:offset + 4]!r}; expected {_SOMT_MAGIC!r}"
        )
    if len(buf) < offset + 8:
        raise TruncatedFileError("SOMT header truncated")
    version, code, rank = struct.unpack_from("<HBB", buf, offset + 4)
    if version != _VERSION:
        raise FileFormatError(f"unsupported SOMT version {version}")
    if code not in _CODE_DTYPES:
        raise FileFormatError(f"unknown dtype code {code}")
    pos = offset + 8
    if len(buf) < pos + 8 * rank:
        raise TruncatedFileError("SOMT dims truncated")
    dims = struct.unpack_from(f"<{rank}Q", buf, pos) if rank else ()
    pos += 8 * rank
    if any(d < 1 for d in dims):
        raise FileFormatError(f"invalid dims {dims}; extents must be >= 1")
    dt = _CODE_DTYPES[code]
    nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize if dims else dt.itemsize
    if len(buf) < pos + nbytes:
        raise TruncatedFileError(
            f"SOMT payload truncated: need {nbytes} bytes, have {len(buf) - pos}"
        )
    arr = np.frombuffer(buf[pos : pos + nbytes], dtype=dt).reshape(dims).copy()
    return arr, pos + nbytes


def save_tensor(path, arr: np.ndarray) -> None:
    atomic_write_bytes(path, tensor_to_bytes(arr))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    arr, end = tensor_from_bytes(buf)
    if end != len(buf):
        raise FileFormatError(f"{end} bytes expected, file has {len(buf)}")
    return arr


def archive_to_bytes(entries) -> bytes:
    """Encode named tensors (dict or (name, array) pairs) as a SOMA archive.

    Entry order is preserved; writing the same entries in the same order is
    byte-identical.
    """
    items = list(entries.items()) if isinstance(entries, dict) else list(entries)
    names = [name for name, _ in items]
    if len(set(names)) != len(names):
        raise ValueError("duplicate entry names in archive")
    out = [_SOMA_MAGIC, struct.pack("<HI", _VERSION, len(items))]
    for name, arr in items:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"entry name too long: {name[:32]}...")
        out.append(struct.pack("<H", len(raw)))
        out.append(raw)
        out.append(tensor_to_bytes(arr))
    return b"".join(out)


def archive_from_bytes(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:4] != _SOMA_MAGIC:
        raise FileFormatError(f"bad magic {buf[:4]!r}; expected {_SOMA_MAGIC!r}")
    if len(buf) < 10:
        raise TruncatedFileError("SOMA header truncated")
    version, count = struct.unpack_from("<HI", buf, 4)
    if version != _VERSION:
        raise FileFormatError(f"unsupported SOMA version {version}")
    pos = 10
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        if len(buf) < pos + 2:
            raise TruncatedFileError("SOMA entry header truncated")
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        if len(buf) < pos + nlen:
            raise TruncatedFileError("SOMA entry name truncated")
        name = buf[pos : pos + nlen].decode("utf-8")
        pos += nlen
        if name in entries:
            raise FileFormatError(f"duplicate archive entry {name!r}")
        entries[name], pos = tensor_from_bytes(buf, pos)
    if pos != len(buf):
        raise FileFormatError(f"{len(buf) - pos} trailing bytes after last entry")
    return entries


def save_archive(path, entries) -> None:
    atomic_write_bytes(path, archive_to_bytes(entries))


def load_archive(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return archive_from_bytes(fh.read())


def atomic_write_bytes(path, data: bytes) -> None:
    """Write-temp-then-rename so readers never observe partial files."""
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
