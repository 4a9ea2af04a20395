"""RFT1 named-tensor container.

Layout (all integers little-endian)::

    b"RFT1"  u32 entry_count
    per entry: u16 name_len, utf-8 name, u8 rank, rank * u32 extents,
               prod(extents) * f32 values (row-major)

Used for network weights, PCA models, classifier heads and feature caches.
Text metadata that does not fit the tensor model lives in a ``<file>.meta``
sidecar of ``key=value`` lines.
"""

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import CorruptFile, MetaMismatch

MAGIC = b"RFT1"
_F32 = np.dtype("<f4")


def atomic_write_bytes(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode(entries):
    """Serialize a mapping name -> array into RFT1 bytes."""
    parts = [MAGIC, struct.pack("<I", len(entries))]
    for name, value in entries.items():
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise ValueError(f"entry name too long: {name[:40]}...")
        arr = np.asarray(value)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.ndim > 255:
            raise ValueError(f"rank {arr.ndim} too large for entry {name!r}")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_F32).tobytes())
    return b"".join(parts)


def decode(payload):
    """Parse RFT1 bytes; raises CorruptFile on any structural problem."""
    view = memoryview(payload)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(view):
            raise CorruptFile(f"truncated while reading {what} at byte {pos}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4, "magic")) != MAGIC:
        raise CorruptFile("bad magic, not an RFT1 container")
    (count,) = struct.unpack("<I", take(4, "entry count"))
    entries = {}
    for i in range(count):
        (name_len,) = struct.unpack("<H", take(2, f"name length of entry {i}"))
        try:
            name = bytes(take(name_len, f"name of entry {i}")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptFile(f"entry {i} name is not utf-8") from exc
        if name in entries:
            raise CorruptFile(f"duplicate entry {name!r}")
        (rank,) = struct.unpack("<B", take(1, f"rank of {name!r}"))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, f"extents of {name!r}"))
        size = 1
        for extent in shape:
            size *= extent
        data = np.frombuffer(take(4 * size, f"values of {name!r}"), dtype=_F32)
        entries[name] = data.astype(np.float32).reshape(shape)
    if pos != len(view):
        raise CorruptFile(f"{len(view) - pos} trailing bytes after last entry")
    return entries


def save(path, entries):
    atomic_write_bytes(path, encode(entries))


def load(path):
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptFile(f"cannot read {path}: {exc}") from exc
    return decode(payload)


def meta_path(path):
    path = Path(path)
    return path.with_name(path.name + ".meta")


def format_kv(values):
    lines = []
    for key, value in values.items():
        text = str(value)
        if "\n" in text or "=" in key:
            raise ValueError(f"cannot store {key!r} in a key=value file")
        lines.append(f"{key}={text}")
    return "\n".join(lines) + "\n"


def parse_kv(text, source="<text>"):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MetaMismatch(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def save_meta(path, values):
    atomic_write_bytes(meta_path(path), format_kv(values).encode("utf-8"))


def load_meta(path):
    sidecar = meta_path(path)
    try:
        text = sidecar.read_text(encoding="utf-8")
    except OSError as exc:
        raise MetaMismatch(f"missing metadata sidecar {sidecar}") from exc
    return parse_kv(text, str(sidecar))
