"""Versioned binary container for named numeric arrays.

Layout (all integers little-endian)::

    8 bytes   magic  b"STRUCTST"
    u32       format version
    u64       header length in bytes
    header    UTF-8 JSON: {"kind", "meta", "arrays": [{"name","shape","dtype"}], "digest"}
    payload   raw array bytes, concatenated in manifest order

``digest`` is the SHA-256 of the canonical header (without the digest field)
followed by the payload, so any edit to either part is detected.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ContainerError, DigestMismatchError

MAGIC = b"STRUCTST"
FORMAT_VERSION = 1
_ALLOWED_DTYPES = ("<f4", "<f8", "<i8")


@dataclass
class Container:
    kind: str
    arrays: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)
    digest: str = ""


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _digest(header: dict, payload: bytes) -> str:
    h = hashlib.sha256()
    h.update(_canonical(header))
    h.update(payload)
    return h.hexdigest()


def encode(kind: str, arrays: Mapping[str, np.ndarray], meta: dict | None = None) -> tuple[bytes, str]:
    entries = []
    chunks = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = arr.dtype.newbyteorder("<").str
        if dtype not in _ALLOWED_DTYPES:
            raise ContainerError(f"array {name!r} has unsupported dtype {arr.dtype}")
        arr = np.ascontiguousarray(arr, dtype=dtype)
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype})
        chunks.append(arr.tobytes())
    payload = b"".join(chunks)
    header = {"kind": kind, "meta": meta or {}, "arrays": entries}
    digest = _digest(header, payload)
    header_bytes = _canonical({**header, "digest": digest})
    blob = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(header_bytes)) + header_bytes + payload
    return blob, digest


def decode(blob: bytes, expected_kind: str | None = None, verify: bool = True) -> Container:
    if len(blob) < 20 or blob[:8] != MAGIC:
        raise ContainerError("not a container file (bad magic)")
    version, header_len = struct.unpack("<IQ", blob[8:20])
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported container version {version} (expected {FORMAT_VERSION})")
    if len(blob) < 20 + header_len:
        raise ContainerError("container truncated inside header")
    try:
        header = json.loads(blob[20 : 20 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"corrupted container header: {exc}") from exc
    kind = header.get("kind")
    if expected_kind is not None and kind != expected_kind:
        raise ContainerError(f"container holds {kind!r}, expected {expected_kind!r}")

    payload = blob[20 + header_len :]
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(payload):
            raise ContainerError(f"container truncated: array {entry['name']!r} is incomplete")
        arrays[entry["name"]] = (
            np.frombuffer(payload, dtype=dtype, count=count, offset=offset).reshape(entry["shape"]).copy()
        )
        offset += nbytes
    if offset != len(payload):
        raise ContainerError(f"container has {len(payload) - offset} unexpected trailing bytes")

    stored = header.pop("digest", "")
    if verify:
        actual = _digest(header, payload)
        if actual != stored:
            raise DigestMismatchError(f"content digest mismatch: stored {stored[:12]}..., computed {actual[:12]}...")
    return Container(kind=kind, arrays=arrays, meta=header.get("meta", {}), digest=stored)


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write(path, kind: str, arrays: Mapping[str, np.ndarray], meta: dict | None = None) -> str:
    blob, digest = encode(kind, arrays, meta)
    atomic_write_bytes(path, blob)
    return digest


def read(path, expected_kind: str | None = None, verify: bool = True) -> Container:
    path = Path(path)
    if not path.is_file():
        raise ContainerError(f"no such file: {path}")
    return decode(path.read_bytes(), expected_kind=expected_kind, verify=verify)
