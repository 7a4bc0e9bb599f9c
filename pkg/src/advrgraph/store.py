"""Content-addressed, append-only artifact store and canonical serialization.

Every structured artifact is rendered to canonical JSON (sorted object keys,
floats at 6 significant digits) before hashing or persisting, so identical
inputs always produce identical bytes and identical keys. Tensor archives are
keyed by a digest over the raw array contents, not over file bytes, because
zip containers embed timestamps.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import NotFoundError


def _format_float(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        raise ValueError("non-finite float in canonical document")
    if x == 0.0:
        x = 0.0  # collapse -0.0
    return format(x, ".6g")


def _canonical(obj) -> str:
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=True)
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canonical(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = sorted(obj.items(), key=lambda kv: kv[0])
        return "{" + ",".join(json.dumps(str(k)) + ":" + _canonical(v) for k, v in items) + "}"
    raise TypeError(f"cannot canonicalize {type(obj)!r}")


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, 6-significant-digit floats."""
    return _canonical(obj)


def canonical_bytes(obj) -> bytes:
    return canonical_json(obj).encode("ascii")


def digest_of(obj) -> str:
    return hashlib.sha256(canonical_bytes(obj)).hexdigest()


def array_digest(arrays: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        h.update(name.encode())
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Store:
    """Flat file store under ``root/store``; keys are sha256 hex strings."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.dir = self.root / "store"

    def _path(self, key: str, ext: str) -> Path:
        return self.dir / f"{key}.{ext}"

    def has(self, key: str, ext: str = "json") -> bool:
        return self._path(key, ext).exists()

    # -- structured documents ------------------------------------------------

    def put_json_at(self, key: str, obj) -> str:
        """Write canonical bytes at an explicit key; append-only."""
        data = canonical_bytes(obj)
        path = self._path(key, "json")
        if path.exists():
            existing = path.read_bytes()
            if existing != data:
                raise ValueError(f"store key {key} already bound to different bytes")
            return key
        _atomic_write(path, data)
        return key

    def put_json(self, obj) -> str:
        """Content-addressed write: key = digest of the canonical bytes."""
        return self.put_json_at(digest_of(obj), obj)

    def get_bytes(self, key: str, ext: str = "json") -> bytes:
        path = self._path(key, ext)
        if not path.exists():
            raise NotFoundError(key)
        return path.read_bytes()

    def get_json(self, key: str) -> dict:
        return json.loads(self.get_bytes(key, "json"))

    # -- plain text tables ----------------------------------------------------

    def put_text_at(self, key: str, text: str, ext: str = "txt") -> str:
        data = text.encode("ascii")
        path = self._path(key, ext)
        if path.exists():
            if path.read_bytes() != data:
                raise ValueError(f"store key {key} already bound to different bytes")
            return key
        _atomic_write(path, data)
        return key

    def get_text(self, key: str, ext: str = "txt") -> str:
        return self.get_bytes(key, ext).decode("ascii")

    # -- tensor archives -------------------------------------------------------

    def put_arrays(self, arrays: dict[str, np.ndarray]) -> str:
        key = array_digest(arrays)
        path = self._path(key, "npz")
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".npz")
            os.close(fd)
            try:
                np.savez_compressed(tmp, **arrays)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        return key

    def get_arrays(self, key: str) -> dict[str, np.ndarray]:
        path = self._path(key, "npz")
        if not path.exists():
            raise NotFoundError(key)
        with np.load(path, allow_pickle=False) as npz:
            return {k: npz[k] for k in npz.files}
