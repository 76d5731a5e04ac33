"""On-disk cache for basis tables (Gram residuals and orthonormalizing transforms).

Each entry is one JSON file: a versioned header, the array shapes, a flat list
of float64 values written with 17 significant digits, and a SHA-256 checksum
of the payload text. Stores go through a temporary file and ``os.replace``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

CACHE_VERSION = 1
CACHE_ENV = "SZEGOLAB_CACHE_DIR"

log = logging.getLogger(__name__)


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "szegolab"


def grid_hash(spec: dict) -> str:
    text = json.dumps(spec, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _encode(table: dict) -> dict:
    """Flatten scalars and (possibly complex) arrays into shapes + float64 text."""
    fields, flat = {}, []
    for name in sorted(table):
        v = table[name]
        if v is None:
            fields[name] = {"kind": "none"}
            continue
        a = np.asarray(v)
        cplx = np.iscomplexobj(a)
        parts = [a.real.ravel(), a.imag.ravel()] if cplx else [a.astype(float).ravel()]
        fields[name] = {"kind": "array", "shape": list(a.shape), "complex": bool(cplx),
                        "offset": len(flat), "scalar": a.ndim == 0}
        for p in parts:
            flat.extend(_fmt(x) for x in p)
    return {"fields": fields, "data": flat}


def _decode(body: dict) -> dict:
    data = np.array([float(x) for x in body["data"]], dtype=float)
    out = {}
    for name, f in body["fields"].items():
        if f["kind"] == "none":
            out[name] = None
            continue
        n = int(np.prod(f["shape"])) if f["shape"] else 1
        o = f["offset"]
        if f["complex"]:
            a = data[o:o + n] + 1j * data[o + n:o + 2 * n]
        else:
            a = data[o:o + n]
        a = a.reshape(f["shape"])
        out[name] = a.item() if f["scalar"] else a
    return out


class BasisCache:
    """Keyed by (model id, N, grid hash)."""

    def __init__(self, directory: Optional[os.PathLike] = None):
        self.directory = Path(directory) if directory is not None else default_cache_dir()
        self.hits = 0
        self.misses = 0

    def key(self, model_id: str, N: int, spec: dict) -> tuple:
        return (str(model_id), int(N), grid_hash(spec))

    def path(self, key: tuple) -> Path:
        model_id, N, gh = key
        safe = "".join(c if c.isalnum() or c in "._-" else "_" for c in model_id)
        return self.directory / f"{safe}__N{N}__{gh}.json"

    def store(self, key: tuple, table: dict) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        body = _encode(table)
        payload = json.dumps(body, sort_keys=True, separators=(",", ":"))
        doc = {"version": CACHE_VERSION, "key": list(key),
               "checksum": hashlib.sha256(payload.encode()).hexdigest(), "body": body}
        target = self.path(key)
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return target

    def lookup(self, key: tuple) -> Optional[dict]:
        p = self.path(key)
        if not p.exists():
            self.misses += 1
            return None
        try:
            doc = json.loads(p.read_text())
            if doc.get("version") != CACHE_VERSION or tuple(doc["key"]) != tuple(key):
                raise ValueError("version or key mismatch")
            payload = json.dumps(doc["body"], sort_keys=True, separators=(",", ":"))
            if hashlib.sha256(payload.encode()).hexdigest() != doc["checksum"]:
                raise ValueError("checksum mismatch")
            table = _decode(doc["body"])
        except (ValueError, KeyError, TypeError) as exc:
            log.warning("discarding corrupted cache entry %s: %s", p, exc)
            p.unlink(missing_ok=True)
            self.misses += 1
            return None
        self.hits += 1
        return table
