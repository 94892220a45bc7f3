"""Embedding file formats and database sidecars.

JSON Lines: one object per record, ``{"id": int, "attrs": {...}, "vec": [...]}``.
Floats are written in shortest round-trip form so values survive exactly.

Binary (``EMB1``): magic bytes, then little-endian u32 dim, u32 count, and
per record a u64 id followed by ``dim`` float64 values. Attributes are not
stored in the binary form.

Database-level state (identity means, attribute directions, provenance)
lives in a ``<file>.meta.json`` sidecar next to either form.
"""

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FormatError
from .synthdata import IdentityDatabase, IdentityRecord, attribute_label

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")


def atomic_write(path, data):
    """Write bytes or text to ``path`` via a temporary file and rename."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def detect_format(path):
    path = Path(path)
    if path.suffix in (".bin", ".emb"):
        return "bin"
    if path.suffix in (".jsonl", ".json"):
        return "jsonl"
    with open(path, "rb") as fh:
        return "bin" if fh.read(4) == MAGIC else "jsonl"


def encode_jsonl(ids, vecs, attrs=None):
    lines = []
    for i, (ident, vec) in enumerate(zip(ids, vecs)):
        rec = {"id": int(ident)}
        if attrs is not None and attrs[i]:
            rec["attrs"] = attrs[i]
        rec["vec"] = [float(v) for v in vec]
        lines.append(json.dumps(rec))
    return "".join(line + "\n" for line in lines)


def decode_jsonl(text):
    ids, vecs, attrs = [], [], []
    dim = None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            ident = rec["id"]
            vec = rec["vec"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"line {lineno}: malformed record ({exc})") from None
        if not isinstance(ident, int) or ident < 0:
            raise FormatError(f"line {lineno}: id must be a non-negative integer")
        if not isinstance(vec, list) or not all(isinstance(v, (int, float)) for v in vec):
            raise FormatError(f"line {lineno}: vec must be an array of numbers")
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise FormatError(f"line {lineno}: dimension {len(vec)} differs from {dim}")
        a = rec.get("attrs", {})
        if not isinstance(a, dict):
            raise FormatError(f"line {lineno}: attrs must be an object")
        ids.append(ident)
        vecs.append(vec)
        attrs.append(a)
    if dim is None:
        raise FormatError("file contains no records")
    return np.array(ids, dtype=np.int64), np.array(vecs, dtype=np.float64), attrs


def _record_dtype(dim):
    return np.dtype([("id", "<u8"), ("vec", "<f8", (dim,))])


def encode_bin(ids, vecs):
    vecs = np.asarray(vecs, dtype=np.float64)
    count, dim = vecs.shape
    body = np.empty(count, dtype=_record_dtype(dim))
    body["id"] = ids
    body["vec"] = vecs
    return _HEADER.pack(MAGIC, dim, count) + body.tobytes()


def decode_bin(data):
    if len(data) < _HEADER.size:
        raise FormatError("binary file shorter than header")
    magic, dim, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError("bad magic bytes; expected EMB1")
    dt = _record_dtype(dim)
    if len(data) != _HEADER.size + count * dt.itemsize:
        raise FormatError(f"binary size does not match header (dim={dim}, count={count})")
    body = np.frombuffer(data, dtype=dt, offset=_HEADER.size, count=count)
    return body["id"].astype(np.int64), body["vec"].copy(), [{} for _ in range(count)]


def write_embeddings(path, ids, vecs, attrs=None, fmt=None):
    fmt = fmt or ("bin" if Path(path).suffix in (".bin", ".emb") else "jsonl")
    if fmt == "bin":
        atomic_write(path, encode_bin(ids, vecs))
    elif fmt == "jsonl":
        atomic_write(path, encode_jsonl(ids, vecs, attrs))
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_embeddings(path, fmt=None):
    """Return (ids, vecs, attrs) from an embedding file of either form."""
    fmt = fmt or detect_format(path)
    if fmt == "bin":
        return decode_bin(Path(path).read_bytes())
    return decode_jsonl(Path(path).read_text())


def meta_path(path):
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_database(path, db, fmt=None, provenance=None):
    ids = db.ids
    vecs = db.embeddings
    attrs = [r.attributes for r in db.records]
    write_embeddings(path, ids, vecs, attrs, fmt)
    meta = {
        "format": "spherepriv.database_meta",
        "version": __version__,
        "dim": db.dim,
        "identity_means": {str(k): v.tolist() for k, v in sorted(db.identity_means.items())},
        "attribute_directions": {k: v.tolist() for k, v in db.attribute_directions.items()},
        "provenance": provenance or {},
    }
    atomic_write(meta_path(path), json.dumps(meta, indent=1) + "\n")


def read_database(path, fmt=None):
    ids, vecs, attrs = read_embeddings(path, fmt)
    means, directions = {}, {}
    mp = meta_path(path)
    if mp.exists():
        try:
            meta = json.loads(mp.read_text())
            means = {int(k): np.array(v) for k, v in meta.get("identity_means", {}).items()}
            directions = {k: np.array(v) for k, v in meta.get("attribute_directions", {}).items()}
        except (json.JSONDecodeError, AttributeError, ValueError) as exc:
            raise FormatError(f"malformed sidecar {mp}: {exc}") from None
        for d in directions.values():
            if d.shape != (vecs.shape[1],):
                raise FormatError("attribute direction dimension mismatch")
    records = []
    for i, v, a in zip(ids, vecs, attrs):
        if not a and directions and int(i) in means:
            # binary files drop attributes; recover them from the identity mean
            a = {name: attribute_label(d, means[int(i)]) for name, d in directions.items()}
        records.append(IdentityRecord(int(i), v, a))
    return IdentityDatabase(vecs.shape[1], records, means, directions)
