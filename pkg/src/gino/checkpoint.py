"""Little-endian binary container for named arrays plus a JSON sidecar.

Layout: 8-byte LE uint64 header length, UTF-8 JSON header, then raw tensor
payloads. The header records version, per-tensor shape/dtype/offset and an
arbitrary JSON `meta` block (config, normalization stats). Tensor names are
written in sorted order so identical content yields identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError

FORMAT_VERSION = "gino-ckpt-v1"

_DTYPE_TAGS = {"f32": "<f4", "f64": "<f8", "i64": "<i8"}
_TAG_FROM_NP = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64",
                np.dtype(np.int64): "i64"}


def save(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write arrays and metadata to `path` (parents created)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = {}
    offset = 0
    names = sorted(tensors)
    payloads = []
    for name in names:
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype not in _TAG_FROM_NP:
            raise ValidationError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
        tag = _TAG_FROM_NP[arr.dtype]
        raw = arr.astype(_DTYPE_TAGS[tag], copy=False).tobytes()
        entries[name] = {"shape": list(arr.shape), "dtype": tag,
                         "offset": offset, "nbytes": len(raw)}
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"version": FORMAT_VERSION, "tensors": entries, "meta": meta or {}},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in payloads:
            fh.write(raw)


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container; returns (tensors, meta)."""
    path = Path(path)
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("version") != FORMAT_VERSION:
            raise ValidationError(
                f"{path}: unsupported container version {header.get('version')!r}")
        blob = fh.read()
    tensors = {}
    for name, ent in header["tensors"].items():
        raw = blob[ent["offset"]: ent["offset"] + ent["nbytes"]]
        arr = np.frombuffer(raw, dtype=_DTYPE_TAGS[ent["dtype"]])
        tensors[name] = arr.reshape(ent["shape"]).copy()
    return tensors, header.get("meta", {})
