"""Binary checkpoint format for base and PK-GCN models.

Layout (little-endian throughout):
    magic "PKGC"
    format version       u32
    component tag        u32 length + ASCII bytes ("base" | "pkgcn-v1" | "pkgcn-v2")
    tensor count         u32
    per tensor: name length u32, name bytes, rank u32, dims u32 each,
                raw IEEE-754 float64 payload

String metadata (architecture, activation, input shape) travels as
rank-0 entries with empty payloads whose names encode ``meta:key=value``.
The normalized adjacency is stored inside PK-GCN checkpoints under the
name ``adjacency``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, UsageError
from .gcn import PkGcnModel
from .nn import Model, build_base_model

MAGIC = b"PKGC"
VERSION = 1
TAGS = ("base", "pkgcn-v1", "pkgcn-v2")


@dataclass
class CheckpointData:
    tag: str
    tensors: dict
    meta: dict


def _write_entry(f, name: str, arr: np.ndarray | None) -> None:
    raw = name.encode()
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)
    if arr is None:
        f.write(struct.pack("<I", 0))
        return
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    f.write(struct.pack("<I", arr.ndim))
    for dim in arr.shape:
        f.write(struct.pack("<I", dim))
    f.write(arr.astype("<f8").tobytes())


def _collect(obj) -> tuple[str, dict, dict]:
    if isinstance(obj, Model):
        meta = {
            "arch": obj.arch,
            "input": "x".join(str(d) for d in obj.in_shape),
            "dtype": np.dtype(obj.class_embeddings().dtype).name,
            "width_scale": repr(obj.width_scale),
        }
        return "base", dict(obj.params()), meta
    if isinstance(obj, PkGcnModel):
        tag = f"pkgcn-{obj.head}"
        tensors = dict(obj.params())
        tensors["adjacency"] = np.asarray(obj.adjacency)
        if obj.similarity is not None:
            tensors["similarity"] = np.asarray(obj.similarity)
        meta = {
            "arch": obj.base.arch,
            "input": "x".join(str(d) for d in obj.base.in_shape),
            "dtype": np.dtype(obj.base.class_embeddings().dtype).name,
            "width_scale": repr(obj.base.width_scale),
            "sigma": obj.sigma,
        }
        return tag, tensors, meta
    raise UsageError(f"cannot checkpoint object of type {type(obj).__name__}")


def save_checkpoint(obj, path) -> None:
    tag, tensors, meta = _collect(obj)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        raw = tag.encode()
        f.write(struct.pack("<I", len(raw)))
        f.write(raw)
        entries = [(f"meta:{k}={v}", None) for k, v in sorted(meta.items())]
        entries += sorted(tensors.items())
        f.write(struct.pack("<I", len(entries)))
        for name, arr in entries:
            _write_entry(f, name, arr)


def _read(f, count, what):
    raw = f.read(count)
    if len(raw) != count:
        raise FormatError(f"truncated checkpoint while reading {what}")
    return raw


def load_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as f:
        if _read(f, 4, "magic") != MAGIC:
            raise FormatError(f"{path}: bad magic, not a pkgcn checkpoint")
        version = struct.unpack("<I", _read(f, 4, "version"))[0]
        if version != VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        tag_len = struct.unpack("<I", _read(f, 4, "tag length"))[0]
        tag = _read(f, tag_len, "tag").decode()
        if tag not in TAGS:
            raise FormatError(f"{path}: unknown component tag {tag!r}")
        count = struct.unpack("<I", _read(f, 4, "tensor count"))[0]
        tensors, meta = {}, {}
        for _ in range(count):
            name_len = struct.unpack("<I", _read(f, 4, "name length"))[0]
            name = _read(f, name_len, "name").decode()
            rank = struct.unpack("<I", _read(f, 4, "rank"))[0]
            dims = [
                struct.unpack("<I", _read(f, 4, "dim"))[0] for _ in range(rank)
            ]
            size = int(np.prod(dims)) if rank else 1
            if name.startswith("meta:") and rank == 0:
                key, _, value = name[5:].partition("=")
                meta[key] = value
                continue
            payload = _read(f, size * 8, f"payload of {name}")
            tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
        trailing = f.read(1)
        if trailing:
            raise FormatError(f"{path}: trailing bytes after last tensor")
    return CheckpointData(tag=tag, tensors=tensors, meta=meta)


def _rebuild_base(ckpt: CheckpointData, prefix: str = "") -> Model:
    in_shape = tuple(int(d) for d in ckpt.meta["input"].split("x"))
    dtype = np.dtype(ckpt.meta.get("dtype", "float64"))
    model = build_base_model(
        ckpt.meta["arch"],
        seed=0,
        in_shape=in_shape,
        width_scale=float(ckpt.meta.get("width_scale", "1.0")),
        dtype=dtype,
    )
    model.set_params(
        {
            k[len(prefix):]: v.astype(dtype)
            for k, v in ckpt.tensors.items()
            if k.startswith(prefix) and k != "adjacency"
        }
    )
    return model


def load_model(path):
    """Reconstruct the saved model (base Model or PkGcnModel)."""
    ckpt = load_checkpoint(path)
    if ckpt.tag == "base":
        return _rebuild_base(ckpt)
    base = _rebuild_base(ckpt, prefix="base.")
    dtype = np.dtype(ckpt.meta.get("dtype", "float64"))
    head = ckpt.tag.split("-")[1]
    return PkGcnModel(
        base=base,
        adjacency=ckpt.tensors["adjacency"],
        gcn_w=ckpt.tensors["gcn.w"].astype(dtype),
        sigma=ckpt.meta.get("sigma", "relu"),
        head=head,
        fc_w=ckpt.tensors["head.w"].astype(dtype) if head == "v2" else None,
        fc_b=ckpt.tensors["head.b"].astype(dtype) if head == "v2" else None,
        similarity=ckpt.tensors.get("similarity"),
    )
