"""Checkpoint file format.

Layout: magic ``SKBY1\\n`` + 8-byte little-endian header length + UTF-8 JSON
header + raw little-endian float64 blob. The header declares the
architecture, width, step, role, and the name/shape of every array in blob
order; the loader validates shapes before accepting the file.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError
from .network import ArchDescriptor, BNStats, ParamSet

_MAGIC = b"SKBY1\n"
_BN_FIELDS = ("mu", "sigma2", "gamma", "beta")


@dataclass
class CheckpointBundle:
    params: ParamSet
    arch: ArchDescriptor
    role: str
    step: int
    meta: dict


def _entries(params: ParamSet):
    for name, arr in params.tensors.items():
        yield name, arr
    for name, stats in params.bn.items():
        for leaf in _BN_FIELDS:
            yield f"{name}.{leaf}", getattr(stats, leaf)


def save_checkpoint(path: str | Path, params: ParamSet, arch: ArchDescriptor,
                    role: str, step: int, meta: dict | None = None) -> Path:
    if role not in ("online", "target", "classifier"):
        raise DataError(f"unknown checkpoint role {role!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = list(_entries(params))
    header = {
        "format_version": 1,
        "arch": arch.to_dict(),
        "width_multiplier": params.width_multiplier,
        "step": step,
        "role": role,
        "bn_layers": [{"name": n, "epsilon": s.epsilon} for n, s in params.bn.items()],
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True).encode()
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        fh.write(blob)
    return path


def load_checkpoint(path: str | Path, dtype=np.float32) -> CheckpointBundle:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    (head_len,) = struct.unpack_from("<Q", raw, len(_MAGIC))
    head_start = len(_MAGIC) + 8
    header = json.loads(raw[head_start : head_start + head_len].decode())
    blob = raw[head_start + head_len :]

    arrays = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(blob):
            raise DataError(f"{path}: blob truncated at parameter {entry['name']}")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        arrays[entry["name"]] = arr.astype(dtype)
        offset += nbytes
    if offset != len(blob):
        raise DataError(f"{path}: blob has {len(blob) - offset} trailing bytes")

    bn = {}
    for layer in header["bn_layers"]:
        name = layer["name"]
        fields = {}
        for leaf in _BN_FIELDS:
            key = f"{name}.{leaf}"
            if key not in arrays:
                raise DataError(f"{path}: missing BN field {key}")
            fields[leaf] = arrays.pop(key)
        sizes = {f.shape for f in fields.values()}
        if len(sizes) != 1:
            raise DataError(f"{path}: inconsistent BN shapes for {name}")
        bn[name] = BNStats(epsilon=float(layer["epsilon"]), **fields)

    params = ParamSet(arrays, bn, float(header["width_multiplier"]))
    arch = ArchDescriptor.from_dict(header["arch"])
    _validate_against_arch(params, arch, header["width_multiplier"], path)
    return CheckpointBundle(
        params=params,
        arch=arch,
        role=header["role"],
        step=int(header["step"]),
        meta=header.get("meta", {}),
    )


def _validate_against_arch(params: ParamSet, arch: ArchDescriptor, width: float, path) -> None:
    from .network import scale_arch

    sc = scale_arch(arch, width)
    for i, blk in enumerate(sc.blocks):
        name = f"encoder.block{i}.gcn.w"
        if name in params.tensors:
            expected = (blk.out_channels, blk.in_channels)
            if params.tensors[name].shape != expected:
                raise DataError(
                    f"{path}: {name} has shape {params.tensors[name].shape}, expected {expected}"
                )
        tname = f"encoder.block{i}.tcn.w"
        if tname in params.tensors:
            expected = (blk.out_channels, blk.out_channels, blk.temporal_kernel)
            if params.tensors[tname].shape != expected:
                raise DataError(
                    f"{path}: {tname} has shape {params.tensors[tname].shape}, expected {expected}"
                )
    if "head.w" in params.tensors and arch.class_count is not None:
        expected = (arch.class_count, sc.representation_dim)
        if params.tensors["head.w"].shape != expected:
            raise DataError(f"{path}: head.w has shape {params.tensors['head.w'].shape}, expected {expected}")
