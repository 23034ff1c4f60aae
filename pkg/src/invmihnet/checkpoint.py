"""Versioned single-file checkpoint container.

Layout (all integers little-endian)::

    b"INVMIHCK"                  8-byte magic
    uint32 format_version
    uint64 header_length
    header                       UTF-8 JSON: config, iteration, rng_state,
                                 extra, blocks [{name, shape, offset, nbytes}]
    data                         float32 little-endian blocks, back to back
    sha256(everything above)     32 bytes
"""
from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np
import torch

from .transforms import MosaicLayout

__all__ = [
    "FORMAT_VERSION",
    "Checkpoint",
    "CheckpointError",
    "CheckpointVersionError",
    "CheckpointChecksumError",
    "CheckpointShapeError",
    "LayoutMismatchError",
    "save_checkpoint",
    "load_checkpoint",
    "module_params",
    "load_module_params",
]

FORMAT_VERSION = 1
MAGIC = b"INVMIHCK"
_PREFIX = struct.Struct("<8sIQ")
_DIGEST = 32


class CheckpointError(RuntimeError):
    code = 20


class CheckpointVersionError(CheckpointError):
    code = 21


class CheckpointChecksumError(CheckpointError):
    code = 22


class CheckpointShapeError(CheckpointError):
    code = 23


class LayoutMismatchError(CheckpointError):
    code = 24


@dataclass
class Checkpoint:
    config: dict[str, Any]
    params: "OrderedDict[str, np.ndarray]"
    iteration: int = 0
    rng_state: dict[str, Any] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def layout(self) -> MosaicLayout:
        return MosaicLayout(int(self.config["m"]), int(self.config["n"]))


def module_params(module: torch.nn.Module, prefix: str = "") -> "OrderedDict[str, np.ndarray]":
    return OrderedDict(
        (prefix + name, t.detach().cpu().to(torch.float32).numpy().copy())
        for name, t in module.state_dict().items()
    )


def load_module_params(module: torch.nn.Module, params: Mapping[str, np.ndarray], prefix: str = "") -> None:
    state = module.state_dict()
    missing = [k for k in state if prefix + k not in params]
    if missing:
        raise CheckpointShapeError(f"checkpoint lacks parameters: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    new_state = {}
    for name, current in state.items():
        arr = params[prefix + name]
        if tuple(arr.shape) != tuple(current.shape):
            raise CheckpointShapeError(
                f"parameter {name}: checkpoint shape {tuple(arr.shape)} vs model {tuple(current.shape)}"
            )
        new_state[name] = torch.from_numpy(np.array(arr)).to(current.dtype)
    module.load_state_dict(new_state)


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> None:
    blocks, chunks, offset = [], [], 0
    for name, arr in ckpt.params.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        blocks.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = json.dumps(
        {
            "config": ckpt.config,
            "iteration": ckpt.iteration,
            "rng_state": ckpt.rng_state,
            "extra": ckpt.extra,
            "blocks": blocks,
        },
        sort_keys=True,
    ).encode("utf-8")
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)) + header + b"".join(chunks)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(body + hashlib.sha256(body).digest())
    tmp.replace(path)


def load_checkpoint(path: Union[str, Path], expected_layout: Optional[MosaicLayout] = None) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size + _DIGEST or raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not an InvMIHNet checkpoint")
    _, version, header_len = _PREFIX.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    body, digest = raw[:-_DIGEST], raw[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointChecksumError(f"{path}: checksum mismatch (truncated or corrupted file)")
    start = _PREFIX.size
    header = json.loads(body[start:start + header_len].decode("utf-8"))
    data = body[start + header_len:]
    params: OrderedDict[str, np.ndarray] = OrderedDict()
    for blk in header["blocks"]:
        count = int(np.prod(blk["shape"], dtype=np.int64))
        if blk["nbytes"] != 4 * count or blk["offset"] + blk["nbytes"] > len(data):
            raise CheckpointShapeError(f"{path}: block {blk['name']} has inconsistent size")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=blk["offset"])
        params[blk["name"]] = arr.reshape(blk["shape"]).astype(np.float32)
    ckpt = Checkpoint(
        config=header["config"],
        params=params,
        iteration=header["iteration"],
        rng_state=header["rng_state"],
        extra=header["extra"],
        format_version=version,
    )
    if expected_layout is not None:
        have = ckpt.layout
        if (have.m, have.n) != (expected_layout.m, expected_layout.n):
            raise LayoutMismatchError(
                f"{path}: checkpoint was trained for a {have.m}x{have.n} grid "
                f"(N={have.count}), requested {expected_layout.m}x{expected_layout.n} (N={expected_layout.count})"
            )
    return ckpt
