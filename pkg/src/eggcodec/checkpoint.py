"""Little-endian binary checkpoints.

Layout: magic "EGGC", format version u32, the model config (scalars as
i64/f64 in declaration order, list fields length-prefixed), then each
tensor as (name length u32, name bytes, rank u32, dims i64..., f64 values).
Codebook vectors ride along as tensors named ``rvq.stage{i}.codebook``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError, CheckpointVersionError
from .model import Codebook, EggCodecModel, ModelConfig

MAGIC = b"EGGC"
VERSION = 1


def _pack_config(cfg: ModelConfig) -> bytes:
    parts = [struct.pack("<q", cfg.base_channels), struct.pack("<q", cfg.n_down_blocks)]
    parts.append(struct.pack("<q", len(cfg.strides)))
    parts.extend(struct.pack("<q", s) for s in cfg.strides)
    parts.append(struct.pack("<q", cfg.residual_units_per_block))
    parts.append(struct.pack("<q", cfg.latent_dim))
    parts.append(struct.pack("<q", len(cfg.timing_dilations)))
    parts.extend(struct.pack("<q", d) for d in cfg.timing_dilations)
    parts.append(struct.pack("<q", cfg.rvq_stages))
    parts.append(struct.pack("<q", cfg.codebook_size))
    parts.append(struct.pack("<d", cfg.commitment_weight))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out if len(out) > 1 else out[0]

    def take_bytes(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def exhausted(self) -> bool:
        return self.pos >= len(self.data)


def _unpack_config(r: _Reader) -> ModelConfig:
    base_channels = r.take("<q")
    n_down_blocks = r.take("<q")
    strides = tuple(r.take("<q") for _ in range(r.take("<q")))
    residual_units = r.take("<q")
    latent_dim = r.take("<q")
    dilations = tuple(r.take("<q") for _ in range(r.take("<q")))
    rvq_stages = r.take("<q")
    codebook_size = r.take("<q")
    commitment_weight = r.take("<d")
    return ModelConfig(
        base_channels=base_channels,
        n_down_blocks=n_down_blocks,
        strides=strides,
        residual_units_per_block=residual_units,
        latent_dim=latent_dim,
        timing_dilations=dilations,
        rvq_stages=rvq_stages,
        codebook_size=codebook_size,
        commitment_weight=commitment_weight,
    )


def _named_tensors(model: EggCodecModel):
    for p in model.params:
        yield p.name, p.values
    for i, cb in enumerate(model.codebooks):
        yield f"rvq.stage{i}.codebook", cb.vectors


def save_checkpoint(model: EggCodecModel, path) -> None:
    parts = [MAGIC, struct.pack("<I", VERSION), _pack_config(model.cfg)]
    for name, values in _named_tensors(model):
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", values.ndim))
        parts.extend(struct.pack("<q", d) for d in values.shape)
        parts.append(np.ascontiguousarray(values, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> EggCodecModel:
    path = Path(path)
    data = path.read_bytes()
    r = _Reader(data, path)
    if r.take_bytes(4) != MAGIC:
        raise CheckpointError(f"{path}: not an EGGC checkpoint")
    version = r.take("<I")
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: unsupported format version {version}")
    cfg = _unpack_config(r)
    model = EggCodecModel(cfg, seed=0)
    tensors = {}
    while not r.exhausted():
        name = r.take_bytes(r.take("<I")).decode("utf-8")
        rank = r.take("<I")
        shape = tuple(r.take("<q") for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(r.take_bytes(8 * count), dtype="<f8").reshape(shape)
        tensors[name] = values.astype(np.float64)
    for p in model.params:
        if p.name not in tensors:
            raise CheckpointError(f"{path}: missing tensor {p.name}")
        if tensors[p.name].shape != p.values.shape:
            raise CheckpointError(f"{path}: shape mismatch for {p.name}")
        p.values = tensors[p.name].copy()
    for i, cb in enumerate(model.codebooks):
        key = f"rvq.stage{i}.codebook"
        if key not in tensors:
            raise CheckpointError(f"{path}: missing tensor {key}")
        model.codebooks[i] = Codebook(tensors[key])
        model.codebooks[i].data_initialized = True
    return model
