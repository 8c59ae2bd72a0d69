"""Desk-scale convolutional encoder / residual-VQ / decoder.

Encoder: initial conv, then per block a residual unit followed by a strided
downsampling conv, then a stack of dilated residual convs for longer-range
timing context, then a 1x1 projection to the latent size. The decoder
mirrors it with transposed convs and a tanh output bounded to (-1, 1).

Channels start at ``base_channels`` and double on every second block, which
keeps the default model around the 50k-parameter scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import conv1d, conv1d_transpose

_INIT_KERNEL = 7
_RES_KERNEL = 3
_EMA_DECAY = 0.99
_DEAD_CODE_STEPS = 100


@dataclass(frozen=True)
class ModelConfig:
    base_channels: int = 16
    n_down_blocks: int = 3
    strides: tuple = (2, 2, 4)
    residual_units_per_block: int = 1
    latent_dim: int = 32
    timing_dilations: tuple = (1, 2, 4)
    rvq_stages: int = 2
    codebook_size: int = 64
    commitment_weight: float = 0.25

    def __post_init__(self) -> None:
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        object.__setattr__(self, "timing_dilations", tuple(int(d) for d in self.timing_dilations))
        if len(self.strides) != self.n_down_blocks:
            raise ValueError("strides must list one entry per down block")
        for name in ("base_channels", "n_down_blocks", "residual_units_per_block", "latent_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.rvq_stages < 0:
            raise ValueError("rvq_stages must be >= 0")
        if self.codebook_size < 2:
            raise ValueError("codebook_size must be >= 2")

    @property
    def total_stride(self) -> int:
        return int(np.prod(self.strides)) if self.strides else 1

    def block_channels(self) -> list:
        """Output channels after each down block (doubling every 2nd block)."""
        return [self.base_channels * 2 ** ((b + 1) // 2) for b in range(self.n_down_blocks)]


class Codebook:
    """One RVQ stage: vectors plus EMA statistics for training updates."""

    def __init__(self, vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] < 2:
            raise ValueError("codebook needs a (size >= 2, dim) matrix")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("codebook vectors must be finite")
        self.vectors = vectors.copy()
        self.usage_counts = np.zeros(vectors.shape[0], dtype=np.int64)
        self.ema_counts = np.ones(vectors.shape[0])
        self.ema_sums = self.vectors.copy()
        self.unused_streak = np.zeros(vectors.shape[0], dtype=np.int64)
        self.data_initialized = False

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    def assign(self, columns: np.ndarray) -> np.ndarray:
        """Nearest vector per column (squared Euclidean, ties -> lowest index)."""
        # dist^2 = |x|^2 - 2 x.c + |c|^2; argmin keeps the lowest index on ties
        cross = self.vectors @ columns  # (size, n)
        sq = np.sum(self.vectors * self.vectors, axis=1)[:, None]
        return np.argmin(sq - 2.0 * cross, axis=0)

    def ema_update(self, columns: np.ndarray, indices: np.ndarray, rng: np.random.Generator):
        """EMA of assigned vectors with dead-code reseeding from the batch."""
        size, dim = self.vectors.shape
        counts = np.bincount(indices, minlength=size).astype(np.float64)
        sums = np.zeros((size, dim))
        np.add.at(sums, indices, columns.T)
        self.ema_counts = _EMA_DECAY * self.ema_counts + (1 - _EMA_DECAY) * counts
        self.ema_sums = _EMA_DECAY * self.ema_sums + (1 - _EMA_DECAY) * sums
        self.vectors = self.ema_sums / np.maximum(self.ema_counts, 1e-5)[:, None]
        used = counts > 0
        self.usage_counts += used.astype(np.int64)
        self.unused_streak = np.where(used, 0, self.unused_streak + 1)
        dead = np.nonzero(self.unused_streak >= _DEAD_CODE_STEPS)[0]
        if dead.size and columns.shape[1]:
            picks = rng.integers(0, columns.shape[1], size=dead.size)
            self.vectors[dead] = columns[:, picks].T
            self.ema_sums[dead] = self.vectors[dead]
            self.ema_counts[dead] = 1.0
            self.unused_streak[dead] = 0


class EggCodecModel:
    """Speech-to-EGG autoencoder with in-repo reverse-mode differentiation."""

    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0):
        self.cfg = cfg or ModelConfig()
        self._rng = np.random.default_rng(seed)
        self.params: list[Tensor] = []
        self._pending_ema: list = []
        self._build()

    # -- construction -----------------------------------------------------

    def _weight(self, name: str, shape: tuple) -> Tensor:
        fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
        bound = math.sqrt(1.0 / fan_in)
        t = ad.parameter(self._rng.uniform(-bound, bound, size=shape), name)
        self.params.append(t)
        return t

    def _bias(self, name: str, n: int) -> Tensor:
        t = ad.parameter(np.zeros(n), name)
        self.params.append(t)
        return t

    def _conv_params(self, name: str, out_ch: int, in_ch: int, kernel: int):
        return self._weight(f"{name}.w", (out_ch, in_ch, kernel)), self._bias(f"{name}.b", out_ch)

    def _tconv_params(self, name: str, in_ch: int, out_ch: int, kernel: int):
        return self._weight(f"{name}.w", (in_ch, out_ch, kernel)), self._bias(f"{name}.b", out_ch)

    def _res_params(self, name: str, ch: int, dilation: int):
        return {
            "conv": self._conv_params(f"{name}.conv", ch, ch, _RES_KERNEL),
            "mix": self._conv_params(f"{name}.mix", ch, ch, 1),
            "dilation": dilation,
        }

    def _build(self) -> None:
        cfg = self.cfg
        chans = cfg.block_channels()
        self.enc_in = self._conv_params("enc.in", cfg.base_channels, 1, _INIT_KERNEL)
        self.enc_blocks = []
        ch = cfg.base_channels
        for b, (stride, out_ch) in enumerate(zip(cfg.strides, chans)):
            units = [
                self._res_params(f"enc.b{b}.res{u}", ch, 1)
                for u in range(cfg.residual_units_per_block)
            ]
            down = self._conv_params(f"enc.b{b}.down", out_ch, ch, 2 * stride)
            self.enc_blocks.append({"units": units, "down": down, "stride": stride})
            ch = out_ch
        self.enc_timing = [
            self._res_params(f"enc.timing{i}", ch, d) for i, d in enumerate(cfg.timing_dilations)
        ]
        self.enc_proj = self._conv_params("enc.proj", cfg.latent_dim, ch, 1)

        self.dec_proj = self._conv_params("dec.proj", ch, cfg.latent_dim, 1)
        self.dec_timing = [
            self._res_params(f"dec.timing{i}", ch, d) for i, d in enumerate(cfg.timing_dilations)
        ]
        self.dec_blocks = []
        in_chs = [cfg.base_channels] + chans[:-1]
        for b in reversed(range(cfg.n_down_blocks)):
            stride = cfg.strides[b]
            out_ch = in_chs[b]
            up = self._tconv_params(f"dec.b{b}.up", ch, out_ch, 2 * stride)
            units = [
                self._res_params(f"dec.b{b}.res{u}", out_ch, 1)
                for u in range(cfg.residual_units_per_block)
            ]
            self.dec_blocks.append({"up": up, "units": units, "stride": stride})
            ch = out_ch
        self.dec_out = self._conv_params("dec.out", 1, ch, _INIT_KERNEL)

        dim = cfg.latent_dim
        self.codebooks = [
            Codebook(self._rng.normal(0.0, 0.5 / math.sqrt(dim), size=(cfg.codebook_size, dim)))
            for _ in range(cfg.rvq_stages)
        ]

    def n_parameters(self) -> int:
        return sum(p.values.size for p in self.params)

    # -- forward ----------------------------------------------------------

    def _res_unit(self, x: Tensor, unit) -> Tensor:
        w1, b1 = unit["conv"]
        w2, b2 = unit["mix"]
        h = conv1d(x, w1, b1, dilation=unit["dilation"])
        h = conv1d(ad.elu(h), w2, b2)
        return ad.add(x, h)

    def encoder_forward(self, audio: Tensor) -> Tensor:
        """(1, T) -> (latent_dim, T / total_stride); T must divide evenly."""
        if audio.values.ndim != 2 or audio.values.shape[0] != 1:
            raise ValueError("encoder expects a (1, T) tensor")
        t_in = audio.values.shape[1]
        if t_in % self.cfg.total_stride:
            raise ValueError(f"input length {t_in} not divisible by {self.cfg.total_stride}")
        h = conv1d(audio, *self.enc_in)
        for block in self.enc_blocks:
            for unit in block["units"]:
                h = self._res_unit(h, unit)
            h = ad.elu(conv1d(h, *block["down"], stride=block["stride"]))
        for unit in self.enc_timing:
            h = self._res_unit(h, unit)
        return conv1d(h, *self.enc_proj)

    def rvq_quantize(self, latent: Tensor, training: bool = False,
                     rng: np.random.Generator | None = None):
        """Stage-wise nearest-neighbour residual quantization.

        Returns (quantized tensor with straight-through backward, indices
        per stage, commitment loss node). With no stages the latent passes
        through and the commitment loss is zero.
        """
        if not self.codebooks:
            zero_diff = ad.sub_const(latent, latent.values.copy())
            commit = ad.scale(ad.mean_all(ad.square(zero_diff)), self.cfg.commitment_weight)
            return latent, [], commit
        for cb in self.codebooks:
            if cb.size == 0:
                raise ValueError("empty codebook")
        if training and not self.codebooks[0].data_initialized:
            self._init_codebooks_from(latent.values, rng or self._rng)
        columns = latent.values  # (dim, n)
        residual = columns.copy()
        quantized = np.zeros_like(columns)
        indices = []
        stage_stats = []
        for cb in self.codebooks:
            idx = cb.assign(residual)
            if training:
                stage_stats.append((residual.copy(), idx))
            chosen = cb.vectors[idx].T
            quantized += chosen
            residual -= chosen
            indices.append(idx)
        if training:
            self._pending_ema.append(stage_stats)
        diff = ad.sub_const(latent, quantized)
        commit = ad.scale(ad.mean_all(ad.square(diff)), self.cfg.commitment_weight)
        return ad.straight_through(latent, quantized), indices, commit

    def _init_codebooks_from(self, columns: np.ndarray, rng: np.random.Generator) -> None:
        """Data-dependent init: seed each stage from (jittered) residuals of
        the first training batch, then quantize greedily to the next stage."""
        residual = columns.copy()
        n = residual.shape[1]
        for cb in self.codebooks:
            picks = rng.integers(0, n, size=cb.size)
            jitter = 1e-3 * rng.standard_normal((cb.size, residual.shape[0]))
            cb.vectors = residual[:, picks].T + jitter
            cb.ema_sums = cb.vectors.copy()
            cb.ema_counts = np.ones(cb.size)
            cb.data_initialized = True
            idx = cb.assign(residual)
            residual = residual - cb.vectors[idx].T

    def apply_ema_update(self, rng: np.random.Generator) -> None:
        """Apply the EMA statistics collected by training-mode quantize
        calls since the last update. Called once per optimization step, so
        the dead-code streak is counted in steps."""
        if not self._pending_ema:
            return
        for s, cb in enumerate(self.codebooks):
            cols = np.concatenate([stats[s][0] for stats in self._pending_ema], axis=1)
            idxs = np.concatenate([stats[s][1] for stats in self._pending_ema])
            cb.ema_update(cols, idxs, rng)
        self._pending_ema = []

    def decoder_forward(self, quantized: Tensor) -> Tensor:
        """(latent_dim, n) -> (1, n * total_stride), tanh-bounded."""
        h = conv1d(quantized, *self.dec_proj)
        for unit in self.dec_timing:
            h = self._res_unit(h, unit)
        for block in self.dec_blocks:
            h = ad.elu(conv1d_transpose(h, *block["up"], stride=block["stride"]))
            for unit in block["units"]:
                h = self._res_unit(h, unit)
        return ad.tanh(conv1d(h, *self.dec_out))

    def reconstruct(self, audio: Tensor, training: bool = False,
                    rng: np.random.Generator | None = None):
        """Full pass; returns (pred, latent, quantized, indices, commit)."""
        latent = self.encoder_forward(audio)
        quantized, indices, commit = self.rvq_quantize(latent, training=training, rng=rng)
        pred = self.decoder_forward(quantized)
        return pred, latent, quantized, indices, commit
