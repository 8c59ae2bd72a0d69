"""Reconstruction losses: multi-scale spectral, cosine, hybrid time-domain.

Every loss returns (value, gradient w.r.t. the predicted waveform); the
gradients are analytic and are verified against central finite differences
by the check registry.

Normalization conventions, pinned here so tests are exact: spectral L1 is
the mean absolute element difference and spectral L2 the root-mean-square
difference (so the six window scales contribute comparably); time-domain L1
is the mean absolute sample difference and L2 the mean squared difference.
The weighting factor appears once as a divisor inside the time loss and
once as a multiplier in the combined loss, exactly as composed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateSignalError
from .spectral import _coerce, log_mel, log_mel_backward

SPECTRAL_SCALES = (32, 64, 128, 256, 512, 1024)
LAMBDA = 100.0


@dataclass(frozen=True)
class LossConfig:
    lambda_weight: float = LAMBDA
    spectral_scales: tuple = SPECTRAL_SCALES
    include_spectral: bool = True
    include_time_l1l2: bool = True
    include_time_cos: bool = True

    def __post_init__(self) -> None:
        if self.lambda_weight <= 0:
            raise ValueError("lambda_weight must be positive")
        for w in self.spectral_scales:
            if w & (w - 1) or w < 32 or w > 1024:
                raise ValueError(f"spectral scale {w} is not a power of two in [32, 1024]")
        if not (self.include_spectral or self.include_time_l1l2 or self.include_time_cos):
            raise ValueError("at least one loss component must be enabled")


@dataclass(frozen=True)
class LossReport:
    """Scalar loss components for one (pred, ref) pair. The adversarial and
    entropy-coding fields are fixed to zero in this artifact but kept for
    format stability."""

    l_s: float
    l_cos: float
    l_l1: float
    l_l2: float
    l_t: float
    l_reco: float
    l_g: float = 0.0
    l_d: float = 0.0
    l_l: float = 0.0

    def to_dict(self) -> dict:
        return {
            "l_s": self.l_s,
            "l_cos": self.l_cos,
            "l_l1": self.l_l1,
            "l_l2": self.l_l2,
            "l_t": self.l_t,
            "l_reco": self.l_reco,
            "l_g": self.l_g,
            "l_d": self.l_d,
            "l_l": self.l_l,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.to_dict().values())


def spectral_loss(pred, ref, cfg: LossConfig | None = None, sample_rate_hz: int | None = None):
    """Multi-scale log-mel loss: mean over scales of (L1 + RMS) of the
    spectrogram difference. Returns (value, grad w.r.t. pred)."""
    cfg = cfg or LossConfig()
    p, rate = _coerce(pred, sample_rate_hz)
    r, _ = _coerce(ref, sample_rate_hz)
    if p.shape != r.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {r.shape}")
    largest = max(cfg.spectral_scales)
    if p.size < largest:
        raise ValueError(f"signals of {p.size} samples shorter than largest scale {largest}")
    n_scales = len(cfg.spectral_scales)
    value = 0.0
    grad = np.zeros_like(p)
    for w in cfg.spectral_scales:
        mel_p = log_mel(p, w, rate).values
        mel_r = log_mel(r, w, rate).values
        diff = mel_p - mel_r
        k = diff.size
        l1 = float(np.mean(np.abs(diff)))
        l2 = float(np.sqrt(np.mean(diff * diff)))
        value += (l1 + l2) / n_scales
        upstream = np.sign(diff) / k
        if l2 > 0.0:
            upstream = upstream + diff / (k * l2)
        grad += log_mel_backward(p, w, upstream / n_scales, rate)
    return value, grad


def cosine_distance(y1, y2):
    """1 - <y1,y2> / (|y1| |y2|), in [0, 2]. Returns (value, grad wrt y1)."""
    a = np.asarray(y1, dtype=np.float64)
    b = np.asarray(y2, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DegenerateSignalError("cosine distance undefined for zero-norm input")
    cos = float(np.dot(a, b)) / (na * nb)
    grad = -b / (na * nb) + cos * a / (na * na)
    return 1.0 - cos, grad


def time_loss(pred, ref, cfg: LossConfig | None = None):
    """Hybrid time loss: (mean|d| + mean d^2) / lambda + cosine distance."""
    cfg = cfg or LossConfig()
    p, _ = _coerce(pred)
    r, _ = _coerce(ref)
    if p.shape != r.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {r.shape}")
    _, _, l_t, _, grad = _time_components(p, r, cfg, with_l1l2=True, with_cos=True)
    return l_t, grad


def _time_components(p, r, cfg, with_l1l2: bool, with_cos: bool):
    n = p.size
    diff = p - r
    l1 = float(np.mean(np.abs(diff))) if with_l1l2 else 0.0
    l2 = float(np.mean(diff * diff)) if with_l1l2 else 0.0
    grad = np.zeros_like(p)
    if with_l1l2:
        grad += (np.sign(diff) + 2.0 * diff) / (n * cfg.lambda_weight)
    if with_cos:
        l_cos, g_cos = cosine_distance(p, r)
        grad += g_cos
    else:
        l_cos = 0.0
    l_t = (l1 + l2) / cfg.lambda_weight + l_cos
    return l1, l2, l_t, l_cos, grad


def reconstruction_loss(pred, ref, cfg: LossConfig | None = None, sample_rate_hz: int | None = None):
    """Combined loss under the configured toggles.

    Returns (LossReport, grad w.r.t. pred). Toggled-off components report
    zero so the compositional identities hold for every ablation variant.
    """
    cfg = cfg or LossConfig()
    p, rate = _coerce(pred, sample_rate_hz)
    r, _ = _coerce(ref, sample_rate_hz)
    if p.shape != r.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {r.shape}")

    if cfg.include_spectral:
        l_s, grad_s = spectral_loss(p, r, cfg, rate)
    else:
        l_s, grad_s = 0.0, np.zeros_like(p)

    if cfg.include_time_l1l2 or cfg.include_time_cos:
        l1, l2, l_t, l_cos, grad_t = _time_components(
            p, r, cfg, with_l1l2=cfg.include_time_l1l2, with_cos=cfg.include_time_cos
        )
    else:
        l1 = l2 = l_t = l_cos = 0.0
        grad_t = np.zeros_like(p)

    l_reco = l_s + cfg.lambda_weight * l_t
    grad = grad_s + cfg.lambda_weight * grad_t
    report = LossReport(l_s=l_s, l_cos=l_cos, l_l1=l1, l_l2=l2, l_t=l_t, l_reco=l_reco)
    return report, grad


# Loss-toggle sets for the ablation variants covered by the experiment
# harness; keys match the experiment config's ablation tags.
ABLATION_LOSS_TOGGLES = {
    "optimal": {},
    "cos": {"include_time_l1l2": False},
    "l1l2": {"include_time_cos": False},
    "no_time": {"include_time_l1l2": False, "include_time_cos": False},
    "no_freq": {"include_spectral": False},
}


def loss_config_for(tag: str) -> LossConfig:
    toggles = ABLATION_LOSS_TOGGLES.get(tag, {})
    return replace(LossConfig(), **toggles)
