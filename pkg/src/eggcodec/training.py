"""Adam training loop for the speech-to-EGG model.

Batches are assembled deterministically from per-step seed sequences, so
results do not depend on how assembly work is scheduled. Each step draws a
batch of random 1 s crops, augments the speech side with white noise at an
SNR level drawn uniformly from the configured set (inf = clean), and
optionally high-pass filters the EGG references.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import DataError, NumericError
from .losses import LossConfig, LossReport, reconstruction_loss
from .model import EggCodecModel
from .signals import SignalBuffer, add_white_noise_snr, highpass_filter

DEFAULT_SNR_LEVELS = (3.0, 5.0, 7.0, math.inf)
_SILENT_RMS = 1e-4
_MAX_REDRAWS = 10


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 14
    epochs: int = 20
    crop_len: int = 16_000
    snr_levels_db: tuple = DEFAULT_SNR_LEVELS
    seed: int = 0
    loss_cfg: LossConfig = field(default_factory=LossConfig)
    filter_refs: bool = True

    def __post_init__(self) -> None:
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.crop_len % 16:
            raise ValueError("crop_len must be divisible by the 16x model stride")
        object.__setattr__(self, "snr_levels_db", tuple(float(s) for s in self.snr_levels_db))


class AdamState:
    """First/second moment estimates plus the shared step counter."""

    def __init__(self, params):
        self.m = [np.zeros_like(p.values) for p in params]
        self.v = [np.zeros_like(p.values) for p in params]
        self.t = 0


def adam_step(params, grads, state: AdamState, cfg: TrainConfig) -> AdamState:
    """One bias-corrected Adam update; mutates params in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and state must align")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bias1 = 1.0 - b1**state.t
    bias2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.values.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.values.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bias1
        v_hat = v / bias2
        p.values = p.values - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return state


@dataclass(frozen=True)
class BatchItem:
    audio: np.ndarray
    egg: np.ndarray
    snr_db: float


def make_batch(corpus, cfg: TrainConfig, rng: np.random.Generator):
    """Draw one batch of (audio_crop, egg_ref_crop) pairs.

    Items are sampled without replacement (all of them when the corpus is
    no larger than the batch). Crops whose EGG reference is effectively
    silent are redrawn up to 10 times, then the item is skipped; the cosine
    term is undefined on silence.
    """
    if not corpus:
        raise DataError("empty corpus")
    n = len(corpus)
    if n <= cfg.batch_size:
        chosen = np.arange(n)
    else:
        chosen = rng.choice(n, size=cfg.batch_size, replace=False)
    batch = []
    for item_idx in chosen:
        audio, egg = corpus[item_idx]
        if len(audio) < cfg.crop_len or len(egg) < cfg.crop_len:
            raise DataError(f"utterance {item_idx} shorter than crop_len {cfg.crop_len}")
        egg_crop = None
        for _ in range(_MAX_REDRAWS + 1):
            start = int(rng.integers(0, len(audio) - cfg.crop_len + 1))
            candidate = egg.samples[start : start + cfg.crop_len]
            if float(np.sqrt(np.mean(candidate**2))) >= _SILENT_RMS:
                egg_crop = candidate.copy()
                audio_crop = audio.samples[start : start + cfg.crop_len].copy()
                break
        if egg_crop is None:
            continue  # silent everywhere we looked; skip this item
        snr = cfg.snr_levels_db[int(rng.integers(0, len(cfg.snr_levels_db)))]
        if not math.isinf(snr):
            noisy = add_white_noise_snr(
                SignalBuffer(audio_crop, audio.sample_rate_hz),
                snr,
                seed=int(rng.integers(0, 2**63)),
            )
            audio_crop = np.asarray(noisy.samples)
        if cfg.filter_refs:
            egg_crop = np.asarray(
                highpass_filter(SignalBuffer(egg_crop, egg.sample_rate_hz)).samples
            )
        batch.append(BatchItem(audio_crop, np.asarray(egg_crop), snr))
    if not batch:
        raise DataError("all batch items were silent; cannot train on this corpus")
    return batch


@dataclass
class StepRecord:
    step: int
    report: LossReport
    commit: float


def fit(model: EggCodecModel, corpus, cfg: TrainConfig, out_dir=None, checkpoint_cb=None):
    """Train in place; returns (model, loss_curve).

    ``corpus`` is a sequence of (speech SignalBuffer, egg SignalBuffer)
    pairs at the pipeline rate. One epoch makes ceil(len(corpus)/batch_size)
    steps. A checkpoint is written (overwritten) per epoch when ``out_dir``
    is given. Raises NumericError with the offending step if the loss goes
    non-finite.
    """
    from .checkpoint import save_checkpoint  # local import to avoid a cycle

    for audio, egg in corpus:
        if audio.sample_rate_hz != egg.sample_rate_hz:
            raise DataError("audio/EGG rate mismatch in corpus")
    steps_per_epoch = max(1, math.ceil(len(corpus) / cfg.batch_size))
    curve: list[StepRecord] = []
    state = AdamState(model.params)
    step = 0
    for epoch in range(cfg.epochs):
        for _ in range(steps_per_epoch):
            rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, step)))
            batch = make_batch(corpus, cfg, rng)
            record = _train_step(model, batch, cfg, state, step, rng)
            curve.append(record)
            step += 1
        if out_dir is not None:
            out_path = Path(out_dir)
            out_path.mkdir(parents=True, exist_ok=True)
            save_checkpoint(model, out_path / "checkpoint.bin")
        if checkpoint_cb is not None:
            checkpoint_cb(epoch, model)
    return model, curve


def _train_step(model, batch, cfg, state, step, rng):
    ad.zero_param_grads(model.params)
    scale = 1.0 / len(batch)
    reports = []
    commits = []
    for item in batch:
        x = ad.constant(item.audio[None, :])
        pred, _, _, _, commit = model.reconstruct(x, training=True, rng=rng)
        report, grad_pred = reconstruction_loss(pred.values[0], item.egg, cfg.loss_cfg)
        if not report.is_finite() or not math.isfinite(float(commit.values)):
            raise NumericError(
                f"non-finite loss at step {step}: {report.to_dict()}, commit={commit.values}"
            )
        loss_node = ad.add(
            ad.external_loss(pred, report.l_reco, grad_pred[None, :]), commit
        )
        ad.backward(loss_node, seed=np.asarray(scale))
        reports.append(report)
        commits.append(float(commit.values))
    model.apply_ema_update(rng)
    grads = [p.grad for p in model.params]
    adam_step(model.params, grads, state, cfg)
    mean = _mean_report(reports)
    return StepRecord(step=step, report=mean, commit=float(np.mean(commits)))


def _mean_report(reports) -> LossReport:
    def avg(attr):
        return float(np.mean([getattr(r, attr) for r in reports]))

    return LossReport(
        l_s=avg("l_s"),
        l_cos=avg("l_cos"),
        l_l1=avg("l_l1"),
        l_l2=avg("l_l2"),
        l_t=avg("l_t"),
        l_reco=avg("l_reco"),
    )


def write_loss_csv(curve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "l_s", "l_t", "l_cos", "l_reco", "commit"])
        for rec in curve:
            writer.writerow(
                [
                    rec.step,
                    f"{rec.report.l_s:.10g}",
                    f"{rec.report.l_t:.10g}",
                    f"{rec.report.l_cos:.10g}",
                    f"{rec.report.l_reco:.10g}",
                    f"{rec.commit:.10g}",
                ]
            )
