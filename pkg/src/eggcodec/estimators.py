"""scikit-learn style estimators wrapping the functional core.

``EggReconstructor`` is the trainable speech-to-EGG model (fit/predict);
``DeggF0Extractor`` is the stateless EGG-to-F0 transformer. Both follow the
sklearn parameter conventions (constructor stores params untouched,
``get_params``/``set_params``/``clone`` work), so they compose with
pipelines and model-selection utilities that accept list-of-signal X.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import autodiff as ad
from .f0 import extract_f0
from .losses import LossConfig
from .model import EggCodecModel, ModelConfig
from .signals import PIPELINE_RATE, SignalBuffer, peak_normalize
from .training import TrainConfig, fit


def check_waveform(x, name: str = "X") -> np.ndarray:
    """Validate one waveform: 1-D, finite, non-empty, float64."""
    arr = np.asarray(getattr(x, "samples", x), dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} entries must be 1-D waveforms, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} contains an empty waveform")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_waveform_list(X, name: str = "X") -> list:
    if isinstance(X, np.ndarray) and X.ndim == 1:
        X = [X]
    try:
        items = list(X)
    except TypeError:
        raise ValueError(f"{name} must be an iterable of 1-D waveforms") from None
    if not items:
        raise ValueError(f"{name} is empty")
    return [check_waveform(x, name) for x in items]


class EggReconstructor(BaseEstimator):
    """Trainable speech-to-EGG reconstruction model.

    X and y are lists of 1-D waveforms at 16 kHz (or SignalBuffers). Inputs
    are peak-normalized before training and inference. ``predict`` handles
    arbitrary lengths >= crop_len via 50%-overlap windows with triangular
    crossfade weights.
    """

    def __init__(
        self,
        lr=1e-3,
        beta1=0.9,
        beta2=0.999,
        epsilon=1e-8,
        batch_size=14,
        epochs=20,
        crop_len=16_000,
        snr_levels_db=(3.0, 5.0, 7.0, math.inf),
        filter_refs=True,
        include_spectral=True,
        include_time_l1l2=True,
        include_time_cos=True,
        base_channels=16,
        latent_dim=32,
        rvq_stages=2,
        codebook_size=64,
        seed=0,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.batch_size = batch_size
        self.epochs = epochs
        self.crop_len = crop_len
        self.snr_levels_db = snr_levels_db
        self.filter_refs = filter_refs
        self.include_spectral = include_spectral
        self.include_time_l1l2 = include_time_l1l2
        self.include_time_cos = include_time_cos
        self.base_channels = base_channels
        self.latent_dim = latent_dim
        self.rvq_stages = rvq_stages
        self.codebook_size = codebook_size
        self.seed = seed

    def _configs(self):
        loss_cfg = LossConfig(
            include_spectral=self.include_spectral,
            include_time_l1l2=self.include_time_l1l2,
            include_time_cos=self.include_time_cos,
        )
        train_cfg = TrainConfig(
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            batch_size=self.batch_size,
            epochs=self.epochs,
            crop_len=self.crop_len,
            snr_levels_db=tuple(self.snr_levels_db),
            seed=self.seed,
            loss_cfg=loss_cfg,
            filter_refs=self.filter_refs,
        )
        model_cfg = ModelConfig(
            base_channels=self.base_channels,
            latent_dim=self.latent_dim,
            rvq_stages=self.rvq_stages,
            codebook_size=self.codebook_size,
        )
        return train_cfg, model_cfg

    def fit(self, X, y):
        speech = check_waveform_list(X, "X")
        egg = check_waveform_list(y, "y")
        if len(speech) != len(egg):
            raise ValueError(f"X has {len(speech)} utterances but y has {len(egg)}")
        corpus = []
        for s, e in zip(speech, egg):
            if s.size != e.size:
                raise ValueError("each speech/EGG pair must have equal length")
            corpus.append(
                (
                    peak_normalize(SignalBuffer(s, PIPELINE_RATE)),
                    peak_normalize(SignalBuffer(e, PIPELINE_RATE)),
                )
            )
        train_cfg, model_cfg = self._configs()
        model = EggCodecModel(model_cfg, seed=self.seed)
        model, curve = fit(model, corpus, train_cfg)
        self.model_ = model
        self.loss_curve_ = curve
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError("EggReconstructor is not fitted yet")
        return [self._predict_one(x) for x in check_waveform_list(X, "X")]

    def _predict_one(self, samples: np.ndarray) -> np.ndarray:
        sig = peak_normalize(SignalBuffer(samples, PIPELINE_RATE))
        return reconstruct_windowed(self.model_, np.asarray(sig.samples), self.crop_len)

    def score(self, X, y):
        """Mean waveform correlation between predictions and references."""
        from .metrics import ppmcc

        preds = self.predict(X)
        refs = check_waveform_list(y, "y")
        return float(np.mean([ppmcc(p, r) for p, r in zip(preds, refs)]))


def reconstruct_windowed(model: EggCodecModel, samples: np.ndarray, window: int) -> np.ndarray:
    """Run the codec over 50%-overlapping windows and blend with triangular
    weights (flat outer halves on the first/last window give an exact
    partition of unity). Output length equals input length."""
    n = samples.size
    if n < window:
        raise ValueError(f"input of {n} samples shorter than one window ({window})")
    hop = window // 2
    n_windows = max(1, math.ceil((n - window) / hop) + 1)
    padded_len = (n_windows - 1) * hop + window
    padded = np.zeros(padded_len)
    padded[:n] = samples
    acc = np.zeros(padded_len)
    weight_acc = np.zeros(padded_len)
    idx = np.arange(window)
    # Triangular crossfade; adjacent half-overlapped copies sum to exactly 1.
    tri = np.where(idx < hop, (idx + 0.5) / hop, (window - idx - 0.5) / hop)
    for w_idx in range(n_windows):
        start = w_idx * hop
        chunk = padded[start : start + window]
        x = ad.constant(chunk[None, :])
        pred, _, _, _, _ = model.reconstruct(x, training=False)
        weights = tri.copy()
        if w_idx == 0:
            weights[:hop] = 1.0
        if w_idx == n_windows - 1:
            weights[hop:] = 1.0
        acc[start : start + window] += weights * pred.values[0]
        weight_acc[start : start + window] += weights
    return acc[:n] / np.maximum(weight_acc[:n], 1e-12)


class DeggF0Extractor(BaseEstimator, TransformerMixin):
    """Stateless transformer: list of EGG waveforms -> list of F0Tracks."""

    def __init__(self, sample_rate_hz=PIPELINE_RATE, hop_s=0.010):
        self.sample_rate_hz = sample_rate_hz
        self.hop_s = hop_s

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        tracks = []
        for arr in check_waveform_list(X, "X"):
            tracks.append(extract_f0(SignalBuffer(arr, self.sample_rate_hz), hop_s=self.hop_s))
        return tracks
