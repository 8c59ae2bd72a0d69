"""STFT and log-Mel spectrogram primitives, differentiable w.r.t. the input.

Conventions, pinned so tests are exact: periodic Hann window, hop =
window/4, reflect center-padding of window/2 on each side, magnitude (not
power) mel energies, 64 mel bands, natural log with floor LOG_EPS.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

LOG_EPS = 1e-5
N_MELS = 64
MIN_WINDOW = 32
MAX_WINDOW = 1024
_DEFAULT_RATE = 16_000


def _coerce(sig, sample_rate_hz=None):
    """Accept a SignalBuffer or a plain 1-D array (with explicit rate)."""
    if hasattr(sig, "samples") and hasattr(sig, "sample_rate_hz"):
        return np.asarray(sig.samples, dtype=np.float64), sig.sample_rate_hz
    return np.asarray(sig, dtype=np.float64), (sample_rate_hz or _DEFAULT_RATE)


@dataclass(frozen=True)
class MelSpectrogram:
    """frames x n_mels matrix of natural-log mel magnitudes."""

    values: np.ndarray
    window_len: int
    hop: int
    n_mels: int


def _check_window(window_len: int) -> None:
    if window_len < MIN_WINDOW or window_len > MAX_WINDOW or window_len & (window_len - 1):
        raise ValueError(
            f"window_len must be a power of two in [{MIN_WINDOW}, {MAX_WINDOW}], got {window_len}"
        )


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann; value 1.0 at the center sample n/2."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _frame_starts(n_samples: int, hop: int) -> np.ndarray:
    return np.arange(n_samples // hop + 1) * hop


def stft_mag(sig, window_len: int, hop: int) -> np.ndarray:
    """Magnitude STFT, frames x (window_len/2 + 1), center-aligned."""
    _check_window(window_len)
    if hop <= 0:
        raise ValueError(f"hop must be positive, got {hop}")
    samples, _ = _coerce(sig)
    pad = window_len // 2
    if samples.size <= pad:
        raise ValueError(f"signal of {samples.size} samples too short for window {window_len}")
    padded = np.pad(samples, pad, mode="reflect")
    starts = _frame_starts(samples.size, hop)
    idx = starts[:, None] + np.arange(window_len)[None, :]
    frames = padded[idx] * hann_window(window_len)[None, :]
    return np.abs(np.fft.rfft(frames, axis=1))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def mel_filterbank(n_fft_bins: int, n_mels: int, sample_rate_hz: int) -> np.ndarray:
    """Triangular filters equally spaced on the mel scale, peak height 1,
    spanning 0 to Nyquist. Shape (n_mels, n_fft_bins). Cached; the returned
    array is read-only so concurrent readers are safe."""
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    nyquist = sample_rate_hz / 2.0
    mel_points = np.linspace(0.0, float(hz_to_mel(nyquist)), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.linspace(0.0, nyquist, n_fft_bins)
    lo = hz_points[:-2][:, None]
    center = hz_points[1:-1][:, None]
    hi = hz_points[2:][:, None]
    f = bin_freqs[None, :]
    rising = (f - lo) / np.maximum(center - lo, 1e-30)
    falling = (hi - f) / np.maximum(hi - center, 1e-30)
    bank = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    bank.flags.writeable = False
    return bank


def log_mel(sig, window_len: int, sample_rate_hz: int | None = None) -> MelSpectrogram:
    """ln(mel_filterbank @ |STFT| + LOG_EPS) with hop = window/4."""
    samples, rate = _coerce(sig, sample_rate_hz)
    hop = window_len // 4
    mag = stft_mag(samples, window_len, hop)
    bank = mel_filterbank(window_len // 2 + 1, N_MELS, rate)
    values = np.log(mag @ bank.T + LOG_EPS)
    return MelSpectrogram(values, window_len, hop, N_MELS)


def _rfft_abs_vjp(frames: np.ndarray, grad_mag: np.ndarray) -> np.ndarray:
    """Gradient of |rfft(frames)| rows back onto the (windowed) frames."""
    n = frames.shape[1]
    spectrum = np.fft.rfft(frames, axis=1)
    mag = np.abs(spectrum)
    safe = np.where(mag > 0.0, mag, 1.0)
    c = grad_mag * spectrum / safe  # zero-magnitude bins get zero gradient
    c = np.where(mag > 0.0, c, 0.0)
    d = c.copy()
    d[:, 1 : n // 2] *= 0.5
    d[:, 0] = d[:, 0].real
    d[:, n // 2] = d[:, n // 2].real
    return n * np.fft.irfft(d, n=n, axis=1)


def mel_to_csv(mel: MelSpectrogram, path) -> None:
    """Debug export: one row per frame, one column per mel band."""
    header = ",".join(f"mel{j}" for j in range(mel.n_mels))
    np.savetxt(path, mel.values, delimiter=",", header=header, comments="")


def log_mel_backward(
    sig, window_len: int, upstream_grad: np.ndarray, sample_rate_hz: int | None = None
) -> np.ndarray:
    """Exact chain-rule gradient of log_mel w.r.t. the input samples."""
    samples, rate = _coerce(sig, sample_rate_hz)
    hop = window_len // 4
    mag = stft_mag(samples, window_len, hop)
    bank = mel_filterbank(window_len // 2 + 1, N_MELS, rate)
    mel = mag @ bank.T
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    if upstream_grad.shape != mel.shape:
        raise ValueError(f"upstream grad shape {upstream_grad.shape} != {mel.shape}")
    grad_mag = (upstream_grad / (mel + LOG_EPS)) @ bank

    pad = window_len // 2
    padded = np.pad(samples, pad, mode="reflect")
    starts = _frame_starts(samples.size, hop)
    idx = starts[:, None] + np.arange(window_len)[None, :]
    window = hann_window(window_len)
    frames = padded[idx] * window[None, :]
    grad_frames = _rfft_abs_vjp(frames, grad_mag) * window[None, :]

    grad_padded = np.zeros_like(padded)
    np.add.at(grad_padded, idx.ravel(), grad_frames.ravel())
    # Adjoint of reflect padding: fold edge gradients back into the interior.
    n = samples.size
    grad = grad_padded[pad : pad + n].copy()
    grad[1 : pad + 1] += grad_padded[:pad][::-1]
    grad[n - 1 - pad : n - 1] += grad_padded[pad + n :][::-1]
    return grad
