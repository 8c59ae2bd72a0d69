"""Waveform container, WAV I/O, and preprocessing primitives.

All operations are pure: they return new buffers and never mutate their
inputs. The pipeline sample rate is fixed at 16 kHz; ingestion code is
expected to resample to ``PIPELINE_RATE`` before anything downstream.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .errors import DataError, WavChannelError, WavFormatError

PIPELINE_RATE = 16_000
NORMALIZE_PEAK = 0.95

# 16-bit PCM scaling: write with 32768 and clamp, read with /32768, so the
# round-trip error stays <= 2**-15 everywhere (attained only at +1.0).
_PCM_SCALE = 32768.0


@dataclass(frozen=True)
class SignalBuffer:
    """Mono sampled waveform plus its sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self) -> None:
        # Always copy: freezing an aliased input array would surprise callers.
        samples = np.array(self.samples, dtype=np.float64, copy=True)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples contain NaN or Inf")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def with_samples(self, samples: np.ndarray) -> "SignalBuffer":
        return SignalBuffer(samples, self.sample_rate_hz)


def _parse_riff_chunks(raw: bytes, path: Path):
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None or data is None:
        raise WavFormatError(f"{path}: missing fmt/data chunk")
    return fmt, data


def load_wav(path) -> SignalBuffer:
    """Read a mono PCM16 or float32 WAV file, scaling samples to [-1, 1].

    Raises FileNotFoundError, WavChannelError, or WavFormatError so the
    three failure modes stay distinguishable.
    """
    path = Path(path)
    raw = path.read_bytes()  # FileNotFoundError propagates as-is
    fmt, data = _parse_riff_chunks(raw, path)
    if len(fmt) < 16:
        raise WavFormatError(f"{path}: truncated fmt chunk")
    audio_format, n_channels, sample_rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if n_channels != 1:
        raise WavChannelError(f"{path}: {n_channels} channels, only mono is supported")
    if (audio_format, bits) == (1, 16):
        usable = len(data) - (len(data) % 2)
        values = np.frombuffer(data[:usable], dtype="<i2").astype(np.float64) / _PCM_SCALE
    elif (audio_format, bits) == (3, 32):
        usable = len(data) - (len(data) % 4)
        values = np.frombuffer(data[:usable], dtype="<f4").astype(np.float64)
    else:
        raise WavFormatError(
            f"{path}: unsupported encoding (format tag {audio_format}, {bits}-bit); "
            "expected PCM16 or float32"
        )
    if values.size and not np.all(np.isfinite(values)):
        raise WavFormatError(f"{path}: non-finite samples in float data")
    return SignalBuffer(values, sample_rate)


def save_wav(sig: SignalBuffer, path) -> None:
    """Write a mono 16-bit PCM WAV file, clipping samples to [-1, 1]."""
    clipped = np.clip(sig.samples, -1.0, 1.0)
    quantized = np.clip(np.round(clipped * _PCM_SCALE), -32768, 32767).astype("<i2")
    data = quantized.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(data),
        b"WAVE",
        b"fmt ",
        16,
        1,  # PCM
        1,  # mono
        sig.sample_rate_hz,
        sig.sample_rate_hz * 2,
        2,
        16,
        b"data",
        len(data),
    )
    Path(path).write_bytes(header + data)


def highpass_filter(sig: SignalBuffer, cutoff_hz: float = 50.0) -> SignalBuffer:
    """Zero-phase high-pass: a 2nd-order Butterworth section applied
    forward and backward (effective 4th order), preserving peak timing."""
    nyquist = sig.sample_rate_hz / 2.0
    if cutoff_hz <= 0 or cutoff_hz >= nyquist:
        raise ValueError(f"cutoff {cutoff_hz} Hz outside (0, Nyquist={nyquist}) Hz")
    sos = butter(2, cutoff_hz, btype="highpass", fs=sig.sample_rate_hz, output="sos")
    warmup = 3 * (2 * sos.shape[0] + 1)  # sosfiltfilt edge-padding requirement
    if len(sig) <= warmup:
        warnings.warn(
            f"signal of {len(sig)} samples shorter than filter warm-up ({warmup}); "
            "returned unfiltered",
            RuntimeWarning,
            stacklevel=2,
        )
        return sig.with_samples(sig.samples.copy())
    return sig.with_samples(sosfiltfilt(sos, sig.samples))


def add_white_noise_snr(sig: SignalBuffer, snr_db: float, seed: int) -> SignalBuffer:
    """Add Gaussian noise scaled so the realized SNR equals ``snr_db``.

    ``math.inf`` is the "clean" sentinel and returns the input unchanged,
    as does a silent input (SNR undefined). Deterministic per seed.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return sig.with_samples(sig.samples.copy())
    p_signal = float(np.mean(np.square(sig.samples))) if len(sig) else 0.0
    if p_signal == 0.0:
        return sig.with_samples(sig.samples.copy())
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(sig))
    p_noise_target = p_signal / (10.0 ** (snr_db / 10.0))
    noise *= math.sqrt(p_noise_target / float(np.mean(np.square(noise))))
    return sig.with_samples(sig.samples + noise)


def resample(sig: SignalBuffer, target_hz: int) -> SignalBuffer:
    """Band-limited rational-ratio resampling via a Kaiser-windowed sinc
    interpolator with 64 taps per output sample (per polyphase branch).

    Output length is floor(len * target / source). Each output's tap
    weights are renormalized to unit sum so DC is preserved exactly,
    including at the edges.
    """
    if target_hz <= 0:
        raise ValueError(f"target_hz must be positive, got {target_hz}")
    if target_hz == sig.sample_rate_hz:
        return sig.with_samples(sig.samples.copy())
    n_in = len(sig)
    ratio = Fraction(target_hz, sig.sample_rate_hz)
    n_out = (n_in * ratio.numerator) // ratio.denominator
    if n_out == 0:
        return SignalBuffer(np.zeros(0), target_hz)

    taps = 64
    half = taps // 2
    # Anti-alias cutoff relative to the input Nyquist, with a small margin
    # inside the passband so the Kaiser transition stays below Nyquist.
    cutoff = min(1.0, target_hz / sig.sample_rate_hz) * 0.92
    beta = 8.6

    t0 = np.arange(n_out, dtype=np.float64) * (ratio.denominator / ratio.numerator)
    first = np.floor(t0).astype(np.int64) - (half - 1)
    offsets = np.arange(taps, dtype=np.int64)
    idx = first[:, None] + offsets[None, :]  # (n_out, taps)
    arg = t0[:, None] - idx  # in input-sample units, |arg| <= half
    kernel = cutoff * np.sinc(cutoff * arg)
    u = arg / half
    window = np.i0(beta * np.sqrt(np.clip(1.0 - u * u, 0.0, None))) / np.i0(beta)
    weights = kernel * window
    in_range = (idx >= 0) & (idx < n_in)
    weights = np.where(in_range, weights, 0.0)
    weights /= np.sum(weights, axis=1, keepdims=True)
    gathered = sig.samples[np.clip(idx, 0, n_in - 1)]
    out = np.sum(weights * gathered, axis=1)
    return SignalBuffer(out, target_hz)


def peak_normalize(sig: SignalBuffer, peak: float = NORMALIZE_PEAK) -> SignalBuffer:
    """Scale so max |sample| equals ``peak``; silence passes through."""
    top = float(np.max(np.abs(sig.samples))) if len(sig) else 0.0
    if top == 0.0:
        return sig.with_samples(sig.samples.copy())
    return sig.with_samples(sig.samples * (peak / top))


def rms(samples: np.ndarray) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(np.square(samples))))


def measured_snr_db(signal: np.ndarray, noise: np.ndarray) -> float:
    """SNR of an additive decomposition, for tests and diagnostics."""
    p_s = float(np.mean(np.square(signal)))
    p_n = float(np.mean(np.square(noise)))
    if p_n == 0.0:
        return math.inf
    if p_s == 0.0:
        raise DataError("SNR undefined for silent signal")
    return 10.0 * math.log10(p_s / p_n)
