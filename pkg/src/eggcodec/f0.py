"""F0 extraction from EGG waveforms.

Pipeline: differentiate the EGG to get the dEGG, whose positive peaks mark
glottal closure instants; detect those peaks with a single-pass alternating
extrema scan; turn consecutive closure spacings into period-level F0
estimates; aggregate estimates into a fixed-hop frame track.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter1d

from .errors import DataError
from .signals import SignalBuffer, peak_normalize

DEFAULT_HOP_S = 0.010
F0_MIN_HZ = 50.0
F0_MAX_HZ = 600.0

# Peak threshold: fraction of the sliding-window max of |dEGG|, so detection
# is amplitude-invariant across and within utterances.
DELTA_FRACTION = 0.15
DELTA_WINDOW_S = 0.200


@dataclass(frozen=True)
class F0Track:
    """Frame-rate F0 sequence; unvoiced frames carry f0 = 0 and voiced=False."""

    f0_hz: np.ndarray
    voiced: np.ndarray
    hop_s: float = DEFAULT_HOP_S

    def __post_init__(self) -> None:
        f0 = np.asarray(self.f0_hz, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=bool)
        if f0.shape != voiced.shape or f0.ndim != 1:
            raise ValueError("f0_hz and voiced must be 1-D arrays of equal length")
        if self.hop_s <= 0:
            raise ValueError("hop_s must be positive")
        f0 = np.where(voiced, f0, 0.0)
        f0.flags.writeable = False
        voiced.flags.writeable = False
        object.__setattr__(self, "f0_hz", f0)
        object.__setattr__(self, "voiced", voiced)

    def __len__(self) -> int:
        return self.f0_hz.size

    @property
    def times_s(self) -> np.ndarray:
        return np.arange(len(self)) * self.hop_s

    def to_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")

    def to_csv_text(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["time_s", "f0_hz", "voiced"])
        for t, f0, v in zip(self.times_s, self.f0_hz, self.voiced):
            writer.writerow([f"{t:.6f}", f"{f0:.4f}" if v else "0.0", 1 if v else 0])
        return out.getvalue()

    @staticmethod
    def from_csv(path) -> "F0Track":
        return parse_track_csv(Path(path).read_text(encoding="utf-8"), source=str(path))


def parse_track_csv(text: str, source: str = "<string>") -> F0Track:
    """Parse the ``time_s,f0_hz,voiced`` schema, which external trackers'
    exports must also follow. Schema violations report the row number."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows or [c.strip() for c in rows[0]] != ["time_s", "f0_hz", "voiced"]:
        raise DataError(f"{source}: expected header 'time_s,f0_hz,voiced'")
    times, f0s, voiced = [], [], []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise DataError(f"{source}: row {i}: expected 3 columns, got {len(row)}")
        try:
            times.append(float(row[0]))
            f0s.append(float(row[1]))
            flag = int(row[2])
        except ValueError as exc:
            raise DataError(f"{source}: row {i}: {exc}") from exc
        if flag not in (0, 1):
            raise DataError(f"{source}: row {i}: voiced flag must be 0 or 1")
        voiced.append(bool(flag))
    if len(times) >= 2:
        hops = np.diff(times)
        hop = float(np.median(hops))
        if np.any(np.abs(hops - hop) > 1e-6):
            raise DataError(f"{source}: non-uniform frame times")
    else:
        hop = DEFAULT_HOP_S
    return F0Track(np.array(f0s), np.array(voiced), hop_s=hop)


@dataclass(frozen=True)
class PeakList:
    """Alternating local maxima/minima as (index, value) pairs."""

    maxima: list = field(default_factory=list)
    minima: list = field(default_factory=list)


def degg(egg: SignalBuffer) -> SignalBuffer:
    """First difference scaled by the sample rate: d[n] = (x[n+1]-x[n])*sr."""
    if len(egg) < 2:
        raise ValueError("signal too short to differentiate")
    d = np.diff(egg.samples) * egg.sample_rate_hz
    return SignalBuffer(d, egg.sample_rate_hz)


def _scan_extrema(values: np.ndarray, delta: np.ndarray) -> PeakList:
    """Single forward scan with per-sample threshold.

    State machine: while hunting a maximum, track the running max; when the
    signal falls more than delta below it, emit the max (earliest index on
    ties) and switch to hunting a minimum, and vice versa. The running
    extremum of the *other* kind restarts at the trigger sample.
    """
    maxima: list = []
    minima: list = []
    if values.size == 0:
        return PeakList(maxima, minima)
    run_max = run_min = values[0]
    max_pos = min_pos = 0
    look_for_max = True
    for i in range(1, values.size):
        v = values[i]
        if v > run_max:
            run_max, max_pos = v, i
        if v < run_min:
            run_min, min_pos = v, i
        if look_for_max:
            if v < run_max - delta[i]:
                maxima.append((max_pos, run_max))
                run_min, min_pos = v, i
                look_for_max = False
        else:
            if v > run_min + delta[i]:
                minima.append((min_pos, run_min))
                run_max, max_pos = v, i
                look_for_max = True
    return PeakList(maxima, minima)


def peakdet(sig: SignalBuffer, delta: float) -> PeakList:
    """Alternating extrema detection with a fixed drop/rise threshold."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return _scan_extrema(sig.samples, np.full(len(sig), float(delta)))


def periods_to_f0(peaks: PeakList, sample_rate_hz: int) -> list:
    """Convert consecutive maxima spacings into (center_time_s, f0_hz)
    estimates, discarding implausible values outside [50, 600] Hz."""
    out = []
    maxima = peaks.maxima
    for (i, _), (j, _) in zip(maxima, maxima[1:]):
        f0 = sample_rate_hz / (j - i)
        if F0_MIN_HZ <= f0 <= F0_MAX_HZ:
            out.append(((i + j) / 2.0 / sample_rate_hz, f0))
    return out


def frame_f0(period_f0: list, duration_s: float, hop_s: float = DEFAULT_HOP_S) -> F0Track:
    """Aggregate period-level estimates onto a fixed frame grid.

    A frame is voiced iff some estimate's center lies within 1.5 hops of the
    frame time; its value is the median of the qualifying estimates.
    """
    n_frames = int(math.floor(duration_s / hop_s + 1e-9)) + 1
    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    if period_f0:
        centers = np.array([t for t, _ in period_f0])
        values = np.array([f for _, f in period_f0])
        reach = 1.5 * hop_s + 1e-9  # absorb float error at exact boundaries
        for k in range(n_frames):
            t = k * hop_s
            mask = np.abs(centers - t) <= reach
            if np.any(mask):
                voiced[k] = True
                f0[k] = float(np.median(values[mask]))
    return F0Track(f0, voiced, hop_s=hop_s)


def extract_f0(egg: SignalBuffer, hop_s: float = DEFAULT_HOP_S) -> F0Track:
    """Full extraction: normalize, differentiate, adaptive peak scan,
    period measurement, frame aggregation."""
    duration = egg.duration_s
    if len(egg) < 2:
        return frame_f0([], duration, hop_s)
    norm = peak_normalize(egg)
    d = degg(norm)
    mag = np.abs(d.samples)
    if not np.any(mag > 0):
        return frame_f0([], duration, hop_s)
    window = max(1, int(round(DELTA_WINDOW_S * egg.sample_rate_hz)))
    envelope = maximum_filter1d(mag, size=window, mode="nearest")
    floor = 1e-6 * float(np.max(mag))
    delta = np.maximum(DELTA_FRACTION * envelope, floor)
    peaks = _scan_extrema(d.samples, delta)
    estimates = periods_to_f0(peaks, egg.sample_rate_hz)
    return frame_f0(estimates, duration, hop_s)
