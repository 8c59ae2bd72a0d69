"""Track- and waveform-level evaluation metrics.

Frame-set conventions, declared here so the numbers are well defined:
MAE and GPE run over frames voiced in both tracks; RPA's denominator is
reference-voiced frames and a hit additionally requires the prediction to
be voiced and within 50 cents (inclusive); GPE's 20% boundary is strict;
VDE runs over all aligned frames. PPMCC is the population-form Pearson
correlation between waveforms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError
from .f0 import F0Track

CENT_TOLERANCE = 50.0
GROSS_ERROR_FRACTION = 0.20

# Reference values reported for the fully trained system (context only,
# never used as pass/fail): PPMCC / MAE Hz / RPA % / GPE % / VDE %.
REFERENCE_OPTIMAL = {
    "ppmcc": 0.834,
    "mae_hz": 13.69,
    "rpa_pct": 86.0,
    "gpe_pct": 9.1,
    "vde_pct": 5.5,
}


@dataclass(frozen=True)
class AlignedPairs:
    pred_f0: np.ndarray
    ref_f0: np.ndarray
    pred_voiced: np.ndarray
    ref_voiced: np.ndarray
    n_ignored: int

    def __len__(self) -> int:
        return self.pred_f0.size


@dataclass(frozen=True)
class MetricReport:
    mae_hz: float
    rpa_pct: float
    gpe_pct: float
    vde_pct: float
    ppmcc: float | None
    n_frames: int
    n_both_voiced: int

    def to_dict(self, include_reference: bool = False) -> dict:
        out = {
            "mae_hz": self.mae_hz,
            "rpa_pct": self.rpa_pct,
            "gpe_pct": self.gpe_pct,
            "vde_pct": self.vde_pct,
            "ppmcc": self.ppmcc,
            "n_frames": self.n_frames,
            "n_both_voiced": self.n_both_voiced,
        }
        if include_reference:
            out["reference_optimal"] = dict(REFERENCE_OPTIMAL)
        return out

    def to_json(self, include_reference: bool = False) -> str:
        return json.dumps(self.to_dict(include_reference=include_reference))


def align(pred: F0Track, ref: F0Track) -> AlignedPairs:
    """Pair frames up to the shorter track; the longer tail is ignored and
    counted. Hops must match."""
    if abs(pred.hop_s - ref.hop_s) > 1e-9:
        raise ValueError(f"hop mismatch: {pred.hop_s} vs {ref.hop_s}")
    n = min(len(pred), len(ref))
    return AlignedPairs(
        pred_f0=pred.f0_hz[:n],
        ref_f0=ref.f0_hz[:n],
        pred_voiced=pred.voiced[:n],
        ref_voiced=ref.voiced[:n],
        n_ignored=max(len(pred), len(ref)) - n,
    )


def mae_hz(pairs: AlignedPairs) -> float:
    both = pairs.pred_voiced & pairs.ref_voiced
    if not np.any(both):
        raise UndefinedMetricError("MAE undefined: no frames voiced in both tracks")
    return float(np.mean(np.abs(pairs.pred_f0[both] - pairs.ref_f0[both])))


def rpa_50cent(pairs: AlignedPairs) -> float:
    ref_voiced = pairs.ref_voiced
    if not np.any(ref_voiced):
        raise UndefinedMetricError("RPA undefined: no reference-voiced frames")
    both = np.nonzero(ref_voiced & pairs.pred_voiced)[0]
    cents = 1200.0 * np.log2(pairs.pred_f0[both] / pairs.ref_f0[both])
    n_hits = int(np.sum(np.abs(cents) <= CENT_TOLERANCE))
    return 100.0 * n_hits / float(np.sum(ref_voiced))


def gpe_20(pairs: AlignedPairs) -> float:
    both = pairs.pred_voiced & pairs.ref_voiced
    if not np.any(both):
        raise UndefinedMetricError("GPE undefined: no frames voiced in both tracks")
    rel = np.abs(pairs.pred_f0[both] - pairs.ref_f0[both]) / pairs.ref_f0[both]
    return 100.0 * float(np.sum(rel > GROSS_ERROR_FRACTION)) / float(np.sum(both))


def vde(pairs: AlignedPairs) -> float:
    if len(pairs) == 0:
        raise UndefinedMetricError("VDE undefined: no aligned frames")
    return 100.0 * float(np.sum(pairs.pred_voiced != pairs.ref_voiced)) / float(len(pairs))


def ppmcc(y1, y2) -> float:
    """Population Pearson correlation between two equal-length waveforms."""
    a = np.asarray(getattr(y1, "samples", y1), dtype=np.float64)
    b = np.asarray(getattr(y2, "samples", y2), dtype=np.float64)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("ppmcc needs two equal-length signals of >= 2 samples")
    da = a - a.mean()
    db = b - b.mean()
    var_a = float(np.mean(da * da))
    var_b = float(np.mean(db * db))
    if var_a == 0.0 or var_b == 0.0:
        raise UndefinedMetricError("PPMCC undefined for zero-variance input")
    return float(np.mean(da * db)) / math.sqrt(var_a * var_b)


def evaluate_run(pred_track: F0Track, ref_track: F0Track, pred_egg=None, ref_egg=None) -> MetricReport:
    """All five metrics for one utterance; PPMCC only when both waveforms
    are supplied."""
    pairs = align(pred_track, ref_track)
    corr = ppmcc(pred_egg, ref_egg) if (pred_egg is not None and ref_egg is not None) else None
    return MetricReport(
        mae_hz=mae_hz(pairs),
        rpa_pct=rpa_50cent(pairs),
        gpe_pct=gpe_20(pairs),
        vde_pct=vde(pairs),
        ppmcc=corr,
        n_frames=len(pairs),
        n_both_voiced=int(np.sum(pairs.pred_voiced & pairs.ref_voiced)),
    )


def aggregate_reports(reports) -> dict:
    """Mean of each metric over per-utterance reports (None-aware for ppmcc)."""
    if not reports:
        raise UndefinedMetricError("nothing to aggregate")
    out = {
        "mae_hz": float(np.mean([r.mae_hz for r in reports])),
        "rpa_pct": float(np.mean([r.rpa_pct for r in reports])),
        "gpe_pct": float(np.mean([r.gpe_pct for r in reports])),
        "vde_pct": float(np.mean([r.vde_pct for r in reports])),
        "n_frames": int(np.sum([r.n_frames for r in reports])),
        "n_both_voiced": int(np.sum([r.n_both_voiced for r in reports])),
    }
    corrs = [r.ppmcc for r in reports if r.ppmcc is not None]
    out["ppmcc"] = float(np.mean(corrs)) if corrs else None
    return out
