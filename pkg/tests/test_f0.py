import numpy as np
import pytest

from eggcodec.errors import DataError
from eggcodec.f0 import (
    F0Track,
    PeakList,
    degg,
    extract_f0,
    frame_f0,
    parse_track_csv,
    peakdet,
    periods_to_f0,
)
from eggcodec.metrics import align, mae_hz, vde
from eggcodec.signals import SignalBuffer
from eggcodec.synth import constant_spec, glide_spec, synth_corpus

from conftest import sine


def peakdet_oracle(values, delta):
    """Alternating-extrema search by explicit first-crossing over
    precomputed running extrema; a deliberately different route from the
    incremental state-machine scan. Searching for a maximum: the first
    position whose drop below the running max exceeds delta ends the
    window, and the earliest argmax of that window is the peak (then the
    hunt flips, restarting at the crossing)."""
    values = np.asarray(values, dtype=np.float64)
    maxima, minima = [], []
    pos = 0
    look_max = True
    n = values.size
    while pos < n:
        seg = values[pos:]
        if look_max:
            crossings = (np.maximum.accumulate(seg) - seg) > delta
        else:
            crossings = (seg - np.minimum.accumulate(seg)) > delta
        if not crossings.any():
            break
        j = int(np.argmax(crossings))  # first crossing
        window = seg[: j + 1]
        if look_max:
            k = int(np.argmax(window))
            maxima.append((pos + k, float(window[k])))
        else:
            k = int(np.argmin(window))
            minima.append((pos + k, float(window[k])))
        pos += j
        look_max = not look_max
    return maxima, minima


class TestDegg:
    def test_constant_zero(self):
        out = degg(SignalBuffer(np.full(100, 0.7), 16000))
        np.testing.assert_array_equal(out.samples, np.zeros(99))
        assert out.sample_rate_hz == 16000

    def test_ramp_unit_slope(self):
        sr = 16000
        out = degg(SignalBuffer(np.arange(100) / sr, sr))
        np.testing.assert_allclose(out.samples, np.ones(99), atol=1e-9)

    def test_sine_derivative_amplitude(self):
        f, amp = 100.0, 0.8
        out = degg(sine(f, 16000, amp=amp))
        expected = 2 * np.pi * f * amp
        assert abs(np.max(np.abs(out.samples)) - expected) / expected <= 0.02

    def test_too_short(self):
        with pytest.raises(ValueError):
            degg(SignalBuffer(np.array([1.0]), 16000))

    def test_cumsum_inverts(self, rng):
        # discrete fundamental theorem: cumsum(degg)/sr recovers x - x[0]
        sr = 16000
        x = rng.uniform(-1, 1, 500)
        d = degg(SignalBuffer(x, sr)).samples
        recovered = np.concatenate([[0.0], np.cumsum(d) / sr]) + x[0]
        assert np.max(np.abs(recovered - x)) <= 1e-9


class TestPeakdet:
    def test_monotone_no_peaks(self):
        out = peakdet(SignalBuffer(np.linspace(0, 1, 100), 16000), delta=0.1)
        assert out.maxima == [] and out.minima == []

    def test_triangle_single_max(self):
        tri = np.concatenate([np.linspace(0, 1, 50), np.linspace(1, 0, 50)[1:]])
        out = peakdet(SignalBuffer(tri, 16000), delta=0.5)
        assert len(out.maxima) == 1
        assert out.maxima[0][0] == 49
        assert out.minima == []

    def test_nonpositive_delta(self):
        with pytest.raises(ValueError):
            peakdet(SignalBuffer(np.zeros(10), 16000), delta=0.0)

    def test_plateau_earliest_index(self):
        values = np.array([0.0, 1.0, 1.0, 1.0, 0.0])
        out = peakdet(SignalBuffer(values, 16000), delta=0.5)
        assert out.maxima[0][0] == 1

    def test_alternation(self, rng):
        sig = SignalBuffer(rng.standard_normal(500), 16000)
        out = peakdet(sig, delta=0.8)
        merged = sorted(
            [(i, "max") for i, _ in out.maxima] + [(i, "min") for i, _ in out.minima]
        )
        kinds = [k for _, k in merged]
        assert all(a != b for a, b in zip(kinds, kinds[1:]))
        if kinds:
            assert kinds[0] == "max"  # scan starts hunting a maximum

    def test_matches_bruteforce_oracle(self, rng):
        for trial in range(300):
            n = int(rng.integers(100, 1200))
            values = rng.standard_normal(n).cumsum() if trial % 2 else rng.standard_normal(n)
            delta = float(rng.uniform(0.2, 2.0))
            got = peakdet(SignalBuffer(values, 16000), delta)
            want_max, want_min = peakdet_oracle(values, delta)
            assert [i for i, _ in got.maxima] == [i for i, _ in want_max]
            assert [i for i, _ in got.minima] == [i for i, _ in want_min]

    def test_affine_invariance(self, rng):
        values = rng.standard_normal(400)
        base = peakdet(SignalBuffer(values, 16000), delta=0.7)
        for a in (0.1, 3.0, 42.0):
            scaled = peakdet(SignalBuffer(a * values, 16000), delta=a * 0.7)
            assert [i for i, _ in scaled.maxima] == [i for i, _ in base.maxima]
            assert [i for i, _ in scaled.minima] == [i for i, _ in base.minima]


class TestPeriodsToF0:
    def test_regular_spacing(self):
        peaks = PeakList(maxima=[(i * 160, 1.0) for i in range(10)], minima=[])
        out = periods_to_f0(peaks, 16000)
        assert len(out) == 9
        assert all(f == pytest.approx(100.0) for _, f in out)
        assert out[0][0] == pytest.approx(80 / 16000)

    def test_single_peak_empty(self):
        assert periods_to_f0(PeakList(maxima=[(100, 1.0)], minima=[]), 16000) == []

    def test_range_gate(self):
        peaks = PeakList(maxima=[(0, 1.0), (20, 1.0), (40, 1.0)], minima=[])
        assert periods_to_f0(peaks, 16000) == []  # 800 Hz discarded


class TestFrameF0:
    def test_empty_all_unvoiced(self):
        track = frame_f0([], duration_s=1.0)
        assert len(track) == 101
        assert not track.voiced.any()

    def test_constant_interior_voiced(self):
        estimates = [(t, 100.0) for t in np.arange(0.0, 1.0, 0.005)]
        track = frame_f0(estimates, duration_s=1.0)
        interior = track.voiced[1:-1]
        assert interior.all()
        assert np.all(track.f0_hz[track.voiced] == 100.0)

    def test_median_aggregation(self):
        estimates = [(0.1, 100.0), (0.1, 110.0), (0.1, 200.0)]
        track = frame_f0(estimates, duration_s=0.2)
        k = 10  # frame at exactly 0.1 s
        assert track.voiced[k]
        assert track.f0_hz[k] == 110.0

    def test_glide_tracks_truth(self):
        spec = glide_spec(100.0, 200.0)
        egg, _, truth = synth_corpus(spec, seed=0)
        track = extract_f0(egg)
        pairs = align(track, truth)
        both = pairs.pred_voiced & pairs.ref_voiced
        rel = np.abs(pairs.pred_f0[both] - pairs.ref_f0[both]) / pairs.ref_f0[both]
        assert np.mean(rel <= 0.03) >= 0.95


class TestExtractF0:
    def test_zero_egg_all_unvoiced(self):
        track = extract_f0(SignalBuffer(np.zeros(16000), 16000))
        assert len(track) == 101
        assert not track.voiced.any()

    def test_constant_120hz(self):
        egg, _, truth = synth_corpus(constant_spec(120.0), seed=0)
        track = extract_f0(egg)
        pairs = align(track, truth)
        assert mae_hz(pairs) < 1.0
        assert vde(pairs) < 2.0

    def test_unvoiced_gap_not_hallucinated(self):
        spec = glide_spec(120.0, 160.0, gap=(0.4, 0.6))
        egg, _, truth = synth_corpus(spec, seed=1)
        track = extract_f0(egg)
        times = track.times_s
        # interior of the gap, two frames of boundary tolerance
        inside = (times >= 0.42) & (times <= 0.58)
        assert not track.voiced[inside].any()

    def test_time_reversal_same_histogram(self):
        egg, _, _ = synth_corpus(constant_spec(150.0), seed=3)
        fwd = extract_f0(egg)
        rev = extract_f0(SignalBuffer(egg.samples[::-1].copy(), 16000))
        bins = np.arange(50, 601)
        h_fwd = np.histogram(np.round(fwd.f0_hz[fwd.voiced]), bins=bins)[0]
        h_rev = np.histogram(np.round(rev.f0_hz[rev.voiced]), bins=bins)[0]
        np.testing.assert_array_equal(h_fwd, h_rev)

    def test_voiced_range_invariant(self, rng):
        for seed in range(3):
            spec = glide_spec(float(rng.uniform(80, 250)), float(rng.uniform(80, 250)))
            egg, _, _ = synth_corpus(spec, seed=seed)
            track = extract_f0(egg)
            voiced = track.f0_hz[track.voiced]
            assert np.all((voiced >= 50.0) & (voiced <= 600.0))


class TestTrackCsv:
    def test_round_trip(self, tmp_path):
        egg, _, _ = synth_corpus(constant_spec(100.0), seed=0)
        track = extract_f0(egg)
        path = tmp_path / "track.csv"
        track.to_csv(path)
        back = F0Track.from_csv(path)
        assert len(back) == len(track)
        np.testing.assert_array_equal(back.voiced, track.voiced)
        np.testing.assert_allclose(back.f0_hz, track.f0_hz, atol=1e-4)

    def test_unvoiced_written_as_zero(self):
        track = F0Track(np.array([100.0, 0.0]), np.array([True, False]))
        text = track.to_csv_text()
        lines = text.strip().splitlines()
        assert lines[0] == "time_s,f0_hz,voiced"
        assert lines[2].endswith(",0.0,0")

    def test_bad_header_reports(self):
        with pytest.raises(DataError, match="header"):
            parse_track_csv("a,b,c\n1,2,3\n")

    def test_bad_row_reports_row_number(self):
        text = "time_s,f0_hz,voiced\n0.0,100.0,1\n0.01,oops,1\n"
        with pytest.raises(DataError, match="row 3"):
            parse_track_csv(text)

    def test_bad_flag_rejected(self):
        text = "time_s,f0_hz,voiced\n0.0,100.0,2\n"
        with pytest.raises(DataError, match="voiced flag"):
            parse_track_csv(text)
