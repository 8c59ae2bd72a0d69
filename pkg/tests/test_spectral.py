import numpy as np
import pytest

from eggcodec.spectral import (
    LOG_EPS,
    MelSpectrogram,
    hann_window,
    log_mel,
    log_mel_backward,
    mel_filterbank,
    stft_mag,
)

from conftest import sine


class TestStft:
    def test_zero_signal(self):
        mag = stft_mag(np.zeros(512), 64, 16)
        assert mag.shape == (512 // 16 + 1, 33)
        assert np.max(mag) == 0.0

    def test_frame_count_invariant(self, rng):
        for n, w in [(1000, 64), (1024, 256), (555, 32)]:
            hop = w // 4
            mag = stft_mag(rng.uniform(-1, 1, n), w, hop)
            assert mag.shape[0] == n // hop + 1

    def test_impulse_at_frame_center(self):
        # impulse scaled by the window center lands flat across bins
        w = 64
        n = 256
        sig = np.zeros(n)
        hop = w // 4
        # frame k covers padded[k*hop : k*hop+w]; its center in signal
        # coordinates is k*hop (center padding by w/2)
        k = 8
        sig[k * hop] = 1.0
        mag = stft_mag(sig, w, hop)
        center_coeff = hann_window(w)[w // 2]
        np.testing.assert_allclose(mag[k], center_coeff, atol=1e-12)

    def test_sine_energy_concentrated(self):
        # numerically evaluate leakage of the windowed DFT at an exact bin
        w, k = 256, 8
        freq = k * 16000 / w
        sig = sine(freq, 2048).samples
        mag = stft_mag(sig, w, w // 4)
        frame = mag[len(mag) // 2] ** 2
        window_energy = np.sum(frame)
        assert np.sum(frame[k - 1 : k + 2]) >= 0.95 * window_energy

    def test_window_must_be_power_of_two(self, rng):
        sig = rng.uniform(-1, 1, 512)
        for bad in (48, 16, 2048, 0):
            with pytest.raises(ValueError):
                stft_mag(sig, bad, 8)

    def test_bad_hop(self, rng):
        with pytest.raises(ValueError):
            stft_mag(rng.uniform(-1, 1, 512), 64, 0)

    def test_magnitude_scales_linearly(self, rng):
        sig = rng.uniform(-1, 1, 700)
        a = stft_mag(sig, 128, 32)
        b = stft_mag(2.0 * sig, 128, 32)
        assert np.max(np.abs(b - 2.0 * a)) <= 1e-9


class TestMelFilterbank:
    def test_row_sums_positive(self):
        bank = mel_filterbank(513, 64, 16000)
        assert bank.shape == (64, 513)
        assert np.all(bank.sum(axis=1) > 0)

    def test_single_filter_covers_band(self):
        from eggcodec.spectral import hz_to_mel, mel_to_hz

        bank = mel_filterbank(513, 1, 16000)
        assert bank.shape == (1, 513)
        assert np.max(bank) > 0.99  # sampled triangle peak sits between bins
        # peak lands at the mid-mel frequency, within one bin
        peak_hz = np.argmax(bank[0]) * 8000 / 512
        mid_mel_hz = float(mel_to_hz(hz_to_mel(8000.0) / 2.0))
        assert abs(peak_hz - mid_mel_hz) <= 8000 / 512
        # support spans most of the band
        nz = np.nonzero(bank[0] > 0)[0]
        assert nz[0] <= 1 and nz[-1] >= 510

    def test_at_most_two_filters_per_bin(self):
        bank = mel_filterbank(513, 64, 16000)
        nonzero_per_bin = np.sum(bank > 1e-12, axis=0)
        assert np.max(nonzero_per_bin) <= 2

    def test_entries_nonnegative(self):
        for n_mels in (1, 8, 64):
            assert np.min(mel_filterbank(129, n_mels, 16000)) >= 0.0

    def test_contiguous_support(self):
        bank = mel_filterbank(513, 64, 16000)
        for row in bank:
            nz = np.nonzero(row > 0)[0]
            if nz.size:
                assert np.all(np.diff(nz) == 1)

    def test_cached_instance(self):
        assert mel_filterbank(257, 64, 16000) is mel_filterbank(257, 64, 16000)


class TestLogMel:
    def test_zero_signal_at_floor(self):
        out = log_mel(np.zeros(1024), 256)
        assert isinstance(out, MelSpectrogram)
        np.testing.assert_allclose(out.values, np.log(LOG_EPS))

    def test_always_finite(self, rng):
        out = log_mel(rng.uniform(-1, 1, 2048), 256)
        assert np.all(np.isfinite(out.values))
        assert np.all(out.values >= np.log(LOG_EPS) - 1e-12)

    def test_doubling_raises_by_ln2(self):
        sig = sine(440.0, 4096, amp=0.9).samples
        a = log_mel(sig, 256).values
        b = log_mel(2.0 * sig, 256).values
        loud = a > np.log(LOG_EPS) + 8.0  # cells where the floor is negligible
        assert loud.any()
        np.testing.assert_allclose((b - a)[loud], np.log(2.0), atol=1e-3)

    def test_hop_and_mels_fixed(self, rng):
        out = log_mel(rng.uniform(-1, 1, 2000), 512)
        assert out.hop == 128 and out.n_mels == 64

    def test_shift_equivariance_interior(self, rng):
        sig = rng.uniform(-1, 1, 2048)
        w = 256
        hop = w // 4
        base = log_mel(sig[:-hop], w).values
        shifted = log_mel(sig[hop:], w).values
        # frame k of the shifted signal sees what frame k+1 of base saw,
        # away from the padded edges
        n = min(base.shape[0], shifted.shape[0])
        diff = np.abs(base[3 : n - 3] - shifted[2 : n - 4])
        assert np.max(diff) <= 1e-9

    def test_floor_monotonicity(self, rng):
        sig = rng.uniform(-1, 1, 1024)
        mag = stft_mag(sig, 128, 32)
        bank = mel_filterbank(65, 64, 16000)
        mel = mag @ bank.T
        assert np.all(np.log(mel + 1e-4) >= np.log(mel + 1e-5))


class TestLogMelBackward:
    def test_zero_upstream(self, rng):
        sig = rng.uniform(-1, 1, 512)
        grad = log_mel_backward(sig, 64, np.zeros((512 // 16 + 1, 64)))
        np.testing.assert_array_equal(grad, np.zeros(512))

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            log_mel_backward(rng.uniform(-1, 1, 512), 64, np.zeros((3, 64)))

    def test_matches_finite_differences(self, rng):
        from eggcodec.gradcheck import relative_error, richardson_probe

        n, w = 400, 64
        sig = rng.uniform(-2.0, 2.0, n)
        upstream = rng.standard_normal((n // 16 + 1, 64))

        def scalar(x):
            return float(np.sum(log_mel(x, w).values * upstream))

        grad = log_mel_backward(sig, w, upstream)
        probes = list(rng.integers(0, n, size=24)) + [0, 1, n - 2, n - 1]
        numeric = np.array([richardson_probe(scalar, sig, i) for i in probes])
        assert relative_error(grad[probes], numeric) <= 1e-4
