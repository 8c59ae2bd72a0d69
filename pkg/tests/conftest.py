import numpy as np
import pytest

from eggcodec.signals import SignalBuffer


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_buffer(rng):
    def make(n=4000, rate=16000, amp=0.8, seed=None):
        r = np.random.default_rng(seed) if seed is not None else rng
        return SignalBuffer(r.uniform(-amp, amp, n), rate)

    return make


def sine(freq_hz, n, rate=16000, amp=1.0, phase=0.0):
    t = np.arange(n) / rate
    return SignalBuffer(amp * np.sin(2 * np.pi * freq_hz * t + phase), rate)
