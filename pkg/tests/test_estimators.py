import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from eggcodec.estimators import DeggF0Extractor, EggReconstructor, check_waveform_list
from eggcodec.f0 import F0Track
from eggcodec.synth import constant_spec, synth_corpus

SMALL_KW = dict(
    epochs=2,
    batch_size=2,
    base_channels=2,
    latent_dim=4,
    rvq_stages=1,
    codebook_size=4,
    snr_levels_db=(math.inf,),
    filter_refs=False,
    seed=0,
)


def small_corpus(n=2):
    X, y = [], []
    for i in range(n):
        egg, audio, _ = synth_corpus(constant_spec(100.0 + 30 * i), seed=i)
        X.append(np.asarray(audio.samples))
        y.append(np.asarray(egg.samples))
    return X, y


class TestValidation:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            check_waveform_list([np.array([1.0, np.inf])])

    def test_rejects_2d(self):
        with pytest.raises(ValueError):
            check_waveform_list([np.zeros((2, 2))])

    def test_rejects_empty_list(self):
        with pytest.raises(ValueError):
            check_waveform_list([])

    def test_single_array_promoted(self):
        out = check_waveform_list(np.zeros(8))
        assert len(out) == 1 and out[0].shape == (8,)


class TestEggReconstructor:
    def test_get_set_params_round_trip(self):
        est = EggReconstructor(**SMALL_KW)
        params = est.get_params()
        assert params["epochs"] == 2
        est.set_params(epochs=5)
        assert est.get_params()["epochs"] == 5

    def test_clone_preserves_params(self):
        est = EggReconstructor(**SMALL_KW)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_predict_before_fit_raises(self):
        with pytest.raises(NotFittedError):
            EggReconstructor(**SMALL_KW).predict([np.zeros(16000)])

    def test_fit_predict_shapes(self):
        X, y = small_corpus()
        est = EggReconstructor(**SMALL_KW).fit(X, y)
        preds = est.predict(X)
        assert len(preds) == len(X)
        for p, x in zip(preds, X):
            assert p.shape == x.shape
        assert len(est.loss_curve_) == 2

    def test_mismatched_lengths_rejected(self):
        X, y = small_corpus()
        with pytest.raises(ValueError):
            EggReconstructor(**SMALL_KW).fit(X, y[:1])

    def test_predict_arbitrary_length(self):
        X, y = small_corpus()
        est = EggReconstructor(**SMALL_KW).fit(X, y)
        long_input = np.concatenate([X[0], X[0][:5000]])
        out = est.predict([long_input])[0]
        assert out.shape == long_input.shape

    def test_predict_deterministic(self):
        X, y = small_corpus()
        est = EggReconstructor(**SMALL_KW).fit(X, y)
        a = est.predict([X[0]])[0]
        b = est.predict([X[0]])[0]
        np.testing.assert_array_equal(a, b)

    def test_score_is_mean_correlation(self):
        X, y = small_corpus()
        est = EggReconstructor(**SMALL_KW).fit(X, y)
        score = est.score(X, y)
        assert -1.0 <= score <= 1.0


class TestDeggF0Extractor:
    def test_transform_returns_tracks(self):
        egg, _, truth = synth_corpus(constant_spec(120.0), seed=0)
        tracks = DeggF0Extractor().fit().transform([np.asarray(egg.samples)])
        assert isinstance(tracks[0], F0Track)
        voiced = tracks[0].f0_hz[tracks[0].voiced]
        assert np.all(np.abs(voiced - 120.0) < 2.0)

    def test_stateless_clone(self):
        est = DeggF0Extractor(hop_s=0.005)
        assert clone(est).get_params() == est.get_params()

    def test_fit_transform_pipeline_style(self):
        egg, _, _ = synth_corpus(constant_spec(100.0), seed=1)
        out = DeggF0Extractor().fit_transform([np.asarray(egg.samples)])
        assert len(out) == 1
