import numpy as np
import pytest

from eggcodec import autodiff as ad
from eggcodec.model import Codebook, EggCodecModel, ModelConfig

SMALL = ModelConfig(
    base_channels=4,
    n_down_blocks=2,
    strides=(2, 2),
    latent_dim=6,
    timing_dilations=(1, 2),
    rvq_stages=2,
    codebook_size=8,
)


class TestModelConfig:
    def test_defaults(self):
        cfg = ModelConfig()
        assert cfg.total_stride == 16
        assert cfg.strides == (2, 2, 4)

    def test_stride_count_mismatch(self):
        with pytest.raises(ValueError):
            ModelConfig(n_down_blocks=2, strides=(2, 2, 4))

    def test_parameter_budget(self):
        model = EggCodecModel(ModelConfig(), seed=0)
        assert 40_000 <= model.n_parameters() <= 80_000


class TestEncoderDecoder:
    def test_encoder_output_shape(self):
        model = EggCodecModel(ModelConfig(), seed=0)
        x = ad.constant(np.zeros((1, 16000)))
        latent = model.encoder_forward(x)
        assert latent.values.shape == (32, 1000)

    def test_length_not_divisible_rejected(self):
        model = EggCodecModel(ModelConfig(), seed=0)
        with pytest.raises(ValueError):
            model.encoder_forward(ad.constant(np.zeros((1, 16001))))

    def test_zero_input_zero_latent(self):
        # biases start at zero, so a zero input stays zero through convs
        model = EggCodecModel(SMALL, seed=0)
        latent = model.encoder_forward(ad.constant(np.zeros((1, 64))))
        np.testing.assert_array_equal(latent.values, np.zeros_like(latent.values))

    def test_decoder_mirrors_length(self, rng):
        model = EggCodecModel(SMALL, seed=0)
        q = ad.constant(rng.standard_normal((SMALL.latent_dim, 25)))
        out = model.decoder_forward(q)
        assert out.values.shape == (1, 25 * SMALL.total_stride)

    def test_decoder_zero_input_zero_output(self):
        model = EggCodecModel(SMALL, seed=0)
        out = model.decoder_forward(ad.constant(np.zeros((SMALL.latent_dim, 8))))
        np.testing.assert_array_equal(out.values, np.zeros_like(out.values))

    def test_roundtrip_shape_for_various_lengths(self, rng):
        model = EggCodecModel(SMALL, seed=1)
        for t in (64, 128, 256):
            x = ad.constant(rng.uniform(-1, 1, (1, t)))
            pred, *_ = model.reconstruct(x)
            assert pred.values.shape == (1, t)

    def test_output_bounded_by_tanh(self, rng):
        model = EggCodecModel(SMALL, seed=2)
        pred, *_ = model.reconstruct(ad.constant(rng.uniform(-1, 1, (1, 128))))
        assert np.all(np.abs(pred.values) < 1.0)

    def test_deterministic_construction(self):
        a = EggCodecModel(SMALL, seed=3)
        b = EggCodecModel(SMALL, seed=3)
        for pa, pb in zip(a.params, b.params):
            np.testing.assert_array_equal(pa.values, pb.values)


class TestCodebook:
    def test_requires_two_vectors(self):
        with pytest.raises(ValueError):
            Codebook(np.zeros((1, 4)))

    def test_nearest_assignment(self):
        cb = Codebook(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        idx = cb.assign(np.array([[0.9, 0.1], [0.1, 0.9]]).T)
        np.testing.assert_array_equal(idx, [1, 2])

    def test_tie_breaks_to_lowest_index(self):
        cb = Codebook(np.array([[1.0, 0.0], [1.0, 0.0], [5.0, 5.0]]))
        idx = cb.assign(np.array([[1.0], [0.0]]))
        assert idx[0] == 0


class TestRvq:
    def test_exact_code_reproduced(self, rng):
        model = EggCodecModel(SMALL, seed=0)
        model.codebooks[0] = Codebook(rng.standard_normal((8, SMALL.latent_dim)))
        vectors = np.zeros((8, SMALL.latent_dim))
        vectors[1:] = rng.standard_normal((7, SMALL.latent_dim)) + 10.0
        model.codebooks[1] = Codebook(vectors)  # stage 1 contains the zero vector
        latent_vals = model.codebooks[0].vectors[[2, 5]].T  # exactly stage-0 codes
        latent = ad.constant(latent_vals)
        quantized, indices, commit = model.rvq_quantize(latent)
        np.testing.assert_allclose(quantized.values, latent_vals, atol=1e-12)
        np.testing.assert_array_equal(indices[0], [2, 5])
        assert float(commit.values) == pytest.approx(0.0, abs=1e-20)

    def test_residual_error_non_increasing_per_stage(self, rng):
        # After EMA adaptation the stage codebooks hold cluster means, and
        # adding a mean-valued stage cannot increase the batch error.
        model = EggCodecModel(SMALL, seed=1)
        latent_vals = rng.standard_normal((SMALL.latent_dim, 300))
        for _ in range(30):
            model.rvq_quantize(ad.constant(latent_vals), training=True, rng=rng)
            model.apply_ema_update(rng)
        residual = latent_vals.copy()
        norms = [float(np.linalg.norm(residual))]
        for cb in model.codebooks:
            idx = cb.assign(residual)
            residual = residual - cb.vectors[idx].T
            norms.append(float(np.linalg.norm(residual)))
        assert all(b < a for a, b in zip(norms, norms[1:]))

    def test_straight_through_gradient(self, rng):
        model = EggCodecModel(SMALL, seed=0)
        latent = ad.constant(rng.standard_normal((SMALL.latent_dim, 10)))
        quantized, _, commit = model.rvq_quantize(latent)
        upstream = rng.standard_normal(quantized.values.shape)
        ad.backward(quantized, seed=upstream)
        np.testing.assert_array_equal(latent.grad, upstream)

    def test_commit_loss_positive_when_quantization_errs(self, rng):
        model = EggCodecModel(SMALL, seed=0)
        latent = ad.constant(100.0 * rng.standard_normal((SMALL.latent_dim, 5)))
        _, _, commit = model.rvq_quantize(latent)
        assert float(commit.values) > 0.0

    def test_dead_code_reseeding(self, rng):
        model = EggCodecModel(SMALL, seed=0)
        # make one code unreachable, then train long enough to trip the
        # 100-step dead-code streak
        target = rng.standard_normal((SMALL.latent_dim, 40))
        for _ in range(105):
            model.rvq_quantize(ad.constant(target), training=True, rng=rng)
            model.apply_ema_update(rng)
        for cb in model.codebooks:
            assert np.max(cb.unused_streak) < 100

    def test_pass_through_with_zero_stages(self, rng):
        cfg = ModelConfig(
            base_channels=4, n_down_blocks=2, strides=(2, 2), latent_dim=6,
            timing_dilations=(1,), rvq_stages=0,
        )
        model = EggCodecModel(cfg, seed=0)
        latent = ad.constant(rng.standard_normal((6, 10)))
        quantized, indices, commit = model.rvq_quantize(latent)
        assert quantized is latent
        assert indices == []
        assert float(commit.values) == 0.0
