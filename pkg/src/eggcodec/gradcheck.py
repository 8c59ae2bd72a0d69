"""Finite-difference verification of every analytic gradient in the package.

Each registered check compares an analytic gradient against central finite
differences (step 1e-4, float64, Richardson-refined) and returns its max
relative error, where the per-component error is normalized by
max(|numeric|, |analytic|, floor). See ``relative_error`` for the floor
rationale. Checks run at fixed seeds so results are reproducible; the
``perturb_check`` hook lets tests confirm the harness actually detects a
corrupted gradient.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import CheckFailure
from .layers import conv1d, conv1d_transpose
from .losses import (
    LossConfig,
    cosine_distance,
    loss_config_for,
    reconstruction_loss,
    spectral_loss,
    time_loss,
)
from .model import EggCodecModel, ModelConfig
from .spectral import log_mel, log_mel_backward

FD_STEP = 1e-4
TOL_LOSSES = 1e-4
TOL_LAYERS = 1e-4
TOL_MODEL = 1e-3


@dataclass(frozen=True)
class CheckResult:
    name: str
    scope: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(float(np.max(np.abs(numeric), initial=0.0)), 1e-12)
    # Floor at 3% of the gradient scale: components below it are checked
    # absolutely, which keeps finite-difference roundoff (~1e-8 for losses
    # valued O(100)) from masquerading as gradient error on near-cancelling
    # components. Real formula errors land orders of magnitude above it.
    floor = 3e-2 * scale
    denom = np.maximum(np.maximum(np.abs(numeric), np.abs(analytic)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom, initial=0.0))


def central_diff(f, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Dense central-difference gradient of scalar f at x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + step
        hi = f(x)
        xf[i] = orig - step
        lo = f(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2.0 * step)
    return grad


def _probe_central(f, x, i, step):
    orig = x[i]
    x[i] = orig + step
    hi = f(x)
    x[i] = orig - step
    lo = f(x)
    x[i] = orig
    return (hi - lo) / (2.0 * step)


def richardson_probe(f, x, i, step: float = FD_STEP) -> float:
    """Central difference at ``step`` refined by Richardson extrapolation
    (one halving cancels the h^2 term). The log floor makes some spectral
    cells stiff enough that raw central differences at the pinned step carry
    h^2 truncation above the check tolerance even when the analytic gradient
    is exact; extrapolation removes that oracle-side error."""
    d1 = _probe_central(f, x, i, step)
    d2 = _probe_central(f, x, i, step / 2.0)
    return (4.0 * d2 - d1) / 3.0


def _loss_pair(rng, n):
    """Random pair placed away from the loss surface's non-smooth spots.

    Central differences at the pinned step are invalid at |.|-kinks no
    matter how exact the analytic gradient is, so the construction keeps
    every kink at a safe distance: samples bounded away from zero and a
    2x-scaled reference keep both the per-sample differences (time L1) and
    every log-mel cell difference (~ln 2) far from sign changes, and the
    loud amplitude keeps mel energies well above the log floor where
    curvature would swamp the finite-difference oracle.
    """
    u = rng.uniform(-1.0, 1.0, n)
    pred = np.sign(u) * (0.15 + 2.35 * np.abs(u))
    ref = 2.0 * pred + 0.05 * rng.uniform(-1.0, 1.0, n)
    return pred, ref


def _independent_pair(rng, n):
    """For losses smooth everywhere (cosine): generic independent signals.
    The scaled construction would make the gradient nearly cancel."""
    return rng.uniform(-0.8, 0.8, n), rng.uniform(-0.8, 0.8, n)


def _check_loss_fd(loss_fn, n, n_probe=48, pair_fn=_loss_pair):
    """Central differences on a random subset of components (always
    including both endpoints); dense FD at these lengths would dominate the
    runtime without adding coverage."""

    def run(rng, perturb=0.0):
        pred, ref = pair_fn(rng, n)
        _, grad = loss_fn(pred, ref)
        idx = np.unique(np.concatenate([[0, n - 1], rng.integers(0, n, size=n_probe)]))
        scalar = lambda x: loss_fn(x, ref)[0]
        numeric = np.array([richardson_probe(scalar, pred, i) for i in idx])
        return relative_error(grad[idx] + perturb, numeric)

    return run


def _spectral(pred, ref):
    return spectral_loss(pred, ref)


def _time(pred, ref):
    return time_loss(pred, ref)


def _cosine(pred, ref):
    return cosine_distance(pred, ref)


def _reco(cfg):
    def fn(pred, ref):
        report, grad = reconstruction_loss(pred, ref, cfg)
        return report.l_reco, grad

    return fn


def _check_log_mel_fd(window, n, boundary_only=False):
    # Loud input keeps mel energies far above the log floor, where central
    # differences at the pinned step would otherwise pick up curvature noise.
    def run(rng, perturb=0.0):
        sig = rng.uniform(-2.5, 2.5, n)
        frames = n // (window // 4) + 1
        upstream = rng.standard_normal((frames, 64))

        def scalar(x):
            return float(np.sum(log_mel(x, window).values * upstream))

        grad = log_mel_backward(sig, window, upstream)
        idx = [0, 1, n - 2, n - 1] if boundary_only else range(n)
        numeric = np.array([richardson_probe(scalar, sig, i) for i in idx])
        return relative_error(grad[list(idx)] + perturb, numeric)

    return run


def _tensor_fd(build_scalar, leaf_values, perturb=0.0):
    """FD on one leaf of a scalar-valued autodiff graph."""
    leaf = ad.constant(leaf_values.copy())
    loss = build_scalar(leaf)
    ad.backward(loss)
    analytic = leaf.grad + perturb

    def scalar(v):
        return float(build_scalar(ad.constant(v)).values)

    numeric = central_diff(scalar, leaf_values.copy())
    return relative_error(analytic, numeric)


def _check_conv_input(stride, dilation):
    def run(rng, perturb=0.0):
        x = rng.standard_normal((3, 24))
        w = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal(2)

        def build(leaf):
            wt, bt = ad.constant(w), ad.constant(b)
            return ad.sum_all(
                ad.tanh(conv1d(leaf, wt, bt, stride=stride, dilation=dilation))
            )

        return _tensor_fd(build, x, perturb)

    return run


def _check_conv_weight(stride, dilation):
    def run(rng, perturb=0.0):
        x = rng.standard_normal((3, 24))
        w = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal(2)

        def build(leaf):
            xt, bt = ad.constant(x), ad.constant(b)
            return ad.sum_all(ad.tanh(conv1d(xt, leaf, bt, stride=stride, dilation=dilation)))

        return _tensor_fd(build, w, perturb)

    return run


def _check_conv_bias(rng, perturb=0.0):
    x = rng.standard_normal((3, 24))
    w = rng.standard_normal((2, 3, 4))
    b = rng.standard_normal(2)

    def build(leaf):
        return ad.sum_all(ad.tanh(conv1d(ad.constant(x), ad.constant(w), leaf)))

    return _tensor_fd(build, b, perturb)


def _check_tconv(which):
    def run(rng, perturb=0.0):
        x = rng.standard_normal((3, 12))
        w = rng.standard_normal((3, 2, 4))
        b = rng.standard_normal(2)
        leaves = {"input": x, "weight": w, "bias": b}

        def build(leaf):
            parts = {
                "input": leaf if which == "input" else ad.constant(x),
                "weight": leaf if which == "weight" else ad.constant(w),
                "bias": leaf if which == "bias" else ad.constant(b),
            }
            return ad.sum_all(
                ad.tanh(conv1d_transpose(parts["input"], parts["weight"], parts["bias"], stride=2))
            )

        return _tensor_fd(build, leaves[which], perturb)

    return run


def _check_activation(op):
    def run(rng, perturb=0.0):
        x = rng.standard_normal((2, 30))

        def build(leaf):
            return ad.sum_all(op(leaf))

        return _tensor_fd(build, x, perturb)

    return run


def _check_residual_composite(rng, perturb=0.0):
    x = rng.standard_normal((2, 20))
    w1 = rng.standard_normal((2, 2, 3))
    b1 = rng.standard_normal(2)
    w2 = rng.standard_normal((2, 2, 1))
    b2 = rng.standard_normal(2)

    def build(leaf):
        h = conv1d(leaf, ad.constant(w1), ad.constant(b1), dilation=2)
        h = conv1d(ad.elu(h), ad.constant(w2), ad.constant(b2))
        return ad.sum_all(ad.tanh(ad.add(leaf, h)))

    return _tensor_fd(build, x, perturb)


_SMALL_MODEL = ModelConfig(
    base_channels=3,
    n_down_blocks=2,
    strides=(2, 2),
    residual_units_per_block=1,
    latent_dim=4,
    timing_dilations=(1, 2),
    rvq_stages=0,
    codebook_size=4,
)


def _jvp_check(forward, x0, rng, perturb=0.0):
    """Directional check: u . (f(x+hv) - f(x-hv)) / 2h vs (df/dx . v) with
    the analytic gradient obtained by seeding backward with u."""
    out0, leaf = forward(x0)
    u = rng.standard_normal(out0.values.shape)
    v = rng.standard_normal(x0.shape)
    v /= np.linalg.norm(v.ravel())
    ad.backward(out0, seed=u)
    analytic = float(np.sum(leaf.grad * v)) + perturb
    hi, _ = forward(x0 + FD_STEP * v)
    lo, _ = forward(x0 - FD_STEP * v)
    numeric = float(np.sum(u * (hi.values - lo.values)) / (2.0 * FD_STEP))
    denom = max(abs(numeric), abs(analytic), 1e-6)
    return abs(analytic - numeric) / denom


def _check_encoder_jvp(rng, perturb=0.0):
    model = EggCodecModel(_SMALL_MODEL, seed=7)
    x0 = rng.uniform(-0.8, 0.8, (1, 256))

    def forward(x):
        leaf = ad.constant(x)
        return model.encoder_forward(leaf), leaf

    return _jvp_check(forward, x0, rng, perturb)


def _check_decoder_jvp(rng, perturb=0.0):
    model = EggCodecModel(_SMALL_MODEL, seed=8)
    x0 = rng.standard_normal((_SMALL_MODEL.latent_dim, 64))

    def forward(x):
        leaf = ad.constant(x)
        return model.decoder_forward(leaf), leaf

    return _jvp_check(forward, x0, rng, perturb)


def _check_autoencoder_jvp(rng, perturb=0.0):
    model = EggCodecModel(_SMALL_MODEL, seed=9)
    x0 = rng.uniform(-0.8, 0.8, (1, 256))

    def forward(x):
        leaf = ad.constant(x)
        return model.decoder_forward(model.encoder_forward(leaf)), leaf

    return _jvp_check(forward, x0, rng, perturb)


def _check_micro_model(rng, perturb=0.0):
    """Exhaustive FD over every parameter of a 10-parameter model:
    conv(1->1, k3) -> ELU -> conv(1->2, k2, stride 2) -> tanh -> sum."""
    x = rng.uniform(-1.0, 1.0, (1, 16))
    w1 = ad.parameter(rng.standard_normal((1, 1, 3)), "w1")
    b1 = ad.parameter(rng.standard_normal(1), "b1")
    w2 = ad.parameter(rng.standard_normal((2, 1, 2)), "w2")
    b2 = ad.parameter(rng.standard_normal(2), "b2")
    params = [w1, b1, w2, b2]
    assert sum(p.values.size for p in params) == 10

    def forward():
        h = ad.elu(conv1d(ad.constant(x), w1, b1))
        return ad.sum_all(ad.tanh(conv1d(h, w2, b2, stride=2)))

    ad.zero_param_grads(params)
    ad.backward(forward())
    worst = 0.0
    for p in params:
        analytic = p.grad + perturb

        def scalar(v, p=p):
            old = p.values
            p.values = v
            out = float(forward().values)
            p.values = old
            return out

        numeric = central_diff(scalar, p.values.copy())
        worst = max(worst, relative_error(analytic, numeric))
    return worst


def _check_commit_grad(rng, perturb=0.0):
    target = rng.standard_normal((4, 10))

    def build(leaf):
        return ad.scale(ad.mean_all(ad.square(ad.sub_const(leaf, target))), 0.25)

    return _tensor_fd(build, rng.standard_normal((4, 10)), perturb)


def _check_straight_through(rng, perturb=0.0):
    """Exactness, not FD: the gradient at the latent must equal the gradient
    injected at the quantized output."""
    latent = ad.constant(rng.standard_normal((4, 12)))
    quantized = ad.straight_through(latent, rng.standard_normal((4, 12)))
    upstream = rng.standard_normal((4, 12))
    ad.backward(quantized, seed=upstream)
    return float(np.max(np.abs(latent.grad - upstream))) + perturb


def build_registry():
    checks = []

    def register(name, scope, fn, tol):
        checks.append((name, scope, fn, tol))

    for n in (1100, 2048, 4096):
        register(f"spectral_loss_grad_n{n}", "losses", _check_loss_fd(_spectral, n), TOL_LOSSES)
    for n in (1100, 2048, 4096):
        register(f"time_loss_grad_n{n}", "losses", _check_loss_fd(_time, n), TOL_LOSSES)
    for n in (1100, 2048, 4096):
        register(
            f"cosine_distance_grad_n{n}",
            "losses",
            _check_loss_fd(_cosine, n, pair_fn=_independent_pair),
            TOL_LOSSES,
        )
    for n in (1100, 2048):
        register(
            f"reconstruction_optimal_grad_n{n}",
            "losses",
            _check_loss_fd(_reco(LossConfig()), n),
            TOL_LOSSES,
        )
    for tag in ("cos", "l1l2", "no_time", "no_freq"):
        register(
            f"reconstruction_{tag}_grad_n1100",
            "losses",
            _check_loss_fd(_reco(loss_config_for(tag)), 1100),
            TOL_LOSSES,
        )
    register("log_mel_backward_w64", "losses", _check_log_mel_fd(64, 512), TOL_LOSSES)
    register("log_mel_backward_w32", "losses", _check_log_mel_fd(32, 300), TOL_LOSSES)
    register(
        "log_mel_backward_boundary", "losses", _check_log_mel_fd(64, 512, boundary_only=True),
        TOL_LOSSES,
    )

    register("conv1d_input_s1d1", "layers", _check_conv_input(1, 1), TOL_LAYERS)
    register("conv1d_input_s2d2", "layers", _check_conv_input(2, 2), TOL_LAYERS)
    register("conv1d_weight_s1d1", "layers", _check_conv_weight(1, 1), TOL_LAYERS)
    register("conv1d_weight_s2d2", "layers", _check_conv_weight(2, 2), TOL_LAYERS)
    register("conv1d_bias", "layers", _check_conv_bias, TOL_LAYERS)
    register("conv1d_transpose_input", "layers", _check_tconv("input"), TOL_LAYERS)
    register("conv1d_transpose_weight", "layers", _check_tconv("weight"), TOL_LAYERS)
    register("conv1d_transpose_bias", "layers", _check_tconv("bias"), TOL_LAYERS)
    register("elu_grad", "layers", _check_activation(ad.elu), TOL_LAYERS)
    register("tanh_grad", "layers", _check_activation(ad.tanh), TOL_LAYERS)
    register("residual_unit_grad", "layers", _check_residual_composite, TOL_LAYERS)
    register("commit_loss_grad", "layers", _check_commit_grad, TOL_LAYERS)

    register("encoder_jvp_256", "model", _check_encoder_jvp, TOL_MODEL)
    register("decoder_jvp", "model", _check_decoder_jvp, TOL_MODEL)
    register("autoencoder_jvp_256", "model", _check_autoencoder_jvp, TOL_MODEL)
    register("micro_model_10_params", "model", _check_micro_model, TOL_LOSSES)
    register("straight_through_exact", "model", _check_straight_through, 1e-12)
    return checks


def run_checks(scope: str = "all", seed: int = 0, perturb_check: str | None = None):
    """Run the registry; returns a list of CheckResult.

    ``perturb_check`` deliberately corrupts the named check's analytic
    gradient by 1e-2 (test hook for verifying the harness detects failures).
    """
    results = []
    for i, (name, check_scope, fn, tol) in enumerate(build_registry()):
        if scope not in ("all", check_scope):
            continue
        rng = np.random.default_rng(1000 + i + seed)
        perturb = 1e-2 if name == perturb_check else 0.0
        results.append(CheckResult(name, check_scope, float(fn(rng, perturb=perturb)), tol))
    return results


def write_results_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["check", "scope", "max_rel_err", "tolerance", "passed"])
        for r in results:
            writer.writerow([r.name, r.scope, f"{r.max_rel_err:.3e}", r.tolerance, int(r.passed)])


def require_all_pass(results) -> None:
    failures = [r for r in results if not r.passed]
    if failures:
        detail = ", ".join(f"{r.name}={r.max_rel_err:.2e}" for r in failures)
        raise CheckFailure(f"{len(failures)} gradient check(s) failed: {detail}")
