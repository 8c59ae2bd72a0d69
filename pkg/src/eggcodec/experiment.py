"""Experiment configuration: JSON config files and ablation-tag expansion.

An ablation tag expands deterministically into loss toggles, noise levels,
and the reference-filtering flag, so each study variant is a pure config
change. The ``no_gan_placeholder`` tag exists for report compatibility and
is identical to ``optimal`` (adversarial training is out of scope here).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .losses import LossConfig, loss_config_for
from .model import ModelConfig
from .training import DEFAULT_SNR_LEVELS, TrainConfig

ABLATION_TAGS = (
    "optimal",
    "cos",
    "l1l2",
    "no_time",
    "no_freq",
    "nda5",
    "nda7",
    "no_nda",
    "no_gan_placeholder",
    "unfiltered",
)

_SNR_BY_TAG = {
    "nda5": (5.0,),
    "nda7": (7.0,),
    "no_nda": (math.inf,),
}


@dataclass(frozen=True)
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    corpus_dir: str = "corpus"
    eval_dir: str = "eval"
    ablation_tag: str = "optimal"
    out_dir: str = "out"

    def __post_init__(self) -> None:
        if self.ablation_tag not in ABLATION_TAGS:
            raise ConfigError(
                f"unknown ablation_tag {self.ablation_tag!r}; expected one of {ABLATION_TAGS}"
            )


def expand_ablation(cfg: ExperimentConfig) -> ExperimentConfig:
    """Apply the tag's toggles on top of the configured training recipe."""
    tag = cfg.ablation_tag
    loss_tag = tag if tag in ("cos", "l1l2", "no_time", "no_freq") else "optimal"
    loss_cfg = loss_config_for(loss_tag)
    train = replace(
        cfg.train,
        loss_cfg=loss_cfg,
        snr_levels_db=_SNR_BY_TAG.get(tag, cfg.train.snr_levels_db),
        filter_refs=False if tag == "unfiltered" else cfg.train.filter_refs,
    )
    return replace(cfg, train=train)


def _snr_to_json(levels):
    return ["clean" if math.isinf(s) else s for s in levels]


def _snr_from_json(levels, where):
    out = []
    for s in levels:
        if isinstance(s, str):
            if s.lower() in ("clean", "inf", "infinity"):
                out.append(math.inf)
            else:
                raise ConfigError(f"{where}: bad SNR level {s!r}")
        else:
            out.append(float(s))
    return tuple(out)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    t, m = cfg.train, cfg.model
    return {
        "train": {
            "lr": t.lr,
            "beta1": t.beta1,
            "beta2": t.beta2,
            "epsilon": t.epsilon,
            "batch_size": t.batch_size,
            "epochs": t.epochs,
            "crop_len": t.crop_len,
            "snr_levels_db": _snr_to_json(t.snr_levels_db),
            "seed": t.seed,
            "filter_refs": t.filter_refs,
            "loss_cfg": {
                "lambda_weight": t.loss_cfg.lambda_weight,
                "spectral_scales": list(t.loss_cfg.spectral_scales),
                "include_spectral": t.loss_cfg.include_spectral,
                "include_time_l1l2": t.loss_cfg.include_time_l1l2,
                "include_time_cos": t.loss_cfg.include_time_cos,
            },
        },
        "model": {
            "base_channels": m.base_channels,
            "n_down_blocks": m.n_down_blocks,
            "strides": list(m.strides),
            "residual_units_per_block": m.residual_units_per_block,
            "latent_dim": m.latent_dim,
            "timing_dilations": list(m.timing_dilations),
            "rvq_stages": m.rvq_stages,
            "codebook_size": m.codebook_size,
            "commitment_weight": m.commitment_weight,
        },
        "corpus_dir": cfg.corpus_dir,
        "eval_dir": cfg.eval_dir,
        "ablation_tag": cfg.ablation_tag,
        "out_dir": cfg.out_dir,
    }


def _build(section: dict, cls, defaults, where: str, converters=None):
    converters = converters or {}
    known = dict(defaults)
    for key, value in section.items():
        if key not in known:
            raise ConfigError(f"{where}: unknown field {key!r}")
        known[key] = converters[key](value) if key in converters else value
    try:
        return cls(**known)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict, source: str = "<dict>") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    top_defaults = {
        "train": {},
        "model": {},
        "corpus_dir": "corpus",
        "eval_dir": "eval",
        "ablation_tag": "optimal",
        "out_dir": "out",
    }
    for key in data:
        if key not in top_defaults:
            raise ConfigError(f"{source}: unknown field {key!r}")

    train_section = dict(data.get("train", {}))
    loss_section = train_section.pop("loss_cfg", {})
    loss_cfg = _build(
        loss_section,
        LossConfig,
        {
            "lambda_weight": 100.0,
            "spectral_scales": (32, 64, 128, 256, 512, 1024),
            "include_spectral": True,
            "include_time_l1l2": True,
            "include_time_cos": True,
        },
        f"{source}: train.loss_cfg",
        converters={"spectral_scales": tuple},
    )
    train_defaults = {
        "lr": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
        "batch_size": 14,
        "epochs": 20,
        "crop_len": 16_000,
        "snr_levels_db": DEFAULT_SNR_LEVELS,
        "seed": 0,
        "filter_refs": True,
    }
    train = _build(
        train_section,
        lambda **kw: TrainConfig(loss_cfg=loss_cfg, **kw),
        train_defaults,
        f"{source}: train",
        converters={"snr_levels_db": lambda v: _snr_from_json(v, f"{source}: train")},
    )
    model = _build(
        dict(data.get("model", {})),
        ModelConfig,
        {
            "base_channels": 16,
            "n_down_blocks": 3,
            "strides": (2, 2, 4),
            "residual_units_per_block": 1,
            "latent_dim": 32,
            "timing_dilations": (1, 2, 4),
            "rvq_stages": 2,
            "codebook_size": 64,
            "commitment_weight": 0.25,
        },
        f"{source}: model",
        converters={"strides": tuple, "timing_dilations": tuple},
    )
    return ExperimentConfig(
        train=train,
        model=model,
        corpus_dir=data.get("corpus_dir", "corpus"),
        eval_dir=data.get("eval_dir", "eval"),
        ablation_tag=data.get("ablation_tag", "optimal"),
        out_dir=data.get("out_dir", "out"),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data, source=str(path))


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n", encoding="utf-8")
