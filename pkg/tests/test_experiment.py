import json
import math

import pytest

from eggcodec.errors import ConfigError
from eggcodec.experiment import (
    ABLATION_TAGS,
    ExperimentConfig,
    config_from_dict,
    config_to_dict,
    expand_ablation,
    load_config,
    save_config,
)


class TestAblationExpansion:
    def test_tags_cover_table_rows(self):
        assert set(ABLATION_TAGS) == {
            "optimal", "cos", "l1l2", "no_time", "no_freq",
            "nda5", "nda7", "no_nda", "no_gan_placeholder", "unfiltered",
        }

    def test_unknown_tag_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(ablation_tag="bogus")

    def test_expansion_is_pure(self):
        cfg = ExperimentConfig(ablation_tag="nda5")
        a = expand_ablation(cfg)
        b = expand_ablation(cfg)
        assert a == b
        assert a.train.snr_levels_db == (5.0,)

    def test_no_freq_toggles(self):
        out = expand_ablation(ExperimentConfig(ablation_tag="no_freq"))
        assert not out.train.loss_cfg.include_spectral
        assert out.train.loss_cfg.include_time_l1l2
        assert out.train.loss_cfg.include_time_cos

    def test_cos_toggles(self):
        out = expand_ablation(ExperimentConfig(ablation_tag="cos"))
        assert out.train.loss_cfg.include_spectral
        assert not out.train.loss_cfg.include_time_l1l2
        assert out.train.loss_cfg.include_time_cos

    def test_no_nda_clean_only(self):
        out = expand_ablation(ExperimentConfig(ablation_tag="no_nda"))
        assert out.train.snr_levels_db == (math.inf,)

    def test_unfiltered_flag(self):
        out = expand_ablation(ExperimentConfig(ablation_tag="unfiltered"))
        assert not out.train.filter_refs

    def test_no_gan_placeholder_identical_to_optimal(self):
        base = expand_ablation(ExperimentConfig(ablation_tag="optimal"))
        placebo = expand_ablation(ExperimentConfig(ablation_tag="no_gan_placeholder"))
        assert base.train == placebo.train
        assert base.model == placebo.model

    def test_golden_expansions(self):
        # frozen expansions for every tag: loss toggles, SNR set, filtering
        golden = {
            "optimal": (True, True, True, (3.0, 5.0, 7.0, math.inf), True),
            "cos": (True, False, True, (3.0, 5.0, 7.0, math.inf), True),
            "l1l2": (True, True, False, (3.0, 5.0, 7.0, math.inf), True),
            "no_time": (True, False, False, (3.0, 5.0, 7.0, math.inf), True),
            "no_freq": (False, True, True, (3.0, 5.0, 7.0, math.inf), True),
            "nda5": (True, True, True, (5.0,), True),
            "nda7": (True, True, True, (7.0,), True),
            "no_nda": (True, True, True, (math.inf,), True),
            "no_gan_placeholder": (True, True, True, (3.0, 5.0, 7.0, math.inf), True),
            "unfiltered": (True, True, True, (3.0, 5.0, 7.0, math.inf), False),
        }
        for tag, (spec, l1l2, cos, snr, filt) in golden.items():
            out = expand_ablation(ExperimentConfig(ablation_tag=tag))
            lc = out.train.loss_cfg
            assert (lc.include_spectral, lc.include_time_l1l2, lc.include_time_cos) == (
                spec, l1l2, cos,
            ), tag
            assert out.train.snr_levels_db == snr, tag
            assert out.train.filter_refs == filt, tag


class TestConfigFiles:
    def test_round_trip(self, tmp_path):
        cfg = expand_ablation(ExperimentConfig(ablation_tag="nda7"))
        path = tmp_path / "cfg.json"
        save_config(cfg, path)
        back = load_config(path)
        assert back == cfg

    def test_clean_spelled_out(self, tmp_path):
        cfg = ExperimentConfig()
        path = tmp_path / "cfg.json"
        save_config(cfg, path)
        data = json.loads(path.read_text())
        assert data["train"]["snr_levels_db"] == [3.0, 5.0, 7.0, "clean"]

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "train": {,}\n}\n')
        with pytest.raises(ConfigError, match="line 2"):
            load_config(path)

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError, match="unknown field"):
            config_from_dict({"trian": {}})

    def test_unknown_train_field_rejected(self):
        with pytest.raises(ConfigError, match="unknown field"):
            config_from_dict({"train": {"learning_rate": 0.1}})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.json")

    def test_dict_round_trip(self):
        cfg = ExperimentConfig(ablation_tag="unfiltered", corpus_dir="c", out_dir="o")
        assert config_from_dict(config_to_dict(cfg)) == cfg
