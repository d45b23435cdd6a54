"""Tests for configuration objects and loading."""

import json

import pytest

from cti_graph_toolkit.config import (
    CONFIG_ENV_VAR,
    EvalOptions,
    IngestConfig,
    MappingConfig,
    RunConfig,
    TuckerConfig,
    default_config_path,
    load_config,
)
from cti_graph_toolkit.exceptions import ConfigurationError


class TestDefaults:
    """Test default settings."""

    def test_mapping_defaults(self):
        """Title weight 0.4 and threshold 0.6."""
        cfg = MappingConfig()
        assert cfg.w_t == 0.4
        assert cfg.tau == 0.6

    def test_tucker_defaults(self):
        """Dimensions 50, batch 64, 1000 iterations."""
        cfg = TuckerConfig()
        assert (cfg.d_e, cfg.d_r, cfg.batch_size, cfg.iterations) == (50, 50, 64, 1000)
        assert cfg.learning_rate == 0.001

    def test_eval_defaults(self):
        """Filtered ranking with the usual cut-offs."""
        cfg = EvalOptions()
        assert cfg.filtered
        assert cfg.hits_at == (1, 3, 10, 30)

    def test_split_fraction_default(self):
        """A quarter of the pool is held out."""
        assert RunConfig().split_fraction == 0.25


class TestValidation:
    """Test range checks."""

    def test_relevance_window_must_exceed_100(self):
        """n_words of 100 is rejected."""
        with pytest.raises(ConfigurationError):
            IngestConfig(n_words=100)
        assert IngestConfig(n_words=101).n_words == 101

    def test_title_weight_range(self):
        """w_t must lie in [0, 1]."""
        with pytest.raises(ConfigurationError):
            MappingConfig(w_t=1.5)

    def test_label_smoothing_range(self):
        """label_smoothing must lie in [0, 1)."""
        with pytest.raises(ConfigurationError):
            TuckerConfig(label_smoothing=1.0)

    def test_dimensions_positive(self):
        """Zero dimensions are rejected."""
        with pytest.raises(ConfigurationError):
            TuckerConfig(d_e=0)

    def test_hits_at_sorted_unique(self):
        """Cut-offs are normalized to a sorted tuple."""
        assert EvalOptions(hits_at=(10, 1, 10)).hits_at == (1, 10)

    def test_split_fraction_open_interval(self):
        """split_fraction of 1 is rejected."""
        with pytest.raises(ConfigurationError):
            RunConfig(split_fraction=1.0)

    def test_configuration_error_is_value_error(self):
        """Configuration errors are ValueErrors."""
        with pytest.raises(ValueError):
            MappingConfig(tau=-1)


class TestOverrides:
    """Test flat overrides."""

    def test_section_fields(self):
        """Keys route to the section that owns them."""
        cfg = RunConfig().with_overrides(tau=0.5, seed=7, cleanup=False)
        assert cfg.mapping.tau == 0.5
        assert cfg.tucker.seed == 7
        assert cfg.build.cleanup is False

    def test_none_is_ignored(self):
        """Unset flags keep the file value."""
        cfg = RunConfig(output_dir="runs").with_overrides(output_dir=None, tau=None)
        assert cfg == RunConfig(output_dir="runs")

    def test_unknown_key(self):
        """Unknown overrides are configuration errors."""
        with pytest.raises(ConfigurationError):
            RunConfig().with_overrides(colour="red")


class TestLoading:
    """Test TOML and manifest loading."""

    def test_no_file_gives_defaults(self, tmp_path, monkeypatch):
        """Without a config file the defaults apply."""
        monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)
        monkeypatch.chdir(tmp_path)
        assert default_config_path() is None
        assert load_config() == RunConfig()

    def test_toml(self, tmp_path):
        """TOML sections fill the stage settings."""
        path = tmp_path / "ctigraph.toml"
        path.write_text(
            'output_dir = "runs"\n'
            "[mapping]\ntau = 0.55\nplatform = \"enterprise\"\n"
            "[tucker]\nd_e = 20\nseed = 3\n",
            encoding="utf-8",
        )
        cfg = load_config(path)
        assert cfg.output_dir == "runs"
        assert cfg.mapping.tau == 0.55
        assert cfg.mapping.platform == "enterprise"
        assert (cfg.tucker.d_e, cfg.tucker.seed) == (20, 3)

    def test_env_var(self, tmp_path, monkeypatch):
        """CTI_GRAPH_CONFIG points at the config file."""
        path = tmp_path / "custom.toml"
        path.write_text("[tucker]\nseed = 11\n", encoding="utf-8")
        monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
        assert load_config().tucker.seed == 11

    def test_unknown_keys_rejected(self, tmp_path):
        """Typos in a section are reported."""
        path = tmp_path / "bad.toml"
        path.write_text("[tucker]\nlearning_rat = 0.1\n", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        """An explicit path must exist."""
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "nope.toml")

    def test_manifest_config_block(self, tmp_path):
        """A run manifest reloads to the same configuration."""
        cfg = RunConfig(output_dir="runs").with_overrides(tau=0.45, seed=5)
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"command": "pipeline", "config": cfg.to_dict()}),
                        encoding="utf-8")
        assert load_config(path) == cfg
