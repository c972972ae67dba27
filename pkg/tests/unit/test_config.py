"""Tests for configuration loading and validation."""
import pytest
import yaml

from rilab.config import (
    CONFIG_NAME,
    ExperimentConfig,
    get_base_path,
    init_config,
    load_config,
    resolve_config,
)
from rilab.errors import ConfigError


class TestInitConfig:
    """Test writing the template."""

    def test_writes_template(self, temp_dir):
        """The template is valid and loads to the defaults."""
        path = init_config(temp_dir)
        assert path == temp_dir / CONFIG_NAME
        assert ExperimentConfig.from_mapping(load_config(path)) == ExperimentConfig()

    def test_keeps_comments(self, temp_dir):
        """Comments survive the round trip."""
        text = init_config(temp_dir).read_text()
        assert "# Kill radius factor" in text

    def test_refuses_to_overwrite(self, temp_dir):
        """An existing file is never replaced."""
        init_config(temp_dir)
        with pytest.raises(FileExistsError):
            init_config(temp_dir)


class TestLoadConfig:
    """Test reading files."""

    def test_missing_file_warns(self, temp_dir, capsys):
        """A missing file yields an empty mapping and a warning."""
        assert load_config(temp_dir / "nope.yaml") == {}
        assert "Configuration not found" in capsys.readouterr().err

    def test_invalid_yaml(self, temp_dir):
        """Broken YAML is a config error."""
        path = temp_dir / CONFIG_NAME
        path.write_text("experiment: [unclosed\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_top_level_list(self, temp_dir):
        """The top level must be a mapping."""
        path = temp_dir / CONFIG_NAME
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_sample(self, config_file):
        """Sections map onto the flat config."""
        config = ExperimentConfig.from_mapping(load_config(config_file))
        assert config.trials == 50
        assert config.levels == (0.5, 1.0)
        assert config.K == 10
        assert config.test_mode


class TestValidation:
    """Test preconditions."""

    @pytest.mark.parametrize("changes", [
        {"experiment": "nothing"},
        {"d": 2},
        {"kappa": 1.0},
        {"K": 50},
        {"L0_minus": 5},
        {"levels": ()},
        {"levels": (0.0,)},
        {"eps": 1.0},
        {"mode": "fast"},
    ])
    def test_rejected(self, changes):
        """Each violated precondition is a config error."""
        with pytest.raises(ConfigError):
            ExperimentConfig(**changes)

    def test_test_mode_relaxes(self):
        """Test mode admits d = 2 and K = 10."""
        config = ExperimentConfig(test_mode=True, d=2, K=10)
        assert config.k_min == 10

    def test_problems_are_joined(self):
        """All problems are reported at once."""
        with pytest.raises(ConfigError, match="kappa.*eps"):
            ExperimentConfig(kappa=1.0, eps=2.0)

    def test_unknown_key(self):
        """Unknown keys are named."""
        with pytest.raises(ConfigError, match="geometry.R"):
            ExperimentConfig.from_mapping({"geometry": {"R": 3}})

    def test_unknown_section(self):
        """Unknown sections are named."""
        with pytest.raises(ConfigError, match="plots"):
            ExperimentConfig.from_mapping({"plots": {}})

    def test_scalar_levels(self):
        """A single level may be given without a list."""
        assert ExperimentConfig.from_mapping({"levels": {"u": 2.0}}).levels == (2.0,)


class TestOverride:
    """Test layering flags over files."""

    def test_none_is_ignored(self):
        """Unset flags keep the file's values."""
        config = ExperimentConfig(trials=7).override(trials=None, seed=3)
        assert (config.trials, config.seed) == (7, 3)

    def test_override_is_validated(self):
        """Overrides go through the same checks."""
        with pytest.raises(ConfigError):
            ExperimentConfig().override(kappa=0.5)

    def test_to_dict_round_trip(self):
        """Plain dicts rebuild the same config."""
        config = ExperimentConfig(radii=(3, 4), levels=(0.5,))
        assert ExperimentConfig(**config.to_dict()) == config


class TestResolve:
    """Test where the config comes from."""

    def test_defaults_without_file(self, temp_dir, monkeypatch):
        """No file under the base path gives the defaults."""
        monkeypatch.setenv("RILAB_BASE_DIR", str(temp_dir))
        assert get_base_path() == temp_dir
        assert resolve_config(None) == ExperimentConfig()

    def test_base_path_file(self, temp_dir, monkeypatch, sample_config):
        """rilab.yaml under the base path is picked up."""
        monkeypatch.setenv("RILAB_BASE_DIR", str(temp_dir))
        (temp_dir / CONFIG_NAME).write_text(yaml.dump(sample_config))
        assert resolve_config(None).seed == 7

    def test_explicit_file(self, config_file):
        """An explicit path wins."""
        assert resolve_config(config_file).trials == 50
