"""Tests for the frozen numerical constants."""
import pytest

from rilab import fixtures
from rilab.errors import ConfigError


@pytest.fixture
def fixture_file(temp_dir):
    path = temp_dir / "fixtures.yaml"
    path.write_text(fixtures.default_path().read_text())
    return path


class TestFixtures:
    """Test reading and freezing constants."""

    def test_packaged_values(self):
        """The packaged file holds every constant."""
        values = fixtures.load_fixtures()
        assert set(values) == set(fixtures.FIXTURE_KEYS)
        assert values["green_origin"] == pytest.approx(1.516386, rel=1e-6)
        assert values["cap_origin"] == pytest.approx(1 / values["green_origin"], rel=1e-5)

    def test_unknown_name(self):
        """Only known constants can be read."""
        with pytest.raises(ConfigError):
            fixtures.get("pi")

    def test_missing_file(self, temp_dir):
        """A missing fixture file is a config error."""
        with pytest.raises(ConfigError, match="not found"):
            fixtures.load_fixtures(temp_dir / "none.yaml")

    def test_missing_key(self, temp_dir):
        """Every constant must be present."""
        path = temp_dir / "f.yaml"
        path.write_text("green_origin: 1.5\n")
        with pytest.raises(ConfigError, match="lacks"):
            fixtures.load_fixtures(path)

    def test_freeze_keeps_comments(self, fixture_file):
        """Freezing rewrites one value and leaves the comments."""
        fixtures.freeze("gamma_c", 2.5, fixture_file)
        assert fixtures.get("gamma_c", fixture_file) == 2.5
        assert "# Entropy constant" in fixture_file.read_text()
