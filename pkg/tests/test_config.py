"""Tests for configuration loading, overrides and validation."""

import dataclasses
from pathlib import Path

import pytest

from confcurate.config import (
    ENDPOINT_ENV_VAR,
    PipelineConfig,
    apply_overrides,
    load_config,
    parse_years,
    validate_config,
)
from confcurate.errors import ConfigurationError, UnsupportedYearError


def _write(tmp_path, text):
    path = tmp_path / "confcurate.toml"
    path.write_text(text, encoding="utf-8")
    return path


class TestParseYears:
    """Test suite for year range parsing."""

    @pytest.mark.parametrize(
        "value,expected",
        [
            ("2005..2007", (2005, 2006, 2007)),
            ("2025, 2007", (2007, 2025)),
            ([2026, 2026, 2010], (2010, 2026)),
            (2015, (2015,)),
            ("2005..2006,2025", (2005, 2006, 2025)),
        ],
    )
    def test_forms(self, value, expected):
        """Test ranges, lists and single years."""
        assert parse_years(value) == expected

    @pytest.mark.parametrize("value", ["2004", "2025..2027", [1999]])
    def test_out_of_range(self, value):
        """Test years outside the archive."""
        with pytest.raises(UnsupportedYearError):
            parse_years(value)


class TestLoadConfig:
    """Test suite for TOML loading."""

    def test_defaults(self, monkeypatch):
        """Test that no file means packaged defaults."""
        monkeypatch.delenv(ENDPOINT_ENV_VAR, raising=False)
        config = load_config()
        assert config.extractor.mode == "rules"
        assert config.ingest.delay_ms == 1000
        assert config.ingest.years[0] == 2005
        assert config.ingest.years[-1] == 2026
        assert config.review.methodology_per_category == 10
        assert config.analytics.unknown_position_cutoff == pytest.approx(0.99)

    def test_sections(self, tmp_path, monkeypatch):
        """Test that file values override defaults and paths resolve beside the file."""
        monkeypatch.delenv(ENDPOINT_ENV_VAR, raising=False)
        path = _write(
            tmp_path,
            """
[paths]
corpus_dir = "archive"
dataset_dir = "/data/out"

[ingest]
years = "2007,2025"
delay_ms = 1500

[classifier]
mode = "model"
temperature = 0.0

[seeds]
cluster_sample = 99
""",
        )
        config = load_config(path)
        assert config.corpus_dir == tmp_path.resolve() / "archive"
        assert config.dataset_dir == Path("/data/out")
        assert config.ingest.years == (2007, 2025)
        assert config.ingest.delay_ms == 1500
        assert config.classifier.mode == "model"
        assert config.extractor.mode == "rules"
        assert config.seeds.cluster_sample == 99
        assert config.seeds.ingest_sample == 5

    def test_endpoint_from_environment(self, monkeypatch):
        """Test the endpoint override for both model stages."""
        monkeypatch.setenv(ENDPOINT_ENV_VAR, "http://gpu-box:9000")
        config = load_config()
        assert config.extractor.endpoint == "http://gpu-box:9000"
        assert config.classifier.endpoint == "http://gpu-box:9000"

    @pytest.mark.parametrize(
        "text",
        [
            "[ingest]\nspeed = 3\n",
            "[classifier]\nvendor = 'x'\n",
            "[plotting]\ndpi = 300\n",
            "[ingest\n",
            "[ingest]\nyears = 'soon'\n",
        ],
    )
    def test_invalid(self, tmp_path, text):
        """Test unknown keys, unknown sections and malformed files."""
        with pytest.raises(ConfigurationError):
            load_config(_write(tmp_path, text))

    def test_missing_file(self, tmp_path):
        """Test a config path that does not exist."""
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "absent.toml")


class TestOverrides:
    """Test suite for command-line overrides."""

    def test_seed_and_mode(self):
        """Test that one seed and one mode apply everywhere."""
        config = apply_overrides(PipelineConfig(), seed=42, mode="model")
        assert set(dataclasses.asdict(config.seeds).values()) == {42}
        assert config.extractor.mode == config.classifier.mode == "model"

    def test_paths_and_ingest(self):
        """Test path and ingest overrides; None leaves values alone."""
        config = apply_overrides(
            PipelineConfig(),
            dataset_dir="elsewhere",
            corpus_dir=None,
            years=(2010,),
            fetch=True,
            base_url=None,
        )
        assert config.dataset_dir == Path("elsewhere")
        assert config.corpus_dir == Path("corpus")
        assert config.ingest.years == (2010,)
        assert config.ingest.fetch is True
        assert config.ingest.base_url is None


class TestValidateConfig:
    """Test suite for value and path checks."""

    @pytest.fixture
    def config(self, tmp_path):
        (tmp_path / "corpus").mkdir()
        return PipelineConfig(corpus_dir=tmp_path / "corpus", dataset_dir=tmp_path / "dataset")

    def test_valid(self, config):
        """Test a default config with an existing corpus."""
        assert validate_config(config) is config

    @pytest.mark.parametrize(
        "change",
        [
            {"classifier": {"mode": "oracle"}},
            {"extractor": {"temperature": 1.5}},
            {"extractor": {"max_in_flight": 0}},
            {"classifier": {"mode": "model", "endpoint": ""}},
            {"ingest": {"delay_ms": 0}},
            {"ingest": {"fetch": True}},
            {"analytics": {"unknown_position_cutoff": 1.2}},
        ],
    )
    def test_invalid_values(self, config, change):
        """Test out-of-range settings."""
        for section, values in change.items():
            config = dataclasses.replace(
                config, **{section: dataclasses.replace(getattr(config, section), **values)}
            )
        with pytest.raises(ConfigurationError):
            validate_config(config)

    def test_missing_paths(self, config, tmp_path):
        """Test references to files that do not exist."""
        with pytest.raises(ConfigurationError):
            validate_config(dataclasses.replace(config, lexicon_path=tmp_path / "none.csv"))
        with pytest.raises(ConfigurationError):
            validate_config(dataclasses.replace(config, corpus_dir=tmp_path / "gone"), "ingest")

    def test_corpus_not_needed_downstream(self, config, tmp_path):
        """Test that later stages do not need the corpus directory."""
        moved = dataclasses.replace(config, corpus_dir=tmp_path / "gone")
        assert validate_config(moved, "analyze") is moved
