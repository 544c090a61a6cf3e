"""Configuration loading (TOML file, packaged defaults, environment override)."""

from __future__ import annotations

import dataclasses
import logging
import os
import tomllib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .errors import ConfigurationError
from .records import MAX_YEAR, MIN_YEAR, check_year

logger = logging.getLogger(__name__)

ENDPOINT_ENV_VAR = "CONFCURATE_INFERENCE_ENDPOINT"
DEFAULT_ENDPOINT = "http://127.0.0.1:8080"
MODES = ("rules", "model")
SECTIONS = {"paths", "ingest", "extractor", "classifier", "seeds", "review", "analytics"}


def packaged_text(*parts: str) -> str:
    """Read a text asset shipped under ``confcurate/data``."""

    return resources.files("confcurate").joinpath("data", *parts).read_text(encoding="utf-8")


def packaged_path(*parts: str) -> Path:
    return Path(str(resources.files("confcurate").joinpath("data", *parts)))


@dataclass(frozen=True)
class ModelStageConfig:
    """Settings shared by the affiliation extractor and the methodology classifier."""

    mode: str = "rules"
    endpoint: Optional[str] = DEFAULT_ENDPOINT
    temperature: float = 0.1
    max_context: int = 8192
    max_tokens: int = 512
    prompt_path: Optional[Path] = None
    max_in_flight: int = 4
    timeout_s: float = 120.0

    default_prompt = ""

    @property
    def prompt_template(self) -> str:
        if self.prompt_path is not None:
            return Path(self.prompt_path).read_text(encoding="utf-8")
        return packaged_text("prompts", self.default_prompt)


@dataclass(frozen=True)
class ExtractorConfig(ModelStageConfig):
    default_prompt = "affiliation.txt"


@dataclass(frozen=True)
class ClassifierConfig(ModelStageConfig):
    default_prompt = "methodology.txt"


@dataclass(frozen=True)
class IngestConfig:
    years: Tuple[int, ...] = tuple(range(MIN_YEAR, MAX_YEAR + 1))
    base_url: Optional[str] = None
    delay_ms: int = 1000
    fetch: bool = False
    parse_workers: int = 1
    index_path_template: str = "{year}/index.html"
    selectors: Dict[str, Dict[str, str]] = field(default_factory=dict)


@dataclass(frozen=True)
class SeedConfig:
    ingest_sample: int = 5
    extraction_sample: int = 7
    methodology_sample: int = 13
    cluster_sample: int = 11


@dataclass(frozen=True)
class ReviewConfig:
    ingest_sample_size: int = 50
    extraction_sample_size: int = 200
    methodology_per_category: int = 10
    cluster_top: int = 50
    cluster_random: int = 50


@dataclass(frozen=True)
class AnalyticsConfig:
    unknown_position_cutoff: float = 0.99
    top_countries: int = 20


@dataclass(frozen=True)
class PipelineConfig:
    corpus_dir: Path = Path("corpus")
    dataset_dir: Path = Path("dataset")
    mappings_dir: Optional[Path] = None
    lexicon_path: Optional[Path] = None
    scoring_policy_path: Optional[Path] = None
    ingest: IngestConfig = field(default_factory=IngestConfig)
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    review: ReviewConfig = field(default_factory=ReviewConfig)
    analytics: AnalyticsConfig = field(default_factory=AnalyticsConfig)

    @property
    def years(self) -> Tuple[int, ...]:
        return self.ingest.years


def parse_years(value: Any) -> Tuple[int, ...]:
    """Parse ``"2005..2026"``, ``"2007,2025"`` or a list of integers."""

    if isinstance(value, int):
        years: List[int] = [value]
    elif isinstance(value, (list, tuple)):
        years = [int(v) for v in value]
    else:
        text = str(value).strip()
        years = []
        for chunk in text.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            if ".." in chunk:
                start, end = chunk.split("..", 1)
                years.extend(range(int(start), int(end) + 1))
            else:
                years.append(int(chunk))
    for year in years:
        check_year(year)
    return tuple(sorted(set(years)))


def _resolve(base: Path, value: Optional[str]) -> Optional[Path]:
    if not value:
        return None
    path = Path(value).expanduser()
    return path if path.is_absolute() else base / path


def _stage_config(cls, section: Dict[str, Any], base: Path):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigurationError(f"Unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    values = dict(section)
    if "prompt_path" in values:
        values["prompt_path"] = _resolve(base, values["prompt_path"])
    return cls(**values)


def load_config(path: Optional[Path] = None) -> PipelineConfig:
    """Load the pipeline config, falling back to defaults for anything not given.

    The inference endpoint can be overridden with ``CONFCURATE_INFERENCE_ENDPOINT``.
    """

    data: Dict[str, Any] = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            with path.open("rb") as handle:
                data = tomllib.load(handle)
        except FileNotFoundError as exc:
            raise ConfigurationError(f"Config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"Invalid config file {path}: {exc}") from exc
        base = path.resolve().parent

    unknown = set(data) - SECTIONS
    if unknown:
        raise ConfigurationError(f"Unknown config sections: {', '.join(sorted(unknown))}")

    try:
        paths = data.get("paths", {})
        ingest_section = dict(data.get("ingest", {}))
        if "years" in ingest_section:
            ingest_section["years"] = parse_years(ingest_section["years"])
        config = PipelineConfig(
            corpus_dir=_resolve(base, paths.get("corpus_dir", "corpus")),
            dataset_dir=_resolve(base, paths.get("dataset_dir", "dataset")),
            mappings_dir=_resolve(base, paths.get("mappings_dir")),
            lexicon_path=_resolve(base, paths.get("lexicon_path")),
            scoring_policy_path=_resolve(base, paths.get("scoring_policy_path")),
            ingest=IngestConfig(**ingest_section),
            extractor=_stage_config(ExtractorConfig, data.get("extractor", {}), base),
            classifier=_stage_config(ClassifierConfig, data.get("classifier", {}), base),
            seeds=SeedConfig(**data.get("seeds", {})),
            review=ReviewConfig(**data.get("review", {})),
            analytics=AnalyticsConfig(**data.get("analytics", {})),
        )
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"Invalid config: {exc}") from exc

    endpoint = os.environ.get(ENDPOINT_ENV_VAR)
    if endpoint:
        logger.info("Inference endpoint overridden from %s", ENDPOINT_ENV_VAR)
        config = dataclasses.replace(
            config,
            extractor=dataclasses.replace(config.extractor, endpoint=endpoint),
            classifier=dataclasses.replace(config.classifier, endpoint=endpoint),
        )
    return config


def apply_overrides(
    config: PipelineConfig,
    seed: Optional[int] = None,
    mode: Optional[str] = None,
    **paths: Any,
) -> PipelineConfig:
    """Return ``config`` with CLI overrides applied."""

    if seed is not None:
        config = dataclasses.replace(
            config,
            seeds=SeedConfig(
                ingest_sample=seed,
                extraction_sample=seed,
                methodology_sample=seed,
                cluster_sample=seed,
            ),
        )
    if mode is not None:
        config = dataclasses.replace(
            config,
            extractor=dataclasses.replace(config.extractor, mode=mode),
            classifier=dataclasses.replace(config.classifier, mode=mode),
        )
    ingest_overrides = {k: paths.pop(k) for k in list(paths) if k in _INGEST_KEYS}
    ingest_overrides = {k: v for k, v in ingest_overrides.items() if v is not None}
    if ingest_overrides:
        config = dataclasses.replace(
            config, ingest=dataclasses.replace(config.ingest, **ingest_overrides)
        )
    path_overrides = {k: Path(v) for k, v in paths.items() if v is not None}
    if path_overrides:
        config = dataclasses.replace(config, **path_overrides)
    return config


_INGEST_KEYS = {"years", "base_url", "delay_ms", "fetch"}


def validate_config(config: PipelineConfig, stage: str = "all") -> PipelineConfig:
    """Check value ranges and that every referenced path exists."""

    for name, stage_config in (("extractor", config.extractor), ("classifier", config.classifier)):
        if stage_config.mode not in MODES:
            raise ConfigurationError(f"{name}.mode must be one of {MODES}")
        if not 0.0 <= stage_config.temperature <= 1.0:
            raise ConfigurationError(f"{name}.temperature must be in [0, 1]")
        if stage_config.max_context <= 0:
            raise ConfigurationError(f"{name}.max_context must be positive")
        if stage_config.max_in_flight < 1:
            raise ConfigurationError(f"{name}.max_in_flight must be at least 1")
        if stage_config.mode == "model" and not stage_config.endpoint:
            raise ConfigurationError(f"{name}.endpoint is required in model mode")
        if stage_config.prompt_path is not None and not Path(stage_config.prompt_path).exists():
            raise ConfigurationError(
                f"{name}.prompt_path does not exist: {stage_config.prompt_path}"
            )

    if config.ingest.delay_ms <= 0:
        raise ConfigurationError("ingest.delay_ms must be positive")
    for year in config.ingest.years:
        check_year(year)
    if config.ingest.fetch and not config.ingest.base_url:
        raise ConfigurationError("ingest.base_url is required when fetching")
    if stage in ("ingest", "all") and not config.ingest.fetch and not config.corpus_dir.exists():
        raise ConfigurationError(f"Corpus directory does not exist: {config.corpus_dir}")

    for label, path in (
        ("paths.mappings_dir", config.mappings_dir),
        ("paths.lexicon_path", config.lexicon_path),
        ("paths.scoring_policy_path", config.scoring_policy_path),
    ):
        if path is not None and not Path(path).exists():
            raise ConfigurationError(f"{label} does not exist: {path}")
    if not 0.0 <= config.analytics.unknown_position_cutoff <= 1.0:
        raise ConfigurationError("analytics.unknown_position_cutoff must be in [0, 1]")
    return config
