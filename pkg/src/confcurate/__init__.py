"""Curation pipeline for multi-year conference programs."""

__version__ = "0.1.0"

from .affiliation import (  # noqa: E402
    export_review_sample,
    extract_affiliation,
    validate_extraction,
)
from .analytics import (  # noqa: E402
    authorship_metrics,
    export_figure_series,
    geography_metrics,
    growth_metrics,
    methodology_shares,
    position_role_table,
    summary,
)
from .config import PipelineConfig, load_config  # noqa: E402
from .dataset import CuratedDataset, load_dataset  # noqa: E402
from .errors import ConfcurateError  # noqa: E402
from .ingest import fetch_program, filter_presentations, parse_presentation_page  # noqa: E402
from .methodology import classify_methodology, cohen_kappa, stratified_sample  # noqa: E402
from .normalization import (  # noqa: E402
    classify_position,
    normalize_country,
    normalize_institution,
    normalize_name,
)
from .pipeline import export_dataset, run  # noqa: E402
from .resolution import resolve, score_pair  # noqa: E402
from .validation import validate_dataset  # noqa: E402

__all__ = [
    "ConfcurateError",
    "CuratedDataset",
    "PipelineConfig",
    "authorship_metrics",
    "classify_methodology",
    "classify_position",
    "cohen_kappa",
    "export_dataset",
    "export_figure_series",
    "export_review_sample",
    "extract_affiliation",
    "fetch_program",
    "filter_presentations",
    "geography_metrics",
    "growth_metrics",
    "load_config",
    "load_dataset",
    "methodology_shares",
    "normalize_country",
    "normalize_institution",
    "normalize_name",
    "parse_presentation_page",
    "position_role_table",
    "resolve",
    "run",
    "score_pair",
    "stratified_sample",
    "summary",
    "validate_dataset",
    "validate_extraction",
]
