"""Longitudinal statistics, tables and figure series over the curated dataset.

All computations run on exact counts; rounding happens only when reports are written
(percentages to one decimal place).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from .config import AnalyticsConfig
from .dataset import CuratedDataset
from .errors import InvalidInputError, UnlabeledPresentationError
from .records import AFFILIATION_FIELDS, MethodologyLabel, PositionCategory

logger = logging.getLogger(__name__)

YearSeries = Dict[int, float]

PHASES: Tuple[Tuple[str, int, int], ...] = (
    ("2005-2011", 2005, 2011),
    ("2012-2016", 2012, 2016),
    ("2017-2026", 2017, 2026),
)
DOMESTIC_COUNTRY = "USA"
LABELS = [label.value for label in MethodologyLabel]

SUMMARY_REPORT = "table1.json"
POSITION_TABLE = "table2.csv"
COUNTRY_TABLE = "table3.csv"
GROWTH_REPORT = "growth.json"
COMPLETENESS_REPORT = "completeness.json"

FIGURES = {
    "growth": "fig2_growth.csv",
    "methodology": "fig3_methodology.csv",
    "coauthorship": "fig4_coauthorship.csv",
    "career_stage": "fig5_career_stage.csv",
    "international": "fig6_international.csv",
}


def cagr(begin: float, end: float, n_years: int) -> float:
    """Compound annual growth rate, ``(end / begin) ** (1 / n_years) - 1``.

    Raises:
        InvalidInputError: If ``begin`` or ``end`` is not positive or ``n_years < 1``.
    """
    if begin <= 0 or end <= 0:
        raise InvalidInputError("CAGR needs positive begin and end values")
    if n_years < 1:
        raise InvalidInputError("CAGR needs at least one year")
    return (end / begin) ** (1.0 / n_years) - 1.0


def yearly_presentation_counts(dataset: CuratedDataset) -> Dict[int, int]:
    counts = dataset.presentations.groupby("year").size()
    return {int(year): int(n) for year, n in counts.items()}


def growth_metrics(dataset: CuratedDataset) -> Dict[str, Any]:
    """CAGR between the first and last observed years, phase averages, year-over-year change."""

    counts = yearly_presentation_counts(dataset)
    result: Dict[str, Any] = {
        "counts": {str(y): n for y, n in counts.items()},
        "phase_averages": {},
        "year_over_year": {},
        "cagr": None,
        "doubling_time_years": None,
    }
    for name, first, last in PHASES:
        values = [n for y, n in counts.items() if first <= y <= last]
        if values:
            result["phase_averages"][name] = sum(values) / len(values)
    years = sorted(counts)
    for previous, year in zip(years, years[1:], strict=False):
        result["year_over_year"][str(year)] = (counts[year] - counts[previous]) / counts[previous]
    if len(years) > 1:
        rate = cagr(counts[years[0]], counts[years[-1]], years[-1] - years[0])
        result["cagr"] = rate
        if rate > 0:
            result["doubling_time_years"] = math.log(2) / math.log1p(rate)
    return result


def _labels_for_presentations(dataset: CuratedDataset) -> pd.DataFrame:
    frame = dataset.presentations[["source_id", "year"]].merge(
        dataset.labels[["source_id", "label"]], on="source_id", how="left"
    )
    missing = frame.loc[frame["label"].isna(), "source_id"].tolist()
    if missing:
        raise UnlabeledPresentationError(missing)
    return frame


def methodology_shares(dataset: CuratedDataset) -> Dict[str, Any]:
    """Label proportions overall and per year; each distribution sums to 1.

    Raises:
        UnlabeledPresentationError: If any kept presentation has no label.
    """
    frame = _labels_for_presentations(dataset)
    result: Dict[str, Any] = {"overall": {}, "by_year": {}, "counts": {}}
    if frame.empty:
        return result
    total = len(frame)
    overall = frame["label"].value_counts()
    result["overall"] = {label: int(overall.get(label, 0)) / total for label in LABELS}
    result["counts"] = {label: int(overall.get(label, 0)) for label in LABELS}
    for year, group in frame.groupby("year"):
        counts = group["label"].value_counts()
        result["by_year"][int(year)] = {
            label: int(counts.get(label, 0)) / len(group) for label in LABELS
        }
    return result


def _authors_per_presentation(dataset: CuratedDataset) -> pd.DataFrame:
    counts = dataset.authors.groupby("source_id").size().rename("authors")
    frame = dataset.presentations[["source_id", "year"]].merge(
        counts, left_on="source_id", right_index=True, how="left"
    )
    frame["authors"] = frame["authors"].fillna(0).astype("int64")
    empty = frame.loc[frame["authors"] < 1, "source_id"].tolist()
    if empty:
        raise InvalidInputError(f"Presentations without author records: {', '.join(empty)}")
    return frame


def authorship_metrics(dataset: CuratedDataset) -> pd.DataFrame:
    """Per-year team size statistics.

    Raises:
        InvalidInputError: If a presentation has no author records.
    """
    columns = [
        "year",
        "presentations",
        "mean_authors",
        "median_authors",
        "single_author_share",
        "multi_author_share",
        "four_plus_share",
    ]
    frame = _authors_per_presentation(dataset)
    if frame.empty:
        return pd.DataFrame(columns=columns)
    grouped = frame.groupby("year")["authors"]
    table = pd.DataFrame(
        {
            "presentations": grouped.size(),
            "mean_authors": grouped.mean(),
            "median_authors": grouped.median(),
            "single_author_share": grouped.apply(lambda s: (s == 1).mean()),
            "multi_author_share": grouped.apply(lambda s: (s > 1).mean()),
            "four_plus_share": grouped.apply(lambda s: (s >= 4).mean()),
        }
    )
    return table.reset_index()[columns]


@dataclass
class PositionRoleRow:
    category: PositionCategory
    total: int
    pct_of_total: float
    first_author_pct: float
    co_author_pct: float


def position_role_table(dataset: CuratedDataset) -> List[PositionRoleRow]:
    """Author records by position category, split into first-author and co-author roles."""

    authors = dataset.authors
    if authors.empty:
        return []
    total_records = len(authors)
    rows = []
    for category, group in authors.groupby("position_category"):
        total = len(group)
        first = int((group["author_index"] == 0).sum())
        rows.append(
            PositionRoleRow(
                category=PositionCategory(category),
                total=total,
                pct_of_total=100.0 * total / total_records,
                first_author_pct=100.0 * first / total,
                co_author_pct=100.0 * (total - first) / total,
            )
        )
    rows.sort(key=lambda r: (-r.total, r.category.value))
    return rows


@dataclass
class CountryRoleRow:
    country: str
    total: int
    first_author_n: int
    co_author_n: int


@dataclass
class GeographyMetrics:
    rows: List[CountryRoleRow]
    international_share: YearSeries
    first_author_international_share: YearSeries
    unknown_country: Dict[int, int]


def _international_share(frame: pd.DataFrame) -> YearSeries:
    known = frame[frame["country"].notna()]
    shares = known.groupby("year")["country"].apply(lambda s: (s != DOMESTIC_COUNTRY).mean())
    return {int(year): float(share) for year, share in shares.items()}


def geography_metrics(dataset: CuratedDataset, top_n: Optional[int] = None) -> GeographyMetrics:
    """Country table plus the yearly share of non-US authors among records with a country.

    Records without a country are left out of the share denominators and counted separately.
    """
    authors = dataset.authors
    if authors.empty:
        return GeographyMetrics([], {}, {}, {})
    rows = []
    known = authors[authors["country"].notna()]
    for country, group in known.groupby("country"):
        first = int((group["author_index"] == 0).sum())
        rows.append(CountryRoleRow(str(country), len(group), first, len(group) - first))
    rows.sort(key=lambda r: (-r.total, r.country))
    if top_n is not None:
        rows = rows[:top_n]
    unknown = authors[authors["country"].isna()].groupby("year").size()
    return GeographyMetrics(
        rows=rows,
        international_share=_international_share(authors),
        first_author_international_share=_international_share(
            authors[authors["author_index"] == 0]
        ),
        unknown_country={int(y): int(n) for y, n in unknown.items()},
    )


@dataclass
class SummaryStats:
    total_abstracts: int
    total_author_records: int
    unique_authors: int
    unique_institutions: int
    unique_countries: int
    years_covered: int


def summary(dataset: CuratedDataset) -> SummaryStats:
    authors = dataset.authors
    return SummaryStats(
        total_abstracts=len(dataset.presentations),
        total_author_records=len(authors),
        unique_authors=len(dataset.clusters),
        unique_institutions=int(authors["institution"].dropna().nunique()),
        unique_countries=int(authors["country"].dropna().nunique()),
        years_covered=int(dataset.presentations["year"].nunique()),
    )


def completeness(dataset: CuratedDataset) -> Dict[str, Any]:
    """Share of author records carrying each extracted affiliation field."""

    authors = dataset.authors
    fields = [f for f in AFFILIATION_FIELDS if f != "name"]
    column = {"institution": "institution_raw", "state": "state_raw", "country": "country_raw"}

    def present(frame: pd.DataFrame, name: str) -> float:
        values = frame[column.get(name, name)]
        if name == "degrees":
            return float(values.map(lambda v: bool(v)).mean())
        return float(values.notna().mean())

    result: Dict[str, Any] = {"records": len(authors), "overall": {}, "by_year": {}}
    if authors.empty:
        return result
    result["overall"] = {name: present(authors, name) for name in fields}
    result["position_unknown_share"] = float(
        (authors["position_category"] == PositionCategory.UNKNOWN.value).mean()
    )
    for year, group in authors.groupby("year"):
        result["by_year"][str(int(year))] = {name: present(group, name) for name in fields}
    return result


def _career_stage_series(dataset: CuratedDataset, unknown_cutoff: float) -> pd.DataFrame:
    columns = ["year", "category", "first_authors", "share"]
    first = dataset.authors[dataset.authors["author_index"] == 0]
    if first.empty:
        return pd.DataFrame(columns=columns)
    rows = []
    for year, group in first.groupby("year"):
        counts = group["position_category"].value_counts()
        unknown_share = counts.get(PositionCategory.UNKNOWN.value, 0) / len(group)
        if unknown_share > unknown_cutoff:
            logger.info("Career-stage series skips %d (%.1f%% unknown)", year, 100 * unknown_share)
            continue
        for category in PositionCategory:
            n = int(counts.get(category.value, 0))
            rows.append((int(year), category.value, n, n / len(group)))
    return pd.DataFrame(rows, columns=columns)


def figure_series(
    dataset: CuratedDataset, figure: str, unknown_cutoff: float = 0.99
) -> pd.DataFrame:
    """Plot-ready series for one figure id.

    Raises:
        InvalidInputError: For an unknown figure id.
    """
    if figure not in FIGURES:
        raise InvalidInputError(f"Unknown figure {figure!r}; expected one of {sorted(FIGURES)}")
    if figure == "growth":
        counts = yearly_presentation_counts(dataset)
        return pd.DataFrame(list(counts.items()), columns=["year", "presentations"])
    if figure == "methodology":
        shares = methodology_shares(dataset)["by_year"]
        return pd.DataFrame(
            [{"year": year, **values} for year, values in shares.items()],
            columns=["year", *LABELS],
        )
    if figure == "coauthorship":
        return authorship_metrics(dataset)
    if figure == "career_stage":
        return _career_stage_series(dataset, unknown_cutoff)

    geo = geography_metrics(dataset)
    authors = dataset.authors
    known = authors[authors["country"].notna()].groupby("year").size()
    years = sorted(set(known.index) | set(geo.unknown_country))
    return pd.DataFrame(
        [
            {
                "year": int(year),
                "known_country_records": int(known.get(year, 0)),
                "unknown_country_records": geo.unknown_country.get(int(year), 0),
                "international_share": geo.international_share.get(int(year)),
                "first_author_international_share": geo.first_author_international_share.get(
                    int(year)
                ),
            }
            for year in years
        ],
        columns=[
            "year",
            "known_country_records",
            "unknown_country_records",
            "international_share",
            "first_author_international_share",
        ],
    )


def _write_csv(frame: pd.DataFrame, path: Path, float_format: Optional[str] = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n", float_format=float_format)
    return path


def _write_json(data: Any, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def export_figure_series(
    dataset: CuratedDataset, figure: str, out_dir: Path, unknown_cutoff: float = 0.99
) -> Path:
    """Write one figure's series to ``out_dir`` as CSV (header only when there is no data)."""

    frame = figure_series(dataset, figure, unknown_cutoff)
    return _write_csv(frame, Path(out_dir) / FIGURES[figure], float_format="%.4f")


def _pct(value: float) -> float:
    return round(value, 1)


def write_reports(
    dataset: CuratedDataset,
    reports_dir: Path,
    figures_dir: Path,
    config: Optional[AnalyticsConfig] = None,
) -> List[Path]:
    """Write every table, growth/completeness report and figure series."""

    config = config or AnalyticsConfig()
    written = [
        _write_json(asdict(summary(dataset)), reports_dir / SUMMARY_REPORT),
        _write_csv(
            pd.DataFrame(
                [
                    {
                        "category": row.category.value,
                        "total": row.total,
                        "pct_of_total": _pct(row.pct_of_total),
                        "first_author_pct": _pct(row.first_author_pct),
                        "co_author_pct": _pct(row.co_author_pct),
                    }
                    for row in position_role_table(dataset)
                ],
                columns=["category", "total", "pct_of_total", "first_author_pct", "co_author_pct"],
            ),
            reports_dir / POSITION_TABLE,
        ),
        _write_csv(
            pd.DataFrame(
                [asdict(r) for r in geography_metrics(dataset, config.top_countries).rows],
                columns=["country", "total", "first_author_n", "co_author_n"],
            ),
            reports_dir / COUNTRY_TABLE,
        ),
        _write_json(growth_metrics(dataset), reports_dir / GROWTH_REPORT),
        _write_json(completeness(dataset), reports_dir / COMPLETENESS_REPORT),
    ]
    for figure in FIGURES:
        written.append(
            export_figure_series(dataset, figure, figures_dir, config.unknown_position_cutoff)
        )
    logger.info("Wrote %d report files", len(written))
    return written
