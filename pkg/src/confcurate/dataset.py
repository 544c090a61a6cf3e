"""Dataset directory layout and loading the curated tables into DataFrames."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence

import pandas as pd

from .records import AuthorRecord, RawPresentation, to_record
from .resolution import IdentityCluster
from .storage import read_jsonl

RAW_PRESENTATIONS = "raw_presentations.jsonl"
EXCLUDED_PRESENTATIONS = "excluded_presentations.jsonl"
FLAGGED_PRESENTATIONS = "flagged_presentations.jsonl"
PARSED_AFFILIATIONS = "parsed_affiliations.jsonl"
FLAGGED_AFFILIATIONS = "flagged_affiliations.jsonl"
AUTHOR_RECORDS = "author_records.jsonl"
CLUSTERS = "clusters.jsonl"
METHODOLOGY = "methodology.jsonl"
FLAGGED_METHODOLOGY = "flagged_methodology.jsonl"
MANIFEST = "manifest.jsonl"
VALIDATION_REPORT = "validation_report.json"

REVIEW_INGEST = "review/ingest_sample.csv"
REVIEW_EXTRACTION = "review/extraction_sample.csv"
REVIEW_CLUSTERS = "review/clusters_sample.csv"
REVIEW_METHODOLOGY = "review/methodology_sample.csv"
REVIEW_KAPPA = "review/kappa_report.json"

PRESENTATION_COLUMNS = ["source_id", "year", "title", "format", "session_type", "n_authors"]
AUTHOR_COLUMNS = [f.name for f in dataclasses.fields(AuthorRecord)]
LABEL_COLUMNS = ["source_id", "label", "mode", "classifier_version", "flagged"]


@dataclass
class CuratedDataset:
    """Kept presentations, author records, identity clusters and methodology labels."""

    presentations: pd.DataFrame
    authors: pd.DataFrame
    clusters: List[IdentityCluster]
    labels: pd.DataFrame

    @classmethod
    def from_records(
        cls,
        presentations: Sequence[RawPresentation],
        authors: Sequence[AuthorRecord],
        clusters: Sequence[IdentityCluster] = (),
        labels: Sequence[Dict[str, Any]] = (),
    ) -> "CuratedDataset":
        return cls(
            presentations=_presentation_frame([to_record(p) for p in presentations]),
            authors=_author_frame([to_record(a) for a in authors]),
            clusters=list(clusters),
            labels=pd.DataFrame(list(labels), columns=LABEL_COLUMNS),
        )

    @property
    def is_empty(self) -> bool:
        return self.presentations.empty


def _presentation_frame(rows: List[Dict[str, Any]]) -> pd.DataFrame:
    frame = pd.DataFrame(rows)
    if frame.empty:
        return pd.DataFrame(columns=PRESENTATION_COLUMNS).astype({"year": "int64"})
    frame["n_authors"] = frame["raw_author_blocks"].map(len)
    return frame[PRESENTATION_COLUMNS].astype({"year": "int64", "n_authors": "int64"})


def _author_frame(rows: List[Dict[str, Any]]) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=AUTHOR_COLUMNS)
    return frame.astype({"year": "int64", "author_index": "int64"})


def load_dataset(dataset_dir: Path) -> CuratedDataset:
    """Read the curated tables of a dataset directory (missing files load as empty)."""

    dataset_dir = Path(dataset_dir)
    labels = pd.DataFrame(read_jsonl(dataset_dir / METHODOLOGY), columns=LABEL_COLUMNS)
    return CuratedDataset(
        presentations=_presentation_frame(read_jsonl(dataset_dir / RAW_PRESENTATIONS)),
        authors=_author_frame(read_jsonl(dataset_dir / AUTHOR_RECORDS)),
        clusters=[IdentityCluster.from_dict(row) for row in read_jsonl(dataset_dir / CLUSTERS)],
        labels=labels,
    )
