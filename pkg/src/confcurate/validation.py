"""Referential-integrity and invariant checks over a dataset directory."""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Set

from .dataset import (
    AUTHOR_RECORDS,
    CLUSTERS,
    EXCLUDED_PRESENTATIONS,
    MANIFEST,
    METHODOLOGY,
    PARSED_AFFILIATIONS,
    RAW_PRESENTATIONS,
)
from .errors import InvalidInputError
from .normalization import normalize_name
from .records import MAX_YEAR, MIN_ABSTRACT_CHARS, MIN_YEAR, MethodologyLabel, PositionCategory
from .storage import read_jsonl

logger = logging.getLogger(__name__)

_POSITIONS = {category.value for category in PositionCategory}
_LABELS = {label.value for label in MethodologyLabel}


@dataclass
class Violation:
    check: str
    key: str
    detail: str = ""

    def to_dict(self) -> Dict[str, str]:
        return {"check": self.check, "key": self.key, "detail": self.detail}


@dataclass
class ValidationReport:
    dataset_dir: str
    violations: List[Violation] = field(default_factory=list)
    checked: Dict[str, int] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, check: str, key: str, detail: str = "") -> None:
        self.violations.append(Violation(check, key, detail))

    def to_dict(self) -> Dict[str, Any]:
        by_check = Counter(v.check for v in self.violations)
        return {
            "dataset_dir": self.dataset_dir,
            "ok": self.ok,
            "checked": self.checked,
            "violation_counts": dict(sorted(by_check.items())),
            "violations": [v.to_dict() for v in self.violations],
        }


def _latest_counts(manifests: List[Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
    latest: Dict[str, Dict[str, Any]] = {}
    for entry in manifests:
        latest[entry["stage"]] = entry.get("counts", {})
    return latest


def _check_presentations(rows: List[Dict[str, Any]], report: ValidationReport) -> None:
    seen: Set[str] = set()
    for row in rows:
        source_id = row.get("source_id") or ""
        if not source_id or source_id in seen:
            report.add("invalid_presentation", source_id or "<empty>", "missing or duplicate id")
            continue
        seen.add(source_id)
        year = row.get("year")
        if not isinstance(year, int) or not MIN_YEAR <= year <= MAX_YEAR:
            report.add("invalid_presentation", source_id, f"year {year!r} out of range")
        if not (row.get("title") or "").strip():
            report.add("invalid_presentation", source_id, "empty title")
        if len(" ".join((row.get("abstract") or "").split())) < MIN_ABSTRACT_CHARS:
            report.add("invalid_presentation", source_id, "abstract shorter than minimum")


def _check_authors(
    authors: List[Dict[str, Any]],
    presentations: Dict[str, Dict[str, Any]],
    report: ValidationReport,
) -> None:
    indices: Dict[str, List[int]] = defaultdict(list)
    for row in authors:
        key = f"{row['source_id']}#{row['author_index']}"
        if row["source_id"] not in presentations:
            report.add("orphan_author_record", key, "no presentation with this source_id")
            continue
        indices[row["source_id"]].append(int(row["author_index"]))
        if row.get("position_category") not in _POSITIONS:
            report.add("invalid_position", key, str(row.get("position_category")))
        name = row.get("normalized_name") or ""
        if normalize_name(name).normalized != name:
            report.add("name_not_normalized", key, name)

    for source_id, presentation in presentations.items():
        expected = list(range(len(presentation.get("raw_author_blocks") or [])))
        if sorted(indices.get(source_id, [])) != expected:
            report.add(
                "author_index_gap",
                source_id,
                f"author indices {sorted(indices.get(source_id, []))} != {expected}",
            )


def _check_clusters(
    clusters: List[Dict[str, Any]],
    authors: List[Dict[str, Any]],
    report: ValidationReport,
) -> None:
    by_key = {f"{a['source_id']}#{a['author_index']}": a for a in authors}
    cluster_ids = {c["cluster_id"] for c in clusters}
    owners: Dict[str, List[str]] = defaultdict(list)

    for cluster in clusters:
        cluster_id = cluster["cluster_id"]
        members = cluster.get("members") or []
        if not members:
            report.add("empty_cluster", cluster_id)
            continue
        names = set(cluster.get("variants") or [])
        for key in members:
            owners[key].append(cluster_id)
            if key not in by_key:
                report.add("cluster_member_missing", cluster_id, key)
            else:
                names.update({by_key[key].get("name"), by_key[key].get("normalized_name")})
        if cluster.get("canonical_name") not in names:
            report.add("canonical_not_member", cluster_id, str(cluster.get("canonical_name")))

    for key, cluster_list in sorted(owners.items()):
        if len(cluster_list) > 1:
            report.add("cluster_overlap", key, ", ".join(sorted(cluster_list)))

    for key, author in by_key.items():
        if author.get("cluster_id") not in cluster_ids:
            report.add("unknown_cluster", key, str(author.get("cluster_id")))


def _check_labels(
    labels: List[Dict[str, Any]],
    presentations: Dict[str, Dict[str, Any]],
    report: ValidationReport,
) -> None:
    labeled = Counter(row["source_id"] for row in labels)
    for row in labels:
        if row["source_id"] not in presentations:
            report.add("orphan_label", row["source_id"])
        elif row.get("label") not in _LABELS:
            report.add("invalid_label", row["source_id"], str(row.get("label")))
    for source_id, count in labeled.items():
        if count > 1:
            report.add("duplicate_label", source_id, f"{count} labels")
    for source_id in presentations:
        if source_id not in labeled:
            report.add("unlabeled_presentation", source_id)


def _reconcile_counts(
    dataset_dir: Path,
    presentations: List[Dict[str, Any]],
    counts: Dict[str, Dict[str, Any]],
    report: ValidationReport,
) -> None:
    ingest = counts.get("ingest")
    if ingest is not None:
        if ingest.get("kept") != len(presentations):
            report.add(
                "count_mismatch",
                RAW_PRESENTATIONS,
                f"ingest recorded {ingest.get('kept')}, file has {len(presentations)}",
            )
        excluded = len(read_jsonl(dataset_dir / EXCLUDED_PRESENTATIONS))
        if ingest.get("excluded") != excluded:
            report.add(
                "count_mismatch",
                EXCLUDED_PRESENTATIONS,
                f"ingest recorded {ingest.get('excluded')}, file has {excluded}",
            )
    if counts.get("extract") is not None:
        blocks = sum(len(p.get("raw_author_blocks") or []) for p in presentations)
        parsed = len(read_jsonl(dataset_dir / PARSED_AFFILIATIONS))
        if parsed != blocks:
            report.add(
                "count_mismatch",
                PARSED_AFFILIATIONS,
                f"{blocks} author blocks but {parsed} parsed affiliations",
            )


def validate_dataset(dataset_dir: Path) -> ValidationReport:
    """Check referential integrity, per-module invariants and stage count reconciliation.

    Raises:
        InvalidInputError: If the dataset directory or its presentation file is missing.
    """
    dataset_dir = Path(dataset_dir)
    if not (dataset_dir / RAW_PRESENTATIONS).exists():
        raise InvalidInputError(f"No dataset at {dataset_dir}")

    presentation_rows = read_jsonl(dataset_dir / RAW_PRESENTATIONS)
    presentations = {row["source_id"]: row for row in presentation_rows if row.get("source_id")}
    authors = read_jsonl(dataset_dir / AUTHOR_RECORDS)
    clusters = read_jsonl(dataset_dir / CLUSTERS)
    labels = read_jsonl(dataset_dir / METHODOLOGY)
    counts = _latest_counts(read_jsonl(dataset_dir / MANIFEST))

    report = ValidationReport(
        dataset_dir=str(dataset_dir),
        checked={
            "presentations": len(presentation_rows),
            "author_records": len(authors),
            "clusters": len(clusters),
            "labels": len(labels),
        },
    )
    _check_presentations(presentation_rows, report)
    if (dataset_dir / AUTHOR_RECORDS).exists():
        _check_authors(authors, presentations, report)
    if (dataset_dir / CLUSTERS).exists():
        _check_clusters(clusters, authors, report)
    if (dataset_dir / METHODOLOGY).exists():
        _check_labels(labels, presentations, report)
    _reconcile_counts(dataset_dir, presentation_rows, counts, report)

    if report.ok:
        logger.info("Dataset %s passed validation", dataset_dir)
    else:
        logger.warning("Dataset %s has %d violations", dataset_dir, len(report.violations))
    return report
