"""Stage orchestration: prerequisites, hash-chained manifests, atomic outputs, export."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import pandas as pd

from . import __version__
from .affiliation import ModelExtractor, export_review_sample, make_extractor
from .analytics import write_reports
from .config import PipelineConfig
from .dataset import (
    AUTHOR_RECORDS,
    CLUSTERS,
    EXCLUDED_PRESENTATIONS,
    FLAGGED_AFFILIATIONS,
    FLAGGED_METHODOLOGY,
    FLAGGED_PRESENTATIONS,
    MANIFEST,
    METHODOLOGY,
    PARSED_AFFILIATIONS,
    RAW_PRESENTATIONS,
    REVIEW_CLUSTERS,
    REVIEW_EXTRACTION,
    REVIEW_INGEST,
    REVIEW_METHODOLOGY,
    load_dataset,
)
from .errors import FetchError, InvalidInputError, ParseError, PrerequisiteError, StaleInputError
from .ingest import fetch_program, filter_presentations, load_corpus, parse_program_index
from .ingest import parse_snapshots
from .mappings import load_mappings
from .methodology import ModelClassifier, load_lexicon, make_classifier, rules_label
from .methodology import stratified_sample
from .normalization import InstitutionMatcher, fallback_affiliation, normalize_author_record
from .records import AFFILIATION_FIELDS, AuthorRecord, ParsedAffiliation, RawPresentation
from .records import to_record
from .resolution import assign_clusters, export_cluster_review, load_scoring_policy, resolve
from .storage import StagedOutput, append_jsonl, dataset_lock, read_jsonl, sha256_file
from .storage import write_jsonl

logger = logging.getLogger(__name__)

STAGE_ORDER: Tuple[str, ...] = ("ingest", "extract", "normalize", "resolve", "classify", "analyze")

DEPENDENCIES: Dict[str, Tuple[str, ...]] = {
    "ingest": (),
    "extract": ("ingest",),
    "normalize": ("extract",),
    "resolve": ("normalize",),
    "classify": ("ingest",),
    "analyze": ("normalize", "resolve", "classify"),
}

# Each stage input and the stage whose manifest vouches for it.
INPUTS: Dict[str, Dict[str, str]] = {
    "ingest": {},
    "extract": {RAW_PRESENTATIONS: "ingest"},
    "normalize": {PARSED_AFFILIATIONS: "extract"},
    "resolve": {AUTHOR_RECORDS: "normalize"},
    "classify": {RAW_PRESENTATIONS: "ingest"},
    "analyze": {
        RAW_PRESENTATIONS: "ingest",
        AUTHOR_RECORDS: "resolve",
        CLUSTERS: "resolve",
        METHODOLOGY: "classify",
    },
}

CORPUS_INPUT = "corpus/manifest.jsonl"
EXPORT_FORMATS = ("csv", "jsonl")


@dataclass
class StageManifest:
    stage: str
    inputs: Dict[str, str]
    outputs: Dict[str, str]
    counts: Dict[str, Any]
    config_fingerprint: str
    version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    checks: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StageManifest":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class StageResult:
    manifest: StageManifest
    noop: bool = False


def read_manifests(dataset_dir: Path) -> List[StageManifest]:
    return [StageManifest.from_dict(row) for row in read_jsonl(Path(dataset_dir) / MANIFEST)]


def latest_manifests(manifests: List[StageManifest]) -> Dict[str, StageManifest]:
    latest: Dict[str, StageManifest] = {}
    for manifest in manifests:
        latest[manifest.stage] = manifest
    return latest


def ancestors(stage: str) -> List[str]:
    found = set()
    pending = list(DEPENDENCIES[stage])
    while pending:
        current = pending.pop()
        if current not in found:
            found.add(current)
            pending.extend(DEPENDENCIES[current])
    return [s for s in STAGE_ORDER if s in found]


def _digest(data: Any) -> str:
    text = json.dumps(data, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def config_fingerprint(stage: str, config: PipelineConfig) -> str:
    """Hash of the configuration that determines ``stage``'s outputs."""

    if stage == "ingest":
        section: Any = {
            "years": config.ingest.years,
            "selectors": config.ingest.selectors,
            "seed": config.seeds.ingest_sample,
            "sample": config.review.ingest_sample_size,
        }
    elif stage == "extract":
        extractor = dataclasses.asdict(config.extractor)
        if config.extractor.mode == "model":
            extractor["prompt"] = config.extractor.prompt_template
        section = {
            "extractor": extractor,
            "seed": config.seeds.extraction_sample,
            "sample": config.review.extraction_sample_size,
        }
    elif stage == "normalize":
        tables = load_mappings(config.mappings_dir)
        section = {
            "institutions": [
                (m.canonical, sorted(m.variants), [p.pattern for p in m.patterns])
                for m in tables.institutions
            ],
            "countries": dataclasses.asdict(tables.countries),
        }
    elif stage == "resolve":
        policy = dataclasses.asdict(load_scoring_policy(config.scoring_policy_path))
        policy["restricted_surnames"] = sorted(policy["restricted_surnames"])
        section = {
            "policy": policy,
            "seed": config.seeds.cluster_sample,
            "top": config.review.cluster_top,
            "random": config.review.cluster_random,
        }
    elif stage == "classify":
        classifier = dataclasses.asdict(config.classifier)
        if config.classifier.mode == "model":
            classifier["prompt"] = config.classifier.prompt_template
        section = {
            "classifier": classifier,
            "lexicon": [
                (e.label, e.phrase, e.weight) for e in load_lexicon(config.lexicon_path).entries
            ],
            "seed": config.seeds.methodology_sample,
            "per_category": config.review.methodology_per_category,
        }
    else:
        section = dataclasses.asdict(config.analytics)
    return _digest({"stage": stage, "version": __version__, "config": section})


# --- stages -----------------------------------------------------------------------------


def _ingest(config: PipelineConfig, out: StagedOutput) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    indexes, pages = load_corpus(config.corpus_dir, config.years)
    if not pages:
        logger.warning("No presentation pages in %s for the requested years", config.corpus_dir)
    records = parse_snapshots(pages, config.ingest.parse_workers, config.ingest.selectors)

    parsed_per_year = Counter(record.year for record in records)
    index_counts: Dict[str, Dict[str, int]] = {}
    for index in indexes:
        try:
            referenced = len(parse_program_index(index))
        except ParseError as exc:
            logger.warning("Index page for %d unreadable: %s", index.year, exc)
            referenced = 0
        entry = index_counts.setdefault(str(index.year), {"referenced": 0, "parsed": 0})
        entry["referenced"] += referenced
        entry["parsed"] = parsed_per_year.get(index.year, 0)
        if entry["referenced"] != entry["parsed"]:
            logger.warning(
                "Year %d: index lists %d presentations, %d parsed",
                index.year,
                entry["referenced"],
                entry["parsed"],
            )

    kept, excluded = filter_presentations(records)
    write_jsonl(out.path(RAW_PRESENTATIONS), (to_record(r) for r in kept))
    write_jsonl(
        out.path(EXCLUDED_PRESENTATIONS),
        ({**to_record(e["record"]), "reason": e["reason"]} for e in excluded),
    )
    flagged = [record for record in records if record.flags]
    for record in flagged:
        logger.warning("Presentation %s flagged for review: %s", record.url, record.flags)
    write_jsonl(out.path(FLAGGED_PRESENTATIONS), (to_record(r) for r in flagged))

    frame = pd.DataFrame(
        [
            {
                "source_id": r.source_id,
                "year": r.year,
                "title": r.title,
                "abstract_head": r.abstract[:200],
                "author_blocks": " | ".join(r.raw_author_blocks),
                "url": r.url,
            }
            for r in kept
        ],
        columns=["source_id", "year", "title", "abstract_head", "author_blocks", "url"],
    )
    sample = frame.sample(
        n=min(config.review.ingest_sample_size, len(frame)), random_state=config.seeds.ingest_sample
    )
    sample.to_csv(out.path(REVIEW_INGEST), index=False, lineterminator="\n")

    reasons = Counter(e["reason"] for e in excluded)
    counts = {
        "pages": len(records),
        "kept": len(kept),
        "excluded": len(excluded),
        "flagged": len(flagged),
        "excluded_by_reason": dict(sorted(reasons.items())),
    }
    return counts, {"index_counts": index_counts}


def _read_presentations(dataset_dir: Path) -> List[RawPresentation]:
    return [RawPresentation.from_dict(row) for row in read_jsonl(dataset_dir / RAW_PRESENTATIONS)]


def _extract(config: PipelineConfig, out: StagedOutput) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    presentations = _read_presentations(out.dataset_dir)
    extractor = make_extractor(config.extractor)
    if isinstance(extractor, ModelExtractor):
        extractor.client.health_check()

    blocks = [
        (p.source_id, index, p.year, raw)
        for p in presentations
        for index, raw in enumerate(p.raw_author_blocks)
    ]
    results = extractor.extract_many([raw for *_, raw in blocks])

    rows, flagged = [], []
    for (source_id, index, year, raw), result in zip(blocks, results, strict=True):
        row: Dict[str, Any] = {"source_id": source_id, "author_index": index, "year": year}
        row["raw"] = raw
        if result["success"]:
            row.update(to_record(result["affiliation"]))
            row["flagged"] = False
        else:
            logger.warning("Affiliation %s#%d routed to review: %s", source_id, index, raw)
            row.update({name: None for name in AFFILIATION_FIELDS})
            row["degrees"] = []
            row["flagged"] = True
            flagged.append(
                {
                    "source_id": source_id,
                    "author_index": index,
                    "raw": raw,
                    "error": result.get("error"),
                    "raw_output": result.get("raw_output"),
                }
            )
        rows.append(row)

    write_jsonl(out.path(PARSED_AFFILIATIONS), rows)
    write_jsonl(out.path(FLAGGED_AFFILIATIONS), flagged)
    extracted = [row for row in rows if not row["flagged"]]
    export_review_sample(
        extracted,
        min(config.review.extraction_sample_size, len(extracted)),
        config.seeds.extraction_sample,
        out.path(REVIEW_EXTRACTION),
    )
    counts = {
        "presentations": len(presentations),
        "author_blocks": len(blocks),
        "parsed": len(extracted),
        "flagged": len(flagged),
    }
    return counts, {"mode": extractor.mode}


def _normalize(config: PipelineConfig, out: StagedOutput) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    tables = load_mappings(config.mappings_dir)
    matcher = InstitutionMatcher(tables.institutions)
    records: List[AuthorRecord] = []
    for row in read_jsonl(out.dataset_dir / PARSED_AFFILIATIONS):
        flagged = bool(row.get("flagged")) or not row.get("name")
        if flagged:
            affiliation = fallback_affiliation(row["raw"])
        else:
            affiliation = ParsedAffiliation.from_dict(row)
        records.append(
            normalize_author_record(
                source_id=row["source_id"],
                author_index=int(row["author_index"]),
                year=int(row["year"]),
                raw=row["raw"],
                affiliation=affiliation,
                tables=tables,
                matcher=matcher,
                flagged=flagged,
            )
        )
    write_jsonl(out.path(AUTHOR_RECORDS), (to_record(r) for r in records))
    counts = {
        "records": len(records),
        "institutions_matched": sum(r.institution_matched for r in records),
        "countries_known": sum(r.country is not None for r in records),
        "flagged": sum(r.extraction_flagged for r in records),
    }
    return counts, {}


def _resolve(config: PipelineConfig, out: StagedOutput) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    records = [AuthorRecord.from_dict(r) for r in read_jsonl(out.dataset_dir / AUTHOR_RECORDS)]
    policy = load_scoring_policy(config.scoring_policy_path)
    clusters = resolve(records, policy=policy)
    assign_clusters(records, clusters)
    write_jsonl(out.path(CLUSTERS), (c.to_dict() for c in clusters))
    write_jsonl(out.path(AUTHOR_RECORDS), (to_record(r) for r in records))
    export_cluster_review(
        clusters,
        config.review.cluster_top,
        config.review.cluster_random,
        config.seeds.cluster_sample,
        out.path(REVIEW_CLUSTERS),
    )
    counts = {
        "records": len(records),
        "variants": len({r.normalized_name for r in records}),
        "clusters": len(clusters),
    }
    return counts, {"threshold": policy.threshold}


def _classify(config: PipelineConfig, out: StagedOutput) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    presentations = _read_presentations(out.dataset_dir)
    classifier = make_classifier(config.classifier, config.lexicon_path)
    if isinstance(classifier, ModelClassifier):
        classifier.client.health_check()
    results = classifier.classify_many([p.abstract for p in presentations])

    rows, flagged = [], []
    for presentation, result in zip(presentations, results, strict=True):
        row = {
            "source_id": presentation.source_id,
            "label": None,
            "mode": classifier.mode,
            "classifier_version": classifier.version,
            "flagged": False,
        }
        if result["success"]:
            row["label"] = result["label"].value
        else:
            # Keeps labeling total; the review queue holds the failed model output.
            lexicon = load_lexicon(config.lexicon_path)
            row.update(
                label=rules_label(presentation.abstract, lexicon).value,
                mode="rules-fallback",
                flagged=True,
            )
            flagged.append(
                {
                    "source_id": presentation.source_id,
                    "error": result.get("error"),
                    "raw_output": result.get("raw_output"),
                }
            )
            logger.warning("Methodology for %s routed to review", presentation.source_id)
        rows.append(row)

    write_jsonl(out.path(METHODOLOGY), rows)
    write_jsonl(out.path(FLAGGED_METHODOLOGY), flagged)

    frame = pd.DataFrame(
        [
            {
                "source_id": p.source_id,
                "year": p.year,
                "title": p.title,
                "abstract": p.abstract,
                "label": row["label"],
            }
            for p, row in zip(presentations, rows, strict=True)
        ],
        columns=["source_id", "year", "title", "abstract", "label"],
    )
    available = frame["label"].value_counts()
    per_category = {
        label: min(config.review.methodology_per_category, int(available.get(label, 0)))
        for label in sorted(available.index)
    }
    short = [k for k, v in per_category.items() if v < config.review.methodology_per_category]
    if short:
        logger.warning("Methodology sample short for: %s", ", ".join(short))
    sample = stratified_sample(frame, per_category, config.seeds.methodology_sample)
    sample = sample.assign(human_label="")
    sample.to_csv(out.path(REVIEW_METHODOLOGY), index=False, lineterminator="\n")

    counts = {
        "presentations": len(presentations),
        "labeled": len(rows),
        "flagged": len(flagged),
        "by_label": {k: int(v) for k, v in sorted(available.items())},
    }
    return counts, {"mode": classifier.mode}


def _analyze(config: PipelineConfig, out: StagedOutput) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    dataset = load_dataset(out.dataset_dir)
    written = write_reports(
        dataset, out.temp_dir / "reports", out.temp_dir / "figures", config.analytics
    )
    for path in written:
        out.path(path.relative_to(out.temp_dir).as_posix())
    return {"presentations": len(dataset.presentations), "files": len(written)}, {}


StageFn = Callable[[PipelineConfig, StagedOutput], Tuple[Dict[str, Any], Dict[str, Any]]]

STAGES: Dict[str, StageFn] = {
    "ingest": _ingest,
    "extract": _extract,
    "normalize": _normalize,
    "resolve": _resolve,
    "classify": _classify,
    "analyze": _analyze,
}


# --- orchestration ----------------------------------------------------------------------


def check_prerequisites(stage: str, dataset_dir: Path) -> Dict[str, StageManifest]:
    """Raise :class:`PrerequisiteError` naming the first upstream stage never completed."""

    latest = latest_manifests(read_manifests(dataset_dir))
    for ancestor in ancestors(stage):
        if ancestor not in latest:
            raise PrerequisiteError(stage, ancestor)
    return latest


def _stage_inputs(stage: str, config: PipelineConfig, force: bool) -> Dict[str, str]:
    dataset_dir = config.dataset_dir
    latest = check_prerequisites(stage, dataset_dir)

    if stage == "ingest":
        if config.ingest.fetch:
            _fetch_years(config)
        corpus_manifest = config.corpus_dir / "manifest.jsonl"
        if not corpus_manifest.exists():
            raise InvalidInputError(f"Corpus manifest not found: {corpus_manifest}")
        return {CORPUS_INPUT: sha256_file(corpus_manifest)}

    inputs = {}
    for name, producer in INPUTS[stage].items():
        path = dataset_dir / name
        if not path.exists():
            raise PrerequisiteError(stage, producer)
        actual = sha256_file(path)
        vouched = latest[producer].outputs.get(name)
        if _accounted_for(name, actual, vouched, latest):
            inputs[name] = vouched or actual
            continue
        if not force:
            raise StaleInputError(stage, str(path))
        logger.warning("Input %s does not match %s's output; continuing (--force)", path, producer)
        inputs[name] = actual
    return inputs


def _fetch_years(config: PipelineConfig) -> List[int]:
    """Fetch every configured year, skipping years whose index page is unavailable.

    Raises:
        FetchError: If no year's index page could be retrieved.
    """
    failed = []
    for year in config.years:
        try:
            fetch_program(
                config.ingest.base_url or "",
                year,
                config.ingest.delay_ms / 1000.0,
                config.corpus_dir,
                index_path_template=config.ingest.index_path_template,
            )
        except FetchError as exc:
            logger.error("Skipping %d: %s", year, exc)
            failed.append(year)
    if failed and len(failed) == len(config.years):
        raise FetchError(f"No index page could be fetched for {', '.join(map(str, failed))}")
    return failed


def _accounted_for(
    name: str,
    actual: str,
    vouched: Optional[str],
    latest: Dict[str, StageManifest],
) -> bool:
    """True when ``name`` holds ``vouched``, or a stage rewrote it in place from ``vouched``.

    resolve rewrites ``author_records.jsonl`` with cluster ids; any other content means
    the file changed outside the pipeline or an upstream rerun has not been propagated.
    """
    if vouched is None:
        return False
    if actual == vouched:
        return True
    return any(
        m.outputs.get(name) == actual and m.inputs.get(name) == vouched for m in latest.values()
    )


def _is_noop(
    stage: str,
    inputs: Dict[str, str],
    fingerprint: str,
    config: PipelineConfig,
) -> Optional[StageManifest]:
    latest = latest_manifests(read_manifests(config.dataset_dir))
    previous = latest.get(stage)
    if previous is None or previous.inputs != inputs:
        return None
    if previous.config_fingerprint != fingerprint:
        return None
    for name, digest in previous.outputs.items():
        path = config.dataset_dir / name
        if not path.exists() or not _accounted_for(name, sha256_file(path), digest, latest):
            return None
    return previous


def run_stage(stage: str, config: PipelineConfig, force: bool = False) -> StageResult:
    """Run one stage, or return its previous manifest when nothing it depends on changed.

    Raises:
        PrerequisiteError: If an upstream stage has not completed.
        StaleInputError: If an input no longer matches its recorded hash (unless ``force``).
    """
    if stage not in STAGES:
        raise InvalidInputError(f"Unknown stage {stage!r}")
    dataset_dir = config.dataset_dir
    inputs = _stage_inputs(stage, config, force)
    fingerprint = config_fingerprint(stage, config)
    if not force:
        previous = _is_noop(stage, inputs, fingerprint, config)
        if previous is not None:
            logger.info("Stage %s is up to date; nothing to do", stage)
            return StageResult(manifest=previous, noop=True)

    logger.info("Running stage %s", stage)
    with StagedOutput(dataset_dir, stage) as out:
        counts, checks = STAGES[stage](config, out)
    outputs = {name: sha256_file(dataset_dir / name) for name in sorted(out.written)}
    manifest = StageManifest(
        stage=stage,
        inputs=inputs,
        outputs=outputs,
        counts=counts,
        config_fingerprint=fingerprint,
        checks=checks,
    )
    append_jsonl(dataset_dir / MANIFEST, manifest.to_dict())
    logger.info("Stage %s done: %s", stage, counts)
    return StageResult(manifest=manifest)


def run(stage: str, config: PipelineConfig, force: bool = False) -> List[StageResult]:
    """Run ``stage`` (or every stage in order for ``"all"``) under the dataset lock."""

    stages = STAGE_ORDER if stage == "all" else (stage,)
    with dataset_lock(config.dataset_dir):
        return [run_stage(name, config, force) for name in stages]


def export_dataset(dataset_dir: Path, fmt: str = "csv", out_path: Optional[Path] = None) -> Path:
    """Write one denormalized author-presentation table for downstream tools."""

    if fmt not in EXPORT_FORMATS:
        raise InvalidInputError(f"Unknown export format {fmt!r}; expected one of {EXPORT_FORMATS}")
    dataset_dir = Path(dataset_dir)
    if not (dataset_dir / AUTHOR_RECORDS).exists():
        raise PrerequisiteError("export", "normalize")
    dataset = load_dataset(dataset_dir)
    canonical = pd.DataFrame(
        [(c.cluster_id, c.canonical_name) for c in dataset.clusters],
        columns=["cluster_id", "canonical_name"],
    )
    table = (
        dataset.authors.merge(
            dataset.presentations[["source_id", "title", "format", "session_type"]],
            on="source_id",
            how="left",
        )
        .merge(dataset.labels[["source_id", "label"]], on="source_id", how="left")
        .merge(canonical, on="cluster_id", how="left")
        .rename(columns={"label": "methodology"})
        .sort_values(["year", "source_id", "author_index"])
    )
    out_path = Path(out_path or dataset_dir.parent / "export" / f"confcurate_export.{fmt}")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        table = table.assign(degrees=table["degrees"].map(lambda d: "; ".join(d or [])))
        table.to_csv(out_path, index=False, lineterminator="\n")
    else:
        table.to_json(out_path, orient="records", lines=True, force_ascii=False)
    logger.info("Exported %d author records to %s", len(table), out_path)
    return out_path
