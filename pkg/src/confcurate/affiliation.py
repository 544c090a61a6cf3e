"""Author-block extraction into structured affiliations, plus its review tooling."""

from __future__ import annotations

import logging
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from string import Template
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from .config import ExtractorConfig
from .errors import InsufficientPopulationError, InvalidInputError, MalformedOutputError
from .inference import CompletionClient, complete_json, map_bounded
from .mappings import CountryMapping, load_mappings
from .normalization import POSITION_RULES
from .records import AFFILIATION_FIELDS, ParsedAffiliation
from .token_counting import check_prompt_budget

logger = logging.getLogger(__name__)

DEGREES = {
    "ACSW", "BA", "BS", "BSC", "BSW", "DRPH", "DSW", "EDD", "EDM", "JD", "LCSW", "LCSW-C",
    "LICSW", "LISW", "LMFT", "LMSW", "LPC", "MA", "MBA", "MD", "MED", "MPA", "MPH", "MPP",
    "MS", "MSC", "MSSW", "MSW", "PHD", "PSYD", "RN",
}  # fmt: skip

_POSITION_WORDS = re.compile(
    r"\b(student|candidate|fellow|manager|coordinator|specialist|therapist|social worker"
    r"|clinician|consultant|supervisor|analyst|scientist|officer|counselor|case worker"
    r"|advocate|trainee|intern)\b",
    re.IGNORECASE,
)
_INSTITUTION_MARKERS = re.compile(
    r"\b(universit\w*|college|school|institute|center|centre|hospital|foundation|agency"
    r"|association|services|council|department|ministry|u\.|univ\.?)(?!\w)",
    re.IGNORECASE,
)
_UNIVERSITY = re.compile(r"\b(universit\w*|college|institute|u\.|univ\.?)(?!\w)", re.IGNORECASE)
_DEPARTMENT = re.compile(
    r"^(the\s+)?(\w+\s+)?(school|department|dept\.?|faculty|division|graduate school|college)"
    r"\s+(of|for)\b",
    re.IGNORECASE,
)
_STATE_SUFFIX = re.compile(r"^(?P<city>.*\S)\s+(?P<state>[A-Z]{2})$")


def _is_degree_segment(segment: str) -> bool:
    tokens = segment.replace(".", "").split()
    return bool(tokens) and all(token.upper() in DEGREES for token in tokens)


def _is_position(segment: str) -> bool:
    if _UNIVERSITY.search(segment) or _DEPARTMENT.search(segment):
        return False
    return bool(
        any(pattern.search(segment) for _, pattern in POSITION_RULES)
        or _POSITION_WORDS.search(segment)
    )


def _first_affiliation(text: str) -> str:
    parts = [part.strip() for part in text.split(";") if part.strip()]
    if len(parts) > 1 and "," not in parts[0]:
        # "Name; Institution; Other" keeps the name with its first affiliation.
        return f"{parts[0]}, {parts[1]}"
    return parts[0] if parts else ""


class Extractor(ABC):
    """Turns one raw author block into a :class:`ParsedAffiliation`."""

    mode = ""

    @abstractmethod
    def extract(self, raw: str) -> Dict[str, Any]:
        """Return ``{"success": True, "affiliation": ...}`` or an error dict.

        Error dicts carry ``error`` and, in model mode, ``raw_output``.
        """

    def extract_many(self, blocks: Sequence[str]) -> List[Dict[str, Any]]:
        return [self.extract(raw) for raw in blocks]


class RulesExtractor(Extractor):
    """Deterministic comma segmentation with degree, position and place dictionaries.

    Every value it emits is a substring of the whitespace-normalized input.
    """

    mode = "rules"

    def __init__(self, geography: Optional[CountryMapping] = None):
        self.geography = geography or load_mappings().countries

    def _is_place(self, segment: str) -> bool:
        geo = self.geography
        return bool(
            geo.country(segment)
            or geo.city_country(segment)
            or geo.us_state(segment)
            or geo.ca_province(segment)
        )

    def parse(self, raw: str) -> ParsedAffiliation:
        text = " ".join((raw or "").split())
        if not text:
            raise InvalidInputError("Author block is empty")
        segments = [s.strip() for s in _first_affiliation(text).split(",") if s.strip()]
        name = segments[0].strip(" *") if segments else ""
        if not name:
            raise InvalidInputError(f"No author name in block {raw!r}")

        values: Dict[str, Any] = {"name": name, "degrees": []}
        rest = segments[1:]
        in_degrees = True
        for index, segment in enumerate(rest):
            following = rest[index + 1 :]
            if in_degrees and _is_degree_segment(segment):
                values["degrees"].extend(segment.split())
                continue
            in_degrees = False

            if values.get("institution") and _UNIVERSITY.search(segment):
                break  # a second affiliation starts here

            if self._assign_place(segment, following, values):
                continue
            if "position" not in values and _is_position(segment):
                values["position"] = segment
                continue
            if _DEPARTMENT.search(segment) and not _UNIVERSITY.search(segment.split(" of ")[0]):
                later_institution = any(_UNIVERSITY.search(s) for s in following)
                if "department" not in values and later_institution:
                    values["department"] = segment
                    continue
            if "institution" not in values:
                values["institution"] = segment
                continue
            if "department" not in values and _INSTITUTION_MARKERS.search(segment):
                values["department"] = segment
                continue
            if "city" not in values and "state" not in values and "country" not in values:
                values["city"] = segment
        return ParsedAffiliation.from_dict(values)

    def _assign_place(self, segment: str, following: List[str], values: Dict[str, Any]) -> bool:
        geo = self.geography
        if geo.country(segment) and "country" not in values and "institution" in values:
            values["country"] = segment
            return True
        if segment.isupper() and len(segment) == 2:
            if "state" not in values and (geo.us_state(segment) or geo.ca_province(segment)):
                values["state"] = segment
                return True
        match = _STATE_SUFFIX.match(segment)
        if match and "institution" in values and "city" not in values:
            state = match["state"]
            if geo.us_state(state) or geo.ca_province(state):
                values["city"], values["state"] = match["city"], state
                return True
        if "institution" not in values or _INSTITUTION_MARKERS.search(segment):
            return False
        if "state" not in values and not segment.isupper():
            if geo.us_state(segment) or geo.ca_province(segment):
                values["state"] = segment
                return True
        if "city" not in values and (
            geo.city_country(segment) or (following and self._is_place(following[0]))
        ):
            values["city"] = segment
            return True
        return False

    def extract(self, raw: str) -> Dict[str, Any]:
        try:
            return {"success": True, "affiliation": self.parse(raw)}
        except InvalidInputError as exc:
            return {"success": False, "error": str(exc), "raw_output": None}


class ModelExtractor(Extractor):
    """Prompts a local completion server and parses its single JSON object."""

    mode = "model"

    def __init__(self, config: ExtractorConfig, client: Optional[CompletionClient] = None):
        self.config = config
        self.client = client or CompletionClient.from_config(config)
        self._template = Template(config.prompt_template)

    def build_prompt(self, raw: str) -> str:
        prompt = self._template.safe_substitute(author_block=" ".join(raw.split()))
        check_prompt_budget(prompt, self.config)
        return prompt

    def extract(self, raw: str) -> Dict[str, Any]:
        if not raw or not raw.strip():
            raise InvalidInputError("Author block is empty")
        result = complete_json(self.client, self.build_prompt(raw), ParsedAffiliation.from_dict)
        if result["success"]:
            return {"success": True, "affiliation": result["value"]}
        logger.warning("Extraction failed after %d attempts: %s", result["attempts"], raw)
        return {"success": False, "error": result["error"], "raw_output": result["raw_output"]}

    def extract_many(self, blocks: Sequence[str]) -> List[Dict[str, Any]]:
        return map_bounded(self.extract, blocks, self.config.max_in_flight)


def make_extractor(config: ExtractorConfig) -> Extractor:
    if config.mode == "model":
        return ModelExtractor(config)
    return RulesExtractor()


def extract_affiliation(
    raw: str, config: ExtractorConfig, extractor: Optional[Extractor] = None
) -> ParsedAffiliation:
    """Extract one author block.

    Raises:
        InvalidInputError: If ``raw`` is empty.
        MalformedOutputError: If model output stays malformed after the retry.
        EndpointUnreachableError: If the inference server cannot be contacted.
    """
    if not raw or not raw.strip():
        raise InvalidInputError("Author block is empty")
    extractor = extractor or make_extractor(config)
    result = extractor.extract(raw)
    if result["success"]:
        return result["affiliation"]
    if extractor.mode == "rules":
        raise InvalidInputError(result["error"])
    raise MalformedOutputError(result["error"], raw_output=result.get("raw_output"))


@dataclass
class ExtractionValidationReport:
    sample_size: int
    per_field_accuracy: Dict[str, float]
    per_field_counts: Dict[str, Tuple[int, int]] = field(default_factory=dict)
    failed_extractions: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sample_size": self.sample_size,
            "per_field_accuracy": self.per_field_accuracy,
            "per_field_counts": {k: list(v) for k, v in self.per_field_counts.items()},
            "failed_extractions": self.failed_extractions,
        }


def _field_value(affiliation: Optional[ParsedAffiliation], name: str) -> Any:
    if affiliation is None:
        return None
    value = getattr(affiliation, name)
    if isinstance(value, list):
        return [v.strip() for v in value if v and v.strip()] or None
    return value.strip() if value and value.strip() else None


def validate_extraction(
    sample: Sequence[Tuple[str, ParsedAffiliation]],
    config: ExtractorConfig,
    extractor: Optional[Extractor] = None,
) -> ExtractionValidationReport:
    """Per-field exact-match accuracy of the extractor against gold affiliations.

    Fields empty in a gold record do not count toward that field's denominator.
    """
    if not sample:
        raise InvalidInputError("Validation sample is empty")
    extractor = extractor or make_extractor(config)
    results = extractor.extract_many([raw for raw, _ in sample])

    correct = {name: 0 for name in AFFILIATION_FIELDS}
    total = {name: 0 for name in AFFILIATION_FIELDS}
    failed = 0
    for (raw, gold), result in zip(sample, results, strict=True):
        predicted = result["affiliation"] if result["success"] else None
        if predicted is None:
            failed += 1
        for name in AFFILIATION_FIELDS:
            expected = _field_value(gold, name)
            if expected is None:
                continue
            total[name] += 1
            if _field_value(predicted, name) == expected:
                correct[name] += 1

    accuracy = {name: correct[name] / total[name] for name in AFFILIATION_FIELDS if total[name]}
    logger.info("Extraction validation over %d records: %s", len(sample), accuracy)
    return ExtractionValidationReport(
        sample_size=len(sample),
        per_field_accuracy=accuracy,
        per_field_counts={n: (correct[n], total[n]) for n in AFFILIATION_FIELDS if total[n]},
        failed_extractions=failed,
    )


REVIEW_COLUMNS = ["source_id", "author_index", "raw", *AFFILIATION_FIELDS]


def export_review_sample(
    records: Sequence[Dict[str, Any]] | pd.DataFrame,
    n: int,
    seed: int,
    path: Optional[Path] = None,
) -> pd.DataFrame:
    """Draw ``n`` extracted records uniformly without replacement for manual review.

    The CSV puts the raw author block beside every extracted field.

    Raises:
        InsufficientPopulationError: If fewer than ``n`` records are available.
    """
    frame = records.copy() if isinstance(records, pd.DataFrame) else pd.DataFrame(list(records))
    if n > len(frame):
        raise InsufficientPopulationError("extraction", len(frame), n)
    for column in REVIEW_COLUMNS:
        if column not in frame.columns:
            frame[column] = None
    sample = frame.sample(n=n, random_state=seed)[REVIEW_COLUMNS].copy()
    sample["degrees"] = sample["degrees"].map(
        lambda value: "; ".join(value) if isinstance(value, list) else value
    )
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        sample.to_csv(path, index=False, lineterminator="\n")
        logger.info("Wrote %d extraction review rows to %s", len(sample), path)
    return sample.reset_index(drop=True)
