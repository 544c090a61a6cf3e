"""Record types shared by the pipeline stages."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import StrEnum
from typing import Any, Dict, List, Optional
from urllib.parse import urlsplit

from .errors import InvalidInputError, ParseError, UnsupportedYearError

MIN_YEAR = 2005
MAX_YEAR = 2026
MIN_ABSTRACT_CHARS = 50


class PresentationFormat(StrEnum):
    ORAL = "oral"
    POSTER = "poster"
    SYMPOSIUM_COMPONENT = "symposium_component"
    ROUNDTABLE_COMPONENT = "roundtable_component"
    UNKNOWN = "unknown"


class MethodologyLabel(StrEnum):
    QUANTITATIVE = "Quantitative"
    QUALITATIVE = "Qualitative"
    MIXED_METHODS = "MixedMethods"
    REVIEW = "Review"
    THEORETICAL_OTHER = "TheoreticalOther"


class PositionCategory(StrEnum):
    DOCTORAL_STUDENT = "DoctoralStudent"
    ASSISTANT_PROFESSOR = "AssistantProfessor"
    ASSOCIATE_PROFESSOR = "AssociateProfessor"
    FULL_PROFESSOR = "FullProfessor"
    CLINICAL_PROFESSOR = "ClinicalProfessor"
    POSTDOCTORAL = "Postdoctoral"
    SENIOR_LEADERSHIP_ACADEMIC = "SeniorLeadershipAcademic"
    SENIOR_LEADERSHIP_PRACTICE = "SeniorLeadershipPractice"
    RESEARCH_STAFF = "ResearchStaff"
    RESEARCH_FACULTY = "ResearchFaculty"
    INSTRUCTOR = "Instructor"
    ADJUNCT_FACULTY = "AdjunctFaculty"
    MASTERS_STUDENT = "MastersStudent"
    UNDERGRADUATE_STUDENT = "UndergraduateStudent"
    PRACTITIONER = "Practitioner"
    UNKNOWN = "Unknown"


def check_year(year: int) -> int:
    """Return ``year`` if it is a supported conference year."""

    if not isinstance(year, int) or not MIN_YEAR <= year <= MAX_YEAR:
        raise UnsupportedYearError(year)
    return year


def source_id_for(url: str) -> str:
    """Stable identifier for a page: hash of the normalized URL path."""

    parts = urlsplit(url.strip())
    path = parts.path or "/"
    if parts.query:
        path = f"{path}?{parts.query}"
    path = path.rstrip("/").lower() or "/"
    return hashlib.sha1(path.encode("utf-8")).hexdigest()[:16]


def to_record(obj: Any) -> Dict[str, Any]:
    """Convert a record dataclass to a JSON-ready dict, preserving field order."""

    data = dataclasses.asdict(obj)
    for key, value in data.items():
        if isinstance(value, StrEnum):
            data[key] = value.value
    return data


@dataclass(frozen=True)
class PageSnapshot:
    url: str
    year: int
    body: str
    fetched_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def __post_init__(self) -> None:
        check_year(self.year)
        if not self.body:
            raise ParseError(self.year, "body", f"empty page {self.url}")

    @property
    def source_id(self) -> str:
        return source_id_for(self.url)


@dataclass(frozen=True)
class RawPresentation:
    source_id: str
    year: int
    title: str
    abstract: str
    format: PresentationFormat
    session_title: Optional[str]
    raw_author_blocks: List[str]
    url: str = ""
    session_type: Optional[str] = None
    is_overview: bool = False
    flags: List[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RawPresentation":
        return cls(
            source_id=data["source_id"],
            year=int(data["year"]),
            title=data.get("title") or "",
            abstract=data.get("abstract") or "",
            format=PresentationFormat(data.get("format") or "unknown"),
            session_title=data.get("session_title"),
            raw_author_blocks=list(data.get("raw_author_blocks") or []),
            url=data.get("url") or "",
            session_type=data.get("session_type"),
            is_overview=bool(data.get("is_overview", False)),
            flags=list(data.get("flags") or []),
        )


AFFILIATION_FIELDS = (
    "name",
    "degrees",
    "position",
    "institution",
    "department",
    "city",
    "state",
    "country",
)


@dataclass(frozen=True)
class ParsedAffiliation:
    name: str
    degrees: List[str] = field(default_factory=list)
    position: Optional[str] = None
    institution: Optional[str] = None
    department: Optional[str] = None
    city: Optional[str] = None
    state: Optional[str] = None
    country: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.name or not self.name.strip():
            raise InvalidInputError("ParsedAffiliation.name must be non-empty")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ParsedAffiliation":
        """Build from a mapping, ignoring keys outside the schema."""

        degrees = data.get("degrees") or []
        if isinstance(degrees, str):
            degrees = [d.strip() for d in degrees.replace(";", ",").split(",")]
        values: Dict[str, Any] = {"degrees": [str(d).strip() for d in degrees if str(d).strip()]}
        for name in AFFILIATION_FIELDS:
            if name == "degrees":
                continue
            value = data.get(name)
            if value is not None and not isinstance(value, str):
                value = str(value)
            value = value.strip() if value else None
            values[name] = value or None
        return cls(name=values.pop("name") or "", **values)


@dataclass
class AuthorRecord:
    """One author-presentation association, originals beside normalized values."""

    source_id: str
    author_index: int
    year: int
    raw: str
    name: str
    normalized_name: str
    degrees: List[str]
    position: Optional[str]
    position_category: PositionCategory
    institution_raw: Optional[str]
    institution: Optional[str]
    institution_matched: bool
    department: Optional[str]
    city: Optional[str]
    state_raw: Optional[str]
    state: Optional[str]
    country_raw: Optional[str]
    country: Optional[str]
    extraction_flagged: bool = False
    cluster_id: Optional[str] = None

    @property
    def key(self) -> str:
        return f"{self.source_id}#{self.author_index}"

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AuthorRecord":
        values = {f.name: data.get(f.name) for f in dataclasses.fields(cls)}
        values["author_index"] = int(values["author_index"])
        values["year"] = int(values["year"])
        values["degrees"] = list(values["degrees"] or [])
        values["position_category"] = PositionCategory(
            values["position_category"] or PositionCategory.UNKNOWN
        )
        values["institution_matched"] = bool(values["institution_matched"])
        values["extraction_flagged"] = bool(values["extraction_flagged"])
        return cls(**values)
