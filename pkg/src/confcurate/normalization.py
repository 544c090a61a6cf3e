"""Name, institution, country and position normalization."""

from __future__ import annotations

import logging
import re
import unicodedata
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Pattern, Sequence, Tuple

from unidecode import unidecode

from .mappings import CountryMapping, InstitutionMapping, MappingTables, load_mappings, lookup_key
from .records import AuthorRecord, ParsedAffiliation, PositionCategory

logger = logging.getLogger(__name__)

MIN_SUBSTRING_VARIANT = 5

# Words that never identify an institution on their own.
GENERIC_INSTITUTION_WORDS = frozenset(
    {
        "and", "at", "center", "centre", "college", "department", "dept", "faculty", "for",
        "graduate", "in", "institute", "of", "program", "school", "social", "studies",
        "the", "universities", "university", "welfare", "work",
    }
)  # fmt: skip


@dataclass(frozen=True)
class NormalizedName:
    original: str
    normalized: str


def _fold_char(ch: str) -> str:
    if ord(ch) < 128:
        return ch
    if unicodedata.combining(ch):
        return ""
    category = unicodedata.category(ch)
    if category.startswith("Z"):
        return " "
    if category.startswith("L") and not unicodedata.name(ch, "").startswith("LATIN"):
        # Non-Latin scripts (CJK, Hangul, Cyrillic, ...) stay as written.
        return ch
    return unidecode(ch)


def normalize_name(raw: Optional[str]) -> NormalizedName:
    """NFKD-fold a name to ASCII, drop presenting-author asterisks, collapse whitespace.

    Latin letters without a compatibility decomposition (``ø``, ``ß``, ``ł``) are
    transliterated; letters of non-Latin scripts are kept unchanged.
    """
    original = raw or ""
    decomposed = unicodedata.normalize("NFKD", original)
    folded = "".join(_fold_char(ch) for ch in decomposed)
    folded = folded.replace("*", "")
    return NormalizedName(original=original, normalized=" ".join(folded.split()))


# Ordered: the first matching rule wins. Specific titles come before the bare words
# they contain ("research associate professor" before "associate professor",
# "clinical professor" before "professor", "research professor" before "research associate").
POSITION_RULES: Tuple[Tuple[PositionCategory, Pattern[str]], ...] = tuple(
    (category, re.compile(pattern, re.IGNORECASE))
    for category, pattern in (
        (
            PositionCategory.DOCTORAL_STUDENT,
            r"\bdoctoral (student|candidate)\b|\bph\.?\s?d\.? (student|candidate)\b|\babd\b"
            r"|\bdsw (student|candidate)\b"
            r"|\b(ph\.?\s?d\.?|doctoral)\b.*\bstudent\b|\bstudent\b.*\b(ph\.?\s?d\.?|doctoral)\b",
        ),
        (
            PositionCategory.RESEARCH_FACULTY,
            r"\bresearch (assistant |associate )?professor\b",
        ),
        (
            PositionCategory.CLINICAL_PROFESSOR,
            r"\bclinical (assistant |associate )?professor\b|\bprofessor of (the )?practice\b"
            r"|\bteaching (assistant |associate )?professor\b",
        ),
        (PositionCategory.ADJUNCT_FACULTY, r"\badjunct\b"),
        (PositionCategory.ASSISTANT_PROFESSOR, r"\bassistant professor\b"),
        (PositionCategory.ASSOCIATE_PROFESSOR, r"\bassociate professor\b"),
        (PositionCategory.FULL_PROFESSOR, r"\bprofessor\b"),
        (PositionCategory.POSTDOCTORAL, r"\bpost-?doc|\bpost-doctoral\b|\bpostdoctoral\b"),
        (
            PositionCategory.SENIOR_LEADERSHIP_ACADEMIC,
            r"\b(associate |assistant |vice )?dean\b|\bdepartment (chair|head)\b|\bchair\b"
            r"|\bprovost\b",
        ),
        (
            PositionCategory.SENIOR_LEADERSHIP_PRACTICE,
            r"\bexecutive director\b|\bprogram director\b|\bdirector\b|\badministrator\b"
            r"|\bceo\b|\bchief\b|\bpresident\b|\bcommissioner\b",
        ),
        (
            PositionCategory.RESEARCH_STAFF,
            r"\bresearch (associate|scientist|assistant|coordinator|analyst|fellow|specialist)\b"
            r"|\bproject coordinator\b|\bresearcher\b",
        ),
        (PositionCategory.INSTRUCTOR, r"\blecturer\b|\binstructor\b"),
        (
            PositionCategory.MASTERS_STUDENT,
            r"\bmsw (student|candidate)\b|\bmaster'?s (student|candidate)\b|\bgraduate student\b",
        ),
        (
            PositionCategory.UNDERGRADUATE_STUDENT,
            r"\bbsw (student|candidate)\b|\bundergraduate\b|\bbachelor'?s\b",
        ),
    )
)

_UNPARSEABLE = {"", "n/a", "na", "none", "unknown", "-", "--", "null", "not applicable"}


def classify_position(position_raw: Optional[str]) -> PositionCategory:
    """Map an extracted position string to the position taxonomy (total)."""

    if position_raw is None:
        return PositionCategory.UNKNOWN
    text = " ".join(position_raw.replace("’", "'").split())
    if text.casefold().strip(" .") in _UNPARSEABLE:
        return PositionCategory.UNKNOWN
    for category, pattern in POSITION_RULES:
        if pattern.search(text):
            return category
    return PositionCategory.PRACTITIONER


def _segment_is_geography(segment: str, geography: CountryMapping) -> bool:
    return bool(
        geography.country(segment)
        or geography.us_state(segment)
        or geography.ca_province(segment)
        or geography.city_country(segment)
    )


def _segment_is_position(segment: str) -> bool:
    return any(pattern.search(segment) for _, pattern in POSITION_RULES)


_STATE_TAIL_RE = re.compile(r"^(?P<head>.+?)[\s,]+(?P<state>[A-Z]{2})$")


def clean_institution(raw: Optional[str], geography: CountryMapping) -> str:
    """Strip embedded position titles and geographic tails from an institution string."""

    text = " ".join((raw or "").split()).strip(" ,;")
    if not text:
        return ""
    segments = [s.strip() for s in re.split(r"[,;]", text) if s.strip()]
    kept: List[str] = []
    for index, segment in enumerate(segments):
        if " at " in segment:
            head, tail = segment.split(" at ", 1)
            if _segment_is_position(head):
                segment = tail.strip()
        if index > 0 and _segment_is_geography(segment, geography):
            continue
        if _segment_is_position(segment) and index < len(segments) - 1:
            continue
        match = _STATE_TAIL_RE.match(segment)
        if match and (geography.us_state(match["state"]) or geography.ca_province(match["state"])):
            segment = match["head"].strip()
        kept.append(segment)
    # A city left in front of a removed state ("..., Ann Arbor, MI") is a tail too.
    if len(kept) > 1 and len(segments) > len(kept):
        last = kept[-1]
        tail_start = segments.index(last) + 1 if last in segments else len(segments)
        dropped_after = segments[tail_start:]
        if dropped_after and all(_segment_is_geography(s, geography) for s in dropped_after):
            if not _has_institution_marker(last):
                kept.pop()
    cleaned = ", ".join(kept)
    return cleaned or text


_INSTITUTION_MARKERS = re.compile(
    r"\b(universit\w*|college|institute|school|center|centre|hospital|department|u\.)",
    re.IGNORECASE,
)


def _has_institution_marker(text: str) -> bool:
    return bool(_INSTITUTION_MARKERS.search(text))


def _contains(haystack: str, needle: str) -> bool:
    return re.search(rf"(?<!\w){re.escape(needle)}(?!\w)", haystack) is not None


def _is_distinctive(key: str) -> bool:
    return any(word not in GENERIC_INSTITUTION_WORDS for word in re.findall(r"\w+", key))


_GENERIC_REWRITES: Tuple[Tuple[Pattern[str], str], ...] = (
    (re.compile(r"\s*[-–]\s*[^-–]+$"), ""),
    (re.compile(r"\s+at\s+[^,]+$"), ""),
    (re.compile(r",\s*[^,]+$"), ""),
    (re.compile(r"^(u|univ)\s+(of\s+)?"), "university of "),
    (re.compile(r"\s*&\s*"), " and "),
)


class InstitutionMatcher:
    """Three-stage matcher over a fixed set of canonical institutions."""

    def __init__(self, mappings: Iterable[InstitutionMapping]):
        self.mappings = tuple(sorted(mappings, key=lambda m: m.canonical))
        self._exact: Dict[str, str] = {}
        self._variants: List[Tuple[str, str]] = []
        for mapping in self.mappings:
            for variant in sorted(mapping.variants):
                key = lookup_key(variant)
                self._exact.setdefault(key, mapping.canonical)
                self._variants.append((key, mapping.canonical))

    def exact(self, key: str) -> Optional[str]:
        return self._exact.get(key)

    def substring(self, key: str) -> Optional[str]:
        # A cleaned string inside a longer variant must carry a non-generic word.
        reverse_ok = len(key) >= MIN_SUBSTRING_VARIANT and _is_distinctive(key)
        candidates = []
        for variant_key, canonical in self._variants:
            if len(variant_key) >= MIN_SUBSTRING_VARIANT and _contains(key, variant_key):
                candidates.append((variant_key, canonical))
            elif reverse_ok and _contains(variant_key, key):
                candidates.append((variant_key, canonical))
        if not candidates:
            return None
        candidates.sort(key=lambda c: (-len(c[0]), c[1], c[0]))
        return candidates[0][1]

    def pattern(self, key: str) -> Optional[str]:
        for pattern, replacement in _GENERIC_REWRITES:
            rewritten = " ".join(pattern.sub(replacement, key).split())
            if rewritten and rewritten != key and rewritten in self._exact:
                return self._exact[rewritten]
        for mapping in self.mappings:
            if any(p.search(key) for p in mapping.patterns):
                return mapping.canonical
        return None


def normalize_institution(
    raw: Optional[str],
    mapping: Iterable[InstitutionMapping] | InstitutionMatcher,
    geography: Optional[CountryMapping] = None,
) -> Tuple[str, bool]:
    """Return ``(canonical_or_cleaned, matched)`` for an institution string.

    Stage 0 cleans the string, then exact, substring and pattern matching are tried
    in turn. Unmatched strings come back cleaned with ``matched`` false.
    """
    if geography is None:
        geography = load_mappings().countries
    matcher = mapping if isinstance(mapping, InstitutionMatcher) else InstitutionMatcher(mapping)
    cleaned = clean_institution(raw, geography)
    if not cleaned:
        return "", False
    key = lookup_key(cleaned)
    for stage in (matcher.exact, matcher.substring, matcher.pattern):
        canonical = stage(key)
        if canonical is not None:
            return canonical, True
    return cleaned, False


def normalize_country(
    country_raw: Optional[str],
    state: Optional[str],
    city: Optional[str],
    mapping: CountryMapping,
) -> Tuple[Optional[str], Optional[str]]:
    """Return ``(country, state_full)`` from explicit or inferred geography."""

    country: Optional[str] = None
    state_full: Optional[str] = None
    explicit = (country_raw or "").strip() or None

    if explicit:
        country = mapping.country(explicit)
        if country is None and mapping.us_state(explicit):
            country = "USA"
            state_full = state_full or mapping.us_state(explicit)
        elif country is None and mapping.ca_province(explicit):
            country = "Canada"
            state_full = state_full or mapping.ca_province(explicit)
        elif country is None:
            logger.debug("Country %r not in dictionary; left unresolved", explicit)

    state_text = (state or "").strip() or None
    if state_text:
        expanded = None
        if country in (None, "USA"):
            expanded = mapping.us_state(state_text)
            if expanded:
                country = country or "USA"
        if expanded is None and country in (None, "Canada"):
            expanded = mapping.ca_province(state_text)
            if expanded:
                country = country or "Canada"
        state_full = expanded or state_text

    if country is None and city:
        country = mapping.city_country(city)
    return country, state_full


def fallback_affiliation(raw: str) -> ParsedAffiliation:
    """Name-only affiliation for blocks whose extraction was flagged."""

    name = raw.split(",", 1)[0].strip() or raw.strip()
    return ParsedAffiliation(name=name)


def normalize_author_record(
    source_id: str,
    author_index: int,
    year: int,
    raw: str,
    affiliation: ParsedAffiliation,
    tables: MappingTables,
    matcher: Optional[InstitutionMatcher] = None,
    flagged: bool = False,
) -> AuthorRecord:
    """Assemble one author record with original and normalized values side by side."""

    matcher = matcher or InstitutionMatcher(tables.institutions)
    name = normalize_name(affiliation.name)
    institution: Optional[str] = None
    matched = False
    if affiliation.institution:
        institution, matched = normalize_institution(
            affiliation.institution, matcher, tables.countries
        )
        institution = institution or None
    country, state_full = normalize_country(
        affiliation.country, affiliation.state, affiliation.city, tables.countries
    )
    return AuthorRecord(
        source_id=source_id,
        author_index=author_index,
        year=year,
        raw=raw,
        name=affiliation.name,
        normalized_name=name.normalized,
        degrees=list(affiliation.degrees),
        position=affiliation.position,
        position_category=classify_position(affiliation.position),
        institution_raw=affiliation.institution,
        institution=institution,
        institution_matched=matched,
        department=affiliation.department,
        city=affiliation.city,
        state_raw=affiliation.state,
        state=state_full,
        country_raw=affiliation.country,
        country=country,
        extraction_flagged=flagged,
    )


def position_keyword_table() -> Sequence[Tuple[str, PositionCategory]]:
    """Indicator phrases with their expected category, used to audit rule priority."""

    return (
        ("doctoral student", PositionCategory.DOCTORAL_STUDENT),
        ("PhD student", PositionCategory.DOCTORAL_STUDENT),
        ("PhD candidate", PositionCategory.DOCTORAL_STUDENT),
        ("ABD", PositionCategory.DOCTORAL_STUDENT),
        ("assistant professor", PositionCategory.ASSISTANT_PROFESSOR),
        ("associate professor", PositionCategory.ASSOCIATE_PROFESSOR),
        ("professor", PositionCategory.FULL_PROFESSOR),
        ("clinical professor", PositionCategory.CLINICAL_PROFESSOR),
        ("clinical associate professor", PositionCategory.CLINICAL_PROFESSOR),
        ("professor of practice", PositionCategory.CLINICAL_PROFESSOR),
        ("teaching professor", PositionCategory.CLINICAL_PROFESSOR),
        ("postdoc", PositionCategory.POSTDOCTORAL),
        ("post-doctoral fellow", PositionCategory.POSTDOCTORAL),
        ("postdoctoral scholar", PositionCategory.POSTDOCTORAL),
        ("dean", PositionCategory.SENIOR_LEADERSHIP_ACADEMIC),
        ("associate dean", PositionCategory.SENIOR_LEADERSHIP_ACADEMIC),
        ("department chair", PositionCategory.SENIOR_LEADERSHIP_ACADEMIC),
        ("executive director", PositionCategory.SENIOR_LEADERSHIP_PRACTICE),
        ("program director", PositionCategory.SENIOR_LEADERSHIP_PRACTICE),
        ("agency administrator", PositionCategory.SENIOR_LEADERSHIP_PRACTICE),
        ("research associate", PositionCategory.RESEARCH_STAFF),
        ("research scientist", PositionCategory.RESEARCH_STAFF),
        ("project coordinator", PositionCategory.RESEARCH_STAFF),
        ("research assistant", PositionCategory.RESEARCH_STAFF),
        ("research professor", PositionCategory.RESEARCH_FACULTY),
        ("research associate professor", PositionCategory.RESEARCH_FACULTY),
        ("research assistant professor", PositionCategory.RESEARCH_FACULTY),
        ("lecturer", PositionCategory.INSTRUCTOR),
        ("instructor", PositionCategory.INSTRUCTOR),
        ("adjunct", PositionCategory.ADJUNCT_FACULTY),
        ("adjunct professor", PositionCategory.ADJUNCT_FACULTY),
        ("MSW student", PositionCategory.MASTERS_STUDENT),
        ("master's student", PositionCategory.MASTERS_STUDENT),
        ("graduate student", PositionCategory.MASTERS_STUDENT),
        ("BSW student", PositionCategory.UNDERGRADUATE_STUDENT),
        ("undergraduate", PositionCategory.UNDERGRADUATE_STUDENT),
        ("bachelor's student", PositionCategory.UNDERGRADUATE_STUDENT),
    )
