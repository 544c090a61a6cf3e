"""Fetching and parsing conference program pages into raw presentation records."""

from __future__ import annotations

import dataclasses
import logging
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple
from urllib.parse import urldefrag, urljoin

import requests
from bs4 import BeautifulSoup, Comment, Tag, UnicodeDammit
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt, wait_none

from .errors import FetchError, InvalidInputError, ParseError
from .records import (
    MIN_ABSTRACT_CHARS,
    PageSnapshot,
    PresentationFormat,
    RawPresentation,
    check_year,
    source_id_for,
)
from .storage import append_jsonl, read_jsonl, sha256_bytes

logger = logging.getLogger(__name__)

USER_AGENT = "confcurate/0.1 (+research archive curation; polite single worker)"
FETCH_ATTEMPTS = 3

EXCLUSION_REASONS = (
    "workshop_or_keynote",
    "symposium_overview",
    "missing_title",
    "missing_abstract",
    "short_abstract",
    "missing_authors",
)

_WORKSHOP_RE = re.compile(r"\b(workshops?|keynotes?|plenary)\b", re.IGNORECASE)


@dataclass(frozen=True)
class ParserEra:
    """Structural markers for one layout era of the archive."""

    era: str
    first_year: int
    last_year: int
    selectors: Dict[str, str] = field(default_factory=dict)

    def covers(self, year: int) -> bool:
        return self.first_year <= year <= self.last_year

    def with_selectors(self, overrides: Dict[str, str]) -> "ParserEra":
        return dataclasses.replace(self, selectors={**self.selectors, **overrides})


EARLY = ParserEra(
    era="early",
    first_year=2005,
    last_year=2008,
    selectors={
        "index_link": "td.paperList a[href], td.sessionList a[href]",
        "title": "span.abstractTitle",
        "abstract": "td.abstractBody",
        "author": "td.authorBlock",
        "author_split": "br",
        "session_title": "td.sessionInfo i.session",
        "session_type": "td.sessionInfo b.type",
        "overview_marker": "td.componentPapers",
    },
)

MODERN = ParserEra(
    era="modern",
    first_year=2009,
    last_year=2026,
    selectors={
        "index_link": "div.itemtitle a[href]",
        "title": "h2.subtitle",
        "abstract": "div.abstract",
        "author": "div.paperauthors div.author",
        "author_split": "",
        "session_title": "div.session a.sessiontitle",
        "session_type": "div.session span.sessiontype",
        "overview_marker": "div.papers",
    },
)

ERAS: Tuple[ParserEra, ...] = (EARLY, MODERN)


def era_for_year(year: int, overrides: Optional[Dict[str, Dict[str, str]]] = None) -> ParserEra:
    """Return the parser era for ``year``; total over 2005-2026.

    Raises:
        UnsupportedYearError: For years outside the archive's range.
    """
    check_year(year)
    for era in ERAS:
        if era.covers(year):
            if overrides and overrides.get(era.era):
                return era.with_selectors(overrides[era.era])
            return era
    raise AssertionError(f"No era covers {year}")  # pragma: no cover - eras are contiguous


def _collapse(text: Optional[str]) -> str:
    return " ".join((text or "").split())


def detect_format(session_type: Optional[str]) -> PresentationFormat:
    label = (session_type or "").lower()
    if "poster" in label:
        return PresentationFormat.POSTER
    if "symposi" in label:
        return PresentationFormat.SYMPOSIUM_COMPONENT
    if "roundtable" in label or "round table" in label:
        return PresentationFormat.ROUNDTABLE_COMPONENT
    if "oral" in label or "paper" in label:
        return PresentationFormat.ORAL
    return PresentationFormat.UNKNOWN


def parse_program_index(snapshot: PageSnapshot, era: Optional[ParserEra] = None) -> List[str]:
    """Return the ordered, deduplicated presentation URLs listed on an index page.

    Raises:
        ParseError: If the body is empty or no presentation links are found.
    """
    era = era or era_for_year(snapshot.year)
    if not snapshot.body or not snapshot.body.strip():
        raise ParseError(snapshot.year, "body", "empty index page")

    soup = BeautifulSoup(snapshot.body, "lxml")
    selector = era.selectors["index_link"]
    anchors = soup.select(selector)
    if not anchors:
        raise ParseError(snapshot.year, selector)

    references: List[str] = []
    seen = set()
    for anchor in anchors:
        href = (anchor.get("href") or "").strip()
        if not href or href.startswith(("javascript:", "mailto:")):
            continue
        url, _ = urldefrag(urljoin(snapshot.url, href))
        if url not in seen:
            seen.add(url)
            references.append(url)
    return references


def _split_on_breaks(container: Tag) -> List[str]:
    blocks: List[str] = []
    current: List[str] = []
    for node in container.descendants:
        if isinstance(node, Tag):
            if node.name == "br":
                blocks.append(_collapse(" ".join(current)))
                current = []
            continue
        if not isinstance(node, Comment):
            current.append(str(node))
    blocks.append(_collapse(" ".join(current)))
    return [block for block in blocks if block]


def _select_text(soup: BeautifulSoup, selector: str) -> Optional[str]:
    if not selector:
        return None
    element = soup.select_one(selector)
    if element is None:
        return None
    return _collapse(element.get_text(" ", strip=True))


def parse_presentation_page(
    snapshot: PageSnapshot, era: Optional[ParserEra] = None
) -> RawPresentation:
    """Parse one presentation page.

    Missing title or abstract does not raise: the record carries a ``missing_title`` /
    ``missing_abstract`` flag and is routed to the review queue by the caller.

    Raises:
        ParseError: If the body is empty.
        InvalidInputError: If ``era`` does not cover the snapshot's year.
    """
    era = era or era_for_year(snapshot.year)
    if not era.covers(snapshot.year):
        raise InvalidInputError(f"Era {era.era!r} does not cover year {snapshot.year}")
    if not snapshot.body or not snapshot.body.strip():
        raise ParseError(snapshot.year, "body", f"empty page {snapshot.url}")

    selectors = era.selectors
    soup = BeautifulSoup(snapshot.body, "lxml")
    flags: List[str] = []

    title = _select_text(soup, selectors["title"])
    if not title:
        flags.append("missing_title")

    abstract = _select_text(soup, selectors["abstract"])
    if abstract is None:
        flags.append("missing_abstract")

    author_blocks: List[str] = []
    for element in soup.select(selectors["author"]):
        if selectors.get("author_split") == "br":
            author_blocks.extend(_split_on_breaks(element))
        else:
            text = _collapse(element.get_text(" ", strip=True))
            if text:
                author_blocks.append(text)
    author_blocks = [re.sub(r"\s+,", ",", block) for block in author_blocks]

    session_type = _select_text(soup, selectors.get("session_type", ""))
    overview_marker = selectors.get("overview_marker", "")
    is_overview = bool(overview_marker and soup.select_one(overview_marker) is not None)

    return RawPresentation(
        source_id=snapshot.source_id,
        year=snapshot.year,
        title=title or "",
        abstract=abstract or "",
        format=detect_format(session_type),
        session_title=_select_text(soup, selectors.get("session_title", "")) or None,
        raw_author_blocks=author_blocks,
        url=snapshot.url,
        session_type=session_type or None,
        is_overview=is_overview,
        flags=flags,
    )


SelectorOverrides = Optional[Dict[str, Dict[str, str]]]


def _parse_or_flag(args: Tuple[PageSnapshot, SelectorOverrides]) -> RawPresentation:
    snapshot, overrides = args
    try:
        return parse_presentation_page(snapshot, era_for_year(snapshot.year, overrides))
    except ParseError as exc:
        logger.warning("Flagging %s for review: %s", snapshot.url, exc)
        return RawPresentation(
            source_id=snapshot.source_id,
            year=snapshot.year,
            title="",
            abstract="",
            format=PresentationFormat.UNKNOWN,
            session_title=None,
            raw_author_blocks=[],
            url=snapshot.url,
            flags=["parse_error", "missing_title", "missing_abstract"],
        )


def parse_snapshots(
    snapshots: List[PageSnapshot],
    workers: int = 1,
    selector_overrides: Optional[Dict[str, Dict[str, str]]] = None,
) -> List[RawPresentation]:
    """Parse presentation snapshots, in parallel when ``workers > 1``; order is preserved."""

    jobs = [(snapshot, selector_overrides) for snapshot in snapshots]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(_parse_or_flag, jobs, chunksize=16))
    return [_parse_or_flag(job) for job in jobs]


def exclusion_reason(record: RawPresentation) -> Optional[str]:
    """Return why ``record`` is excluded from the dataset, or None if it is kept."""

    if record.session_type and _WORKSHOP_RE.search(record.session_type):
        return "workshop_or_keynote"
    if record.is_overview:
        return "symposium_overview"
    if not record.title.strip():
        return "missing_title"
    if "missing_abstract" in record.flags or not record.abstract.strip():
        return "missing_abstract"
    if len(_collapse(record.abstract)) < MIN_ABSTRACT_CHARS:
        return "short_abstract"
    if not record.raw_author_blocks:
        return "missing_authors"
    return None


def filter_presentations(
    records: List[RawPresentation],
) -> Tuple[List[RawPresentation], List[Dict[str, object]]]:
    """Split records into kept and excluded; every excluded entry names its reason."""

    kept: List[RawPresentation] = []
    excluded: List[Dict[str, object]] = []
    for record in records:
        reason = exclusion_reason(record)
        if reason is None:
            kept.append(record)
        else:
            excluded.append({"record": record, "reason": reason})
    logger.info("Kept %d of %d presentations", len(kept), len(records))
    return kept, excluded


class Throttle:
    """Keeps consecutive requests at least ``delay_s`` apart."""

    def __init__(
        self,
        delay_s: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.delay_s = delay_s
        self._clock = clock
        self._sleep = sleep
        self._last: Optional[float] = None

    def wait(self) -> None:
        if self._last is not None:
            remaining = self.delay_s - (self._clock() - self._last)
            if remaining > 0:
                self._sleep(remaining)
        self._last = self._clock()


class TransientFetchError(Exception):
    """Connection failure or 5xx response; worth another attempt."""


def _get(session: requests.Session, url: str, throttle: Throttle) -> str:
    for attempt in Retrying(
        stop=stop_after_attempt(FETCH_ATTEMPTS),
        wait=wait_none(),
        retry=retry_if_exception_type(TransientFetchError),
        reraise=True,
    ):
        with attempt:
            throttle.wait()
            logger.debug("GET %s", url)
            try:
                response = session.get(url, timeout=30)
            except requests.RequestException as exc:
                raise TransientFetchError(str(exc)) from exc
            if response.status_code >= 500:
                raise TransientFetchError(f"HTTP {response.status_code}")
            if response.status_code >= 400:
                raise FetchError(f"HTTP {response.status_code} for {url}")
            if not response.text.strip():
                raise TransientFetchError("empty body")
            return response.text
    raise AssertionError("unreachable")  # pragma: no cover


def _snapshot_path(corpus_dir: Path, year: int, source_id: str) -> Path:
    return corpus_dir / str(year) / f"{source_id}.html"


def decode_snapshot(data: bytes, path: Path) -> str:
    """Decode stored page bytes; pages saved by older tools may not be UTF-8."""
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        dammit = UnicodeDammit(data, ["utf-8", "windows-1252", "latin-1"])
        logger.warning("Snapshot %s is not UTF-8; decoded as %s", path, dammit.original_encoding)
        return dammit.unicode_markup or data.decode("latin-1")


def store_snapshot(corpus_dir: Path, snapshot: PageSnapshot, kind: str) -> None:
    path = _snapshot_path(corpus_dir, snapshot.year, snapshot.source_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = snapshot.body.encode("utf-8")
    path.write_bytes(data)
    append_jsonl(
        corpus_dir / "manifest.jsonl",
        {
            "url": snapshot.url,
            "year": snapshot.year,
            "source_id": snapshot.source_id,
            "sha256": sha256_bytes(data),
            "kind": kind,
            "fetched_at": snapshot.fetched_at,
        },
    )


def fetch_program(
    base_url: str,
    year: int,
    politeness: float,
    corpus_dir: Path,
    session: Optional[requests.Session] = None,
    throttle: Optional[Throttle] = None,
    index_path_template: str = "{year}/index.html",
) -> List[PageSnapshot]:
    """Fetch one year's index and presentation pages into the local corpus.

    Pages already in the corpus manifest are read from disk instead of refetched.
    Failures on presentation pages are appended to ``fetch_errors.jsonl`` and skipped.

    Raises:
        UnsupportedYearError: If ``year`` is outside 2005-2026.
        FetchError: If the index page cannot be retrieved.
    """
    check_year(year)
    if politeness <= 0:
        raise InvalidInputError("politeness delay must be positive")

    corpus_dir = Path(corpus_dir)
    if session is None:
        session = requests.Session()
        session.headers["User-Agent"] = USER_AGENT
    throttle = throttle or Throttle(politeness)
    cached = {entry["source_id"]: entry for entry in read_jsonl(corpus_dir / "manifest.jsonl")}

    def load_or_fetch(url: str, kind: str) -> PageSnapshot:
        source_id = source_id_for(url)
        entry = cached.get(source_id)
        path = _snapshot_path(corpus_dir, year, source_id)
        if entry is not None and path.exists():
            return PageSnapshot(
                url=url,
                year=year,
                body=decode_snapshot(path.read_bytes(), path),
                fetched_at=entry.get("fetched_at", ""),
            )
        snapshot = PageSnapshot(url=url, year=year, body=_get(session, url, throttle))
        store_snapshot(corpus_dir, snapshot, kind)
        cached[source_id] = {"source_id": source_id}
        return snapshot

    index_url = urljoin(base_url.rstrip("/") + "/", index_path_template.format(year=year))
    try:
        index = load_or_fetch(index_url, "index")
    except (FetchError, TransientFetchError, ParseError) as exc:
        append_jsonl(
            corpus_dir / "fetch_errors.jsonl",
            {"url": index_url, "year": year, "kind": "index", "error": str(exc)},
        )
        raise FetchError(f"Index page for {year} unavailable: {exc}") from exc

    snapshots = [index]
    for url in parse_program_index(index):
        try:
            snapshots.append(load_or_fetch(url, "presentation"))
        except (FetchError, TransientFetchError, ParseError) as exc:
            logger.warning("Fetch failed for %s: %s", url, exc)
            append_jsonl(
                corpus_dir / "fetch_errors.jsonl",
                {"url": url, "year": year, "kind": "presentation", "error": str(exc)},
            )
    logger.info("Year %d: %d snapshots in corpus", year, len(snapshots))
    return snapshots


def load_corpus(
    corpus_dir: Path, years: Tuple[int, ...]
) -> Tuple[List[PageSnapshot], List[PageSnapshot]]:
    """Read the corpus manifest and return ``(index_pages, presentation_pages)`` for ``years``.

    Snapshots whose body no longer matches the manifest hash are logged and skipped.
    """
    corpus_dir = Path(corpus_dir)
    wanted = set(years)
    indexes: List[PageSnapshot] = []
    pages: List[PageSnapshot] = []
    seen = set()
    for entry in read_jsonl(corpus_dir / "manifest.jsonl"):
        year = int(entry["year"])
        if year not in wanted or entry["source_id"] in seen:
            continue
        seen.add(entry["source_id"])
        path = _snapshot_path(corpus_dir, year, entry["source_id"])
        if not path.exists():
            logger.warning("Snapshot listed in manifest is missing: %s", path)
            continue
        data = path.read_bytes()
        if entry.get("sha256") and sha256_bytes(data) != entry["sha256"]:
            logger.warning("Snapshot hash mismatch, skipping: %s", path)
            continue
        try:
            snapshot = PageSnapshot(
                url=entry["url"],
                year=year,
                body=decode_snapshot(data, path),
                fetched_at=entry.get("fetched_at", ""),
            )
        except ParseError as exc:
            logger.warning("Skipping unreadable snapshot %s: %s", path, exc)
            continue
        if entry.get("kind") == "index":
            indexes.append(snapshot)
        else:
            pages.append(snapshot)
    pages.sort(key=lambda s: (s.year, s.source_id))
    indexes.sort(key=lambda s: (s.year, s.source_id))
    return indexes, pages
