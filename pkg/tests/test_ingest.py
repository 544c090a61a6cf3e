"""Tests for archive parsing, exclusion rules, polite fetching and the snapshot corpus."""

from unittest.mock import MagicMock

import pytest
import requests

from confcurate.errors import FetchError, InvalidInputError, ParseError, UnsupportedYearError
from confcurate.ingest import (
    EARLY,
    MODERN,
    Throttle,
    era_for_year,
    exclusion_reason,
    fetch_program,
    filter_presentations,
    load_corpus,
    parse_program_index,
    parse_presentation_page,
    parse_snapshots,
)
from confcurate.records import PageSnapshot, PresentationFormat, RawPresentation, source_id_for
from confcurate.storage import append_jsonl, sha256_bytes
from tests.conftest import (
    BASE_URL,
    PAGES,
    QUANT_SAVINGS,
    early_page_html,
    index_url,
    modern_index_html,
    page_snapshot,
    page_url,
)


def _response(status=200, text=""):
    response = MagicMock()
    response.status_code = status
    response.text = text
    return response


def _record(**overrides):
    values = {
        "source_id": "abc",
        "year": 2025,
        "title": "A Title",
        "abstract": QUANT_SAVINGS,
        "format": PresentationFormat.ORAL,
        "session_title": None,
        "raw_author_blocks": ["Jane Doe, University of Michigan"],
        "session_type": "Oral Presentation",
    }
    values.update(overrides)
    return RawPresentation(**values)


class TestEraSelection:
    """Test suite for layout era lookup."""

    @pytest.mark.parametrize(
        "year,era", [(2005, EARLY), (2008, EARLY), (2009, MODERN), (2026, MODERN)]
    )
    def test_era_boundaries(self, year, era):
        """Test that every supported year maps to exactly one era."""
        assert era_for_year(year) is era

    @pytest.mark.parametrize("year", [2004, 2027])
    def test_unsupported_year(self, year):
        """Test that years outside the archive raise UnsupportedYearError."""
        with pytest.raises(UnsupportedYearError):
            era_for_year(year)

    def test_selector_override(self):
        """Test that configured selectors replace only the named markers."""
        era = era_for_year(2025, {"modern": {"title": "h1.title"}})
        assert era.selectors["title"] == "h1.title"
        assert era.selectors["abstract"] == MODERN.selectors["abstract"]


class TestParseProgramIndex:
    """Test suite for index page link extraction."""

    def test_links_are_absolute_and_unique(self):
        """Test that links are resolved, defragmented and deduplicated in order."""
        pages = PAGES[2025] + PAGES[2025][:1]
        snapshot = PageSnapshot(url=index_url(2025), year=2025, body=modern_index_html(2025, pages))

        links = parse_program_index(snapshot)

        assert links == [page_url(2025, p.slug) for p in PAGES[2025]]

    def test_empty_body(self):
        """Test that an empty index page raises ParseError."""
        with pytest.raises(ParseError):
            parse_program_index(PageSnapshot(url=index_url(2025), year=2025, body="  "))

    def test_missing_marker_names_selector(self):
        """Test that a page without presentation links names the missing marker."""
        snapshot = PageSnapshot(url=index_url(2025), year=2025, body="<html><p>x</p></html>")
        with pytest.raises(ParseError) as excinfo:
            parse_program_index(snapshot)
        assert "itemtitle" in str(excinfo.value)
        assert excinfo.value.year == 2025


class TestParsePresentationPage:
    """Test suite for presentation page parsing in both layout eras."""

    def test_early_layout(self):
        """Test that early pages split author blocks on line breaks."""
        page = PAGES[2007][0]
        record = parse_presentation_page(page_snapshot(2007, page))

        assert record.title == "Matched Savings and Asset Building"
        assert record.abstract == QUANT_SAVINGS
        assert record.raw_author_blocks == page.authors
        assert record.format == PresentationFormat.ORAL
        assert record.session_title == "Economic Well-Being"
        assert record.flags == []

    def test_modern_layout_keeps_diacritics(self):
        """Test that modern pages keep author order and original spelling."""
        page = PAGES[2025][0]
        record = parse_presentation_page(page_snapshot(2025, page))

        assert record.raw_author_blocks == page.authors
        assert record.raw_author_blocks[2].startswith("José Muñoz")
        assert record.format == PresentationFormat.ORAL
        assert record.source_id == page_snapshot(2025, page).source_id

    def test_poster_format(self):
        """Test that poster sessions are detected."""
        record = parse_presentation_page(page_snapshot(2025, PAGES[2025][1]))
        assert record.format == PresentationFormat.POSTER

    def test_missing_abstract_is_flagged(self):
        """Test that a page without an abstract is flagged rather than raising."""
        record = parse_presentation_page(page_snapshot(2026, PAGES[2026][2]))
        assert "missing_abstract" in record.flags
        assert record.abstract == ""

    def test_symposium_overview(self):
        """Test that pages listing component papers are marked as overviews."""
        record = parse_presentation_page(page_snapshot(2025, PAGES[2025][3]))
        assert record.is_overview is True
        assert record.format == PresentationFormat.SYMPOSIUM_COMPONENT

    def test_empty_body(self):
        """Test that an empty page raises ParseError naming the year."""
        with pytest.raises(ParseError) as excinfo:
            parse_presentation_page(PageSnapshot(url=page_url(2025, "x"), year=2025, body=""))
        assert excinfo.value.year == 2025

    def test_wrong_era(self):
        """Test that an era not covering the year is rejected."""
        with pytest.raises(InvalidInputError):
            parse_presentation_page(page_snapshot(2025, PAGES[2025][0]), EARLY)

    def test_parse_snapshots_flags_unparseable_pages(self):
        """Test that a page that cannot be parsed becomes a flagged record."""
        good = page_snapshot(2007, PAGES[2007][0])
        bad = PageSnapshot(url=page_url(2007, "broken"), year=2007, body=" ")

        records = parse_snapshots([good, bad])

        assert [r.source_id for r in records] == [good.source_id, bad.source_id]
        assert "parse_error" in records[1].flags
        assert exclusion_reason(records[1]) == "missing_title"


class TestFilterPresentations:
    """Test suite for exclusion rules."""

    @pytest.mark.parametrize(
        "overrides,reason",
        [
            ({"session_type": "Pre-Conference Workshop"}, "workshop_or_keynote"),
            ({"session_type": "Keynote Address"}, "workshop_or_keynote"),
            ({"is_overview": True}, "symposium_overview"),
            ({"title": "  "}, "missing_title"),
            ({"abstract": "", "flags": ["missing_abstract"]}, "missing_abstract"),
            ({"abstract": "x" * 49}, "short_abstract"),
            ({"raw_author_blocks": []}, "missing_authors"),
        ],
    )
    def test_exclusion_reasons(self, overrides, reason):
        """Test that each exclusion rule names its reason."""
        assert exclusion_reason(_record(**overrides)) == reason

    def test_fifty_characters_is_kept(self):
        """Test that an abstract of exactly fifty characters is kept."""
        assert exclusion_reason(_record(abstract="y" * 50)) is None

    def test_split_kept_and_excluded(self):
        """Test that every input ends up in exactly one list."""
        records = [_record(), _record(source_id="b", is_overview=True)]
        kept, excluded = filter_presentations(records)

        assert [r.source_id for r in kept] == ["abc"]
        assert excluded == [{"record": records[1], "reason": "symposium_overview"}]


class TestThrottle:
    """Test suite for the politeness delay."""

    def test_waits_remaining_delay(self):
        """Test that consecutive requests are spaced by the configured delay."""
        now = [100.0]
        sleep = MagicMock(side_effect=lambda s: now.__setitem__(0, now[0] + s))
        throttle = Throttle(1.0, clock=lambda: now[0], sleep=sleep)

        throttle.wait()
        now[0] += 0.25
        throttle.wait()

        sleep.assert_called_once()
        assert sleep.call_args[0][0] == pytest.approx(0.75)

    def test_no_wait_after_long_gap(self):
        """Test that no sleep happens when the delay has already passed."""
        now = [0.0]
        sleep = MagicMock()
        throttle = Throttle(1.0, clock=lambda: now[0], sleep=sleep)
        throttle.wait()
        now[0] += 5.0
        throttle.wait()
        sleep.assert_not_called()


class TestFetchProgram:
    """Test suite for archive fetching with a mocked HTTP session."""

    def _session(self, responses):
        session = MagicMock(spec=requests.Session)
        session.get.side_effect = lambda url, timeout: responses[url].pop(0)
        return session

    def _throttle(self):
        return Throttle(1.0, clock=lambda: 0.0, sleep=MagicMock())

    def test_fetches_index_and_pages(self, tmp_path):
        """Test that the index and every listed page are stored in the corpus."""
        pages = PAGES[2025]
        responses = {index_url(2025): [_response(text=modern_index_html(2025, pages))]}
        for page in pages:
            responses[page_url(2025, page.slug)] = [
                _response(text=page_snapshot(2025, page).body)
            ]

        snapshots = fetch_program(
            BASE_URL, 2025, 1.0, tmp_path, session=self._session(responses),
            throttle=self._throttle(),
        )

        assert len(snapshots) == len(pages) + 1
        indexes, loaded = load_corpus(tmp_path, (2025,))
        assert len(indexes) == 1
        assert len(loaded) == len(pages)

    def test_retries_transient_errors(self, tmp_path):
        """Test that 5xx responses and connection errors are retried."""
        page = PAGES[2025][0]
        responses = {
            index_url(2025): [_response(text=modern_index_html(2025, [page]))],
            page_url(2025, page.slug): [
                _response(status=503),
                _response(status=502),
                _response(text=page_snapshot(2025, page).body),
            ],
        }
        snapshots = fetch_program(
            BASE_URL, 2025, 1.0, tmp_path, session=self._session(responses),
            throttle=self._throttle(),
        )
        assert len(snapshots) == 2

    def test_page_failure_is_logged_and_skipped(self, tmp_path):
        """Test that a failing presentation page goes to fetch_errors.jsonl."""
        page = PAGES[2025][0]
        responses = {
            index_url(2025): [_response(text=modern_index_html(2025, [page]))],
            page_url(2025, page.slug): [_response(status=404)],
        }
        snapshots = fetch_program(
            BASE_URL, 2025, 1.0, tmp_path, session=self._session(responses),
            throttle=self._throttle(),
        )

        assert len(snapshots) == 1
        errors = (tmp_path / "fetch_errors.jsonl").read_text(encoding="utf-8")
        assert page_url(2025, page.slug) in errors

    def test_index_failure_raises(self, tmp_path):
        """Test that an unavailable index page raises FetchError."""
        responses = {index_url(2025): [_response(status=500)] * 3}
        with pytest.raises(FetchError):
            fetch_program(
                BASE_URL, 2025, 1.0, tmp_path, session=self._session(responses),
                throttle=self._throttle(),
            )
        assert (tmp_path / "fetch_errors.jsonl").exists()

    def test_cached_pages_are_not_refetched(self, corpus):
        """Test that pages already in the corpus are read from disk."""
        session = MagicMock(spec=requests.Session)

        snapshots = fetch_program(
            BASE_URL, 2026, 1.0, corpus.corpus_dir, session=session, throttle=self._throttle()
        )

        session.get.assert_not_called()
        assert len(snapshots) == len(PAGES[2026]) + 1

    def test_rejects_non_positive_delay(self, tmp_path):
        """Test that a zero politeness delay is rejected."""
        with pytest.raises(InvalidInputError):
            fetch_program(BASE_URL, 2025, 0, tmp_path)


class TestLoadCorpus:
    """Test suite for reading the snapshot corpus."""

    def test_year_filter(self, corpus):
        """Test that only requested years are loaded."""
        indexes, pages = load_corpus(corpus.corpus_dir, (2007,))
        assert [s.year for s in indexes] == [2007]
        assert len(pages) == len(PAGES[2007])

    def test_tampered_snapshot_is_skipped(self, corpus):
        """Test that a snapshot whose bytes changed after capture is skipped."""
        page = PAGES[2007][0]
        snapshot = page_snapshot(2007, page)
        path = corpus.corpus_dir / "2007" / f"{snapshot.source_id}.html"
        path.write_text(early_page_html(page) + "<!-- edited -->", encoding="utf-8")

        _, pages = load_corpus(corpus.corpus_dir, (2007,))

        assert snapshot.source_id not in {p.source_id for p in pages}
        assert len(pages) == len(PAGES[2007]) - 1

    def _store_bytes(self, corpus_dir, url, data):
        source_id = source_id_for(url)
        (corpus_dir / "2007" / f"{source_id}.html").write_bytes(data)
        append_jsonl(
            corpus_dir / "manifest.jsonl",
            {
                "url": url,
                "year": 2007,
                "source_id": source_id,
                "sha256": sha256_bytes(data),
                "kind": "presentation",
            },
        )
        return source_id

    def test_legacy_encoding_is_decoded(self, corpus):
        """Test that a windows-1252 snapshot loads instead of failing on UTF-8."""
        body = "<html><body><h2>Programa para Niños y Familias</h2></body></html>"
        source_id = self._store_bytes(
            corpus.corpus_dir, page_url(2007, "legacy"), body.encode("windows-1252")
        )

        _, pages = load_corpus(corpus.corpus_dir, (2007,))

        loaded = {p.source_id: p for p in pages}[source_id]
        assert "Niños" in loaded.body

    def test_empty_snapshot_is_skipped(self, corpus):
        """Test that a zero-byte snapshot is logged and skipped."""
        source_id = self._store_bytes(corpus.corpus_dir, page_url(2007, "blank"), b"")
        _, pages = load_corpus(corpus.corpus_dir, (2007,))
        assert source_id not in {p.source_id for p in pages}
        assert len(pages) == len(PAGES[2007])


class TestPageSnapshot:
    """Test suite for snapshot invariants."""

    def test_empty_body_rejected(self):
        """Test that a snapshot cannot be built without a body."""
        with pytest.raises(ParseError) as excinfo:
            PageSnapshot(url=page_url(2025, "x"), year=2025, body="")
        assert excinfo.value.year == 2025

    def test_unsupported_year_rejected(self):
        """Test that a snapshot outside the archive years is rejected."""
        with pytest.raises(UnsupportedYearError):
            PageSnapshot(url=page_url(2025, "x"), year=1999, body="<html></html>")
