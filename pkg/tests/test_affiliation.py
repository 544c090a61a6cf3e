"""Tests for author-block extraction and its review tooling."""

from unittest.mock import MagicMock

import pandas as pd
import pytest

from confcurate.affiliation import (
    REVIEW_COLUMNS,
    ModelExtractor,
    RulesExtractor,
    export_review_sample,
    extract_affiliation,
    make_extractor,
    validate_extraction,
)
from confcurate.config import ExtractorConfig
from confcurate.errors import (
    InsufficientPopulationError,
    InvalidInputError,
    MalformedOutputError,
)
from confcurate.records import ParsedAffiliation
from tests.conftest import CHEN, J_KIM, MUNOZ_2025, PARK, SHERRADEN_2025

RULES = ExtractorConfig()
MODEL = ExtractorConfig(mode="model", endpoint="http://127.0.0.1:9")


def _model_extractor(*completions):
    client = MagicMock()
    client.complete.side_effect = [{"success": True, "text": text} for text in completions]
    return ModelExtractor(MODEL, client=client), client


class TestRulesExtractor:
    """Test suite for deterministic extraction."""

    def test_full_block(self):
        """Test the fully specified example block."""
        affiliation = extract_affiliation(
            "Matthew Smith, Professor, School of Social Work, University of Michigan, "
            "Ann Arbor, MI",
            RULES,
        )
        assert affiliation == ParsedAffiliation(
            name="Matthew Smith",
            position="Professor",
            department="School of Social Work",
            institution="University of Michigan",
            city="Ann Arbor",
            state="MI",
        )

    def test_abbreviated_block(self):
        """Test that an abbreviated institution is copied as written."""
        affiliation = extract_affiliation("M. Smith, U. Michigan", RULES)
        assert affiliation.name == "M. Smith"
        assert affiliation.institution == "U. Michigan"
        assert affiliation.position is None
        assert affiliation.city is None

    def test_degrees_and_position(self):
        """Test degree runs after the name."""
        affiliation = extract_affiliation(SHERRADEN_2025, RULES)
        assert affiliation.name == "Michael S. Sherraden"
        assert affiliation.degrees == ["PhD"]
        assert affiliation.position == "Professor"
        assert affiliation.institution == "Washington University in St. Louis"
        assert affiliation.city == "St. Louis"
        assert affiliation.state == "MO"

    def test_explicit_country(self):
        """Test a block ending in a country name."""
        affiliation = extract_affiliation(PARK, RULES)
        assert affiliation.institution == "Seoul National University"
        assert affiliation.city == "Seoul"
        assert affiliation.country == "South Korea"

    def test_no_degree_or_position(self):
        """Test a block with only a name and a place."""
        affiliation = extract_affiliation(J_KIM, RULES)
        assert affiliation.degrees == []
        assert affiliation.institution == "University of Toronto"
        assert affiliation.country == "Canada"

    def test_student_position(self):
        """Test that a degree-like position is not read as a degree."""
        affiliation = extract_affiliation(CHEN, RULES)
        assert affiliation.degrees == []
        assert affiliation.position == "MSW Student"

    def test_diacritics_preserved(self):
        """Test that extraction copies names verbatim."""
        affiliation = extract_affiliation(MUNOZ_2025, RULES)
        assert affiliation.name == "José Muñoz"
        assert affiliation.degrees == ["LCSW"]
        assert affiliation.position == "Program Director"

    def test_values_are_substrings(self):
        """Test that every extracted value appears in the input."""
        for block in (SHERRADEN_2025, PARK, J_KIM, CHEN, MUNOZ_2025):
            affiliation = RulesExtractor().parse(block)
            for value in (
                affiliation.name,
                affiliation.position,
                affiliation.institution,
                affiliation.department,
                affiliation.city,
                affiliation.state,
                affiliation.country,
                *affiliation.degrees,
            ):
                if value is not None:
                    assert value in block

    def test_first_affiliation_only(self):
        """Test that a second affiliation is dropped."""
        affiliation = extract_affiliation(
            "Ann Lee, PhD, University of Chicago, Chicago, IL, Boston College, Boston, MA",
            RULES,
        )
        assert affiliation.institution == "University of Chicago"
        assert affiliation.state == "IL"

    @pytest.mark.parametrize("raw", ["", "   ", "\n"])
    def test_empty_block(self, raw):
        """Test that empty input is rejected."""
        with pytest.raises(InvalidInputError):
            extract_affiliation(raw, RULES)

    def test_extract_result_dict(self):
        """Test the result dict shape."""
        result = RulesExtractor().extract(" , ")
        assert result["success"] is False
        assert "error" in result


class TestModelExtractor:
    """Test suite for model-backed extraction with a mocked completion client."""

    @pytest.fixture(autouse=True)
    def _no_token_budget(self, mocker):
        mocker.patch("confcurate.affiliation.check_prompt_budget", return_value=100)

    def test_parses_json(self):
        """Test a well-formed completion."""
        extractor, client = _model_extractor(
            '{"name": "M. Smith", "degrees": [], "institution": "U. Michigan", "city": null}'
        )
        affiliation = extract_affiliation("M. Smith, U. Michigan", MODEL, extractor)
        assert affiliation == ParsedAffiliation(name="M. Smith", institution="U. Michigan")
        assert client.complete.call_count == 1

    def test_prompt_contains_block(self):
        """Test that the block is substituted into the few-shot template."""
        extractor, client = _model_extractor('{"name": "A. B"}')
        extractor.extract("A.   B, Boston College")
        prompt = client.complete.call_args[0][0]
        assert prompt.rstrip().endswith("Entry: A. B, Boston College\nJSON:")

    def test_retries_malformed_once(self):
        """Test that malformed output is retried exactly once."""
        extractor, client = _model_extractor(
            "I think the answer is...", '```json\n{"name": "Jane Kim"}\n```'
        )
        result = extractor.extract("Jane Kim, University of Michigan")
        assert result["success"] is True
        assert result["affiliation"].name == "Jane Kim"
        assert client.complete.call_count == 2

    def test_malformed_twice(self):
        """Test that a second malformed answer raises with the raw output."""
        extractor, client = _model_extractor("not json", '{"degrees": []}')
        with pytest.raises(MalformedOutputError) as exc_info:
            extract_affiliation("Jane Kim, University of Michigan", MODEL, extractor)
        assert exc_info.value.raw_output == '{"degrees": []}'
        assert client.complete.call_count == 2

    def test_empty_block(self):
        """Test that empty input is rejected before any request."""
        extractor, client = _model_extractor()
        with pytest.raises(InvalidInputError):
            extractor.extract("  ")
        client.complete.assert_not_called()

    def test_make_extractor(self):
        """Test extractor selection by mode."""
        assert isinstance(make_extractor(RULES), RulesExtractor)
        assert isinstance(make_extractor(MODEL), ModelExtractor)


class TestValidateExtraction:
    """Test suite for per-field extraction accuracy."""

    def test_seeded_institution_corruptions(self):
        """Test 12 corrupted gold institutions out of 200."""
        sample = []
        for i in range(200):
            raw = f"Author {i}, Test University {i}"
            institution = "Wrong Institute" if i % 50 < 3 else f"Test University {i}"
            sample.append((raw, ParsedAffiliation(name=f"Author {i}", institution=institution)))

        report = validate_extraction(sample, RULES)

        assert report.sample_size == 200
        assert report.per_field_accuracy["institution"] == pytest.approx(0.94)
        assert report.per_field_accuracy["name"] == pytest.approx(1.0)
        assert report.per_field_counts["institution"] == (188, 200)
        assert "city" not in report.per_field_accuracy
        assert report.failed_extractions == 0

    def test_empty_gold_fields_skipped(self):
        """Test that fields blank in the gold record do not count."""
        sample = [("M. Smith, U. Michigan", ParsedAffiliation(name="M. Smith", city=" "))]
        report = validate_extraction(sample, RULES)
        assert set(report.per_field_accuracy) == {"name"}

    def test_empty_sample(self):
        """Test that an empty sample is rejected."""
        with pytest.raises(InvalidInputError):
            validate_extraction([], RULES)

    def test_report_to_dict(self):
        """Test report serialization."""
        sample = [("M. Smith, U. Michigan", ParsedAffiliation(name="M. Smith"))]
        data = validate_extraction(sample, RULES).to_dict()
        assert data["per_field_counts"] == {"name": [1, 1]}


class TestExportReviewSample:
    """Test suite for the extraction review CSV."""

    @pytest.fixture
    def records(self):
        return [
            {
                "source_id": f"s{i}",
                "author_index": 0,
                "raw": f"Author {i}, PhD, Test University {i}",
                "name": f"Author {i}",
                "degrees": ["PhD", "MSW"],
                "institution": f"Test University {i}",
            }
            for i in range(30)
        ]

    def test_sample_is_seeded(self, records, tmp_path):
        """Test that the same seed selects the same rows."""
        first = export_review_sample(records, 10, seed=7, path=tmp_path / "a.csv")
        second = export_review_sample(records, 10, seed=7, path=tmp_path / "b.csv")
        pd.testing.assert_frame_equal(first, second)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_columns(self, records, tmp_path):
        """Test that raw text sits beside every extracted field."""
        sample = export_review_sample(records, 5, seed=1, path=tmp_path / "review.csv")
        assert list(sample.columns) == REVIEW_COLUMNS
        assert sample["raw"].notna().all()
        assert set(sample["degrees"]) == {"PhD; MSW"}
        assert sample["source_id"].is_unique
        written = pd.read_csv(tmp_path / "review.csv")
        assert list(written.columns) == REVIEW_COLUMNS

    def test_caller_frame_unchanged(self, records):
        """Test that sampling a DataFrame leaves the caller's columns alone."""
        frame = pd.DataFrame(records)
        before = frame.copy()

        sample = export_review_sample(frame, 5, seed=3)

        assert list(sample.columns) == REVIEW_COLUMNS
        pd.testing.assert_frame_equal(frame, before)

    def test_insufficient_population(self, records):
        """Test that asking for more rows than exist fails."""
        with pytest.raises(InsufficientPopulationError):
            export_review_sample(records, 31, seed=1)
