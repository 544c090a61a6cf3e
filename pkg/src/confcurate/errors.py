"""Exception types raised by the curation pipeline."""

from __future__ import annotations

from typing import Iterable, Optional


class ConfcurateError(Exception):
    """Base class for every pipeline error; ``exit_code`` is what the CLI returns."""

    exit_code = 1


class ConfigurationError(ConfcurateError):
    """Invalid or inconsistent configuration."""

    exit_code = 2


class InvalidInputError(ConfcurateError, ValueError):
    """A precondition on an input value does not hold."""


class UnsupportedYearError(ConfigurationError, ValueError):
    """Conference year outside 2005-2026."""

    def __init__(self, year: int):
        super().__init__(f"Unsupported year: {year} (supported range is 2005-2026)")
        self.year = year


class ParseError(ConfcurateError):
    """Page structure not recognized by the era's selectors."""

    def __init__(self, year: int, marker: str, detail: str = ""):
        message = f"Unrecognized page structure for {year}: no match for {marker!r}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
        self.year = year
        self.marker = marker


class FetchError(ConfcurateError):
    """Upstream HTTP failure that cannot be skipped."""

    exit_code = 3


class EndpointUnreachableError(ConfigurationError):
    """Inference server did not answer in model mode."""


class MalformedOutputError(ConfcurateError):
    """Model output still unparseable after the retry; the record goes to review."""

    def __init__(self, message: str, raw_output: Optional[str] = None):
        super().__init__(message)
        self.raw_output = raw_output


class PrerequisiteError(ConfcurateError):
    """A stage was requested before the stages it depends on completed."""

    def __init__(self, stage: str, missing: str):
        super().__init__(f"Stage {stage!r} requires stage {missing!r} to be run first")
        self.stage = stage
        self.missing = missing


class StaleInputError(ConfcurateError):
    """An input file changed after the stage that produced it recorded its hash."""

    def __init__(self, stage: str, path: str):
        super().__init__(
            f"Input {path!r} of stage {stage!r} does not match its recorded hash; "
            "rerun the producing stage or pass --force"
        )
        self.stage = stage
        self.path = path


class InsufficientPopulationError(ConfcurateError, ValueError):
    """Not enough records to draw the requested sample."""

    def __init__(self, category: str, available: int, requested: int):
        super().__init__(
            f"Category {category!r} has {available} records, {requested} requested"
        )
        self.category = category


class UnlabeledPresentationError(ConfcurateError, ValueError):
    """Presentations without a methodology label."""

    def __init__(self, source_ids: Iterable[str]):
        self.source_ids = sorted(source_ids)
        super().__init__(f"Unlabeled presentations: {', '.join(self.source_ids)}")


class DatasetLockedError(ConfcurateError):
    """Another pipeline instance holds the dataset lock."""
