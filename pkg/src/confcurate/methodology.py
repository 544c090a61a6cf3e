"""Methodology labels for abstracts, and the human-agreement harness."""

from __future__ import annotations

import logging
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from string import Template
from typing import Any, Dict, List, Mapping, Optional, Pattern, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import ClassifierConfig, packaged_path
from .errors import (
    ConfigurationError,
    InsufficientPopulationError,
    InvalidInputError,
    MalformedOutputError,
)
from .inference import CompletionClient, complete_json, map_bounded
from .records import MIN_ABSTRACT_CHARS, MethodologyLabel
from .token_counting import check_prompt_budget

logger = logging.getLogger(__name__)

INTEGRATION = "Integration"
DEFAULT_LEXICON = ("lexicons", "methodology_keywords.csv")
# Both families must reach this score before integration terms can make a study mixed.
MIN_FAMILY_SCORE = 2.0

LABEL_ORDER: Tuple[MethodologyLabel, ...] = tuple(MethodologyLabel)


@dataclass(frozen=True)
class LexiconEntry:
    label: str
    phrase: str
    weight: float
    pattern: Pattern[str]


class MethodologyLexicon:
    """Indicator phrases per label; a phrase matches at the start of a word."""

    def __init__(self, entries: Sequence[LexiconEntry]):
        self.entries = tuple(entries)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "MethodologyLexicon":
        valid = {label.value for label in MethodologyLabel} | {INTEGRATION}
        entries = []
        for row in frame.itertuples(index=False):
            label = str(row.label).strip()
            phrase = str(row.phrase).strip().lower()
            if label not in valid:
                raise ConfigurationError(f"Unknown lexicon label {label!r}")
            if not phrase:
                continue
            entries.append(
                LexiconEntry(
                    label=label,
                    phrase=phrase,
                    weight=float(row.weight),
                    pattern=re.compile(rf"(?<!\w){re.escape(phrase)}"),
                )
            )
        return cls(entries)

    def scores(self, abstract: str) -> Dict[str, float]:
        text = " ".join(abstract.lower().split())
        totals: Dict[str, float] = {}
        for entry in self.entries:
            if entry.pattern.search(text):
                totals[entry.label] = totals.get(entry.label, 0.0) + entry.weight
        return totals


@lru_cache(maxsize=4)
def load_lexicon(path: Optional[Path] = None) -> MethodologyLexicon:
    """Load ``label,phrase,weight`` rows (packaged lexicon when ``path`` is None)."""

    path = Path(path) if path is not None else packaged_path(*DEFAULT_LEXICON)
    try:
        frame = pd.read_csv(path, dtype={"label": str, "phrase": str}, keep_default_na=False)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"Lexicon not found: {path}") from exc
    missing = {"label", "phrase", "weight"} - set(frame.columns)
    if missing:
        raise ConfigurationError(f"{path} is missing columns: {', '.join(sorted(missing))}")
    return MethodologyLexicon.from_frame(frame)


def rules_label(abstract: str, lexicon: MethodologyLexicon) -> MethodologyLabel:
    """Keyword decision: Review, then MixedMethods, then the stronger of quant/qual."""

    scores = lexicon.scores(abstract)
    quantitative = scores.get(MethodologyLabel.QUANTITATIVE.value, 0.0)
    qualitative = scores.get(MethodologyLabel.QUALITATIVE.value, 0.0)
    if scores.get(MethodologyLabel.REVIEW.value, 0.0) > 0:
        return MethodologyLabel.REVIEW
    if scores.get(MethodologyLabel.MIXED_METHODS.value, 0.0) > 0:
        return MethodologyLabel.MIXED_METHODS
    if (
        quantitative >= MIN_FAMILY_SCORE
        and qualitative >= MIN_FAMILY_SCORE
        and scores.get(INTEGRATION, 0.0) > 0
    ):
        return MethodologyLabel.MIXED_METHODS
    if quantitative > 0 or qualitative > 0:
        return (
            MethodologyLabel.QUANTITATIVE
            if quantitative >= qualitative
            else MethodologyLabel.QUALITATIVE
        )
    return MethodologyLabel.THEORETICAL_OTHER


_LABEL_SPELLINGS = {
    "quantitative": MethodologyLabel.QUANTITATIVE,
    "qualitative": MethodologyLabel.QUALITATIVE,
    "mixedmethods": MethodologyLabel.MIXED_METHODS,
    "mixedmethod": MethodologyLabel.MIXED_METHODS,
    "mixed": MethodologyLabel.MIXED_METHODS,
    "review": MethodologyLabel.REVIEW,
    "theoreticalother": MethodologyLabel.THEORETICAL_OTHER,
    "theoretical": MethodologyLabel.THEORETICAL_OTHER,
    "other": MethodologyLabel.THEORETICAL_OTHER,
    "theoreticalorother": MethodologyLabel.THEORETICAL_OTHER,
}


def parse_label(value: Any) -> MethodologyLabel:
    """Accept common spellings ("Mixed Methods", "mixed_methods", "Theoretical/Other").

    Raises:
        ValueError: If the value names no category.
    """
    key = re.sub(r"[^a-z]", "", str(value or "").lower())
    if key not in _LABEL_SPELLINGS:
        raise ValueError(f"Unknown methodology label {value!r}")
    return _LABEL_SPELLINGS[key]


def _check_abstract(abstract: str) -> str:
    text = " ".join((abstract or "").split())
    if len(text) < MIN_ABSTRACT_CHARS:
        raise InvalidInputError(
            f"Abstract has {len(text)} characters; at least {MIN_ABSTRACT_CHARS} required"
        )
    return text


class MethodologyClassifier(ABC):
    mode = ""
    version = ""

    @abstractmethod
    def classify(self, abstract: str) -> Dict[str, Any]:
        """Return ``{"success": True, "label": ...}`` or an error dict."""

    def classify_many(self, abstracts: Sequence[str]) -> List[Dict[str, Any]]:
        return [self.classify(abstract) for abstract in abstracts]


class RulesClassifier(MethodologyClassifier):
    mode = "rules"
    version = "rules-1"

    def __init__(self, lexicon: Optional[MethodologyLexicon] = None):
        self.lexicon = lexicon or load_lexicon()

    def classify(self, abstract: str) -> Dict[str, Any]:
        return {"success": True, "label": rules_label(_check_abstract(abstract), self.lexicon)}


class ModelClassifier(MethodologyClassifier):
    mode = "model"
    version = "model-1"

    def __init__(self, config: ClassifierConfig, client: Optional[CompletionClient] = None):
        self.config = config
        self.client = client or CompletionClient.from_config(config)
        self._template = Template(config.prompt_template)

    def classify(self, abstract: str) -> Dict[str, Any]:
        prompt = self._template.safe_substitute(abstract=_check_abstract(abstract))
        check_prompt_budget(prompt, self.config)
        result = complete_json(self.client, prompt, lambda data: parse_label(data["label"]))
        if result["success"]:
            return {"success": True, "label": result["value"]}
        return {"success": False, "error": result["error"], "raw_output": result["raw_output"]}

    def classify_many(self, abstracts: Sequence[str]) -> List[Dict[str, Any]]:
        return map_bounded(self.classify, abstracts, self.config.max_in_flight)


def make_classifier(
    config: ClassifierConfig, lexicon_path: Optional[Path] = None
) -> MethodologyClassifier:
    if config.mode == "model":
        return ModelClassifier(config)
    return RulesClassifier(load_lexicon(lexicon_path))


def classify_methodology(
    abstract: str,
    config: ClassifierConfig,
    classifier: Optional[MethodologyClassifier] = None,
) -> MethodologyLabel:
    """Label one abstract.

    Raises:
        InvalidInputError: If the abstract is shorter than 50 characters.
        MalformedOutputError: If model output stays malformed after the retry.
    """
    _check_abstract(abstract)
    classifier = classifier or make_classifier(config)
    result = classifier.classify(abstract)
    if not result["success"]:
        raise MalformedOutputError(result["error"], raw_output=result.get("raw_output"))
    return result["label"]


def stratified_sample(
    labeled: pd.DataFrame | Sequence[Mapping[str, Any]],
    per_category: int | Mapping[str, int],
    seed: int,
    label_column: str = "label",
) -> pd.DataFrame:
    """Sample a fixed number of records per label, uniformly within each label.

    ``per_category`` is either one count for all five labels or an explicit
    ``{label: count}`` mapping.

    Raises:
        InsufficientPopulationError: Naming the first label with too few records.
    """
    frame = labeled if isinstance(labeled, pd.DataFrame) else pd.DataFrame(list(labeled))
    if isinstance(per_category, int):
        counts = {label.value: per_category for label in LABEL_ORDER}
    else:
        counts = {parse_label(k).value: int(v) for k, v in per_category.items()}

    parts = []
    labels = frame[label_column].astype(str) if len(frame) else pd.Series(dtype=str)
    for label, n in counts.items():
        population = frame[labels == label]
        if len(population) < n:
            raise InsufficientPopulationError(label, len(population), n)
        parts.append(population.sample(n=n, random_state=seed))
    if not parts:
        return frame.iloc[0:0]
    return pd.concat(parts).reset_index(drop=True)


@dataclass
class KappaReport:
    labels: List[str]
    confusion: List[List[int]]
    n: int
    observed_agreement: float
    expected_agreement: float
    kappa: Optional[float]
    per_category_accuracy: Dict[str, float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "labels": self.labels,
            "confusion": self.confusion,
            "n": self.n,
            "observed_agreement": self.observed_agreement,
            "expected_agreement": self.expected_agreement,
            "kappa": self.kappa,
            "kappa_defined": self.kappa is not None,
            "per_category_accuracy": self.per_category_accuracy,
        }


def _label_text(value: Any) -> str:
    return value.value if isinstance(value, MethodologyLabel) else str(value)


def cohen_kappa(
    human: Sequence[Any],
    machine: Sequence[Any],
    labels: Optional[Sequence[str]] = None,
) -> KappaReport:
    """Chance-corrected agreement; rows of the confusion matrix are the human labels.

    ``kappa`` is None when expected agreement is 1 (undefined).

    Raises:
        InvalidInputError: If the sequences are empty or differ in length.
    """
    if len(human) != len(machine):
        raise InvalidInputError(f"Label sequences differ in length: {len(human)} vs {len(machine)}")
    if not human:
        raise InvalidInputError("Label sequences are empty")

    rows = [_label_text(v) for v in human]
    cols = [_label_text(v) for v in machine]
    if labels is None:
        seen = set(rows) | set(cols)
        standard = [label.value for label in LABEL_ORDER]
        labels = standard if seen <= set(standard) else sorted(seen)
    labels = list(labels)
    index = {label: i for i, label in enumerate(labels)}
    unknown = (set(rows) | set(cols)) - set(index)
    if unknown:
        raise InvalidInputError(f"Labels outside the label set: {sorted(unknown)}")

    confusion = np.zeros((len(labels), len(labels)), dtype=np.int64)
    np.add.at(confusion, ([index[r] for r in rows], [index[c] for c in cols]), 1)
    n = int(confusion.sum())
    p_o = float(np.trace(confusion)) / n
    row_totals = confusion.sum(axis=1)
    col_totals = confusion.sum(axis=0)
    p_e = float(np.dot(row_totals, col_totals)) / (n * n)
    kappa = (p_o - p_e) / (1 - p_e) if p_e < 1 else None

    accuracy = {
        label: float(confusion[i, i]) / float(row_totals[i])
        for i, label in enumerate(labels)
        if row_totals[i] > 0
    }
    return KappaReport(
        labels=labels,
        confusion=confusion.tolist(),
        n=n,
        observed_agreement=p_o,
        expected_agreement=p_e,
        kappa=kappa,
        per_category_accuracy=accuracy,
    )


def kappa_from_review(path: Path) -> KappaReport:
    """Compute agreement from a filled-in methodology review sheet.

    Rows without a ``human_label`` are ignored.
    """
    if not Path(path).exists():
        raise InvalidInputError(f"Review sheet not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if "human_label" not in frame.columns or "label" not in frame.columns:
        raise InvalidInputError(f"{path} needs 'label' and 'human_label' columns")
    reviewed = frame[frame["human_label"].str.strip() != ""]
    human = [parse_label(v).value for v in reviewed["human_label"]]
    machine = [parse_label(v).value for v in reviewed["label"]]
    return cohen_kappa(human, machine)
