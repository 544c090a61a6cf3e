"""Mapping tables (institutions, countries, states, cities) shared by the normalizers."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Pattern, Tuple

import pandas as pd

from .config import packaged_path
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

INSTITUTIONS_FILE = "institutions.csv"
INSTITUTION_PATTERNS_FILE = "institution_patterns.csv"
COUNTRIES_FILE = "countries.csv"
US_STATES_FILE = "us_states.csv"
CA_PROVINCES_FILE = "ca_provinces.csv"
CITIES_FILE = "cities.csv"


def lookup_key(text: Optional[str]) -> str:
    """Case-insensitive lookup form: casefolded, periods dropped, whitespace collapsed."""

    if not text:
        return ""
    key = text.casefold().replace(".", "").replace("’", "'")
    key = " ".join(key.split())
    if key.startswith("the "):
        key = key[4:]
    return key


@dataclass(frozen=True)
class InstitutionMapping:
    canonical: str
    variants: FrozenSet[str]
    patterns: Tuple[Pattern[str], ...] = ()

    def __post_init__(self) -> None:
        if self.canonical not in self.variants:
            object.__setattr__(self, "variants", frozenset(self.variants | {self.canonical}))


@dataclass(frozen=True)
class CountryMapping:
    """Country variant dictionary plus US/Canada geography for inference."""

    variants: Dict[str, str]
    us_states: Dict[str, str]
    ca_provinces: Dict[str, str]
    cities: Dict[str, str] = field(default_factory=dict)

    @property
    def canonical_countries(self) -> List[str]:
        return sorted(set(self.variants.values()))

    def country(self, raw: Optional[str]) -> Optional[str]:
        return self.variants.get(lookup_key(raw))

    def us_state(self, raw: Optional[str]) -> Optional[str]:
        return _state_lookup(self.us_states, raw)

    def ca_province(self, raw: Optional[str]) -> Optional[str]:
        return _state_lookup(self.ca_provinces, raw)

    def city_country(self, raw: Optional[str]) -> Optional[str]:
        return self.cities.get(lookup_key(raw))


def _state_lookup(table: Dict[str, str], raw: Optional[str]) -> Optional[str]:
    if not raw:
        return None
    compact = raw.replace(".", "").strip().upper()
    if compact in table:
        return table[compact]
    key = lookup_key(raw)
    for name in table.values():
        if lookup_key(name) == key:
            return name
    return None


def _read_table(path: Path, columns: Tuple[str, str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigurationError(f"Mapping file not found: {path}") from exc
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ConfigurationError(f"{path} is missing columns: {', '.join(missing)}")
    frame = frame[list(columns)].apply(lambda col: col.str.strip())
    return frame[(frame[columns[0]] != "") & (frame[columns[1]] != "")]


def _mapping_file(mappings_dir: Optional[Path], name: str) -> Path:
    if mappings_dir is not None and (Path(mappings_dir) / name).exists():
        return Path(mappings_dir) / name
    return packaged_path("mappings", name)


def load_institution_mappings(
    mappings_dir: Optional[Path] = None,
) -> Tuple[InstitutionMapping, ...]:
    """Load canonical institutions with their variants and pattern rules.

    Raises:
        ConfigurationError: If a variant is claimed by two canonical names.
    """
    table = _read_table(_mapping_file(mappings_dir, INSTITUTIONS_FILE), ("canonical", "variant"))
    patterns_path = _mapping_file(mappings_dir, INSTITUTION_PATTERNS_FILE)
    patterns: Dict[str, List[Pattern[str]]] = {}
    if patterns_path.exists():
        for row in _read_table(patterns_path, ("canonical", "pattern")).itertuples(index=False):
            try:
                patterns.setdefault(row.canonical, []).append(re.compile(row.pattern, re.I))
            except re.error as exc:
                raise ConfigurationError(f"Bad institution pattern {row.pattern!r}: {exc}") from exc

    variants: Dict[str, set] = {}
    owner: Dict[str, str] = {}
    for row in table.itertuples(index=False):
        for name in (row.canonical, row.variant):
            key = lookup_key(name)
            if owner.setdefault(key, row.canonical) != row.canonical:
                raise ConfigurationError(
                    f"Institution variant {name!r} maps to both "
                    f"{owner[key]!r} and {row.canonical!r}"
                )
        variants.setdefault(row.canonical, set()).add(row.variant)

    mappings = tuple(
        InstitutionMapping(
            canonical=canonical,
            variants=frozenset(names),
            patterns=tuple(patterns.get(canonical, ())),
        )
        for canonical, names in sorted(variants.items())
    )
    logger.debug("Loaded %d canonical institutions", len(mappings))
    return mappings


def load_country_mapping(mappings_dir: Optional[Path] = None) -> CountryMapping:
    """Load the country dictionary and US/Canada/city geography tables."""

    countries = _read_table(_mapping_file(mappings_dir, COUNTRIES_FILE), ("variant", "canonical"))
    variants: Dict[str, str] = {}
    for row in countries.itertuples(index=False):
        variants[lookup_key(row.variant)] = row.canonical
    for canonical in set(variants.values()):
        variants.setdefault(lookup_key(canonical), canonical)

    def abbreviations(name: str) -> Dict[str, str]:
        frame = _read_table(_mapping_file(mappings_dir, name), ("abbreviation", "name"))
        return {row.abbreviation.upper(): row.name for row in frame.itertuples(index=False)}

    cities_path = _mapping_file(mappings_dir, CITIES_FILE)
    cities: Dict[str, str] = {}
    if cities_path.exists():
        for row in _read_table(cities_path, ("city", "country")).itertuples(index=False):
            cities[lookup_key(row.city)] = row.country

    return CountryMapping(
        variants=variants,
        us_states=abbreviations(US_STATES_FILE),
        ca_provinces=abbreviations(CA_PROVINCES_FILE),
        cities=cities,
    )


@dataclass(frozen=True)
class MappingTables:
    institutions: Tuple[InstitutionMapping, ...]
    countries: CountryMapping


@lru_cache(maxsize=8)
def load_mappings(mappings_dir: Optional[Path] = None) -> MappingTables:
    """Load every mapping table once per directory."""

    return MappingTables(
        institutions=load_institution_mappings(mappings_dir),
        countries=load_country_mapping(mappings_dir),
    )
