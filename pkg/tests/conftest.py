"""Shared fixtures: a synthetic three-year program archive with known ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Set

import pytest

from confcurate.config import IngestConfig, PipelineConfig
from confcurate.ingest import store_snapshot
from confcurate.records import (
    AuthorRecord,
    PageSnapshot,
    PositionCategory,
    PresentationFormat,
    RawPresentation,
)

BASE_URL = "https://archive.example.org/program"
FETCHED_AT = "2025-03-01T00:00:00+00:00"
YEARS = (2007, 2025, 2026)

QUANT_SAVINGS = (
    "We analyze longitudinal survey data from 1,204 households using multilevel models and "
    "regression to estimate effects of matched savings on asset accumulation."
)
QUANT_KINSHIP = (
    "Using administrative data for 15,000 children, propensity score matching estimated the "
    "effect of kinship placement on reunification within two years."
)
QUANT_REVISITED = (
    "A quasi-experimental design with administrative records from three states compares "
    "account holders with a matched comparison group over ten years."
)
QUAL_HOUSING = (
    "An ethnographic account of peer support among mothers in public housing, based on two "
    "years of participant observation and interviews with residents."
)
QUAL_TRUST = (
    "Using focus groups and grounded theory, this study explores how immigrant service "
    "providers build trust with newly arrived families."
)
REVIEW_SCHOOLS = (
    "This systematic review synthesizes 42 studies of school-based mental health interventions "
    "published between 2000 and 2024."
)
MIXED_FOSTER = (
    "This mixed methods study combines a statewide survey with focus groups of youth aging out "
    "of foster care to examine housing stability."
)
THEORY_JUSTICE = (
    "We propose a conceptual framework linking economic justice, human rights, and social work "
    "ethics to guide policy advocacy in practice."
)

SHERRADEN_2007 = "M. Sherraden, Washington University in St. Louis, St. Louis, MO"
SHERRADEN_2025 = (
    "Michael S. Sherraden, PhD, Professor, Washington University in St. Louis, St. Louis, MO"
)
SHERRADEN_2026 = (
    "Michael Sherraden, PhD, Professor, Washington University in St. Louis, St. Louis, MO"
)
BAKER = "Tom Baker, MSW, Clinical Social Worker, Family Services Agency, Denver, CO"
COHEN_2007 = "Rachel Cohen, PhD, Lecturer, Hebrew University of Jerusalem, Jerusalem, Israel"
COHEN_2026 = (
    "Rachel Cohen, PhD, Associate Professor, Hebrew University of Jerusalem, Jerusalem, Israel"
)
KIM_2025 = "Jane Kim, MSW, Doctoral Student, University of Michigan, Ann Arbor, MI"
KIM_2026 = "Jane Kim, PhD, Assistant Professor, University of Michigan, Ann Arbor, MI"
J_KIM = "J. Kim, University of Toronto, Toronto, Canada"
MUNOZ_2025 = "José Muñoz, LCSW, Program Director, Casa Esperanza, Chicago, IL"
MUNOZ_2026 = "Jose Munoz, MSW, Executive Director, Casa Esperanza, Chicago, IL"
PARK = (
    "Ji-Young Park, PhD, Associate Professor, Seoul National University, Seoul, South Korea"
)
CHEN = "Lily Chen, MSW Student, Boston College, Chestnut Hill, MA"
LOPEZ = "Ana Lopez, BSW Student, University of Toronto, Toronto, Canada"


@dataclass
class SyntheticPage:
    slug: str
    title: str
    abstract: Optional[str]
    session_type: str
    authors: List[str]
    label: Optional[str] = None
    exclusion: Optional[str] = None
    overview: bool = False


@dataclass
class SyntheticCorpus:
    corpus_dir: Path
    pages: Dict[int, List[SyntheticPage]]
    identities: Dict[str, Set[str]] = field(default_factory=dict)

    def kept(self, year: Optional[int] = None) -> List[SyntheticPage]:
        return [
            page
            for y, pages in sorted(self.pages.items())
            if year is None or y == year
            for page in pages
            if page.exclusion is None
        ]

    def excluded(self) -> Dict[str, str]:
        return {
            page.title: page.exclusion
            for pages in self.pages.values()
            for page in pages
            if page.exclusion is not None
        }

    @property
    def author_blocks(self) -> int:
        return sum(len(page.authors) for page in self.kept())


PAGES: Dict[int, List[SyntheticPage]] = {
    2007: [
        SyntheticPage(
            "paper101", "Matched Savings and Asset Building", QUANT_SAVINGS, "Paper",
            [SHERRADEN_2007, BAKER], label="Quantitative",
        ),
        SyntheticPage(
            "paper102", "Peer Support in Public Housing", QUAL_HOUSING, "Poster",
            [COHEN_2007], label="Qualitative",
        ),
        SyntheticPage(
            "paper103", "Grant Writing for Agencies", QUAL_TRUST, "Workshop",
            [BAKER], exclusion="workshop_or_keynote",
        ),
        SyntheticPage(
            "paper104", "A Very Brief Note", "Too short to count.", "Paper",
            [BAKER], exclusion="short_abstract",
        ),
    ],
    2025: [
        SyntheticPage(
            "Paper2001", "Savings Effects Over a Decade", QUANT_KINSHIP, "Oral Presentation",
            [SHERRADEN_2025, KIM_2025, MUNOZ_2025], label="Quantitative",
        ),
        SyntheticPage(
            "Paper2002", "School-Based Mental Health: A Systematic Review", REVIEW_SCHOOLS,
            "Poster", [PARK], label="Review",
        ),
        SyntheticPage(
            "Paper2003", "Housing After Foster Care", MIXED_FOSTER, "Oral Presentation",
            [KIM_2025, CHEN, BAKER, LOPEZ], label="MixedMethods",
        ),
        SyntheticPage(
            "Paper2004", "Asset Policy Symposium", QUANT_SAVINGS, "Symposium",
            [SHERRADEN_2025], exclusion="symposium_overview", overview=True,
        ),
        SyntheticPage(
            "Paper2005", "Economic Justice as a Frame", THEORY_JUSTICE, "Oral Presentation",
            [J_KIM], label="TheoreticalOther",
        ),
    ],
    2026: [
        SyntheticPage(
            "Paper3001", "Matched Savings Revisited", QUANT_REVISITED, "Oral Presentation",
            [SHERRADEN_2026, KIM_2026], label="Quantitative",
        ),
        SyntheticPage(
            "Paper3002", "Trust in Immigrant Services", QUAL_TRUST, "Poster",
            [MUNOZ_2026, COHEN_2026], label="Qualitative",
        ),
        SyntheticPage(
            "Paper3003", "Untitled Abstract Placeholder", None, "Oral Presentation",
            [MUNOZ_2026], exclusion="missing_abstract",
        ),
    ],
}

# One surname per person, so filler authors never share a block.
FILLER_AUTHORS = (
    "Alex Rivera, PhD, Assistant Professor, University of Chicago, Chicago, IL",
    "Beth Okafor, PhD, Associate Professor, Boston University, Boston, MA",
    "Carl Lindqvist, PhD, Professor, University of Toronto, Toronto, Canada",
    "Dana Whitfield, MSW, Research Associate, University of Pittsburgh, Pittsburgh, PA",
    "Evan Moreau, PhD Candidate, Columbia University, NY",
    "Fiona Gallagher, PhD, Lecturer, University of Hong Kong, Hong Kong",
    "Grace Adeyemi, MSW, Program Manager, Accra Youth Network, Accra, Ghana",
    "Henry Tanaka, PhD, Associate Dean, University of Southern California, Los Angeles, CA",
)
FILLER_ABSTRACTS = (
    (QUANT_SAVINGS, "Quantitative"),
    (QUAL_HOUSING, "Qualitative"),
    (QUANT_KINSHIP, "Quantitative"),
    (REVIEW_SCHOOLS, "Review"),
    (QUAL_TRUST, "Qualitative"),
    (MIXED_FOSTER, "MixedMethods"),
    (QUANT_REVISITED, "Quantitative"),
    (THEORY_JUSTICE, "TheoreticalOther"),
)


def _filler_pages(year: int) -> List[SyntheticPage]:
    pages = []
    for i, (abstract, label) in enumerate(FILLER_ABSTRACTS):
        n_authors = 1 + i % 3
        session_type = "Poster" if i % 2 else ("Paper" if year <= 2008 else "Oral Presentation")
        pages.append(
            SyntheticPage(
                f"filler{year}x{i + 1}",
                f"Community Practice Study {year}-{i + 1}",
                abstract,
                session_type,
                [FILLER_AUTHORS[(i + k) % len(FILLER_AUTHORS)] for k in range(n_authors)],
                label=label,
            )
        )
    return pages


for _year, _pages in PAGES.items():
    _pages.extend(_filler_pages(_year))

IDENTITIES: Dict[str, Set[str]] = {
    **{block.split(",")[0]: {block.split(",")[0]} for block in FILLER_AUTHORS},
    "Michael S. Sherraden": {"M. Sherraden", "Michael S. Sherraden", "Michael Sherraden"},
    "Tom Baker": {"Tom Baker"},
    "Rachel Cohen": {"Rachel Cohen"},
    "Jane Kim": {"Jane Kim"},
    "J. Kim": {"J. Kim"},
    "Jose Munoz": {"Jose Munoz"},
    "Ji-Young Park": {"Ji-Young Park"},
    "Lily Chen": {"Lily Chen"},
    "Ana Lopez": {"Ana Lopez"},
}


def page_url(year: int, slug: str) -> str:
    return f"{BASE_URL}/{year}/{slug}.html"


def index_url(year: int) -> str:
    return f"{BASE_URL}/{year}/index.html"


def early_index_html(year: int, pages: List[SyntheticPage]) -> str:
    rows = "\n".join(
        f'<tr><td class="paperList"><a href="{p.slug}.html">{p.title}</a></td></tr>'
        for p in pages
    )
    return f"<html><body><table>\n{rows}\n</table></body></html>"


def early_page_html(page: SyntheticPage) -> str:
    authors = "<br/>\n".join(page.authors)
    abstract = (
        f'<tr><td class="abstractBody">{page.abstract}</td></tr>' if page.abstract else ""
    )
    overview = '<tr><td class="componentPapers">Papers</td></tr>' if page.overview else ""
    return (
        "<html><body><table>\n"
        f'<tr><td class="sessionInfo"><b class="type">{page.session_type}</b> '
        '<i class="session">Economic Well-Being</i></td></tr>\n'
        f'<tr><td><span class="abstractTitle">{page.title}</span></td></tr>\n'
        f'<tr><td class="authorBlock">{authors}</td></tr>\n'
        f"{abstract}{overview}\n"
        "</table></body></html>"
    )


def modern_index_html(year: int, pages: List[SyntheticPage]) -> str:
    items = "\n".join(
        f'<div class="itemtitle"><a href="{p.slug}.html#anchor">{p.title}</a></div>'
        for p in pages
    )
    return f"<html><body>\n{items}\n</body></html>"


def modern_page_html(page: SyntheticPage) -> str:
    authors = "\n".join(f'<div class="author">{a}</div>' for a in page.authors)
    abstract = f'<div class="abstract">{page.abstract}</div>' if page.abstract else ""
    overview = '<div class="papers"><a href="x.html">Component</a></div>' if page.overview else ""
    return (
        "<html><body>\n"
        '<div class="session"><a class="sessiontitle">Economic Well-Being</a> '
        f'<span class="sessiontype">{page.session_type}</span></div>\n'
        f'<h2 class="subtitle">{page.title}</h2>\n'
        f'<div class="paperauthors">\n{authors}\n</div>\n'
        f"{abstract}\n{overview}\n"
        "</body></html>"
    )


def page_snapshot(year: int, page: SyntheticPage) -> PageSnapshot:
    body = early_page_html(page) if year <= 2008 else modern_page_html(page)
    return PageSnapshot(url=page_url(year, page.slug), year=year, body=body, fetched_at=FETCHED_AT)


def write_corpus(corpus_dir: Path) -> SyntheticCorpus:
    for year, pages in PAGES.items():
        index_body = early_index_html(year, pages) if year <= 2008 else modern_index_html(
            year, pages
        )
        store_snapshot(
            corpus_dir,
            PageSnapshot(url=index_url(year), year=year, body=index_body, fetched_at=FETCHED_AT),
            "index",
        )
        for page in pages:
            store_snapshot(corpus_dir, page_snapshot(year, page), "presentation")
    return SyntheticCorpus(corpus_dir=corpus_dir, pages=PAGES, identities=IDENTITIES)


@pytest.fixture
def corpus(tmp_path):
    """Synthetic archive snapshots for 2007 (early layout), 2025 and 2026 (modern layout)."""
    return write_corpus(tmp_path / "corpus")


@pytest.fixture
def pipeline_config(corpus, tmp_path):
    """Rules-mode pipeline config over the synthetic corpus."""
    return PipelineConfig(
        corpus_dir=corpus.corpus_dir,
        dataset_dir=tmp_path / "dataset",
        ingest=IngestConfig(years=YEARS),
    )


def author_record(
    name: str,
    index: int = 0,
    source_id: str = "s",
    year: int = 2025,
    institution: Optional[str] = None,
    position: PositionCategory = PositionCategory.UNKNOWN,
    country: Optional[str] = None,
) -> AuthorRecord:
    """A normalized author record with only the fields a test cares about."""
    return AuthorRecord(
        source_id=source_id,
        author_index=index,
        year=year,
        raw=name,
        name=name,
        normalized_name=name,
        degrees=[],
        position=None,
        position_category=position,
        institution_raw=institution,
        institution=institution,
        institution_matched=institution is not None,
        department=None,
        city=None,
        state_raw=None,
        state=None,
        country_raw=country,
        country=country,
    )


def presentation(source_id: str, year: int, n_authors: int = 1) -> RawPresentation:
    return RawPresentation(
        source_id=source_id,
        year=year,
        title=f"Presentation {source_id}",
        abstract=QUANT_SAVINGS,
        format=PresentationFormat.ORAL,
        session_title=None,
        raw_author_blocks=[f"Author {i}, Test University" for i in range(n_authors)],
    )
