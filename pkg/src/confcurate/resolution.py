"""Author entity resolution: blocking, pair scoring, identity graph, canonical names."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx
import pandas as pd
from nameparser import HumanName
from rapidfuzz.distance import Indel

from .config import packaged_path
from .errors import ConfigurationError, InvalidInputError
from .records import AuthorRecord, PositionCategory

logger = logging.getLogger(__name__)

DEFAULT_POLICY_FILE = "scoring_policy.json"

CAREER_RANK: Dict[PositionCategory, int] = {
    PositionCategory.UNDERGRADUATE_STUDENT: 0,
    PositionCategory.MASTERS_STUDENT: 1,
    PositionCategory.DOCTORAL_STUDENT: 2,
    PositionCategory.POSTDOCTORAL: 3,
    PositionCategory.ASSISTANT_PROFESSOR: 4,
    PositionCategory.ASSOCIATE_PROFESSOR: 5,
    PositionCategory.FULL_PROFESSOR: 6,
}


@dataclass(frozen=True)
class NameParts:
    first: str = ""
    last: str = ""
    middle_initial: Optional[str] = None
    suffix: Optional[str] = None
    middle: str = ""

    @property
    def first_is_initial(self) -> bool:
        return len(_letters(self.first)) == 1


def _letters(text: str) -> str:
    return re.sub(r"[^\w]", "", text or "")


def parse_name(normalized: str) -> NameParts:
    """Split a normalized name into first, last, middle initial and suffix.

    Handles "Last, First" and "First Last"; a single token is taken as the last name.

    Raises:
        InvalidInputError: If ``normalized`` is empty.
    """
    text = " ".join((normalized or "").split())
    if not text:
        raise InvalidInputError("Cannot parse an empty name")
    if len(text.replace(",", " ").split()) == 1:
        return NameParts(last=text.strip(" ,"))

    human = HumanName(text)
    first = human.first or ""
    last = human.last or ""
    if not first and human.title and last:
        # "Dean Smith": nameparser reads the given name as a title.
        first = human.title
    if not last:
        first, last = "", first
    middle = human.middle or ""
    middle_letters = _letters(middle)
    return NameParts(
        first=first,
        last=last,
        middle_initial=middle_letters[0].upper() if middle_letters else None,
        suffix=human.suffix or None,
        middle=middle,
    )


def block_key(parts: NameParts) -> str:
    """``first_initial|last`` in lowercase; ``_`` stands in for a missing first name."""

    first = _letters(parts.first)
    initial = first[0].lower() if first else "_"
    return f"{initial}|{parts.last.lower()}"


def _sorted_tokens(text: str) -> str:
    return " ".join(sorted(text.split()))


def token_sort_ratio(a: str, b: str) -> int:
    """Indel similarity of the token-sorted strings, scaled to 0-100 and rounded half up.

    Agrees with ``rapidfuzz.fuzz.token_sort_ratio`` without a processor, but rounds with
    integer arithmetic so scores are exact.
    """
    left, right = _sorted_tokens(a), _sorted_tokens(b)
    total = len(left) + len(right)
    if total == 0:
        return 100
    distance = Indel.distance(left, right)
    return (200 * (total - distance) + total) // (2 * total)


def comparison_form(name: str) -> str:
    """Lowercase with punctuation replaced by spaces, for similarity scoring."""

    return " ".join(re.sub(r"[^\w\s]", " ", name.lower()).split())


def _initial_form(parts: NameParts) -> str:
    tokens = [_letters(parts.first)[:1], parts.middle_initial or "", parts.last, parts.suffix or ""]
    return comparison_form(" ".join(t for t in tokens if t))


def initial_compatible(a: NameParts, b: NameParts) -> bool:
    """One first name is a bare initial equal to the other's first initial."""

    fa, fb = _letters(a.first).lower(), _letters(b.first).lower()
    if not fa or not fb or not (a.first_is_initial or b.first_is_initial):
        return False
    return fa[0] == fb[0]


@dataclass(frozen=True)
class ScoringPolicy:
    threshold: int = 90
    middle_initial_match: int = 4
    middle_initial_conflict: int = -10
    shared_institution: int = 4
    career_order_violation: int = -10
    restricted_surnames: FrozenSet[str] = frozenset(
        {"lee", "kim", "park", "chen", "wang", "liu", "zhang"}
    )

    def __post_init__(self) -> None:
        folded = frozenset(s.casefold() for s in self.restricted_surnames)
        object.__setattr__(self, "restricted_surnames", folded)
        if not 0 <= self.threshold <= 100:
            raise ConfigurationError("scoring threshold must be in [0, 100]")

    def is_restricted(self, surname: str) -> bool:
        return surname.casefold() in self.restricted_surnames


def load_scoring_policy(path: Optional[Path] = None) -> ScoringPolicy:
    """Load a scoring policy JSON file (packaged default when ``path`` is None)."""

    path = Path(path) if path is not None else packaged_path(DEFAULT_POLICY_FILE)
    try:
        data: Dict[str, Any] = json.loads(path.read_text(encoding="utf-8"))
        return ScoringPolicy(
            threshold=int(data.get("threshold", 90)),
            middle_initial_match=int(data.get("middle_initial_match", 4)),
            middle_initial_conflict=int(data.get("middle_initial_conflict", -10)),
            shared_institution=int(data.get("shared_institution", 4)),
            career_order_violation=int(data.get("career_order_violation", -10)),
            restricted_surnames=frozenset(data.get("restricted_surnames", [])),
        )
    except FileNotFoundError as exc:
        raise ConfigurationError(f"Scoring policy not found: {path}") from exc
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"Invalid scoring policy {path}: {exc}") from exc


@dataclass
class MatchContext:
    """Per-variant evidence: canonical institutions and positions held by year."""

    institutions: Dict[str, FrozenSet[str]] = field(default_factory=dict)
    positions_by_year: Dict[str, Dict[int, FrozenSet[PositionCategory]]] = field(
        default_factory=dict
    )

    @classmethod
    def from_records(cls, records: Iterable[AuthorRecord]) -> "MatchContext":
        institutions: Dict[str, Set[str]] = defaultdict(set)
        positions: Dict[str, Dict[int, Set[PositionCategory]]] = defaultdict(
            lambda: defaultdict(set)
        )
        for record in records:
            name = record.normalized_name
            if record.institution:
                institutions[name].add(record.institution)
            positions[name][record.year].add(PositionCategory(record.position_category))
        return cls(
            institutions={k: frozenset(v) for k, v in institutions.items()},
            positions_by_year={
                k: {year: frozenset(cats) for year, cats in v.items()}
                for k, v in positions.items()
            },
        )

    def subset(self, names: Iterable[str]) -> "MatchContext":
        names = set(names)
        return MatchContext(
            institutions={k: v for k, v in self.institutions.items() if k in names},
            positions_by_year={k: v for k, v in self.positions_by_year.items() if k in names},
        )

    def shares_institution(self, a: str, b: str) -> bool:
        return bool(self.institutions.get(a, frozenset()) & self.institutions.get(b, frozenset()))

    def violates_career_order(self, a: str, b: str) -> bool:
        """True when the later-year record holds a strictly lower ranked position."""

        for year_a, cats_a in self.positions_by_year.get(a, {}).items():
            for year_b, cats_b in self.positions_by_year.get(b, {}).items():
                if year_a == year_b:
                    continue
                for cat_a in cats_a:
                    for cat_b in cats_b:
                        if cat_a not in CAREER_RANK or cat_b not in CAREER_RANK:
                            continue
                        earlier, later = (cat_a, cat_b) if year_a < year_b else (cat_b, cat_a)
                        if CAREER_RANK[later] < CAREER_RANK[earlier]:
                            return True
        return False


def score_pair(
    a: str,
    b: str,
    ctx: MatchContext,
    policy: ScoringPolicy,
    parts: Optional[Tuple[NameParts, NameParts]] = None,
) -> int:
    """Multi-factor similarity of two name variants, clamped to [0, 100]."""

    if a == b:
        return 100
    pa, pb = parts or (parse_name(a), parse_name(b))
    restricted = policy.is_restricted(pa.last) or policy.is_restricted(pb.last)
    if restricted:
        fa, fb = _letters(pa.first).casefold(), _letters(pb.first).casefold()
        if pa.first_is_initial or pb.first_is_initial or not fa or fa != fb:
            return 0

    score = token_sort_ratio(comparison_form(a), comparison_form(b))
    if not restricted and initial_compatible(pa, pb):
        score = max(score, token_sort_ratio(_initial_form(pa), _initial_form(pb)))

    if not restricted and pa.middle_initial and pb.middle_initial:
        if pa.middle_initial == pb.middle_initial:
            score += policy.middle_initial_match
        else:
            score += policy.middle_initial_conflict
    if ctx.shares_institution(a, b):
        score += policy.shared_institution
    if ctx.violates_career_order(a, b):
        score += policy.career_order_violation
    return max(0, min(100, score))


def select_canonical(names: Iterable[str]) -> str:
    """Most name parts, then longest, then lexicographically first."""

    ordered = sorted(set(names), key=lambda n: (-len(n.split()), -len(n), n))
    if not ordered:
        raise InvalidInputError("Cannot select a canonical name for an empty cluster")
    return ordered[0]


@dataclass(frozen=True)
class IdentityCluster:
    cluster_id: str
    canonical_name: str
    variants: Tuple[str, ...]
    members: Tuple[str, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cluster_id": self.cluster_id,
            "canonical_name": self.canonical_name,
            "variants": list(self.variants),
            "members": list(self.members),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "IdentityCluster":
        return cls(
            cluster_id=data["cluster_id"],
            canonical_name=data["canonical_name"],
            variants=tuple(data.get("variants") or ()),
            members=tuple(data.get("members") or ()),
        )


def cluster_id_for(member_keys: Iterable[str]) -> str:
    joined = "\n".join(sorted(member_keys))
    return hashlib.sha1(joined.encode("utf-8")).hexdigest()[:16]


def _block_edges(
    job: Tuple[List[str], Dict[str, NameParts], MatchContext, ScoringPolicy, int],
) -> List[Tuple[str, str, int]]:
    names, parsed, ctx, policy, threshold = job
    edges = []
    for a, b in combinations(names, 2):
        score = score_pair(a, b, ctx, policy, parts=(parsed[a], parsed[b]))
        if score >= threshold:
            edges.append((a, b, score))
    return edges


def resolve(
    records: Sequence[AuthorRecord],
    threshold: Optional[int] = None,
    policy: Optional[ScoringPolicy] = None,
    workers: int = 1,
) -> List[IdentityCluster]:
    """Cluster author records into researchers, returned sorted by ``cluster_id``.

    Variants are compared only within their block; pairs scoring at or above
    ``threshold`` (defaulting to the policy's) are linked and each connected
    component of the graph becomes one cluster.
    """
    policy = policy or ScoringPolicy()
    threshold = policy.threshold if threshold is None else threshold
    ctx = MatchContext.from_records(records)

    keys_by_variant: Dict[str, List[str]] = defaultdict(list)
    unnamed: List[AuthorRecord] = []
    for record in records:
        if record.normalized_name.strip():
            keys_by_variant[record.normalized_name].append(record.key)
        else:
            unnamed.append(record)

    parsed = {name: parse_name(name) for name in sorted(keys_by_variant)}
    blocks: Dict[str, List[str]] = defaultdict(list)
    for name, parts in parsed.items():
        blocks[block_key(parts)].append(name)

    jobs = [
        (names, {n: parsed[n] for n in names}, ctx.subset(names), policy, threshold)
        for _, names in sorted(blocks.items())
        if len(names) > 1
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            edge_lists = list(executor.map(_block_edges, jobs, chunksize=64))
    else:
        edge_lists = [_block_edges(job) for job in jobs]

    graph = nx.Graph()
    graph.add_nodes_from(parsed)
    for edges in edge_lists:
        graph.add_weighted_edges_from(edges)

    clusters = []
    for component in nx.connected_components(graph):
        keys = sorted(key for name in component for key in keys_by_variant[name])
        clusters.append(
            IdentityCluster(
                cluster_id=cluster_id_for(keys),
                canonical_name=select_canonical(component),
                variants=tuple(sorted(component)),
                members=tuple(keys),
            )
        )
    for record in unnamed:
        # No usable name: fall back to the raw block, then the record key.
        label = record.name.strip() or record.raw.strip() or record.key
        clusters.append(
            IdentityCluster(
                cluster_id=cluster_id_for([record.key]),
                canonical_name=label,
                variants=(label,),
                members=(record.key,),
            )
        )
    clusters.sort(key=lambda c: c.cluster_id)
    logger.info(
        "Resolved %d author records (%d variants, %d blocks) into %d clusters",
        len(records),
        len(parsed),
        len(blocks),
        len(clusters),
    )
    return clusters


def assign_clusters(records: Sequence[AuthorRecord], clusters: Iterable[IdentityCluster]) -> None:
    """Set ``cluster_id`` on every record from the cluster membership."""

    owner = {key: cluster.cluster_id for cluster in clusters for key in cluster.members}
    for record in records:
        record.cluster_id = owner.get(record.key)


def export_cluster_review(
    clusters: Sequence[IdentityCluster],
    top: int,
    random_n: int,
    seed: int,
    path: Optional[Path] = None,
) -> pd.DataFrame:
    """Largest ``top`` clusters plus ``random_n`` seeded picks from the rest."""

    columns = ["cluster_id", "canonical_name", "records", "variant_count", "variants", "selection"]
    frame = pd.DataFrame(
        [
            {
                "cluster_id": c.cluster_id,
                "canonical_name": c.canonical_name,
                "records": len(c.members),
                "variant_count": len(c.variants),
                "variants": "; ".join(c.variants),
            }
            for c in clusters
        ],
        columns=columns[:-1],
    )
    frame = frame.sort_values(["records", "cluster_id"], ascending=[False, True])
    largest = frame.head(top).assign(selection="largest")
    rest = frame.iloc[len(largest) :]
    picked = rest.sample(n=min(random_n, len(rest)), random_state=seed).sort_values("cluster_id")
    sample = pd.concat([largest, picked.assign(selection="random")], ignore_index=True)
    sample = sample.reindex(columns=columns)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        sample.to_csv(path, index=False, lineterminator="\n")
    return sample
