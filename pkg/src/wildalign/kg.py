"""Temporal knowledge graph model: time points, intervals, facts and graphs."""

import datetime
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, NamedTuple, Optional, Sequence

import networkx as nx
import numpy as np

from .errors import IntegrityError, ResolutionError

logger = logging.getLogger(__name__)

UNKNOWN_LITERAL = "####"

_LITERAL_RE = re.compile(r"^(\d{4})(?:-(\d{2})(?:-(\d{2}))?)?$")


class Granularity(str, Enum):
    """Resolution of a time point."""

    YEAR = "year"
    MONTH = "month"
    DATE = "date"
    UNKNOWN = "unknown"

    @property
    def fineness(self) -> int:
        return _FINENESS[self]


_FINENESS = {
    Granularity.UNKNOWN: 0,
    Granularity.YEAR: 1,
    Granularity.MONTH: 2,
    Granularity.DATE: 3,
}

GRANULARITIES = (Granularity.YEAR, Granularity.MONTH, Granularity.DATE)


def coarser(a: Granularity, b: Granularity) -> Granularity:
    """Return the coarser of two granularities (Unknown is coarsest)."""
    return a if a.fineness <= b.fineness else b


@dataclass(frozen=True)
class TimePoint:
    """A calendar point at year, month or date resolution, or Unknown."""

    year: Optional[int] = None
    month: Optional[int] = None
    day: Optional[int] = None

    def __post_init__(self):
        if self.year is None:
            if self.month is not None or self.day is not None:
                raise IntegrityError("month or day given without a year")
            return
        if self.year < 1:
            raise IntegrityError(f"year out of range: {self.year}")
        if self.day is not None and self.month is None:
            raise IntegrityError(f"day {self.day} given without a month")
        if self.month is not None and not 1 <= self.month <= 12:
            raise IntegrityError(f"month out of range: {self.month}")
        if self.day is not None:
            try:
                datetime.date(self.year, self.month, self.day)
            except ValueError as e:
                raise IntegrityError(
                    f"not a calendar date: {self.year:04d}-{self.month:02d}-{self.day:02d}"
                ) from e

    @classmethod
    def parse(cls, literal: str) -> "TimePoint":
        """Parse ``YYYY``, ``YYYY-MM``, ``YYYY-MM-DD`` or ``####``.

        Raises:
            ValueError: If the literal does not follow the grammar or is not
                a real calendar point.
        """
        if literal == UNKNOWN_LITERAL:
            return cls()
        match = _LITERAL_RE.match(literal)
        if match is None:
            raise ValueError(f"invalid time literal: {literal!r}")
        year, month, day = (int(g) if g is not None else None for g in match.groups())
        return cls(year, month, day)

    @property
    def granularity(self) -> Granularity:
        if self.year is None:
            return Granularity.UNKNOWN
        if self.month is None:
            return Granularity.YEAR
        if self.day is None:
            return Granularity.MONTH
        return Granularity.DATE

    @property
    def is_known(self) -> bool:
        return self.year is not None

    @property
    def literal(self) -> str:
        if self.year is None:
            return UNKNOWN_LITERAL
        text = f"{self.year:04d}"
        if self.month is not None:
            text += f"-{self.month:02d}"
        if self.day is not None:
            text += f"-{self.day:02d}"
        return text

    def key(self, granularity: Granularity) -> Optional[tuple[int, ...]]:
        """Coordinates of this point at ``granularity``, or None when it is coarser."""
        if granularity is Granularity.UNKNOWN or self.granularity.fineness < granularity.fineness:
            return None
        if granularity is Granularity.YEAR:
            return (self.year,)
        if granularity is Granularity.MONTH:
            return (self.year, self.month)
        return (self.year, self.month, self.day)

    def truncate(self, granularity: Granularity) -> "TimePoint":
        """Drop components finer than ``granularity``."""
        key = self.key(coarser(self.granularity, granularity))
        if key is None:
            return TimePoint()
        return TimePoint(*key)

    def matches(self, other: "TimePoint") -> bool:
        """True when both points agree at the coarser of their granularities."""
        shared = coarser(self.granularity, other.granularity)
        if shared is Granularity.UNKNOWN:
            return False
        return self.key(shared) == other.key(shared)

    def sort_key(self) -> tuple[int, int, int]:
        return (self.year or 0, self.month or 0, self.day or 0)

    def __str__(self) -> str:
        return self.literal


UNKNOWN_TIME = TimePoint()


@dataclass(frozen=True)
class TimeInterval:
    """Validity interval ``[begin, end]``; both endpoints Unknown means no time."""

    begin: TimePoint = UNKNOWN_TIME
    end: TimePoint = UNKNOWN_TIME

    def __post_init__(self):
        if self.begin.is_known and self.end.is_known:
            shared = coarser(self.begin.granularity, self.end.granularity)
            if self.begin.key(shared) > self.end.key(shared):
                raise IntegrityError(f"interval begins after it ends: [{self.begin}, {self.end}]")

    @property
    def is_none(self) -> bool:
        return not (self.begin.is_known or self.end.is_known)

    def points(self) -> tuple[TimePoint, ...]:
        """Known endpoints, begin first."""
        return tuple(p for p in (self.begin, self.end) if p.is_known)

    def years(self) -> frozenset[int]:
        return frozenset(p.year for p in self.points())

    def sort_key(self) -> tuple[int, int, int]:
        points = self.points()
        return points[0].sort_key() if points else (0, 0, 0)


NO_TIME = TimeInterval()


@dataclass(frozen=True)
class Quadruple:
    """A fact ``(head, rel, tail, interval)`` over entity and relation handles."""

    head: int
    rel: int
    tail: int
    interval: TimeInterval = NO_TIME

    @property
    def is_valid(self) -> bool:
        """A quadruple is valid (a temporal fact) when it carries any time."""
        return not self.interval.is_none


@dataclass(frozen=True)
class TimeSpan:
    """Year range defining the ordered year, month and date index sets.

    Month indices count every month of every year in the span (January of
    the first year is 0); date indices count every day from 1 January of
    the first year.
    """

    first_year: int
    last_year: int

    def __post_init__(self):
        if self.first_year > self.last_year:
            raise IntegrityError(f"empty time span {self.first_year}..{self.last_year}")

    @classmethod
    def covering(cls, *graphs: "TemporalKG") -> Optional["TimeSpan"]:
        """Smallest span containing every known time point of ``graphs``."""
        years = [g.year_range for g in graphs if g.year_range is not None]
        if not years:
            return None
        return cls(min(y[0] for y in years), max(y[1] for y in years))

    @property
    def years(self) -> int:
        return self.last_year - self.first_year + 1

    def size(self, granularity: Granularity) -> int:
        if granularity is Granularity.YEAR:
            return self.years
        if granularity is Granularity.MONTH:
            return 12 * self.years
        if granularity is Granularity.DATE:
            return _day_ordinal(self.last_year, 12, 31) - _day_ordinal(self.first_year, 1, 1) + 1
        return 0

    def index(self, point: TimePoint, granularity: Granularity) -> Optional[int]:
        key = point.key(granularity)
        if key is None or not self.first_year <= key[0] <= self.last_year:
            return None
        if granularity is Granularity.YEAR:
            return key[0] - self.first_year
        if granularity is Granularity.MONTH:
            return (key[0] - self.first_year) * 12 + key[1] - 1
        return _day_ordinal(*key) - _day_ordinal(self.first_year, 1, 1)


def _day_ordinal(year: int, month: int, day: int) -> int:
    return datetime.date(year, month, day).toordinal()


class TemporalKG:
    """Immutable temporal knowledge graph ``G = (E, R, T, Q)``.

    Entity and relation handles are dense indices into ``entities`` and
    ``relations``. The facts are also held in a frozen networkx
    ``MultiDiGraph`` keyed by quadruple index.

    Args:
        entities: Entity labels; position is the handle.
        relations: Relation labels; position is the handle.
        quadruples: Facts over those handles.
        name: Graph name used in messages ("source", "target", ...).

    Raises:
        IntegrityError: If a label table has duplicates or a quadruple
            references an unknown handle.
    """

    def __init__(
        self,
        entities: Sequence[str],
        relations: Sequence[str],
        quadruples: Iterable[Quadruple],
        name: str = "graph",
    ):
        self.name = name
        self.entities = tuple(entities)
        self.relations = tuple(relations)
        self.entity_index = _label_table(self.entities, "entity", name)
        self.relation_index = _label_table(self.relations, "relation", name)
        self.quadruples = tuple(quadruples)

        incident: list[set[int]] = [set() for _ in self.entities]
        graph = nx.MultiDiGraph(name=name)
        graph.add_nodes_from((i, {"label": label}) for i, label in enumerate(self.entities))
        for qid, q in enumerate(self.quadruples):
            for handle in (q.head, q.tail):
                if not 0 <= handle < len(self.entities):
                    raise IntegrityError(f"{name}: fact {qid} references unknown entity handle {handle}")
            if not 0 <= q.rel < len(self.relations):
                raise IntegrityError(f"{name}: fact {qid} references unknown relation handle {q.rel}")
            incident[q.head].add(qid)
            incident[q.tail].add(qid)
            graph.add_edge(q.head, q.tail, key=qid, rel=q.rel, interval=q.interval)
        self._incident = tuple(tuple(sorted(s)) for s in incident)
        self.graph = nx.freeze(graph)

    @classmethod
    def from_facts(
        cls,
        facts: Iterable[tuple[str, str, str, TimeInterval]],
        name: str = "graph",
        entities: Sequence[str] = (),
    ) -> "TemporalKG":
        """Build a graph from labelled facts; handles follow first appearance.

        ``entities`` pre-registers labels (in order) so that isolated
        entities keep a handle.
        """
        entity_index: dict[str, int] = {}
        relation_index: dict[str, int] = {}
        for label in entities:
            entity_index.setdefault(label, len(entity_index))
        quadruples = []
        for head, rel, tail, interval in facts:
            h = entity_index.setdefault(head, len(entity_index))
            r = relation_index.setdefault(rel, len(relation_index))
            t = entity_index.setdefault(tail, len(entity_index))
            quadruples.append(Quadruple(h, r, t, interval))
        return cls(list(entity_index), list(relation_index), quadruples, name=name)

    def __len__(self) -> int:
        return len(self.quadruples)

    def __repr__(self) -> str:
        return (
            f"TemporalKG({self.name!r}, entities={self.num_entities}, "
            f"relations={self.num_relations}, facts={len(self)})"
        )

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def resolve(self, label: str) -> int:
        """Entity handle for ``label``.

        Raises:
            ResolutionError: If the label is not an entity of this graph.
        """
        try:
            return self.entity_index[label]
        except KeyError:
            raise ResolutionError(label, self.name) from None

    def incident(self, entity: int) -> tuple[int, ...]:
        """Indices of the quadruples in which ``entity`` is head or tail."""
        return self._incident[entity]

    def connecting(self, u: int, v: int) -> tuple[int, ...]:
        """Indices of the quadruples linking ``u`` and ``v`` in either direction."""
        keys = set(self.graph.get_edge_data(u, v, default={}))
        keys.update(self.graph.get_edge_data(v, u, default={}))
        return tuple(sorted(keys))

    @cached_property
    def undirected(self) -> nx.Graph:
        """Undirected entity graph without self-loops (walk topology)."""
        graph = nx.Graph()
        graph.add_nodes_from(range(self.num_entities))
        graph.add_edges_from((q.head, q.tail) for q in self.quadruples if q.head != q.tail)
        return nx.freeze(graph)

    @cached_property
    def _neighbors(self) -> tuple[tuple[int, ...], ...]:
        g = self.undirected
        return tuple(tuple(sorted(g.adj[e])) for e in range(self.num_entities))

    def neighbors(self, entity: int) -> tuple[int, ...]:
        """Sorted undirected neighbours of ``entity`` (self excluded)."""
        return self._neighbors[entity]

    @cached_property
    def valid_count(self) -> int:
        return sum(1 for q in self.quadruples if q.is_valid)

    @cached_property
    def year_range(self) -> Optional[tuple[int, int]]:
        years = [p.year for q in self.quadruples for p in q.interval.points()]
        if not years:
            return None
        return (min(years), max(years))

    @cached_property
    def span(self) -> Optional[TimeSpan]:
        return TimeSpan.covering(self)

    def timepoints(self, entity: int) -> frozenset[TimePoint]:
        """Known endpoints of the facts ``entity`` takes part in."""
        return frozenset(p for qid in self.incident(entity) for p in self.quadruples[qid].interval.points())

    def relation_labels(self, entity: int) -> frozenset[str]:
        return frozenset(self.relations[self.quadruples[qid].rel] for qid in self.incident(entity))

    def year_span(self, entity: int) -> Optional[tuple[int, int]]:
        """Entity-level ``[min, max]`` year span over its valid facts."""
        years = [p.year for p in self.timepoints(entity)]
        if not years:
            return None
        return (min(years), max(years))

    def temporal_relations(self, entity: int) -> frozenset[str]:
        """Distinct relation labels of the valid facts of ``entity``."""
        return frozenset(
            self.relations[self.quadruples[qid].rel]
            for qid in self.incident(entity)
            if self.quadruples[qid].is_valid
        )


def _label_table(labels: tuple[str, ...], kind: str, graph: str) -> dict[str, int]:
    table: dict[str, int] = {}
    for i, label in enumerate(labels):
        if not label or label != label.strip():
            raise IntegrityError(f"{graph}: {kind} label {label!r} is empty or not canonical")
        if label in table:
            raise IntegrityError(
                f"{graph}: {kind} label {label!r} maps to handles {table[label]} and {i}"
            )
        table[label] = i
    return table


def decompose_timepoint(
    point: TimePoint, granularity: Granularity, span: Optional[TimeSpan]
) -> Optional[int]:
    """Position of ``point`` among the ``granularity`` steps of ``span``.

    Returns None when the point is Unknown, coarser than ``granularity``
    (a year-only point has no month index) or outside the span.
    """
    if span is None:
        return None
    return span.index(point, granularity)


def fact_indices(
    kg: TemporalKG,
    fact_ids: Iterable[int],
    granularity: Granularity,
    span: Optional[TimeSpan] = None,
) -> frozenset[int]:
    """Time indices at ``granularity`` of the endpoints of the given facts."""
    span = span if span is not None else kg.span
    indices = set()
    for qid in fact_ids:
        for point in kg.quadruples[qid].interval.points():
            index = decompose_timepoint(point, granularity, span)
            if index is not None:
                indices.add(index)
    return frozenset(indices)


def active_indices(
    entity: int,
    granularity: Granularity,
    kg: TemporalKG,
    span: Optional[TimeSpan] = None,
) -> frozenset[int]:
    """Active time indices at one granularity of ``entity`` (both roles, endpoints only)."""
    return fact_indices(kg, kg.incident(entity), granularity, span)


def temporal_signature(
    entity: int,
    granularity: Granularity,
    kg: TemporalKG,
    span: Optional[TimeSpan] = None,
) -> np.ndarray:
    """Binary vector marking the ``granularity`` time indices ``entity`` is active at.

    Args:
        entity: Entity handle.
        granularity: Year, Month or Date.
        kg: The graph the entity belongs to.
        span: Index space; defaults to the graph's own span. Pass a span
            shared by two graphs to make their signatures comparable.

    Returns:
        ``uint8`` array as long as that index set (empty when the graph has no time).
    """
    span = span if span is not None else kg.span
    size = span.size(granularity) if span is not None else 0
    signature = np.zeros(size, dtype=np.uint8)
    for index in active_indices(entity, granularity, kg, span):
        signature[index] = 1
    return signature


def entity_context(
    entity: int,
    kg: TemporalKG,
    max_facts: int,
    facts: Optional[Iterable[int]] = None,
) -> list[int]:
    """Incident fact indices ordered valid-first, then by begin time, then relation label.

    Timeless facts keep their relative order by relation label at the end.
    The list is truncated to ``max_facts``. ``facts`` restricts the
    ordering to a subset of the incident facts (a projection).
    """

    def order(qid: int):
        q = kg.quadruples[qid]
        return (0 if q.is_valid else 1, q.interval.sort_key(), kg.relations[q.rel], qid)

    chosen = kg.incident(entity) if facts is None else facts
    return sorted(chosen, key=order)[:max_facts]


class SeedPair(NamedTuple):
    source: int
    target: int
    train: bool = True


@dataclass(frozen=True)
class SeedAlignment:
    """Reference pairs between a source and a target graph with a train/test flag.

    The train split must be one-to-one; the test split may repeat sources
    or targets.
    """

    pairs: tuple[SeedPair, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(SeedPair(*p) for p in self.pairs))
        sources, targets = set(), set()
        for pair in self.pairs:
            if not pair.train:
                continue
            if pair.source in sources:
                raise IntegrityError(f"source entity {pair.source} appears twice in the train split")
            if pair.target in targets:
                raise IntegrityError(f"target entity {pair.target} appears twice in the train split")
            sources.add(pair.source)
            targets.add(pair.target)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def train_pairs(self) -> list[tuple[int, int]]:
        return [(p.source, p.target) for p in self.pairs if p.train]

    @property
    def test_pairs(self) -> list[tuple[int, int]]:
        return [(p.source, p.target) for p in self.pairs if not p.train]


def split_seeds(seeds: SeedAlignment, train_ratio: float, seed: int = 0) -> SeedAlignment:
    """Reassign the train/test flags at random, keeping the train split one-to-one.

    Args:
        seeds: Alignment whose flags are replaced.
        train_ratio: Fraction of pairs to flag as train, in [0, 1].
        seed: RNG seed.

    Returns:
        A new SeedAlignment with the same pairs in the same order.
    """
    if not 0.0 <= train_ratio <= 1.0:
        raise ValueError(f"train_ratio must lie in [0, 1], got {train_ratio!r}")
    rng = np.random.default_rng(seed)
    wanted = round(train_ratio * len(seeds))
    flags = [False] * len(seeds)
    used_sources, used_targets = set(), set()
    for i in rng.permutation(len(seeds)):
        if wanted == 0:
            break
        pair = seeds.pairs[i]
        if pair.source in used_sources or pair.target in used_targets:
            continue
        flags[i] = True
        used_sources.add(pair.source)
        used_targets.add(pair.target)
        wanted -= 1
    return SeedAlignment(tuple(SeedPair(p.source, p.target, f) for p, f in zip(seeds.pairs, flags)))
