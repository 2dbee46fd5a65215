"""Time and relation masking projections and the projection hypergraph (layer 1)."""

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Optional

import numpy as np

from .hypergraph import Hypergraph, projection_node, source_node, target_node
from .integration import SimilarityMatrix
from .kg import TemporalKG, TimePoint
from .parsers import parse_relation_pairs

logger = logging.getLogger(__name__)


class ProjectionKind(str, Enum):
    TIME = "time"
    REL = "rel"
    # Raw target entity indexed in the memory bank.
    FULL = "full"


@dataclass(frozen=True)
class Projection:
    """Subset of a target entity's incident facts surviving a mask built from a source entity.

    ``source`` is -1 for ``FULL`` entries, which have no source.
    """

    kind: ProjectionKind
    source: int
    target: int
    retained: tuple[int, ...]
    pid: int

    @property
    def is_empty(self) -> bool:
        return not self.retained


class RelationMap:
    """Cross-graph relation equivalence: target relation label -> source relation labels.

    Without pairs the map is in exact mode, where a target label is
    equivalent only to the identical source label.
    """

    def __init__(self, pairs: Optional[Iterable[tuple[str, str]]] = None):
        self.exact = pairs is None
        self._classes: dict[str, frozenset[str]] = {}
        if pairs is not None:
            grouped: dict[str, set[str]] = {}
            for source_rel, target_rel in pairs:
                grouped.setdefault(target_rel, set()).add(source_rel)
            self._classes = {t: frozenset(s) for t, s in grouped.items()}

    @classmethod
    def from_file(cls, path: str) -> "RelationMap":
        return cls(parse_relation_pairs(path))

    def __len__(self) -> int:
        return len(self._classes)

    def __repr__(self) -> str:
        return "RelationMap(exact)" if self.exact else f"RelationMap({len(self)} target relations)"

    def classes(self, target_relation: str) -> frozenset[str]:
        """Source relation labels a target relation label maps to."""
        if self.exact:
            return frozenset((target_relation,))
        return self._classes.get(target_relation, frozenset())

    def pairs(self) -> list[tuple[str, str]]:
        return sorted((s, t) for t, sources in self._classes.items() for s in sources)


def topk_targets(source: int, similarity: SimilarityMatrix, k: int) -> list[int]:
    """The ``k`` best-scoring targets of a source row; ties by lower handle, k clamped."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    row = similarity.scores[source]
    k = min(k, row.shape[0])
    if k <= similarity.topk.shape[1]:
        return [int(t) for t in similarity.topk[source, :k]]
    return [int(t) for t in np.argsort(-row, kind="stable")[:k]]


def mask_time(
    kg: TemporalKG,
    facts: Iterable[int],
    source_times: Iterable[TimePoint],
) -> tuple[int, ...]:
    """Valid facts with at least one endpoint matching a source time point.

    Two points match when they agree at the coarser of their granularities.
    """
    source_times = tuple(source_times)
    kept = []
    for qid in facts:
        interval = kg.quadruples[qid].interval
        if any(p.matches(s) for p in interval.points() for s in source_times):
            kept.append(qid)
    return tuple(sorted(kept))


def mask_rel(
    kg: TemporalKG,
    facts: Iterable[int],
    source_relations: Iterable[str],
    rel_map: RelationMap,
) -> tuple[int, ...]:
    """Facts whose relation maps into the source relation labels."""
    source_relations = frozenset(source_relations)
    kept = [qid for qid in facts if rel_map.classes(kg.relations[kg.quadruples[qid].rel]) & source_relations]
    return tuple(sorted(kept))


def project_time(
    source: int,
    target: int,
    source_kg: TemporalKG,
    target_kg: TemporalKG,
    pid: int = 0,
) -> Projection:
    """Time-masking projection of ``target`` relative to ``source``."""
    retained = mask_time(target_kg, target_kg.incident(target), source_kg.timepoints(source))
    return Projection(ProjectionKind.TIME, source, target, retained, pid)


def project_rel(
    source: int,
    target: int,
    source_kg: TemporalKG,
    target_kg: TemporalKG,
    rel_map: RelationMap,
    pid: int = 0,
) -> Projection:
    """Relation-masking projection of ``target`` relative to ``source``."""
    retained = mask_rel(target_kg, target_kg.incident(target), source_kg.relation_labels(source), rel_map)
    return Projection(ProjectionKind.REL, source, target, retained, pid)


@dataclass
class ProjectionHypergraph:
    """Layer 1: targets and projections as hypernodes, one hyperedge per source.

    The hyperedge of source ``s`` holds ``s`` itself, its top-k targets and
    the time and relation projection of each of them (in that order).
    """

    k: int
    num_sources: int
    num_targets: int
    projections: tuple[Projection, ...]
    topk: dict[int, tuple[int, ...]]
    layer: Hypergraph

    @cached_property
    def _by_source(self) -> dict[int, tuple[Projection, ...]]:
        grouped: dict[int, list[Projection]] = {}
        for p in self.projections:
            grouped.setdefault(p.source, []).append(p)
        return {s: tuple(ps) for s, ps in grouped.items()}

    def projections_of(self, source: int) -> tuple[Projection, ...]:
        return self._by_source.get(source, ())

    def pair_projections(self, source: int, target: int) -> tuple[Projection, ...]:
        return tuple(p for p in self.projections_of(source) if p.target == target)

    @property
    def empty_count(self) -> int:
        return sum(1 for p in self.projections if p.is_empty)


def build_projection_hypergraph(
    similarity: SimilarityMatrix,
    k: int,
    source_kg: TemporalKG,
    target_kg: TemporalKG,
    rel_map: Optional[RelationMap] = None,
    use_time: bool = True,
    use_rel: bool = True,
) -> ProjectionHypergraph:
    """Project every source's top-k targets and assemble layer 1.

    Args:
        similarity: Source x target CSLS matrix.
        k: Candidate targets per source (clamped to the target count).
        source_kg: Source graph.
        target_kg: Target graph.
        rel_map: Relation equivalence; exact-label when None.
        use_time: Build time projections (otherwise they are kept empty).
        use_rel: Build relation projections (otherwise they are kept empty).

    Returns:
        The projection hypergraph with ``num_sources * k * 2`` projections.
    """
    rel_map = rel_map if rel_map is not None else RelationMap()
    k_eff = min(k, target_kg.num_entities)
    if k_eff < k:
        logger.warning(f"top-k {k} exceeds {target_kg.num_entities} target entities; clamped")
    layer = Hypergraph("projection")
    for t in range(target_kg.num_entities):
        layer.add_hypernode(target_node(t))

    projections: list[Projection] = []
    topk: dict[int, tuple[int, ...]] = {}
    for s in range(source_kg.num_entities):
        tops = tuple(topk_targets(s, similarity, k_eff)) if k_eff else ()
        topk[s] = tops
        source_times = source_kg.timepoints(s)
        source_relations = source_kg.relation_labels(s)
        members = [source_node(s)] + [target_node(t) for t in tops]
        for t in tops:
            facts = target_kg.incident(t)
            time_facts = mask_time(target_kg, facts, source_times) if use_time else ()
            rel_facts = mask_rel(target_kg, facts, source_relations, rel_map) if use_rel else ()
            for kind, retained in ((ProjectionKind.TIME, time_facts), (ProjectionKind.REL, rel_facts)):
                projection = Projection(kind, s, t, retained, len(projections))
                projections.append(projection)
                layer.add_hypernode(projection_node(projection.pid), empty=projection.is_empty)
                members.append(projection_node(projection.pid))
        layer.add_hyperedge(s, members)

    graph = ProjectionHypergraph(k_eff, source_kg.num_entities, target_kg.num_entities, tuple(projections), topk, layer)
    logger.info(
        f"Projection hypergraph: {len(projections)} projections ({graph.empty_count} empty), "
        f"{len(layer.hyperedges)} hyperedges"
    )
    return graph
