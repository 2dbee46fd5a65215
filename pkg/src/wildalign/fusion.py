"""Per-scale interaction and selection, conflict detection and final pair fusion."""

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

from .errors import ReasonerError
from .integration import SimilarityMatrix
from .kg import TemporalKG, entity_context
from .projection import ProjectionHypergraph, RelationMap
from .reasoner import (
    AugmentRequest,
    EntityContext,
    FactEdit,
    Reasoner,
    SelectRequest,
    apply_edits,
    fact_view,
)
from .retrieval import MultiScaleHypergraph
from .utils import bounded_map

logger = logging.getLogger(__name__)

Pair = tuple[int, int]


class ContextBuilder:
    """Builds the fact contexts the reasoner sees for source and target entities.

    Source facts carry their own relation label as class; target facts carry
    the source labels their relation maps to.
    """

    def __init__(
        self,
        source: TemporalKG,
        target: TemporalKG,
        rel_map: Optional[RelationMap] = None,
        max_facts: int = 20,
    ):
        if max_facts < 1:
            raise ValueError(f"max_facts must be >= 1, got {max_facts}")
        self.source_kg = source
        self.target_kg = target
        self.rel_map = rel_map if rel_map is not None else RelationMap()
        self.max_facts = max_facts

    def source(self, entity: int) -> EntityContext:
        kg = self.source_kg
        facts = tuple(
            fact_view(kg, entity, qid, frozenset((kg.relations[kg.quadruples[qid].rel],)))
            for qid in entity_context(entity, kg, self.max_facts)
        )
        return EntityContext(entity, kg.entities[entity], facts)

    def candidate(self, entity: int, facts: Optional[Iterable[int]] = None, score: float = 0.0) -> EntityContext:
        """Context of a target entity, optionally restricted to a fact subset."""
        kg = self.target_kg
        chosen = entity_context(entity, kg, self.max_facts, facts=facts)
        views = tuple(
            fact_view(kg, entity, qid, self.rel_map.classes(kg.relations[kg.quadruples[qid].rel])) for qid in chosen
        )
        return EntityContext(entity, kg.entities[entity], views, score)

    def target_classes(self, relation: str) -> frozenset[str]:
        return self.rel_map.classes(relation)

    def source_classes(self, relation: str) -> frozenset[str]:
        return frozenset((relation,))

    def edit_is_known(self, edit: FactEdit) -> bool:
        """True when the edit's other endpoint is an entity of the edited side's graph."""
        kg = self.source_kg if edit.side == "source" else self.target_kg
        return edit.other in kg.entity_index


@dataclass(frozen=True)
class Candidate:
    """One selectable target of a source hyperedge.

    ``pid`` is the provenance id of the retrieved projection on scale 2.
    """

    target: int
    context: EntityContext
    score: float
    pid: Optional[int] = None


@dataclass
class ScaleLayer:
    """Working copy of one scale: a source context and ordered candidates per source."""

    scale: int
    sources: dict[int, EntityContext]
    candidates: dict[int, tuple[Candidate, ...]]

    @property
    def stage(self) -> str:
        return f"scale-{self.scale}"

    def pairs(self) -> list[tuple[int, int]]:
        """``(source, candidate position)`` in source order, then candidate order."""
        return [(s, i) for s in sorted(self.candidates) for i in range(len(self.candidates[s]))]


def _score(similarity: SimilarityMatrix, source: int, target: int) -> float:
    return float(similarity.scores[source, target])


def build_scale_layers(
    projection_graph: ProjectionHypergraph,
    multiscale: Optional[MultiScaleHypergraph],
    builder: ContextBuilder,
    similarity: SimilarityMatrix,
) -> list[ScaleLayer]:
    """Candidate contexts of every scale.

    Scale 1 offers each top-k target with the union of its projections'
    facts; scale 2 each retrieved projection with its retained facts; scale
    3 each retrieved target with its full context. Without ``multiscale``
    only scale 1 is built.
    """
    sources = {s: builder.source(s) for s in range(projection_graph.num_sources)}
    layer1 = {}
    for s in range(projection_graph.num_sources):
        candidates = []
        for t in projection_graph.topk[s]:
            facts = sorted({q for p in projection_graph.pair_projections(s, t) for q in p.retained})
            score = _score(similarity, s, t)
            candidates.append(Candidate(t, builder.candidate(t, facts, score), score))
        layer1[s] = tuple(candidates)
    layers = [ScaleLayer(1, dict(sources), layer1)]
    if multiscale is None:
        return layers

    layer2, layer3 = {}, {}
    for s in multiscale.sources:
        retrieved = []
        for hit in multiscale.retrieved[s]:
            p = hit.projection
            score = _score(similarity, s, p.target)
            retrieved.append(Candidate(p.target, builder.candidate(p.target, p.retained, score), score, p.pid))
        layer2[s] = tuple(retrieved)
        layer3[s] = tuple(
            Candidate(t, builder.candidate(t, score=_score(similarity, s, t)), _score(similarity, s, t))
            for t in multiscale.layer3_targets(s)
        )
    layers.append(ScaleLayer(2, dict(sources), layer2))
    layers.append(ScaleLayer(3, dict(sources), layer3))
    return layers


def _augment_pair(reasoner: Reasoner, request: AugmentRequest) -> Optional[list[FactEdit]]:
    try:
        return reasoner.augment(request)
    except ReasonerError as e:
        logger.warning(f"Skipping augmentation of {request.source.label!r} / {request.candidate.label!r}: {e}")
        return None


def intra_scale_interaction(
    layer: ScaleLayer,
    reasoner: Reasoner,
    budget: int,
    builder: ContextBuilder,
    max_in_flight: int = 1,
) -> ScaleLayer:
    """Let the reasoner supplement and trim facts of the first ``budget`` pairs.

    Candidate edits change that candidate's working context; source edits
    change the layer's working copy of the source. The graphs themselves are
    never touched. Edits naming an unknown entity are dropped, and a pair
    whose reasoner call fails passes through unchanged.

    Returns:
        A new ScaleLayer; ``layer`` is left as it was.
    """
    pairs = layer.pairs()[: max(budget, 0)]
    if not pairs:
        return layer
    requests = [
        AugmentRequest(layer.sources[s], layer.candidates[s][i].context, layer.stage) for s, i in pairs
    ]
    replies = bounded_map(lambda r: _augment_pair(reasoner, r), requests, max_in_flight)

    sources = dict(layer.sources)
    candidates = {s: list(cs) for s, cs in layer.candidates.items()}
    applied = dropped = 0
    for (s, i), edits in zip(pairs, replies):
        if not edits:
            continue
        known = [e for e in edits if builder.edit_is_known(e)]
        dropped += len(edits) - len(known)
        on_source = [e for e in known if e.side == "source"]
        on_candidate = [e for e in known if e.side == "candidate"]
        if on_source:
            sources[s] = apply_edits(sources[s], on_source, builder.source_classes)
        if on_candidate:
            candidate = candidates[s][i]
            context = apply_edits(candidate.context, on_candidate, builder.target_classes)
            candidates[s][i] = replace(candidate, context=context)
        applied += len(known)
    if dropped:
        logger.warning(f"Dropped {dropped} edits naming unknown entities on scale {layer.scale}")
    logger.info(f"Scale {layer.scale}: {len(pairs)} augment calls, {applied} edits applied")
    return ScaleLayer(layer.scale, sources, {s: tuple(cs) for s, cs in candidates.items()})


@dataclass(frozen=True)
class ScaleAlignment:
    """Pairs selected on one scale; at most one target per source."""

    scale: int
    pairs: Mapping[int, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.pairs)

    def as_set(self) -> frozenset[Pair]:
        return frozenset(self.pairs.items())


def _select(reasoner: Reasoner, request: SelectRequest) -> Optional[int]:
    try:
        return reasoner.select(request)
    except ReasonerError as e:
        logger.warning(f"Selection for {request.source.label!r} ({request.stage}) failed: {e}")
        return None


def fusion_select_scale(
    layer: ScaleLayer,
    reasoner: Reasoner,
    budget: Optional[int] = None,
    max_in_flight: int = 1,
) -> ScaleAlignment:
    """One reasoner selection per source hyperedge of ``layer``.

    Sources without candidates are skipped; with a ``budget`` only the
    first ``budget`` sources (in handle order) are asked.
    """
    asked = [s for s in sorted(layer.candidates) if layer.candidates[s]]
    if budget is not None:
        asked = asked[: max(budget, 0)]
    requests = [
        SelectRequest(layer.sources[s], tuple(c.context for c in layer.candidates[s]), layer.stage) for s in asked
    ]
    choices = bounded_map(lambda r: _select(reasoner, r), requests, max_in_flight)
    pairs = {s: layer.candidates[s][choice].target for s, choice in zip(asked, choices) if choice is not None}
    logger.info(f"Scale {layer.scale}: {len(pairs)} of {len(asked)} sources selected a target")
    return ScaleAlignment(layer.scale, pairs)


@dataclass(frozen=True)
class ConflictSet:
    """Pairs whose source is aligned to different targets on different scales."""

    pairs: frozenset[Pair] = frozenset()

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def groups(self) -> dict[int, tuple[int, ...]]:
        """Conflicting targets per source, sorted by handle."""
        grouped: dict[int, set[int]] = {}
        for s, t in self.pairs:
            grouped.setdefault(s, set()).add(t)
        return {s: tuple(sorted(ts)) for s, ts in sorted(grouped.items())}


def detect_conflicts(*alignments: ScaleAlignment) -> ConflictSet:
    """Every pair whose source has another pair with a different target on some scale."""
    targets: dict[int, set[int]] = {}
    for alignment in alignments:
        for s, t in alignment.pairs.items():
            targets.setdefault(s, set()).add(t)
    conflicted = frozenset((s, t) for s, ts in targets.items() if len(ts) > 1 for t in ts)
    if conflicted:
        logger.info(f"{len({s for s, _ in conflicted})} sources conflict across scales")
    return ConflictSet(conflicted)


def resolve_conflicts(
    conflicts: ConflictSet,
    reasoner: Reasoner,
    builder: ContextBuilder,
    similarity: SimilarityMatrix,
    budget: Optional[int] = None,
    max_in_flight: int = 1,
) -> dict[int, int]:
    """One selection per conflicted source among its conflicting targets (full contexts)."""
    groups = list(conflicts.groups.items())
    if budget is not None:
        groups = groups[: max(budget, 0)]
    requests = [
        SelectRequest(
            builder.source(s),
            tuple(builder.candidate(t, score=_score(similarity, s, t)) for t in targets),
            "conflict",
        )
        for s, targets in groups
    ]
    choices = bounded_map(lambda r: _select(reasoner, r), requests, max_in_flight)
    return {s: targets[choice] for (s, targets), choice in zip(groups, choices) if choice is not None}


def fuse_final(scales: Sequence[ScaleAlignment], resolved: Mapping[int, int]) -> frozenset[Pair]:
    """Pairs agreed on by every scale, plus the conflict-resolved pairs."""
    if not scales:
        agreed: frozenset[Pair] = frozenset()
    else:
        agreed = frozenset.intersection(*(a.as_set() for a in scales))
    return agreed | frozenset(resolved.items())
