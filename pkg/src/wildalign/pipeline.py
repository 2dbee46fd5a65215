"""Iterative alignment: encode, project, retrieve, reason, fuse, and feed pairs back."""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .config import AlignConfig
from .errors import RoundAbortedError, WildAlignError
from .evaluation import RankReport, final_alignment, inject_noise, rank_pairs
from .fusion import (
    ContextBuilder,
    ScaleAlignment,
    build_scale_layers,
    detect_conflicts,
    fuse_final,
    fusion_select_scale,
    intra_scale_interaction,
    resolve_conflicts,
)
from .integration import (
    TEMPORAL_VIEWS,
    AlignmentModel,
    FileNameProvider,
    HashingNameProvider,
    NameProvider,
    SimilarityMatrix,
    TrainingResult,
    csls_similarity,
    embed_names,
    train_alignment,
)
from .kg import SeedAlignment, TemporalKG, split_seeds
from .projection import ProjectionHypergraph, RelationMap, build_projection_hypergraph
from .reasoner import MockReasoner, Reasoner, RemoteReasoner, ReplayReasoner, TranscriptLog
from .retrieval import MemoryBank, build_memory_bank, build_multiscale
from .structural import StructuralEmbeddings, build_corpus, merge_graphs, train_structural_embeddings

logger = logging.getLogger(__name__)

Pair = tuple[int, int]


def build_reasoner(config: AlignConfig) -> Reasoner:
    """The reasoner named by ``config.reasoner``."""
    if config.reasoner == "mock":
        return MockReasoner()
    if config.reasoner == "replay":
        return ReplayReasoner(config.transcript)
    transcript = TranscriptLog(config.transcript) if config.transcript else None
    return RemoteReasoner(
        config.reasoner_url,
        config.reasoner_model,
        token=config.reasoner_token,
        timeout=config.reasoner_timeout,
        max_attempts=config.reasoner_max_attempts,
        transcript=transcript,
    )


def build_name_provider(config: AlignConfig) -> NameProvider:
    if config.name_vectors:
        return FileNameProvider(config.name_vectors)
    return HashingNameProvider(config.name_dim)


def build_relation_map(config: AlignConfig) -> RelationMap:
    return RelationMap.from_file(config.relation_map) if config.relation_map else RelationMap()


def active_views(config: AlignConfig) -> tuple[str, ...]:
    temporal = tuple(TEMPORAL_VIEWS[g] for g in config.active_granularities)
    return ("name",) + temporal + ("structural",)


@dataclass
class Encoding:
    """Encoders and similarity of one round."""

    corpus: list[list[str]]
    structural: StructuralEmbeddings
    model: AlignmentModel
    training: TrainingResult
    fused_source: np.ndarray
    fused_target: np.ndarray
    similarity: SimilarityMatrix


def encode(
    source: TemporalKG,
    target: TemporalKG,
    names: tuple[np.ndarray, np.ndarray],
    anchors: Sequence[Pair],
    config: AlignConfig,
    previous: Optional[AlignmentModel] = None,
    noise_seed: int = 0,
) -> Encoding:
    """Train both encoders on the anchor pairs and score every source/target pair.

    Walks run on the joint graph in which anchored targets are collapsed
    onto their sources. With ``config.noise_ratio`` the fused embeddings of
    both graphs are perturbed before scoring.
    """
    joint, source_map, target_map = merge_graphs(source, target, anchors)
    corpus = build_corpus(joint, config.walk_config())
    structural = train_structural_embeddings(corpus, config.skipgram_config())
    structure = (structural.entity_matrix(source_map), structural.entity_matrix(target_map))
    model = AlignmentModel.build(
        source,
        target,
        names,
        structure,
        config.temporal_config(),
        use_gates=config.use_gates,
        normalize_views=config.normalize_views,
        tune_structural_map=config.tune_structural_map,
        active_views=active_views(config),
        previous=previous,
    )
    training = train_alignment(list(anchors), model, config.trainer_config())
    fused_source = model.fused("source")
    fused_target = model.fused("target")
    if config.noise_ratio > 0:
        fused_source = inject_noise(fused_source, config.noise_ratio, noise_seed)
        fused_target = inject_noise(fused_target, config.noise_ratio, noise_seed + 1)
    similarity = csls_similarity(fused_source, fused_target, config.k_csls, config.top_k)
    return Encoding(corpus, structural, model, training, fused_source, fused_target, similarity)


def split_budget(total: int, parts: int) -> list[int]:
    """Split ``total`` evenly over ``parts``; the remainder goes to the first."""
    if parts <= 0:
        return []
    share, remainder = divmod(max(total, 0), parts)
    return [share + remainder] + [share] * (parts - 1)


@dataclass
class RoundReport:
    round: int
    pool_size: int
    fused_pairs: int
    new_pairs: int
    scale_pairs: dict[int, int] = field(default_factory=dict)
    conflicts: int = 0
    resolved: int = 0
    projections: int = 0
    empty_projections: int = 0
    bank_size: int = 0
    bank_checksum: Optional[str] = None
    final_loss: Optional[float] = None
    reasoner: dict[str, int] = field(default_factory=dict)
    metrics: Optional[RankReport] = None

    def to_json(self) -> dict:
        out = {
            "round": self.round,
            "pool_size": self.pool_size,
            "fused_pairs": self.fused_pairs,
            "new_pairs": self.new_pairs,
            "scale_pairs": {str(k): v for k, v in self.scale_pairs.items()},
            "conflicts": self.conflicts,
            "resolved": self.resolved,
            "projections": self.projections,
            "empty_projections": self.empty_projections,
            "bank_size": self.bank_size,
            "bank_checksum": self.bank_checksum,
            "final_loss": self.final_loss,
            "reasoner": dict(self.reasoner),
        }
        out["metrics"] = self.metrics.to_json() if self.metrics is not None else None
        return out


@dataclass(frozen=True)
class IterationState:
    """Seed pool and fused pairs after the last completed round."""

    round: int = 0
    seed_pool: frozenset[Pair] = frozenset()
    fused: tuple[frozenset[Pair], ...] = ()
    pins: dict[int, int] = field(default_factory=dict)
    converged: bool = False
    aborted: bool = False
    abort_reason: Optional[str] = None


@dataclass
class RoundOutcome:
    encoding: Encoding
    fused: frozenset[Pair]
    scales: list[ScaleAlignment]
    conflicts: int
    resolved: int
    projection_graph: Optional[ProjectionHypergraph] = None
    bank: Optional[MemoryBank] = None


@dataclass
class AlignmentResult:
    state: IterationState
    similarity: SimilarityMatrix
    alignment: dict[int, int]
    reports: list[RoundReport]
    encoding: Encoding
    metrics: Optional[RankReport] = None

    @property
    def aborted(self) -> bool:
        return self.state.aborted


class AlignmentRun:
    """One alignment job over a graph pair; ``run()`` executes the rounds.

    Args:
        source: Source graph.
        target: Target graph.
        seeds: Reference pairs; the train split seeds the pool and the
            test split is evaluated after every round.
        config: Run configuration.
        reasoner: Overrides the reasoner named by the config.
        rel_map: Overrides the relation map named by the config.
        name_provider: Overrides the name vectors named by the config.
    """

    def __init__(
        self,
        source: TemporalKG,
        target: TemporalKG,
        seeds: SeedAlignment,
        config: AlignConfig,
        reasoner: Optional[Reasoner] = None,
        rel_map: Optional[RelationMap] = None,
        name_provider: Optional[NameProvider] = None,
    ):
        self.source = source
        self.target = target
        self.config = config
        self.seeds = split_seeds(seeds, config.train_ratio, config.seed) if config.train_ratio is not None else seeds
        self.reasoner = reasoner if reasoner is not None else build_reasoner(config)
        self.rel_map = rel_map if rel_map is not None else build_relation_map(config)
        provider = name_provider if name_provider is not None else build_name_provider(config)
        self.names = (embed_names(source.entities, provider), embed_names(target.entities, provider))
        self.builder = ContextBuilder(source, target, self.rel_map, config.max_context_facts)
        self._train_sources = {s for s, _ in self.seeds.train_pairs}
        self._train_targets = {t for _, t in self.seeds.train_pairs}

    def round(self, round_number: int, pool: frozenset[Pair], previous: Optional[AlignmentModel]) -> RoundOutcome:
        """Encode, then (unless CSLS-only) project, retrieve, reason and fuse."""
        config = self.config
        encoding = encode(
            self.source,
            self.target,
            self.names,
            sorted(pool),
            config,
            previous=previous,
            noise_seed=config.seed + 1000 * round_number,
        )
        if config.csls_only:
            return RoundOutcome(encoding, frozenset(), [], 0, 0)

        similarity = encoding.similarity
        projection_graph = build_projection_hypergraph(
            similarity,
            config.top_k,
            self.source,
            self.target,
            self.rel_map,
            use_time=config.use_time_projection,
            use_rel=config.use_rel_projection,
        )
        bank = multiscale = None
        if config.use_retrieval:
            bank = build_memory_bank(
                projection_graph,
                encoding.model,
                config.bank_mode,
                include_targets=config.bank_include_targets,
                ef_search=config.ann_ef_search,
            )
            multiscale = build_multiscale(projection_graph, bank, config.k_retrieval, encoding.fused_source)

        layers = build_scale_layers(projection_graph, multiscale, self.builder, similarity)
        num_sources = self.source.num_entities
        if config.use_interaction:
            total = config.augment_budget if config.augment_budget is not None else num_sources
            layers = [
                intra_scale_interaction(layer, self.reasoner, budget, self.builder, config.max_in_flight)
                for layer, budget in zip(layers, split_budget(total, len(layers)))
            ]
        select_budget = config.select_budget if config.select_budget is not None else num_sources
        scales = [fusion_select_scale(layer, self.reasoner, select_budget, config.max_in_flight) for layer in layers]

        resolved: dict[int, int] = {}
        conflicts = 0
        if config.use_conflict_detection:
            conflict_set = detect_conflicts(*scales)
            conflicts = len(conflict_set.groups)
            if conflicts:
                resolved = resolve_conflicts(
                    conflict_set,
                    self.reasoner,
                    self.builder,
                    similarity,
                    config.conflict_budget,
                    config.max_in_flight,
                )
        fused = fuse_final(scales, resolved)
        return RoundOutcome(encoding, fused, scales, conflicts, len(resolved), projection_graph, bank)

    def run(self) -> AlignmentResult:
        """Run up to ``config.iterations`` rounds (one when CSLS-only).

        The loop stops early once a round adds no new pair to the seed pool.
        A failing round ends the loop with the previous round's result
        marked aborted.

        Raises:
            RoundAbortedError: If the first round fails.
        """
        config = self.config
        state = IterationState(seed_pool=frozenset(self.seeds.train_pairs))
        rounds = 1 if config.csls_only else config.iterations
        test_pairs = self.seeds.test_pairs
        reports: list[RoundReport] = []
        last: Optional[RoundOutcome] = None

        for round_number in range(1, rounds + 1):
            before = self.reasoner.stats.snapshot()
            previous = last.encoding.model if last is not None else None
            try:
                outcome = self.round(round_number, state.seed_pool, previous)
            except (WildAlignError, ValueError, RuntimeError) as e:
                error = RoundAbortedError(round_number, e)
                if last is None:
                    raise error from e
                logger.error(f"{error}; keeping the result of round {state.round}")
                state = replace(state, aborted=True, abort_reason=str(error))
                break

            new_pairs = sorted(
                p
                for p in outcome.fused
                if p not in state.seed_pool and p[0] not in self._train_sources and p[1] not in self._train_targets
            )
            pins = dict(state.pins)
            pins.update(dict(sorted(outcome.fused)))
            state = IterationState(
                round=round_number,
                seed_pool=state.seed_pool | frozenset(new_pairs),
                fused=state.fused + (outcome.fused,),
                pins=pins,
                converged=not config.csls_only and not new_pairs,
            )
            last = outcome

            after = self.reasoner.stats.snapshot()
            report = RoundReport(
                round=round_number,
                pool_size=len(state.seed_pool),
                fused_pairs=len(outcome.fused),
                new_pairs=len(new_pairs),
                scale_pairs={a.scale: len(a) for a in outcome.scales},
                conflicts=outcome.conflicts,
                resolved=outcome.resolved,
                final_loss=outcome.encoding.training.losses[-1] if outcome.encoding.training.losses else None,
                reasoner={k: after[k] - before[k] for k in after},
                metrics=rank_pairs(outcome.encoding.similarity, test_pairs, pins) if test_pairs else None,
            )
            if outcome.projection_graph is not None:
                report.projections = len(outcome.projection_graph.projections)
                report.empty_projections = outcome.projection_graph.empty_count
            if outcome.bank is not None:
                report.bank_size = len(outcome.bank)
                report.bank_checksum = outcome.bank.checksum()
            reports.append(report)
            hits = f", Hits@1 {report.metrics.hits[1]:.4f}" if report.metrics is not None else ""
            logger.info(
                f"Round {round_number}: {len(outcome.fused)} fused pairs, {len(new_pairs)} new, "
                f"pool {len(state.seed_pool)}{hits}"
            )
            if state.converged:
                logger.info(f"Converged after round {round_number}: no new pairs")
                break

        similarity = last.encoding.similarity
        metrics = rank_pairs(similarity, test_pairs, state.pins) if test_pairs else None
        return AlignmentResult(
            state=state,
            similarity=similarity,
            alignment=final_alignment(similarity, state.pins),
            reports=reports,
            encoding=last.encoding,
            metrics=metrics,
        )


def run_iterations(
    source: TemporalKG,
    target: TemporalKG,
    seeds: SeedAlignment,
    config: AlignConfig,
    reasoner: Optional[Reasoner] = None,
    rel_map: Optional[RelationMap] = None,
    name_provider: Optional[NameProvider] = None,
) -> AlignmentResult:
    """Run the full iterative alignment; see ``AlignmentRun``."""
    return AlignmentRun(source, target, seeds, config, reasoner, rel_map, name_provider).run()
