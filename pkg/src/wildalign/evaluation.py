"""Ranking metrics, dataset statistics, noise injection and alignment scenarios."""

import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Literal, Mapping, Optional, Sequence

import numpy as np

from .errors import MetricError
from .integration import SimilarityMatrix
from .kg import Granularity, SeedAlignment, TemporalKG

logger = logging.getLogger(__name__)

HITS_AT = (1, 5, 10)

ConsistencyRule = Literal["year_span", "overlap"]
DensityBase = Literal["valid", "all"]


@dataclass(frozen=True)
class RankReport:
    """Rank of the true target per evaluated pair, with Hits@N and MRR."""

    ranks: tuple[int, ...]
    hits: dict[int, float]
    mrr: float
    pairs: tuple[tuple[int, int], ...] = ()

    def __len__(self) -> int:
        return len(self.ranks)

    def to_json(self) -> dict:
        out = {f"hits@{n}": v for n, v in sorted(self.hits.items())}
        out["mrr"] = self.mrr
        out["count"] = len(self.ranks)
        return out


def hits_mrr(
    ranks: Sequence[int],
    pairs: Sequence[tuple[int, int]] = (),
    hits_at: Sequence[int] = HITS_AT,
) -> RankReport:
    """Hits@N (fraction of ranks <= N) and MRR (mean of 1/rank).

    Raises:
        MetricError: If ``ranks`` is empty or holds a rank below 1.
    """
    if len(ranks) == 0:
        raise MetricError("cannot compute Hits@N/MRR over an empty rank list")
    values = np.asarray(ranks, dtype=np.int64)
    if values.min() < 1:
        raise MetricError(f"ranks start at 1, got {int(values.min())}")
    hits = {n: float(np.mean(values <= n)) for n in hits_at}
    mrr = float(np.mean(1.0 / values))
    return RankReport(tuple(int(r) for r in values), hits, mrr, tuple(pairs))


def final_scores(similarity: SimilarityMatrix, pins: Mapping[int, int]) -> np.ndarray:
    """Similarity scores with every pinned pair lifted to its row maximum + 1."""
    scores = np.array(similarity.scores, dtype=np.float64)
    for s, t in pins.items():
        scores[s, t] = scores[s].max() + 1.0
    return scores


def rank_of(row: np.ndarray, target: int) -> int:
    """1 + targets scoring higher + equal-scoring targets with a lower handle."""
    value = row[target]
    return int(1 + np.count_nonzero(row > value) + np.count_nonzero(row[:target] == value))


def rank_pairs(
    similarity: SimilarityMatrix,
    pairs: Sequence[tuple[int, int]],
    pins: Optional[Mapping[int, int]] = None,
) -> RankReport:
    """Rank the true target of each test pair under the final scores."""
    scores = final_scores(similarity, pins or {})
    ranks = [rank_of(scores[s], t) for s, t in pairs]
    return hits_mrr(ranks, pairs)


def final_alignment(similarity: SimilarityMatrix, pins: Mapping[int, int]) -> dict[int, int]:
    """Per-source argmax of the final scores (pinned pairs win)."""
    scores = final_scores(similarity, pins)
    if scores.shape[1] == 0:
        return {}
    return {s: int(t) for s, t in enumerate(np.argmax(scores, axis=1))}


@dataclass(frozen=True)
class GraphStats:
    entities: int
    relations: int
    facts: int
    valid_facts: int
    temporal_density: float
    multi_granular: bool
    overlap: Optional[float]


@dataclass(frozen=True)
class DatasetStats:
    """Per-graph sizes and density, plus pair-level temporal comparison (percentages).

    ``None`` marks a value that is undefined for the inputs (a relative
    difference against zero, or a ratio over no seed pairs).
    """

    source: GraphStats
    target: GraphStats
    mtf: float
    interval_consistency: Optional[float]
    delta_facts: Optional[float]
    delta_density: Optional[float]
    consistency_rule: str = "year_span"
    density_base: str = "valid"

    def to_json(self) -> dict:
        return asdict(self)


def _relative_difference(a: float, b: float) -> Optional[float]:
    low, high = min(a, b), max(a, b)
    if low <= 0:
        return None
    return 100.0 * (high - low) / low


def _density(kg: TemporalKG, base: DensityBase) -> float:
    if base == "all":
        return kg.valid_count / kg.num_entities if kg.num_entities else 0.0
    temporal_entities = {
        e for q in kg.quadruples if q.is_valid for e in (q.head, q.tail)
    }
    return kg.valid_count / len(temporal_entities) if temporal_entities else 0.0


def _granularities(kg: TemporalKG) -> set[Granularity]:
    return {p.granularity for q in kg.quadruples for p in q.interval.points()}


def _consistent(a: Optional[tuple[int, int]], b: Optional[tuple[int, int]], rule: ConsistencyRule) -> bool:
    if rule == "year_span" or a is None or b is None:
        return a == b
    return a[0] <= b[1] and b[0] <= a[1]


def graph_stats(
    kg: TemporalKG,
    seeded: Optional[set[int]] = None,
    density_base: DensityBase = "valid",
) -> GraphStats:
    overlap = None
    if seeded is not None and kg.num_entities:
        overlap = 100.0 * len(seeded) / kg.num_entities
    return GraphStats(
        entities=kg.num_entities,
        relations=kg.num_relations,
        facts=len(kg),
        valid_facts=kg.valid_count,
        temporal_density=_density(kg, density_base),
        multi_granular=len(_granularities(kg)) > 1,
        overlap=overlap,
    )


def dataset_stats(
    source: TemporalKG,
    target: TemporalKG,
    seeds: SeedAlignment,
    consistency: ConsistencyRule = "year_span",
    density_base: DensityBase = "valid",
) -> DatasetStats:
    """Dataset-level temporal statistics of a graph pair.

    Args:
        source: Source graph.
        target: Target graph.
        seeds: All reference pairs (both splits).
        consistency: ``year_span`` counts a pair consistent when the
            entity-level ``[min, max]`` year spans are identical; ``overlap``
            when they intersect. Two timeless entities are consistent.
        density_base: ``valid`` divides valid facts by entities with a
            valid fact; ``all`` by every entity.

    Returns:
        Percentages for MTF, overlap, interval consistency and the two
        relative differences (smaller value as base).
    """
    pairs = [(p.source, p.target) for p in seeds]
    source_stats = graph_stats(source, {s for s, _ in pairs}, density_base)
    target_stats = graph_stats(target, {t for _, t in pairs}, density_base)

    def share(kg: TemporalKG) -> float:
        return 100.0 * kg.valid_count / len(kg) if len(kg) else 0.0

    consistency_pct = None
    if pairs:
        consistent = sum(
            _consistent(source.year_span(s), target.year_span(t), consistency) for s, t in pairs
        )
        consistency_pct = 100.0 * consistent / len(pairs)

    return DatasetStats(
        source=source_stats,
        target=target_stats,
        mtf=(share(source) + share(target)) / 2,
        interval_consistency=consistency_pct,
        delta_facts=_relative_difference(source.valid_count, target.valid_count),
        delta_density=_relative_difference(source_stats.temporal_density, target_stats.temporal_density),
        consistency_rule=consistency,
        density_base=density_base,
    )


def noised_rows(count: int, ratio: float, seed: int = 0) -> np.ndarray:
    """Rows replaced by ``inject_noise``; a prefix of one seeded permutation."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"noise ratio must lie in [0, 1], got {ratio!r}")
    rng = np.random.default_rng(seed)
    size = math.floor(Fraction(str(float(ratio))) * count)
    return np.sort(rng.permutation(count)[:size])


def inject_noise(embeddings: np.ndarray, ratio: float, seed: int = 0) -> np.ndarray:
    """Replace ``floor(ratio * n)`` seeded rows with uniform vectors in ``[-1, 1]^D``.

    For one seed the replaced rows of a smaller ratio are a subset of those
    of a larger ratio, and each row's replacement vector is the same.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    rows = noised_rows(embeddings.shape[0], ratio, seed)
    noise = np.random.default_rng([seed, 1]).uniform(-1.0, 1.0, size=embeddings.shape)
    noisy = embeddings.copy()
    noisy[rows] = noise[rows]
    return noisy


SCENARIOS = (
    "multi-to-multi",
    "multi-to-one",
    "multi-to-none",
    "one-to-one",
    "one-to-none",
    "none-to-none",
)

_LEVELS = {0: "none", 1: "one"}
_RICHNESS = {"none": 0, "one": 1, "multi": 2}


def temporal_scenario(source_relations: int, target_relations: int) -> str:
    """Scenario label from the number of distinct temporal relations on each side.

    0 is ``none``, 1 is ``one`` and more is ``multi``; the richer side is
    named first, so a pair counts the same in either direction.
    """
    levels = sorted(
        (_LEVELS.get(n, "multi") for n in (source_relations, target_relations)),
        key=_RICHNESS.__getitem__,
        reverse=True,
    )
    return f"{levels[0]}-to-{levels[1]}"


def pair_scenario(source: int, target: int, source_kg: TemporalKG, target_kg: TemporalKG) -> str:
    return temporal_scenario(
        len(source_kg.temporal_relations(source)), len(target_kg.temporal_relations(target))
    )


@dataclass(frozen=True)
class ScenarioScore:
    count: int
    hits1: float


def scenario_breakdown(
    report: RankReport,
    source_kg: TemporalKG,
    target_kg: TemporalKG,
) -> dict[str, ScenarioScore]:
    """Hits@1 of ``report`` per alignment scenario (only scenarios that occur)."""
    grouped: dict[str, list[int]] = {}
    for (s, t), rank in zip(report.pairs, report.ranks):
        grouped.setdefault(pair_scenario(s, t, source_kg, target_kg), []).append(rank)
    return {
        label: ScenarioScore(len(grouped[label]), float(np.mean(np.asarray(grouped[label]) == 1)))
        for label in SCENARIOS
        if label in grouped
    }


@dataclass
class NoiseSweep:
    """One report per noise ratio, optionally with the CSLS-only baseline."""

    ratios: list[float] = field(default_factory=list)
    full: list[RankReport] = field(default_factory=list)
    baseline: list[RankReport] = field(default_factory=list)

    def add(self, ratio: float, full: RankReport, baseline: Optional[RankReport] = None) -> None:
        self.ratios.append(ratio)
        self.full.append(full)
        if baseline is not None:
            self.baseline.append(baseline)

    def to_json(self) -> list[dict]:
        rows = []
        for i, ratio in enumerate(self.ratios):
            row = {"ratio": ratio, "full": self.full[i].to_json()}
            if i < len(self.baseline):
                row["baseline"] = self.baseline[i].to_json()
            rows.append(row)
        return rows


def degradation(reports: Iterable[RankReport]) -> float:
    """Drop in Hits@1 from the first report to the last."""
    reports = list(reports)
    if not reports:
        return 0.0
    return reports[0].hits[1] - reports[-1].hits[1]
