"""Biased random-walk corpus generation and skip-gram structural embeddings."""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from gensim.models import Word2Vec
from gensim.models.callbacks import CallbackAny2Vec

from .errors import TrainingError, WalkError
from .kg import Quadruple, TemporalKG
from .utils import stable_hash

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WalkConfig:
    """Walk sampling knobs; ``walk_length`` counts entities on the path."""

    beta: float = 0.5
    walk_length: int = 20
    walks_per_entity: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie strictly between 0 and 1, got {self.beta}")
        if self.walk_length < 2:
            raise ValueError(f"walk_length must be >= 2, got {self.walk_length}")
        if self.walks_per_entity < 1:
            raise ValueError(f"walks_per_entity must be >= 1, got {self.walks_per_entity}")


@dataclass(frozen=True)
class SkipgramConfig:
    dimension: int = 64
    window: int = 5
    negative: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for name in ("dimension", "window", "negative", "epochs", "learning_rate", "workers"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


def entity_token(entity: int) -> str:
    return f"E{entity}"


def relation_token(relation: int) -> str:
    return f"R{relation}"


def transition_probabilities(
    kg: TemporalKG,
    previous: Optional[int],
    current: int,
    beta: float,
) -> tuple[tuple[int, ...], np.ndarray]:
    """Candidates for the next step and their normalised probabilities.

    Without a previous entity the step is uniform over the neighbours.
    Otherwise the previous entity is excluded, a candidate adjacent to it
    (distance 1) weighs ``1 - beta`` and any other (distance 2) weighs
    ``beta``.
    """
    neighbors = kg.neighbors(current)
    if previous is None:
        candidates = neighbors
        weights = np.ones(len(candidates))
    else:
        candidates = tuple(n for n in neighbors if n != previous)
        previous_adj = kg.undirected.adj[previous]
        weights = np.array([1.0 - beta if c in previous_adj else beta for c in candidates])
    if not candidates:
        return (), np.zeros(0)
    return candidates, weights / weights.sum()


def next_entity(
    kg: TemporalKG,
    previous: Optional[int],
    current: int,
    beta: float,
    rng: np.random.Generator,
) -> Optional[int]:
    """Sample one step of the biased walk; None when there is nowhere to go."""
    candidates, probabilities = transition_probabilities(kg, previous, current, beta)
    if not candidates:
        return None
    return candidates[rng.choice(len(candidates), p=probabilities)]


def sample_walk(
    start: int,
    cfg: WalkConfig,
    kg: TemporalKG,
    rng: Optional[np.random.Generator] = None,
) -> list[str]:
    """Sample one path ``(e_1, r_1, e_2, ...)`` of entity and relation tokens.

    Args:
        start: Entity handle to start from.
        cfg: Walk configuration.
        kg: Graph to walk on (self-loops ignored, direction ignored).
        rng: Random generator; defaults to a stream seeded by
            ``(cfg.seed, start)``.

    Returns:
        Token path of at most ``cfg.walk_length`` entities; it ends early
        when the walk reaches a dead end.

    Raises:
        WalkError: If ``start`` has no neighbours.
    """
    if not kg.neighbors(start):
        raise WalkError(f"entity {start} of {kg.name} has no neighbours to walk to")
    rng = rng if rng is not None else np.random.default_rng([cfg.seed, start])
    path = [entity_token(start)]
    previous, current = None, start
    for _ in range(cfg.walk_length - 1):
        chosen = next_entity(kg, previous, current, cfg.beta, rng)
        if chosen is None:
            break
        links = kg.connecting(current, chosen)
        link = links[rng.integers(len(links))]
        path.append(relation_token(kg.quadruples[link].rel))
        path.append(entity_token(chosen))
        previous, current = current, chosen
    return path


def build_corpus(kg: TemporalKG, cfg: WalkConfig) -> list[list[str]]:
    """``walks_per_entity`` walks from every entity that has a neighbour.

    Each start entity draws from its own stream seeded by ``(seed, entity)``,
    so the corpus is identical on every run with the same seed.
    """
    corpus = []
    skipped = 0
    for entity in range(kg.num_entities):
        if not kg.neighbors(entity):
            skipped += 1
            continue
        rng = np.random.default_rng([cfg.seed, entity])
        for _ in range(cfg.walks_per_entity):
            corpus.append(sample_walk(entity, cfg, kg, rng))
    if skipped:
        logger.debug(f"{skipped} isolated entities of {kg.name} produced no walks")
    logger.info(f"Sampled {len(corpus)} walks over {kg.name}")
    return corpus


class _EpochLoss(CallbackAny2Vec):
    """Collects the per-epoch negative-sampling loss from gensim's running total."""

    def __init__(self):
        self.losses: list[float] = []
        self._previous = 0.0

    def on_epoch_end(self, model):
        total = model.get_latest_training_loss()
        self.losses.append(total - self._previous)
        self._previous = total


@dataclass
class StructuralEmbeddings:
    """Skip-gram token vectors and the shared square ``projection`` applied to them.

    Indexing by token returns ``projection @ v``; ``raw`` returns the skip-gram
    input vector itself.
    """

    vectors: dict[str, np.ndarray]
    dimension: int
    projection: Optional[np.ndarray] = None
    losses: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.projection is None:
            self.projection = np.eye(self.dimension)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __getitem__(self, token: str) -> np.ndarray:
        return self.projection @ self.vectors[token]

    def __len__(self) -> int:
        return len(self.vectors)

    def raw(self, token: str) -> np.ndarray:
        return self.vectors[token]

    def entity_matrix(self, entities: Iterable[int], projected: bool = False) -> np.ndarray:
        """Stack entity vectors; entities absent from every walk get zeros."""
        rows = []
        for entity in entities:
            vector = self.vectors.get(entity_token(entity))
            rows.append(np.zeros(self.dimension) if vector is None else vector)
        matrix = np.asarray(rows, dtype=np.float64).reshape(-1, self.dimension)
        return matrix @ self.projection.T if projected else matrix


def train_structural_embeddings(corpus: Sequence[Sequence[str]], cfg: SkipgramConfig) -> StructuralEmbeddings:
    """Train skip-gram with negative sampling over a token corpus.

    Raises:
        TrainingError: If the corpus is empty.
    """
    if not corpus:
        raise TrainingError("cannot train structural embeddings on an empty corpus")
    tracker = _EpochLoss()
    model = Word2Vec(
        vector_size=cfg.dimension,
        window=cfg.window,
        min_count=1,
        sg=1,
        hs=0,
        negative=cfg.negative,
        alpha=cfg.learning_rate,
        seed=cfg.seed,
        workers=cfg.workers,
        hashfxn=stable_hash,
    )
    sentences = [list(walk) for walk in corpus]
    model.build_vocab(sentences)
    model.train(
        sentences,
        total_examples=model.corpus_count,
        epochs=cfg.epochs,
        compute_loss=True,
        callbacks=[tracker],
    )
    vectors = {token: model.wv[token].astype(np.float64) for token in model.wv.index_to_key}
    bad = [t for t, v in vectors.items() if not np.all(np.isfinite(v))]
    if bad:
        raise TrainingError(f"skip-gram produced non-finite vectors for {len(bad)} tokens")
    logger.info(f"Trained {len(vectors)} skip-gram vectors; epoch losses {tracker.losses}")
    return StructuralEmbeddings(vectors, cfg.dimension, losses=tracker.losses)


def merge_graphs(
    source: TemporalKG,
    target: TemporalKG,
    anchors: Iterable[tuple[int, int]] = (),
) -> tuple[TemporalKG, np.ndarray, np.ndarray]:
    """Join two graphs into one walk space, collapsing anchored target entities.

    Every anchored target entity is replaced by its source entity so that
    walks cross between the graphs and both sides land in one embedding
    space. A target anchored more than once keeps its first anchor.

    Returns:
        The joint graph and the joint handles of the source and target
        entities (``source_map[i]``, ``target_map[j]``).
    """
    anchor_of: dict[int, int] = {}
    for s, t in anchors:
        anchor_of.setdefault(t, s)
    entities = [f"s:{label}" for label in source.entities]
    source_map = np.arange(source.num_entities)
    target_map = np.empty(target.num_entities, dtype=np.int64)
    for t, label in enumerate(target.entities):
        if t in anchor_of:
            target_map[t] = anchor_of[t]
        else:
            target_map[t] = len(entities)
            entities.append(f"t:{label}")
    relations = [f"s:{r}" for r in source.relations] + [f"t:{r}" for r in target.relations]
    offset = source.num_relations
    quadruples = list(source.quadruples)
    quadruples.extend(
        Quadruple(int(target_map[q.head]), q.rel + offset, int(target_map[q.tail]), q.interval)
        for q in target.quadruples
    )
    joint = TemporalKG(entities, relations, quadruples, name=f"{source.name}+{target.name}")
    return joint, source_map, target_map
