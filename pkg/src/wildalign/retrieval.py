"""Projection memory bank, top-k retrieval and the multi-scale hypergraph (layers 2 and 3)."""

import hashlib
import logging
from dataclasses import dataclass
from typing import Literal, Sequence

import faiss
import numpy as np

from .errors import StateError
from .hypergraph import Hypergraph, projection_node, target_node, union
from .integration import AlignmentModel
from .projection import Projection, ProjectionHypergraph, ProjectionKind
from .utils import normalize_rows

logger = logging.getLogger(__name__)

BankMode = Literal["exact", "approx"]


def embed_projections(projections: Sequence[Projection], model: AlignmentModel) -> np.ndarray:
    """Fused vectors of projections, temporal blocks re-derived from retained facts.

    Raises:
        StateError: If the model has not been trained.
    """
    return model.embed_fact_sets([(p.target, p.retained) for p in projections])


def embed_projection(projection: Projection, model: AlignmentModel) -> np.ndarray:
    return embed_projections([projection], model)[0]


@dataclass(frozen=True)
class Retrieved:
    projection: Projection
    score: float


class MemoryBank:
    """Read-only cosine index over projection vectors.

    ``exact`` mode ranks by brute force in float64; ``approx`` mode searches a
    faiss HNSW graph (``ef_search`` is its recall knob). Either way results are
    ordered by descending score, ties by provenance id.
    """

    def __init__(
        self,
        projections: Sequence[Projection],
        vectors: np.ndarray,
        mode: BankMode = "exact",
        ef_search: int = 64,
        hnsw_neighbors: int = 32,
    ):
        if mode not in ("exact", "approx"):
            raise ValueError(f"mode must be 'exact' or 'approx', got {mode!r}")
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError(f"vectors must be a 2-d array, got shape {vectors.shape}")
        if vectors.shape[0] != len(projections):
            raise ValueError(f"{len(projections)} projections but {vectors.shape[0]} vectors")
        self.mode = mode
        self.projections = tuple(projections)
        self.dimension = vectors.shape[1]
        self._pids = np.asarray([p.pid for p in self.projections], dtype=np.int64)
        self._vectors = normalize_rows(vectors)
        self._vectors.setflags(write=False)
        self._pids.setflags(write=False)
        self._index = None
        if mode == "approx" and len(self.projections):
            faiss.omp_set_num_threads(1)
            self._index = faiss.IndexHNSWFlat(self.dimension, hnsw_neighbors, faiss.METRIC_INNER_PRODUCT)
            self._index.hnsw.efSearch = ef_search
            self._index.add(np.ascontiguousarray(self._vectors, dtype=np.float32))

    def __len__(self) -> int:
        return len(self.projections)

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    def checksum(self) -> str:
        digest = hashlib.sha256()
        digest.update(self._pids.tobytes())
        digest.update(np.ascontiguousarray(self._vectors).tobytes())
        return digest.hexdigest()

    def search(self, query: np.ndarray, k: int) -> list[Retrieved]:
        k = min(k, len(self))
        if k <= 0:
            return []
        query = normalize_rows(np.asarray(query, dtype=np.float64).reshape(1, -1))[0]
        if self._index is None:
            # per-row sum: identical rows score identically
            scores = np.sum(self._vectors * query, axis=1)
            positions = np.lexsort((self._pids, -scores))[:k]
        else:
            found_scores, found = self._index.search(np.ascontiguousarray(query[None, :], dtype=np.float32), k)
            keep = found[0] >= 0
            positions = found[0][keep]
            scores = np.zeros(len(self))
            scores[positions] = found_scores[0][keep]
            positions = positions[np.lexsort((self._pids[positions], -scores[positions]))]
        return [Retrieved(self.projections[i], float(scores[i])) for i in positions]


def build_memory_bank(
    projection_graph: ProjectionHypergraph,
    model: AlignmentModel,
    mode: BankMode = "exact",
    include_targets: bool = False,
    ef_search: int = 64,
) -> MemoryBank:
    """Embed and index every non-empty projection of layer 1.

    With ``include_targets`` the raw target entities are indexed as well,
    as ``FULL`` entries with provenance id ``len(projections) + target``.
    """
    if not model.trained:
        raise StateError("encoders must be trained before building the memory bank")
    entries = [p for p in projection_graph.projections if not p.is_empty]
    if include_targets:
        offset = len(projection_graph.projections)
        entries.extend(
            Projection(ProjectionKind.FULL, -1, t, model.target.incident(t), offset + t)
            for t in range(model.target.num_entities)
        )
    vectors = embed_projections(entries, model)
    bank = MemoryBank(entries, vectors.reshape(len(entries), model.layout.dimension), mode=mode, ef_search=ef_search)
    logger.info(f"Memory bank: {len(bank)} entries ({mode})")
    return bank


def retrieve(query: np.ndarray, bank: MemoryBank, k: int) -> list[Retrieved]:
    """Top-``k`` bank entries for a source's fused embedding; ``k`` clamped to the bank size."""
    return bank.search(query, k)


@dataclass
class MultiScaleHypergraph:
    """Layers 1-3: projection hypergraph, retrieved projections, and their targets."""

    layer1: ProjectionHypergraph
    retrieved: dict[int, tuple[Retrieved, ...]]
    layer2: Hypergraph
    layer3: Hypergraph

    @property
    def sources(self) -> range:
        return range(self.layer1.num_sources)

    def layer3_targets(self, source: int) -> tuple[int, ...]:
        return tuple(node[1] for node in self.layer3.members(source))

    def union(self) -> Hypergraph:
        """All hypernodes of the three layers with layer-tagged hyperedges."""
        return union(((1, self.layer1.layer), (2, self.layer2), (3, self.layer3)))


def build_multiscale(
    projection_graph: ProjectionHypergraph,
    bank: MemoryBank,
    k: int,
    queries: np.ndarray,
) -> MultiScaleHypergraph:
    """Retrieve ``k`` projections per source and map them to their targets.

    Args:
        projection_graph: Layer 1.
        bank: Memory bank built from layer 1.
        k: Retrieval depth.
        queries: Fused source embeddings, one row per source entity.
    """
    layer2 = Hypergraph("retrieved")
    layer3 = Hypergraph("targets")
    retrieved: dict[int, tuple[Retrieved, ...]] = {}
    for s in range(projection_graph.num_sources):
        hits = tuple(retrieve(queries[s], bank, k))
        retrieved[s] = hits
        for hit in hits:
            layer2.add_hypernode(projection_node(hit.projection.pid), kind=hit.projection.kind.value)
            layer3.add_hypernode(target_node(hit.projection.target))
        layer2.add_hyperedge(s, [projection_node(h.projection.pid) for h in hits])
        layer3.add_hyperedge(s, [target_node(h.projection.target) for h in hits])
    return MultiScaleHypergraph(projection_graph, retrieved, layer2, layer3)
