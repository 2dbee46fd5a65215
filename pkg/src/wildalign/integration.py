"""Name vectors, multi-view fusion, margin-ranking training and CSLS similarity."""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Literal, Mapping, Optional, Protocol, Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.feature_extraction.text import HashingVectorizer
from torch import nn

from .errors import LayoutError, NameLookupError, StateError, TrainingError
from .kg import GRANULARITIES, Granularity, TemporalKG, TimeSpan
from .parsers import parse_name_vectors
from .temporal import SignatureBatch, TemporalConfig, TemporalEncoder, entity_signatures, fact_set_signatures
from .utils import canonical_label, normalize_rows

logger = logging.getLogger(__name__)

Side = Literal["source", "target"]

VIEWS = ("name", "year", "month", "date", "structural")
TEMPORAL_VIEWS = {Granularity.YEAR: "year", Granularity.MONTH: "month", Granularity.DATE: "date"}


class NameProvider(Protocol):
    """Maps an entity label to a fixed-width vector."""

    dimension: int

    def vector(self, label: str) -> np.ndarray: ...


class HashingNameProvider:
    """Deterministic fallback: hashed character n-grams of the canonical label, unit norm."""

    def __init__(self, dimension: int = 64, ngram_range: tuple[int, int] = (2, 4)):
        self.dimension = dimension
        self._vectorizer = HashingVectorizer(
            analyzer="char_wb",
            ngram_range=ngram_range,
            n_features=dimension,
            norm="l2",
            alternate_sign=True,
            lowercase=True,
        )

    def vector(self, label: str) -> np.ndarray:
        text = canonical_label(label) or label
        return self._vectorizer.transform([text]).toarray()[0].astype(np.float64)


class FileNameProvider:
    """Precomputed vectors read from a ``label\\tf1 f2 ...`` file (or given directly)."""

    def __init__(self, vectors: Union[str, Mapping[str, np.ndarray]]):
        if isinstance(vectors, str):
            vectors = parse_name_vectors(vectors)
        self._vectors = {label: np.asarray(v, dtype=np.float64) for label, v in vectors.items()}
        dims = {v.shape[0] for v in self._vectors.values()}
        if len(dims) > 1:
            raise LayoutError(f"name vectors have mixed dimensions {sorted(dims)}")
        self.dimension = dims.pop() if dims else 0

    def __contains__(self, label: str) -> bool:
        return label in self._vectors

    @property
    def labels(self) -> list[str]:
        return list(self._vectors)

    def vector(self, label: str) -> np.ndarray:
        try:
            return self._vectors[label]
        except KeyError:
            raise NameLookupError(label) from None


def embed_names(labels: Iterable[str], provider: NameProvider) -> np.ndarray:
    """One name vector per label, stacked into a ``len(labels) x d_n`` matrix."""
    rows = [provider.vector(label) for label in labels]
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), provider.dimension)


@dataclass(frozen=True)
class FusionLayout:
    """Block widths of ``[name | year | month | date | structural]``."""

    name: int
    temporal: int
    structural: int

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.name, self.temporal, self.temporal, self.temporal, self.structural)

    @property
    def dimension(self) -> int:
        return sum(self.sizes)

    @cached_property
    def slices(self) -> dict[str, slice]:
        out, start = {}, 0
        for view, size in zip(VIEWS, self.sizes):
            out[view] = slice(start, start + size)
            start += size
        return out

    def block(self, fused: np.ndarray, view: str) -> np.ndarray:
        return fused[..., self.slices[view]]


def fuse_views(
    name: np.ndarray,
    year: np.ndarray,
    month: np.ndarray,
    date: np.ndarray,
    structural: np.ndarray,
    gates: Optional[Sequence[float]] = None,
    normalize: bool = False,
    layout: Optional[FusionLayout] = None,
) -> np.ndarray:
    """Concatenate the five views, each scaled by its gate.

    Works on single vectors or on row-aligned matrices. With ``normalize``
    each block is L2-normalised before gating (zero blocks stay zero).

    Raises:
        LayoutError: If the temporal blocks differ in width, the row counts
            disagree, or the blocks don't match ``layout``.
    """
    views = [np.asarray(v, dtype=np.float64) for v in (name, year, month, date, structural)]
    single = views[0].ndim == 1
    views = [np.atleast_2d(v) for v in views]
    if len({v.shape[0] for v in views}) != 1:
        raise LayoutError(f"views have different entity counts: {[v.shape[0] for v in views]}")
    if len({v.shape[1] for v in views[1:4]}) != 1:
        raise LayoutError(f"temporal views differ in width: {[v.shape[1] for v in views[1:4]]}")
    if layout is not None and tuple(v.shape[1] for v in views) != layout.sizes:
        raise LayoutError(f"view widths {[v.shape[1] for v in views]} do not match layout {layout.sizes}")
    gates = np.ones(len(VIEWS)) if gates is None else np.asarray(gates, dtype=np.float64)
    if normalize:
        views = [normalize_rows(v) for v in views]
    fused = np.concatenate([g * v for g, v in zip(gates, views)], axis=1)
    return fused[0] if single else fused


def fuse_view_tensors(views: Sequence[torch.Tensor], gates: torch.Tensor, normalize: bool) -> torch.Tensor:
    if normalize:
        views = [F.normalize(v, dim=-1, eps=1e-12) for v in views]
    return torch.cat([gates[i] * v for i, v in enumerate(views)], dim=-1)


class FusionModel(nn.Module):
    """Trainable part of the fused encoder: temporal encoder, structural map and view gates.

    Args:
        temporal: Per-granularity Time2Vec encoder.
        structural_dim: Width d of the structural view.
        structural_map: Initial square map of the structural view (identity when None).
        use_gates: Learn the per-view scalar gates.
        normalize_views: L2-normalise each block before gating.
        tune_structural_map: Let the trainer update the structural map.
        active_views: Views that contribute; the rest are multiplied by 0.
    """

    def __init__(
        self,
        temporal: TemporalEncoder,
        structural_dim: int,
        structural_map: Optional[np.ndarray] = None,
        use_gates: bool = True,
        normalize_views: bool = True,
        tune_structural_map: bool = True,
        active_views: Iterable[str] = VIEWS,
    ):
        super().__init__()
        self.temporal = temporal
        self.normalize_views = normalize_views
        initial = np.eye(structural_dim) if structural_map is None else structural_map
        self.structural_map = nn.Parameter(
            torch.as_tensor(np.asarray(initial), dtype=torch.float32).clone(),
            requires_grad=tune_structural_map,
        )
        self.gates = nn.Parameter(torch.ones(len(VIEWS)), requires_grad=use_gates)
        active = set(active_views)
        unknown = active - set(VIEWS)
        if unknown:
            raise LayoutError(f"unknown views {sorted(unknown)}")
        self.register_buffer("view_mask", torch.tensor([1.0 if v in active else 0.0 for v in VIEWS]))

    def forward(
        self,
        names: torch.Tensor,
        structure: torch.Tensor,
        signatures: dict[Granularity, SignatureBatch],
    ) -> torch.Tensor:
        temporal = self.temporal(signatures)
        views = [names] + [temporal[g] for g in GRANULARITIES] + [structure @ self.structural_map.T]
        return fuse_view_tensors(views, self.gates * self.view_mask, self.normalize_views)


@dataclass
class EntityViews:
    """Frozen inputs of one graph: name and structural matrices plus time signatures."""

    names: np.ndarray
    structure: np.ndarray
    signatures: dict[Granularity, SignatureBatch]

    @property
    def size(self) -> int:
        return self.names.shape[0]


class AlignmentModel:
    """Fused encoder for a source/target graph pair.

    Holds the frozen views of both graphs and the trainable FusionModel, and
    produces fused embeddings for whole graphs or for fact subsets of target
    entities (projections).
    """

    def __init__(
        self,
        source: TemporalKG,
        target: TemporalKG,
        module: FusionModel,
        source_views: EntityViews,
        target_views: EntityViews,
        span: Optional[TimeSpan],
    ):
        self.source = source
        self.target = target
        self.module = module
        self.views = {"source": source_views, "target": target_views}
        self.span = span
        self.trained = False
        self.layout = FusionLayout(
            source_views.names.shape[1], module.temporal.dimension, source_views.structure.shape[1]
        )
        for side, views in self.views.items():
            if views.names.shape[1] != self.layout.name or views.structure.shape[1] != self.layout.structural:
                raise LayoutError(f"{side} views do not match the fused layout {self.layout.sizes}")
        self._tensors = {
            side: (torch.as_tensor(v.names, dtype=torch.float32), torch.as_tensor(v.structure, dtype=torch.float32))
            for side, v in self.views.items()
        }

    @classmethod
    def build(
        cls,
        source: TemporalKG,
        target: TemporalKG,
        names: tuple[np.ndarray, np.ndarray],
        structure: tuple[np.ndarray, np.ndarray],
        temporal_config: TemporalConfig,
        structural_map: Optional[np.ndarray] = None,
        use_gates: bool = True,
        normalize_views: bool = True,
        tune_structural_map: bool = True,
        active_views: Iterable[str] = VIEWS,
        previous: Optional["AlignmentModel"] = None,
    ) -> "AlignmentModel":
        """Assemble a model over a span shared by both graphs.

        With ``previous``, the temporal encoder and gates start from its
        trained values.
        """
        span = TimeSpan.covering(source, target)
        temporal = TemporalEncoder(temporal_config, span)
        module = FusionModel(
            temporal,
            structure[0].shape[1],
            structural_map=structural_map,
            use_gates=use_gates,
            normalize_views=normalize_views,
            tune_structural_map=tune_structural_map,
            active_views=active_views,
        )
        if previous is not None and previous.span == span:
            module.temporal.load_state_dict(previous.module.temporal.state_dict())
            with torch.no_grad():
                module.gates.copy_(previous.module.gates)
        source_views = EntityViews(names[0], structure[0], entity_signatures(source, span))
        target_views = EntityViews(names[1], structure[1], entity_signatures(target, span))
        return cls(source, target, module, source_views, target_views, span)

    def fused_tensor(self, side: Side) -> torch.Tensor:
        names, structure = self._tensors[side]
        return self.module(names, structure, self.views[side].signatures)

    def fused(self, side: Side) -> np.ndarray:
        """Fused embeddings of every entity of one side."""
        with torch.no_grad():
            return self.fused_tensor(side).numpy().astype(np.float64)

    def embed_fact_sets(self, items: Sequence[tuple[int, Iterable[int]]]) -> np.ndarray:
        """Fused embeddings of target entities restricted to the given facts.

        Name and structural blocks come from the target entity; temporal
        blocks are recomputed from the listed facts only.

        Raises:
            StateError: If the model has not been trained.
        """
        if not self.trained:
            raise StateError("encoders must be trained before embedding projections")
        if not items:
            return np.zeros((0, self.layout.dimension))
        targets = torch.as_tensor([t for t, _ in items], dtype=torch.long)
        names, structure = self._tensors["target"]
        signatures = fact_set_signatures(self.target, [facts for _, facts in items], self.span)
        with torch.no_grad():
            fused = self.module(names[targets], structure[targets], signatures)
        return fused.numpy().astype(np.float64)

    def structural_map(self) -> np.ndarray:
        return self.module.structural_map.detach().numpy().astype(np.float64)


@dataclass(frozen=True)
class TrainerConfig:
    margin: float = 1.0
    negatives: int = 5
    epochs: int = 100
    learning_rate: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        for name in ("negatives", "epochs", "learning_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass
class TrainingResult:
    parameters: dict[str, np.ndarray]
    losses: list[float] = field(default_factory=list)


def hinge(positive_distance, negative_distance, margin: float):
    """Per-triple loss ``max(0, margin + d(pos) - d(neg))``."""
    if isinstance(positive_distance, torch.Tensor):
        return torch.relu(margin + positive_distance - negative_distance)
    return np.maximum(0.0, margin + np.asarray(positive_distance) - np.asarray(negative_distance))


def cosine_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return 1.0 - F.cosine_similarity(a, b, dim=-1, eps=1e-8)


def margin_ranking_loss(
    anchors: torch.Tensor,
    positives: torch.Tensor,
    negatives: torch.Tensor,
    margin: float,
) -> torch.Tensor:
    """Mean hinge over ``(anchor, positive, negative)`` triples.

    Args:
        anchors: ``P x D`` source embeddings.
        positives: ``P x D`` matching target embeddings.
        negatives: ``P x n x D`` sampled non-matching target embeddings.
        margin: gamma.
    """
    d_pos = cosine_distance(anchors, positives)
    d_neg = cosine_distance(anchors.unsqueeze(1), negatives)
    return hinge(d_pos.unsqueeze(1), d_neg, margin).mean()


def sample_negatives(
    positives: torch.Tensor,
    num_targets: int,
    count: int,
    generator: torch.Generator,
) -> torch.Tensor:
    """Uniform draws over targets excluding each row's positive."""
    draws = torch.randint(0, num_targets - 1, (positives.shape[0], count), generator=generator)
    return draws + (draws >= positives.unsqueeze(1)).long()


def train_alignment(
    seeds: Sequence[tuple[int, int]],
    model: AlignmentModel,
    cfg: TrainerConfig,
) -> TrainingResult:
    """Fit gates, the structural map and the temporal parameters with the margin-ranking loss.

    Name and skip-gram vectors are frozen inputs. One full-batch Adam step
    per epoch; negatives are resampled every epoch from a generator seeded
    by ``cfg.seed``.

    Raises:
        TrainingError: If there are no seed pairs or fewer than two targets.
    """
    if not seeds:
        raise TrainingError("no seed pairs to train on")
    num_targets = model.views["target"].size
    if num_targets < 2:
        raise TrainingError(f"need at least two target entities for negatives, got {num_targets}")
    generator = torch.Generator().manual_seed(cfg.seed)
    parameters = [p for p in model.module.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(parameters, lr=cfg.learning_rate)
    sources = torch.as_tensor([s for s, _ in seeds], dtype=torch.long)
    targets = torch.as_tensor([t for _, t in seeds], dtype=torch.long)

    losses = []
    model.module.train()
    for epoch in range(cfg.epochs):
        optimizer.zero_grad()
        fused_source = model.fused_tensor("source")
        fused_target = model.fused_tensor("target")
        negatives = sample_negatives(targets, num_targets, cfg.negatives, generator)
        loss = margin_ranking_loss(fused_source[sources], fused_target[targets], fused_target[negatives], cfg.margin)
        if not torch.isfinite(loss):
            raise TrainingError(f"alignment loss became non-finite at epoch {epoch}")
        loss.backward()
        optimizer.step()
        losses.append(float(loss.item()))
    model.module.eval()
    model.trained = True
    logger.info(f"Trained alignment on {len(seeds)} pairs: loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    learned = {
        name: p.detach().numpy().copy() for name, p in model.module.named_parameters() if p.requires_grad
    }
    return TrainingResult(learned, losses)


@dataclass(frozen=True)
class SimilarityMatrix:
    """Dense CSLS scores with a per-row top-k index (ties by lower target handle)."""

    scores: np.ndarray
    k_csls: int
    top_k: int = 10

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.float64)
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape

    @cached_property
    def topk(self) -> np.ndarray:
        order = np.argsort(-self.scores, axis=1, kind="stable")
        return order[:, : min(self.top_k, self.scores.shape[1])]


def _mean_top(cos: np.ndarray, k: int) -> np.ndarray:
    """Mean of the ``k`` largest values of each row."""
    if k == 0 or cos.shape[1] == 0:
        return np.zeros(cos.shape[0])
    top = np.partition(cos, cos.shape[1] - k, axis=1)[:, cos.shape[1] - k :]
    return top.mean(axis=1)


def csls_similarity(
    source: np.ndarray,
    target: np.ndarray,
    k_csls: int = 10,
    top_k: int = 10,
) -> SimilarityMatrix:
    """CSLS(x, y) = 2 cos(x, y) - r_T(x) - r_S(y).

    ``r_T(x)`` is the mean cosine of ``x`` to its ``k_csls`` nearest targets
    and ``r_S(y)`` the mean cosine of ``y`` to its nearest sources. A
    neighbourhood larger than the other side is clamped with a warning.
    """
    source = normalize_rows(source)
    target = normalize_rows(target)
    cos = source @ target.T
    k_target = min(k_csls, target.shape[0])
    k_source = min(k_csls, source.shape[0])
    if k_target < k_csls or k_source < k_csls:
        logger.warning(
            f"k_csls={k_csls} exceeds graph size ({source.shape[0]} sources, "
            f"{target.shape[0]} targets); clamped to {k_source}/{k_target}"
        )
    r_target = _mean_top(cos, k_target)
    r_source = _mean_top(cos.T, k_source)
    scores = 2.0 * cos - r_target[:, None] - r_source[None, :]
    return SimilarityMatrix(scores, k_csls, top_k)


def pseudo_pairs(similarity: SimilarityMatrix) -> list[tuple[int, int]]:
    """Per-source argmax target (first maximum, i.e. lowest handle on ties)."""
    if similarity.scores.shape[1] == 0:
        return []
    best = np.argmax(similarity.scores, axis=1)
    return [(s, int(t)) for s, t in enumerate(best)]
