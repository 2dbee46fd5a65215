"""Time2Vec encoding of multi-granular entity time signatures."""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
import torch
from torch import nn

from .kg import GRANULARITIES, Granularity, TemporalKG, TimeSpan, active_indices, fact_indices

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TemporalConfig:
    """Time2Vec size (``frequencies`` = k, output k+1) and embedding width d_t."""

    frequencies: int = 15
    dimension: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.frequencies < 1:
            raise ValueError(f"frequencies must be >= 1, got {self.frequencies}")
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")


@dataclass(frozen=True)
class SignatureBatch:
    """Sparse signatures for a batch of rows as parallel ``(row, index)`` arrays."""

    rows: np.ndarray
    indices: np.ndarray
    size: int

    @classmethod
    def from_index_sets(cls, index_sets: Sequence[Iterable[int]]) -> "SignatureBatch":
        rows, indices = [], []
        for row, active in enumerate(index_sets):
            for index in sorted(active):
                rows.append(row)
                indices.append(index)
        return cls(np.asarray(rows, dtype=np.int64), np.asarray(indices, dtype=np.int64), len(index_sets))

    @classmethod
    def from_signature(cls, signature: np.ndarray) -> "SignatureBatch":
        return cls.from_index_sets([np.flatnonzero(signature).tolist()])

    @property
    def empty_rows(self) -> np.ndarray:
        counts = np.bincount(self.rows, minlength=self.size)
        return np.flatnonzero(counts == 0)


def entity_signatures(
    kg: TemporalKG,
    span: Optional[TimeSpan] = None,
    granularities: Sequence[Granularity] = GRANULARITIES,
) -> dict[Granularity, SignatureBatch]:
    """Signatures of every entity of ``kg`` at each granularity."""
    return {
        g: SignatureBatch.from_index_sets([active_indices(e, g, kg, span) for e in range(kg.num_entities)])
        for g in granularities
    }


def fact_set_signatures(
    kg: TemporalKG,
    fact_sets: Sequence[Iterable[int]],
    span: Optional[TimeSpan] = None,
    granularities: Sequence[Granularity] = GRANULARITIES,
) -> dict[Granularity, SignatureBatch]:
    """Signatures derived from explicit fact subsets (one row per subset)."""
    fact_sets = [tuple(s) for s in fact_sets]
    return {
        g: SignatureBatch.from_index_sets([fact_indices(kg, facts, g, span) for facts in fact_sets])
        for g in granularities
    }


def time2vec(t, omega: torch.Tensor, phi: torch.Tensor) -> torch.Tensor:
    """Time2Vec: ``[w0*t + p0, cos(w1*t + p1), ..., cos(wk*t + pk)]``.

    ``t`` may be a scalar or a tensor of time indices; the encoding is added
    as a trailing dimension of size k+1.
    """
    t = torch.as_tensor(t, dtype=omega.dtype).unsqueeze(-1)
    z = omega * t + phi
    return torch.cat([z[..., :1], torch.cos(z[..., 1:])], dim=-1)


class Time2Vec(nn.Module):
    """Learnable frequencies and phases of one granularity."""

    def __init__(self, frequencies: int, span_size: int, generator: torch.Generator):
        super().__init__()
        omega = torch.randn(frequencies + 1, generator=generator)
        phi = torch.rand(frequencies + 1, generator=generator) * 2 * math.pi
        omega[0] = 1.0 / max(span_size, 1)
        phi[0] = 0.0
        self.omega = nn.Parameter(omega)
        self.phi = nn.Parameter(phi)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        return time2vec(t, self.omega, self.phi)


class GranularEncoder(nn.Module):
    """Granularity projection applied to the mean Time2Vec of an entity's active indices."""

    def __init__(self, config: TemporalConfig, span_size: int, generator: torch.Generator):
        super().__init__()
        self.time2vec = Time2Vec(config.frequencies, span_size, generator)
        fan_in, fan_out = config.frequencies + 1, config.dimension
        std = math.sqrt(2.0 / (fan_in + fan_out))
        self.projection = nn.Parameter(torch.randn(fan_out, fan_in, generator=generator) * std)

    def forward(self, batch: SignatureBatch) -> torch.Tensor:
        indices = torch.as_tensor(batch.indices)
        rows = torch.as_tensor(batch.rows)
        encoded = self.time2vec(indices.to(self.projection.dtype))
        summed = encoded.new_zeros(batch.size, encoded.shape[-1]).index_add(0, rows, encoded)
        counts = torch.bincount(rows, minlength=batch.size).clamp(min=1).unsqueeze(1)
        return (summed / counts.to(summed.dtype)) @ self.projection.T


class TemporalEncoder(nn.Module):
    """One Time2Vec + projection per granularity.

    Args:
        config: Sizes and seed.
        span: Index space shared by the graphs being encoded; only its
            sizes are used (to condition the linear Time2Vec component).
    """

    def __init__(self, config: TemporalConfig, span: Optional[TimeSpan]):
        super().__init__()
        self.config = config
        generator = torch.Generator().manual_seed(config.seed)
        self.encoders = nn.ModuleDict(
            {
                g.value: GranularEncoder(config, span.size(g) if span is not None else 1, generator)
                for g in GRANULARITIES
            }
        )

    @property
    def dimension(self) -> int:
        return self.config.dimension

    def encoder(self, granularity: Granularity) -> GranularEncoder:
        return self.encoders[granularity.value]

    def forward(self, batches: dict[Granularity, SignatureBatch]) -> dict[Granularity, torch.Tensor]:
        return {g: self.encoder(g)(batch) for g, batch in batches.items()}


@dataclass(frozen=True)
class GranularEmbeddings:
    """Per-granularity ``|E| x d_t`` matrices of entity temporal embeddings."""

    vectors: dict[Granularity, np.ndarray]

    def for_entity(self, entity: int) -> dict[Granularity, np.ndarray]:
        return {g: m[entity] for g, m in self.vectors.items()}

    def stacked(self) -> np.ndarray:
        """``|E| x 3 x d_t`` array in year, month, date order."""
        return np.stack([self.vectors[g] for g in GRANULARITIES], axis=1)


def encode_entity_time(
    signature: np.ndarray,
    granularity: Granularity,
    encoder: TemporalEncoder,
) -> np.ndarray:
    """Temporal embedding of one entity at one granularity from its binary signature."""
    with torch.no_grad():
        vector = encoder.encoder(granularity)(SignatureBatch.from_signature(signature))
    return vector[0].numpy().astype(np.float64)


def encode_all_granularities(
    kg: TemporalKG,
    encoder: TemporalEncoder,
    span: Optional[TimeSpan] = None,
) -> GranularEmbeddings:
    """Year, month and date embeddings of every entity of ``kg``."""
    with torch.no_grad():
        encoded = encoder(entity_signatures(kg, span))
    return GranularEmbeddings({g: t.numpy().astype(np.float64) for g, t in encoded.items()})
