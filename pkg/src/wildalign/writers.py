"""Output formats: canonical quadruple/seed files and binary dumps."""

import logging
import struct
from typing import Iterable, Sequence

import numpy as np

from .kg import GRANULARITIES, Granularity, SeedAlignment, TemporalKG

logger = logging.getLogger(__name__)

# Granularity tags used in the temporal embedding dump.
GRANULARITY_TAGS = {g: i for i, g in enumerate(GRANULARITIES)}

_SIMILARITY_HEADER = struct.Struct("<II")
_BANK_HEADER = struct.Struct("<IIBI")


def serialize_tkg(kg: TemporalKG) -> str:
    """Render a graph in the canonical quadruple file format."""
    lines = []
    for q in kg.quadruples:
        lines.append(
            "\t".join(
                (
                    kg.entities[q.head],
                    kg.relations[q.rel],
                    kg.entities[q.tail],
                    q.interval.begin.literal,
                    q.interval.end.literal,
                )
            )
        )
    return "".join(line + "\n" for line in lines)


def write_tkg_file(kg: TemporalKG, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(serialize_tkg(kg))


def write_seed_file(seeds: SeedAlignment, source: TemporalKG, target: TemporalKG, path: str) -> None:
    """Write seed pairs with an explicit ``train``/``test`` column."""
    with open(path, "w", encoding="utf-8") as f:
        for pair in seeds:
            split = "train" if pair.train else "test"
            f.write(f"{source.entities[pair.source]}\t{target.entities[pair.target]}\t{split}\n")


def write_relation_pairs(pairs: Iterable[tuple[str, str]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for source_rel, target_rel in pairs:
            f.write(f"{source_rel}\t{target_rel}\n")


def write_corpus(corpus: Iterable[Sequence[str]], path: str) -> None:
    """One walk per line, tokens space-separated."""
    with open(path, "w", encoding="utf-8") as f:
        for walk in corpus:
            f.write(" ".join(walk) + "\n")


def write_similarity(scores: np.ndarray, path: str) -> None:
    """Row-major float32 matrix behind an 8-byte ``<rows, cols>`` header."""
    rows, cols = scores.shape
    with open(path, "wb") as f:
        f.write(_SIMILARITY_HEADER.pack(rows, cols))
        f.write(np.ascontiguousarray(scores, dtype="<f4").tobytes())


def read_similarity(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        rows, cols = _SIMILARITY_HEADER.unpack(f.read(_SIMILARITY_HEADER.size))
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, found {data.size}")
    return data.reshape(rows, cols).astype(np.float64)


def temporal_dump_dtype(dim: int) -> np.dtype:
    return np.dtype([("entity", "<u4"), ("granularity", "u1"), ("vector", "<f4", (dim,))])


def write_temporal_embeddings(embeddings: dict[Granularity, np.ndarray], path: str) -> None:
    """Dump per-granularity entity vectors as ``(entity, tag, float32[d_t])`` records."""
    blocks = []
    for granularity, matrix in embeddings.items():
        records = np.zeros(matrix.shape[0], dtype=temporal_dump_dtype(matrix.shape[1]))
        records["entity"] = np.arange(matrix.shape[0])
        records["granularity"] = GRANULARITY_TAGS[granularity]
        records["vector"] = matrix
        blocks.append(records)
    if blocks:
        np.concatenate(blocks).tofile(path)
    else:
        open(path, "wb").close()


def read_temporal_embeddings(path: str, dim: int) -> np.ndarray:
    return np.fromfile(path, dtype=temporal_dump_dtype(dim))


def write_bank_records(records: Iterable[tuple[int, str, str, np.ndarray]], path: str) -> None:
    """Length-prefixed ``(provenance id, target label, kind, float32 vector)`` records.

    Each record is ``<u4 pid, u4 label bytes, u1 kind bytes, u4 dim>`` followed
    by the UTF-8 label, the ASCII kind and the vector.
    """
    with open(path, "wb") as f:
        for pid, label, kind, vector in records:
            label_bytes = label.encode("utf-8")
            kind_bytes = kind.encode("ascii")
            vector = np.ascontiguousarray(vector, dtype="<f4")
            f.write(_BANK_HEADER.pack(pid, len(label_bytes), len(kind_bytes), vector.shape[0]))
            f.write(label_bytes)
            f.write(kind_bytes)
            f.write(vector.tobytes())


def read_bank_records(path: str) -> list[tuple[int, str, str, np.ndarray]]:
    records = []
    with open(path, "rb") as f:
        data = f.read()
    offset = 0
    while offset < len(data):
        pid, label_len, kind_len, dim = _BANK_HEADER.unpack_from(data, offset)
        offset += _BANK_HEADER.size
        label = data[offset : offset + label_len].decode("utf-8")
        offset += label_len
        kind = data[offset : offset + kind_len].decode("ascii")
        offset += kind_len
        vector = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += 4 * dim
        records.append((pid, label, kind, vector))
    return records
