"""Small shared helpers: stable hashing, row normalisation, bounded concurrency."""

import logging
import re
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

_NON_ALNUM_RE = re.compile(r"[\W_]+", re.UNICODE)


def stable_hash(token: str) -> int:
    """Process-independent string hash (CRC32); Python's ``hash`` is salted."""
    return zlib.crc32(token.encode("utf-8"))


def canonical_label(label: str) -> str:
    """Lower-case a surface label and collapse punctuation and underscores to spaces.

    ``"<Luis_Milla>"`` and ``"Luis Milla"`` both become ``"luis milla"``.
    """
    return _NON_ALNUM_RE.sub(" ", label.lower()).strip()


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """L2-normalise rows; all-zero rows stay zero."""
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)


def bounded_map(fn: Callable[[T], R], items: Iterable[T], max_in_flight: int = 1) -> list[R]:
    """Apply ``fn`` to ``items`` with at most ``max_in_flight`` concurrent calls.

    Results come back in input order regardless of completion order.
    """
    items = list(items)
    if max_in_flight <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(fn, items))
