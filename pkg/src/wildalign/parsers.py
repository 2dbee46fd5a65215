"""Input parsing for quadruple, seed, relation-map and name-vector files."""

import logging
import os
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import IntegrityError, ParseError
from .kg import SeedAlignment, SeedPair, TemporalKG, TimeInterval, TimePoint

logger = logging.getLogger(__name__)

SPLIT_FLAGS = {"train": True, "test": False}


def parse_tkg_file(path: str, name: Optional[str] = None) -> TemporalKG:
    """Parse a quadruple file into a TemporalKG.

    Each non-blank, non-comment line is ``head\\trel\\ttail\\tbegin\\tend``
    with time literals ``YYYY``, ``YYYY-MM``, ``YYYY-MM-DD`` or ``####``.

    Args:
        path: Path to a UTF-8 quadruple file.
        name: Graph name; defaults to the file's base name.

    Returns:
        The indexed graph; handles follow first appearance in the file.

    Raises:
        FileNotFoundError: If the file doesn't exist.
        ParseError: If a line is malformed (the error carries the line number).
    """
    name = name if name is not None else os.path.splitext(os.path.basename(path))[0]
    return parse_tkg_lines(_read_lines(path), name=name, path=path)


def parse_tkg_lines(lines: Iterable[str], name: str = "graph", path: Optional[str] = None) -> TemporalKG:
    """Parse quadruple lines (as read from a file) into a TemporalKG."""
    facts = []
    for lineno, fields in _records(lines):
        if len(fields) != 5:
            raise ParseError(f"expected 5 tab-separated fields, got {len(fields)}", lineno, path)
        head, rel, tail, begin, end = fields
        if not head or not rel or not tail:
            raise ParseError("empty entity or relation label", lineno, path)
        try:
            interval = TimeInterval(TimePoint.parse(begin), TimePoint.parse(end))
        except ValueError as e:
            raise ParseError(str(e), lineno, path) from e
        facts.append((head, rel, tail, interval))
    kg = TemporalKG.from_facts(facts, name=name)
    logger.debug(f"Parsed {kg!r} from {path or '<lines>'}")
    return kg


def parse_seed_file(
    path: str,
    source: TemporalKG,
    target: TemporalKG,
    default_train: bool = True,
) -> SeedAlignment:
    """Parse a seed alignment file of ``src\\ttgt[\\ttrain|test]`` lines.

    Args:
        path: Path to the seed file.
        source: Graph the first column resolves in.
        target: Graph the second column resolves in.
        default_train: Split flag for lines without a third column.

    Returns:
        Pairs in file order.

    Raises:
        FileNotFoundError: If the file doesn't exist.
        ParseError: If a line is malformed.
        ResolutionError: If a label is unknown in its graph.
        IntegrityError: If the train split is not one-to-one.
    """
    return parse_seed_lines(_read_lines(path), source, target, default_train, path=path)


def parse_seed_lines(
    lines: Iterable[str],
    source: TemporalKG,
    target: TemporalKG,
    default_train: bool = True,
    path: Optional[str] = None,
) -> SeedAlignment:
    pairs = []
    for lineno, fields in _records(lines):
        if len(fields) not in (2, 3):
            raise ParseError(f"expected 2 or 3 tab-separated fields, got {len(fields)}", lineno, path)
        train = default_train
        if len(fields) == 3:
            if fields[2] not in SPLIT_FLAGS:
                raise ParseError(f"split flag must be 'train' or 'test', got {fields[2]!r}", lineno, path)
            train = SPLIT_FLAGS[fields[2]]
        pairs.append(SeedPair(source.resolve(fields[0]), target.resolve(fields[1]), train))
    try:
        return SeedAlignment(tuple(pairs))
    except IntegrityError as e:
        raise IntegrityError(f"{path or '<lines>'}: {e}") from e


def parse_relation_pairs(path: str) -> list[tuple[str, str]]:
    """Parse a relation-map file of ``src_rel\\ttgt_rel`` lines."""
    pairs = []
    for lineno, fields in _records(_read_lines(path)):
        if len(fields) != 2 or not all(fields):
            raise ParseError("expected 'src_rel<TAB>tgt_rel'", lineno, path)
        pairs.append((fields[0], fields[1]))
    return pairs


def parse_name_vectors(path: str) -> dict[str, np.ndarray]:
    """Parse a name-vector file of ``label\\tf1 f2 ... fd`` lines.

    Raises:
        FileNotFoundError: If the file doesn't exist.
        ParseError: If a vector is not numeric or dimensions disagree.
    """
    vectors: dict[str, np.ndarray] = {}
    dimension = None
    for lineno, fields in _records(_read_lines(path)):
        if len(fields) != 2:
            raise ParseError("expected 'label<TAB>space-separated values'", lineno, path)
        label, values = fields
        try:
            vector = np.array([float(v) for v in values.split()], dtype=np.float64)
        except ValueError as e:
            raise ParseError(f"non-numeric vector component: {e}", lineno, path) from e
        if dimension is None:
            dimension = vector.shape[0]
        elif vector.shape[0] != dimension:
            raise ParseError(f"vector has {vector.shape[0]} components, expected {dimension}", lineno, path)
        if label in vectors:
            logger.warning(f"{path}:{lineno}: duplicate name vector for {label!r}, keeping the last")
        vectors[label] = vector
    return vectors


def _read_lines(path: str) -> list[str]:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Input file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read().splitlines()
    except UnicodeDecodeError as e:
        raise ParseError(f"not valid UTF-8: {e}", path=path) from e


def _records(lines: Iterable[str]) -> Iterator[tuple[int, list[str]]]:
    """Yield ``(line number, stripped tab fields)`` for data lines."""
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield lineno, [f.strip() for f in line.split("\t")]
