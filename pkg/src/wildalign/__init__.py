"""wildalign: Align entities across temporal knowledge graphs."""

from pathlib import Path
from typing import Optional, Union

from .config import AlignConfig
from .kg import SeedAlignment, TemporalKG
from .parsers import parse_seed_file, parse_tkg_file
from .pipeline import AlignmentResult, run_iterations
from .reasoner import Reasoner

__version__ = "0.1.0"

GraphSource = Union[str, Path, TemporalKG]


def align_graphs(
    source: GraphSource,
    target: GraphSource,
    seeds: Union[str, Path, SeedAlignment],
    config: Optional[AlignConfig] = None,
    reasoner: Optional[Reasoner] = None,
) -> AlignmentResult:
    """Align the entities of two temporal knowledge graphs.

    Args:
        source: Source graph, or the path of a quadruple file
            (``head\\trel\\ttail\\tbegin\\tend`` per line).
        target: Target graph, or the path of a quadruple file.
        seeds: Reference pairs, or the path of a seed file
            (``src\\ttgt[\\ttrain|test]`` per line). Train pairs seed the
            alignment; test pairs are scored after each round.
        config: Run configuration. Defaults to ``AlignConfig()``.
        reasoner: Reasoner used to select candidates and edit contexts.
            Defaults to the one named by ``config.reasoner``.

    Returns:
        The final alignment, similarity matrix and per-round reports.

    Raises:
        FileNotFoundError: If an input path doesn't exist.
        ParseError: If an input file is malformed.
        ResolutionError: If a seed label is unknown in its graph.
        RoundAbortedError: If the first round fails.
    """
    config = config if config is not None else AlignConfig()
    if not isinstance(source, TemporalKG):
        source = parse_tkg_file(str(source), name="source")
    if not isinstance(target, TemporalKG):
        target = parse_tkg_file(str(target), name="target")
    if not isinstance(seeds, SeedAlignment):
        seeds = parse_seed_file(str(seeds), source, target)
    return run_iterations(source, target, seeds, config, reasoner=reasoner)
