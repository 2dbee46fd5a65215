"""Exception hierarchy for wildalign.

Every error also derives from the builtin a caller would naturally catch
(``ValueError`` for bad input, ``LookupError`` for unknown names,
``RuntimeError`` for state and transport problems).
"""

from typing import Optional


class WildAlignError(Exception):
    """Base class for all wildalign errors."""


class ParseError(WildAlignError, ValueError):
    """Malformed input line in a graph, seed, relation-map or vector file."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where = f"{where}{line}: "
        elif where:
            where = f"{where} "
        super().__init__(f"{where}{message}")


class IntegrityError(WildAlignError, ValueError):
    """Inconsistent label tables, seed splits or intervals."""


class ResolutionError(WildAlignError, ValueError):
    """A label in a seed or relation-map file does not resolve to a handle."""

    def __init__(self, label: str, graph: str):
        self.label = label
        self.graph = graph
        super().__init__(f"Unknown {graph} entity label: {label!r}")


class NameLookupError(WildAlignError, LookupError):
    """A name provider has no vector for the requested label."""

    def __init__(self, label: str):
        self.label = label
        super().__init__(f"No name vector for label {label!r}")

    def __str__(self) -> str:
        return self.args[0]


class WalkError(WildAlignError, ValueError):
    """A random walk was requested from an entity without neighbours."""


class TrainingError(WildAlignError, RuntimeError):
    """Training cannot start (empty corpus, no seeds, no negatives)."""


class LayoutError(WildAlignError, ValueError):
    """View blocks do not match the fused embedding layout."""


class StateError(WildAlignError, RuntimeError):
    """An operation was called before its prerequisites were built."""


class MetricError(WildAlignError, ValueError):
    """A metric was requested over an empty rank list."""


class GenerationError(WildAlignError, ValueError):
    """The synthetic generator configuration cannot be realised."""

    def __init__(self, constraint: str, message: str):
        self.constraint = constraint
        super().__init__(f"{constraint}: {message}")


class ConfigError(WildAlignError, ValueError):
    """A configuration key is unknown or has an invalid value."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key {key!r}: {message}")


class ReasonerError(WildAlignError, RuntimeError):
    """The remote reasoner could not be reached after retries."""


class RoundAbortedError(WildAlignError, RuntimeError):
    """An alignment round failed; wraps the module error that caused it."""

    def __init__(self, round_number: int, cause: BaseException):
        self.round_number = round_number
        self.cause = cause
        super().__init__(f"round {round_number} aborted: {type(cause).__name__}: {cause}")
