"""Run configuration: a flat ``key = value`` file validated by a pydantic model."""

import logging
import os
from pathlib import Path
from typing import Literal, Mapping, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .integration import TrainerConfig
from .kg import GRANULARITIES, Granularity
from .structural import SkipgramConfig, WalkConfig
from .temporal import TemporalConfig

logger = logging.getLogger(__name__)

ENV_OVERRIDES = {
    "WILDALIGN_REASONER_URL": "reasoner_url",
    "WILDALIGN_REASONER_TOKEN": "reasoner_token",
    "WILDALIGN_REASONER_MODEL": "reasoner_model",
}


class AlignConfig(BaseModel):
    """Every knob of an alignment run; defaults are the module defaults."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = 0
    iterations: int = Field(2, ge=1)
    train_ratio: Optional[float] = Field(None, ge=0.0, le=1.0)

    # structural
    walk_beta: float = Field(0.5, gt=0.0, lt=1.0)
    walk_length: int = Field(20, ge=2)
    walks_per_entity: int = Field(10, ge=1)
    structural_dim: int = Field(64, ge=1)
    skipgram_window: int = Field(5, ge=1)
    skipgram_negative: int = Field(5, ge=1)
    skipgram_epochs: int = Field(5, ge=1)
    skipgram_learning_rate: float = Field(0.025, gt=0.0)

    # temporal and names
    time_dim: int = Field(32, ge=1)
    time_frequencies: int = Field(15, ge=1)
    name_dim: int = Field(64, ge=1)
    name_vectors: Optional[str] = None

    # fusion and training
    normalize_views: bool = True
    use_gates: bool = True
    tune_structural_map: bool = True
    margin: float = Field(1.0, gt=0.0)
    negatives: int = Field(5, ge=1)
    epochs: int = Field(100, ge=1)
    learning_rate: float = Field(0.01, gt=0.0)
    k_csls: int = Field(10, ge=1)

    # projection and retrieval
    top_k: int = Field(5, ge=1)
    retrieval_k: Optional[int] = Field(None, ge=1)
    relation_map: Optional[str] = None
    bank_mode: Literal["exact", "approx"] = "exact"
    ann_ef_search: int = Field(64, ge=1)
    bank_include_targets: bool = False

    # reasoner
    reasoner: Literal["mock", "remote", "replay"] = "mock"
    reasoner_url: Optional[str] = None
    reasoner_token: Optional[str] = None
    reasoner_model: str = "gpt-4o-mini"
    reasoner_timeout: float = Field(30.0, gt=0.0)
    reasoner_max_attempts: int = Field(3, ge=1)
    transcript: Optional[str] = None
    max_in_flight: int = Field(4, ge=1)
    max_context_facts: int = Field(20, ge=1)
    augment_budget: Optional[int] = Field(None, ge=0)
    select_budget: Optional[int] = Field(None, ge=0)
    conflict_budget: Optional[int] = Field(None, ge=0)

    # robustness
    noise_ratio: float = Field(0.0, ge=0.0, le=1.0)

    # ablations
    use_temporal: bool = True
    granularities: tuple[Granularity, ...] = GRANULARITIES
    use_time_projection: bool = True
    use_rel_projection: bool = True
    use_retrieval: bool = True
    use_interaction: bool = True
    use_conflict_detection: bool = True
    csls_only: bool = False

    # statistics
    consistency: Literal["year_span", "overlap"] = "year_span"
    density_base: Literal["valid", "all"] = "valid"

    @field_validator("granularities", mode="before")
    @classmethod
    def _split_granularities(cls, value):
        if isinstance(value, str):
            return tuple(part.strip() for part in value.split(",") if part.strip())
        return value

    @field_validator("granularities")
    @classmethod
    def _known_granularities(cls, value: tuple[Granularity, ...]) -> tuple[Granularity, ...]:
        if Granularity.UNKNOWN in value:
            raise ValueError("granularities are year, month and date")
        return tuple(g for g in GRANULARITIES if g in value)

    @property
    def k_retrieval(self) -> int:
        return self.retrieval_k if self.retrieval_k is not None else self.top_k

    @property
    def active_granularities(self) -> tuple[Granularity, ...]:
        return self.granularities if self.use_temporal else ()

    def walk_config(self) -> WalkConfig:
        return WalkConfig(self.walk_beta, self.walk_length, self.walks_per_entity, self.seed)

    def skipgram_config(self) -> SkipgramConfig:
        return SkipgramConfig(
            dimension=self.structural_dim,
            window=self.skipgram_window,
            negative=self.skipgram_negative,
            epochs=self.skipgram_epochs,
            learning_rate=self.skipgram_learning_rate,
            seed=self.seed,
        )

    def temporal_config(self) -> TemporalConfig:
        return TemporalConfig(self.time_frequencies, self.time_dim, self.seed)

    def trainer_config(self) -> TrainerConfig:
        return TrainerConfig(self.margin, self.negatives, self.epochs, self.learning_rate, self.seed)


def parse_config_lines(lines, path: str = "<config>") -> dict[str, str]:
    """Raw ``key = value`` pairs; ``#`` starts a comment line.

    Raises:
        ConfigError: On a line without ``=`` or a repeated key.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(key or line, f"{path}:{lineno}: expected 'key = value'")
        if key in values:
            raise ConfigError(key, f"{path}:{lineno}: repeated")
        values[key] = value.strip()
    return values


def _config_error(error: ValidationError) -> ConfigError:
    first = error.errors()[0]
    key = ".".join(str(part) for part in first["loc"]) or "<config>"
    return ConfigError(key, first["msg"])


def build_config(
    values: Mapping[str, object],
    environ: Optional[Mapping[str, str]] = None,
) -> AlignConfig:
    """Validate raw values, with reasoner settings overridden from the environment.

    Raises:
        ConfigError: Naming the first unknown or invalid key.
    """
    merged = dict(values)
    environ = os.environ if environ is None else environ
    for variable, key in ENV_OVERRIDES.items():
        if environ.get(variable):
            merged[key] = environ[variable]
    try:
        config = AlignConfig.model_validate(merged)
    except ValidationError as e:
        raise _config_error(e) from e
    if config.reasoner == "remote" and not config.reasoner_url:
        raise ConfigError("reasoner_url", "required by reasoner = remote (or set WILDALIGN_REASONER_URL)")
    if config.reasoner == "replay" and not config.transcript:
        raise ConfigError("transcript", "required by reasoner = replay")
    return config


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, object]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> AlignConfig:
    """Read a config file (defaults only when None) and apply overrides.

    Raises:
        FileNotFoundError: If ``path`` doesn't exist.
        ConfigError: Naming the first unknown or invalid key.
    """
    values: dict[str, object] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Config file not found: {path}")
        values = dict(parse_config_lines(path.read_text(encoding="utf-8").splitlines(), str(path)))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    config = build_config(values, environ)
    logger.debug(f"Loaded config from {path or 'defaults'}")
    return config


def dump_config(config: AlignConfig) -> str:
    """Serialise to the ``key = value`` format (secrets omitted)."""
    lines = []
    for key, value in config.model_dump(mode="json").items():
        if key == "reasoner_token" or value is None:
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
