"""Synthetic graph pairs with controllable temporal pathologies.

One ground-truth entity set is cloned into a source and a target graph.
The clones then drift apart: timestamps at mixed granularities, shifted
intervals (disjoint, overlapping, containing or identical), dropped
timestamps, and extra dated facts on the source side.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np

from .errors import GenerationError
from .evaluation import pair_scenario
from .kg import (
    GRANULARITIES,
    NO_TIME,
    SeedAlignment,
    SeedPair,
    TemporalKG,
    TimeInterval,
    TimePoint,
    split_seeds,
)
from .writers import write_relation_pairs, write_seed_file, write_tkg_file

logger = logging.getLogger(__name__)

TOPOLOGIES = ("disjoint", "overlap", "containment", "identity")

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "br", "tr")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ei")
_CODAS = ("", "", "", "n", "r", "l", "s", "m")


@dataclass(frozen=True)
class SynthConfig:
    """Generator knobs.

    ``granularity_mix`` gives the year, month and date proportions,
    ``completeness`` the share of facts keeping their timestamp on the
    source and target side, and ``density_factor`` how many dated facts
    the source holds per target fact. ``opaque_names`` is the share of
    target entities labelled with a bare identifier instead of a name.
    """

    entities: int = 200
    source_relations: int = 8
    target_relations: int = 8
    facts_per_entity: int = 4
    granularity_mix: tuple[float, float, float] = (0.0, 0.0, 1.0)
    topology_mix: Mapping[str, float] = field(default_factory=lambda: {"identity": 1.0})
    completeness: tuple[float, float] = (1.0, 1.0)
    density_factor: float = 1.0
    name_noise: float = 0.0
    opaque_names: float = 0.0
    dangling_ratio: float = 0.0
    max_duration: int = 10
    point_intervals: bool = False
    first_year: int = 1950
    last_year: int = 2020
    train_ratio: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.entities < 2:
            raise GenerationError("entities", f"need at least 2 entities, got {self.entities}")
        if self.source_relations < 1 or self.target_relations < 1:
            raise GenerationError("relations", "each side needs at least one relation")
        if self.facts_per_entity < 1:
            raise GenerationError("facts_per_entity", f"must be >= 1, got {self.facts_per_entity}")
        _check_mix("granularity_mix", self.granularity_mix)
        unknown = set(self.topology_mix) - set(TOPOLOGIES)
        if unknown:
            raise GenerationError("topology_mix", f"unknown topologies {sorted(unknown)}")
        _check_mix("topology_mix", tuple(self.topology_mix.values()))
        if self.point_intervals and self.topology_mix.get("containment", 0.0) > 0:
            raise GenerationError("topology_mix", "containment needs intervals with a duration, but point_intervals is set")
        if not all(0.0 <= c <= 1.0 for c in self.completeness) or len(self.completeness) != 2:
            raise GenerationError("completeness", f"need two shares in [0, 1], got {self.completeness}")
        if self.density_factor < 1.0:
            raise GenerationError("density_factor", f"must be >= 1, got {self.density_factor}")
        if not 0.0 <= self.name_noise <= 1.0:
            raise GenerationError("name_noise", f"must lie in [0, 1], got {self.name_noise}")
        if not 0.0 <= self.opaque_names <= 1.0:
            raise GenerationError("opaque_names", f"must lie in [0, 1], got {self.opaque_names}")
        if not 0.0 <= self.dangling_ratio < 1.0:
            raise GenerationError("dangling_ratio", f"must lie in [0, 1), got {self.dangling_ratio}")
        if self.first_year > self.last_year or self.max_duration < 0:
            raise GenerationError("years", "first_year must not exceed last_year and max_duration must be >= 0")
        if self.first_year < 4:
            raise GenerationError("years", f"first_year must be >= 4, got {self.first_year}")

    @classmethod
    def easy(cls, seed: int = 0, entities: int = 200) -> "SynthConfig":
        """Clone case: dates only, identical intervals, every timestamp kept."""
        return cls(entities=entities, seed=seed)

    @classmethod
    def wild(cls, seed: int = 0, entities: int = 200) -> "SynthConfig":
        """Mixed granularity, sparse target timestamps, dense source, mostly shifted intervals."""
        return cls(
            entities=entities,
            granularity_mix=(0.5, 0.3, 0.2),
            topology_mix={"disjoint": 0.4, "overlap": 0.3, "containment": 0.2, "identity": 0.1},
            completeness=(1.0, 0.3),
            density_factor=5.0,
            name_noise=0.35,
            opaque_names=0.6,
            seed=seed,
        )


PRESETS = {"easy": SynthConfig.easy, "wild": SynthConfig.wild}


def _check_mix(name: str, values) -> None:
    values = tuple(values)
    if any(v < 0 for v in values) or not np.isclose(sum(values), 1.0):
        raise GenerationError(name, f"proportions must be non-negative and sum to 1, got {values}")


@dataclass
class SynthDataset:
    source: TemporalKG
    target: TemporalKG
    seeds: SeedAlignment
    relation_pairs: list[tuple[str, str]]
    scenarios: list[tuple[str, str, str]]
    config: SynthConfig

    def write(self, directory: Union[str, Path]) -> dict[str, Path]:
        """Write the graphs, seeds, relation map and scenario labels as TSV files."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {
            "source": directory / "source.tsv",
            "target": directory / "target.tsv",
            "seeds": directory / "seeds.tsv",
            "relation_map": directory / "relation_map.tsv",
            "scenarios": directory / "scenarios.tsv",
        }
        write_tkg_file(self.source, paths["source"])
        write_tkg_file(self.target, paths["target"])
        write_seed_file(self.seeds, self.source, self.target, paths["seeds"])
        write_relation_pairs(self.relation_pairs, paths["relation_map"])
        with paths["scenarios"].open("w", encoding="utf-8") as f:
            for row in self.scenarios:
                f.write("\t".join(row) + "\n")
        return paths


def _pseudo_names(count: int, rng: np.random.Generator) -> list[str]:
    def token() -> str:
        syllables = rng.integers(2, 4)
        text = "".join(
            _ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] + _CODAS[rng.integers(len(_CODAS))]
            for _ in range(syllables)
        )
        return text.capitalize()

    names: list[str] = []
    seen = set()
    while len(names) < count:
        name = f"{token()} {token()}"
        if name not in seen:
            seen.add(name)
            names.append(name)
    return names


def _perturb(name: str, rng: np.random.Generator) -> str:
    """Swap two adjacent letters of the longest token, or drop one of its letters."""
    tokens = name.split(" ")
    i = max(range(len(tokens)), key=lambda j: len(tokens[j]))
    word = tokens[i]
    if len(word) < 4:
        return name
    pos = int(rng.integers(1, len(word) - 2))
    if rng.random() < 0.5:
        word = word[:pos] + word[pos + 1] + word[pos] + word[pos + 2 :]
    else:
        word = word[:pos] + word[pos + 1 :]
    tokens[i] = word
    return " ".join(tokens)


def _target_label(name: str) -> str:
    return "<" + name.replace(" ", "_") + ">"


@dataclass(frozen=True)
class _BaseFact:
    head: int
    relation_class: int
    tail: int
    begin: tuple[int, int, int]
    end: tuple[int, int, int]


def _shift(point: tuple[int, int, int], years: int) -> tuple[int, int, int]:
    return (point[0] + years, point[1], point[2])


def _transform(fact: _BaseFact, topology: str, rng: np.random.Generator) -> tuple[tuple, tuple]:
    """Target-side interval of ``fact`` realising ``topology`` against the source interval."""
    begin, end = fact.begin, fact.end
    duration = end[0] - begin[0]
    if topology == "identity":
        return begin, end
    if topology == "overlap":
        if duration == 0:
            return begin, _shift(end, 1)
        shift = int(rng.integers(1, duration + 1))
        return _shift(begin, shift), _shift(end, shift)
    if topology == "containment":
        return _shift(begin, -int(rng.integers(1, 4))), _shift(end, int(rng.integers(1, 4)))
    shift = duration + int(rng.integers(1, 6))
    return _shift(begin, shift), _shift(end, shift)


def _realise(
    begin: tuple[int, int, int],
    end: tuple[int, int, int],
    mix: tuple[float, float, float],
    completeness: float,
    rng: np.random.Generator,
) -> TimeInterval:
    keep = rng.random() < completeness
    granularity = GRANULARITIES[rng.choice(3, p=np.asarray(mix) / sum(mix))]
    if not keep:
        return NO_TIME
    return TimeInterval(TimePoint(*begin).truncate(granularity), TimePoint(*end).truncate(granularity))


def synth_generate(cfg: SynthConfig) -> SynthDataset:
    """Generate a source/target pair, seed alignment and scenario labels.

    Deterministic for a given ``cfg`` (including its seed).

    Raises:
        GenerationError: If ``cfg`` cannot be realised.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.entities
    names = _pseudo_names(n, rng)
    classes = min(cfg.source_relations, cfg.target_relations)
    source_rel = [f"P{100 + i}" for i in range(cfg.source_relations)]
    target_rel = [f"relation_{j}" for j in range(cfg.target_relations)]
    source_by_class = [[r for i, r in enumerate(source_rel) if i % classes == c] for c in range(classes)]
    target_by_class = [[r for j, r in enumerate(target_rel) if j % classes == c] for c in range(classes)]
    relation_pairs = sorted(
        (s, t) for c in range(classes) for s in source_by_class[c] for t in target_by_class[c]
    )

    base: list[_BaseFact] = []
    for head in range(n):
        for _ in range(cfg.facts_per_entity):
            tail = int(rng.integers(n - 1))
            tail += tail >= head
            year = int(rng.integers(cfg.first_year, cfg.last_year + 1))
            begin = (year, int(rng.integers(1, 13)), int(rng.integers(1, 29)))
            duration = 0 if cfg.point_intervals else int(rng.integers(0, cfg.max_duration + 1))
            base.append(_BaseFact(head, int(rng.integers(classes)), tail, begin, _shift(begin, duration)))

    topology_names = list(cfg.topology_mix)
    topology_p = np.asarray([cfg.topology_mix[t] for t in topology_names], dtype=np.float64)
    topology = [topology_names[i] for i in rng.choice(len(topology_names), size=n, p=topology_p / topology_p.sum())]

    dangling = set(rng.permutation(n)[: int(round(cfg.dangling_ratio * n))].tolist())
    target_labels = []
    taken = {_target_label(name) for name in names}
    opaque_ids = rng.permutation(10 * n) if cfg.opaque_names else None
    for e, name in enumerate(names):
        label = _target_label(name)
        if opaque_ids is not None and rng.random() < cfg.opaque_names:
            # Identifier-style label with nothing in common with the source name.
            label = f"<Q{opaque_ids[e] + 1}>"
            taken.add(label)
        elif rng.random() < cfg.name_noise:
            noisy = _target_label(_perturb(name, rng))
            if noisy not in taken:
                taken.add(noisy)
                label = noisy
        target_labels.append(label)

    source_facts = []
    target_facts = []
    extra_copies = int(cfg.density_factor) - 1
    fraction = cfg.density_factor - int(cfg.density_factor)
    for fact in base:
        rel_s = source_by_class[fact.relation_class][rng.integers(len(source_by_class[fact.relation_class]))]
        rel_t = target_by_class[fact.relation_class][rng.integers(len(target_by_class[fact.relation_class]))]
        interval = _realise(fact.begin, fact.end, cfg.granularity_mix, cfg.completeness[0], rng)
        source_facts.append((names[fact.head], rel_s, names[fact.tail], interval))
        if not interval.is_none:
            copies = extra_copies + int(rng.random() < fraction)
            for k in range(1, copies + 1):
                shifted = _realise(
                    _shift(fact.begin, k), _shift(fact.end, k), cfg.granularity_mix, 1.0, rng
                )
                source_facts.append((names[fact.head], rel_s, names[fact.tail], shifted))

        t_begin, t_end = _transform(fact, topology[fact.head], rng)
        t_interval = _realise(t_begin, t_end, cfg.granularity_mix, cfg.completeness[1], rng)
        if fact.head in dangling or fact.tail in dangling:
            continue
        target_facts.append((target_labels[fact.head], rel_t, target_labels[fact.tail], t_interval))

    linked = {label for h, _, t, _ in target_facts for label in (h, t)}
    # Targets left without facts cannot be written out, so they count as dangling.
    kept = [e for e in range(n) if e not in dangling and target_labels[e] in linked]
    order = [kept[i] for i in rng.permutation(len(kept))]
    source = TemporalKG.from_facts(source_facts, name="source", entities=names)
    target = TemporalKG.from_facts(target_facts, name="target", entities=[target_labels[e] for e in order])
    pairs = tuple(SeedPair(e, target.resolve(target_labels[e])) for e in kept)
    seeds = split_seeds(SeedAlignment(pairs), cfg.train_ratio, cfg.seed)
    scenarios = [
        (source.entities[p.source], target.entities[p.target], pair_scenario(p.source, p.target, source, target))
        for p in seeds.pairs
    ]
    logger.info(
        f"Generated {source.num_entities}/{target.num_entities} entities, "
        f"{len(source)}/{len(target)} facts, {len(seeds)} pairs ({n - len(kept)} dangling)"
    )
    return SynthDataset(source, target, seeds, relation_pairs, scenarios, cfg)


def preset(name: str, seed: int = 0, entities: Optional[int] = None) -> SynthConfig:
    """Named generator preset (``easy`` or ``wild``)."""
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(seed=seed) if entities is None else factory(seed=seed, entities=entities)
