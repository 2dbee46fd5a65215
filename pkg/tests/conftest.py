"""Shared test fixtures: a hand-written toy graph pair and small run configs."""

import os

import numpy as np
import pytest

from wildalign.config import AlignConfig
from wildalign.integration import (
    AlignmentModel,
    HashingNameProvider,
    TrainerConfig,
    csls_similarity,
    embed_names,
    train_alignment,
)
from wildalign.kg import TemporalKG, TimeInterval, TimePoint
from wildalign.parsers import parse_seed_file, parse_tkg_file
from wildalign.projection import RelationMap, build_projection_hypergraph
from wildalign.synth import preset, synth_generate
from wildalign.temporal import TemporalConfig

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def interval(begin: str = "####", end: str = "####") -> TimeInterval:
    return TimeInterval(TimePoint.parse(begin), TimePoint.parse(end))


@pytest.fixture
def data_path():
    def _path(name: str) -> str:
        return os.path.join(DATA_DIR, name)

    return _path


@pytest.fixture
def toy_source(data_path):
    """Eight entities, four relations, mixed granularities and timeless facts."""
    return parse_tkg_file(data_path("source.tsv"), name="source")


@pytest.fixture
def toy_target(data_path):
    """The toy source with bracketed labels, coarser times and a dangling entity."""
    return parse_tkg_file(data_path("target.tsv"), name="target")


@pytest.fixture
def toy_seeds(data_path, toy_source, toy_target):
    """Four train pairs and four test pairs."""
    return parse_seed_file(data_path("seeds.tsv"), toy_source, toy_target)


@pytest.fixture
def tiny_kg():
    """Two facts on one entity: a year interval and a timeless fact."""
    return TemporalKG.from_facts(
        [
            ("a", "r1", "b", interval("1990", "1992")),
            ("a", "r2", "c", interval()),
        ],
        name="tiny",
    )


@pytest.fixture
def small_config():
    """Small dimensions and few epochs; enough for the toy and easy graphs."""
    return AlignConfig(
        seed=7,
        iterations=2,
        walk_length=8,
        walks_per_entity=5,
        structural_dim=16,
        skipgram_epochs=3,
        time_dim=8,
        time_frequencies=4,
        name_dim=32,
        epochs=30,
        negatives=3,
        k_csls=2,
        top_k=3,
        max_in_flight=1,
    )


@pytest.fixture(scope="session")
def easy_dataset():
    """Synthetic easy preset: identical names and one-to-one relations."""
    return synth_generate(preset("easy", seed=3, entities=60))


@pytest.fixture
def trained_toy(toy_source, toy_target, toy_seeds, data_path):
    """Briefly trained encoders on the toy pair with their similarity and layer 1."""
    provider = HashingNameProvider(16)
    names = (embed_names(toy_source.entities, provider), embed_names(toy_target.entities, provider))
    rng = np.random.default_rng(1)
    structure = (rng.normal(size=(toy_source.num_entities, 4)), rng.normal(size=(toy_target.num_entities, 4)))
    model = AlignmentModel.build(toy_source, toy_target, names, structure, TemporalConfig(3, 4, seed=1))
    train_alignment(toy_seeds.train_pairs, model, TrainerConfig(epochs=3, negatives=2))
    similarity = csls_similarity(model.fused("source"), model.fused("target"), k_csls=2, top_k=3)
    rel_map = RelationMap.from_file(data_path("relation_map.tsv"))
    graph = build_projection_hypergraph(similarity, 3, toy_source, toy_target, rel_map)
    return model, similarity, graph
