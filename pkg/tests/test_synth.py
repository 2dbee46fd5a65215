"""Tests for the synthetic graph pair generator."""

import re

import pytest

from wildalign.errors import GenerationError
from wildalign.evaluation import SCENARIOS, dataset_stats
from wildalign.kg import Granularity
from wildalign.parsers import parse_seed_file, parse_tkg_file
from wildalign.synth import SynthConfig, preset, synth_generate
from wildalign.writers import serialize_tkg


def labelled(seeds, source, target):
    return [(source.entities[p.source], target.entities[p.target], p.train) for p in seeds]


def test_easy_preset_is_a_clone(easy_dataset):
    data = easy_dataset
    assert data.source.num_entities == data.target.num_entities == 60
    assert len(data.seeds) == 60
    for pair in data.seeds:
        label = data.source.entities[pair.source]
        assert data.target.entities[pair.target] == "<" + label.replace(" ", "_") + ">"
    points = [p for q in data.source.quadruples for p in q.interval.points()]
    assert {p.granularity for p in points} == {Granularity.DATE}
    assert data.source.valid_count == len(data.source)
    assert dataset_stats(data.source, data.target, data.seeds).interval_consistency == pytest.approx(100.0)


def test_train_ratio(easy_dataset):
    assert len(easy_dataset.seeds.train_pairs) == round(0.3 * 60)


def test_wild_preset_drifts_apart():
    data = synth_generate(preset("wild", seed=1, entities=80))
    stats = dataset_stats(data.source, data.target, data.seeds)
    assert len(data.source) > len(data.target)
    assert stats.source.multi_granular
    assert data.target.valid_count < len(data.target)
    assert stats.interval_consistency < 100.0
    renamed = sum(
        data.target.entities[p.target] != "<" + data.source.entities[p.source].replace(" ", "_") + ">"
        for p in data.seeds
    )
    assert renamed > 0


def test_opaque_names_replace_target_labels():
    data = synth_generate(SynthConfig(entities=40, opaque_names=1.0, seed=3))
    assert all(re.fullmatch(r"<Q\d+>", label) for label in data.target.entities)
    assert len(set(data.target.entities)) == data.target.num_entities
    plain = synth_generate(SynthConfig(entities=40, seed=3))
    assert not any(label.startswith("<Q") for label in plain.target.entities)


def test_generation_is_deterministic():
    first = synth_generate(SynthConfig.wild(seed=4, entities=30))
    second = synth_generate(SynthConfig.wild(seed=4, entities=30))
    other = synth_generate(SynthConfig.wild(seed=5, entities=30))
    assert serialize_tkg(first.source) == serialize_tkg(second.source)
    assert serialize_tkg(first.target) == serialize_tkg(second.target)
    assert first.seeds == second.seeds
    assert serialize_tkg(first.source) != serialize_tkg(other.source)


def test_dangling_entities_leave_the_target():
    data = synth_generate(SynthConfig(entities=50, dangling_ratio=0.2, seed=2))
    assert data.source.num_entities == 50
    assert data.target.num_entities <= 40
    assert len(data.seeds) == data.target.num_entities


def test_relation_pairs_cover_every_class():
    data = synth_generate(SynthConfig(entities=10, source_relations=4, target_relations=2))
    assert data.relation_pairs == [
        ("P100", "relation_0"),
        ("P101", "relation_1"),
        ("P102", "relation_0"),
        ("P103", "relation_1"),
    ]


def test_scenarios_label_every_pair(easy_dataset):
    assert len(easy_dataset.scenarios) == len(easy_dataset.seeds)
    assert {label for _, _, label in easy_dataset.scenarios} <= set(SCENARIOS)


@pytest.mark.parametrize(
    "kwargs, constraint",
    [
        ({"entities": 1}, "entities"),
        ({"granularity_mix": (0.5, 0.5, 0.5)}, "granularity_mix"),
        ({"topology_mix": {"sideways": 1.0}}, "unknown topologies"),
        ({"topology_mix": {"containment": 1.0}, "point_intervals": True}, "containment"),
        ({"completeness": (1.0, 1.5)}, "completeness"),
        ({"density_factor": 0.5}, "density_factor"),
        ({"first_year": 2}, "first_year must be >= 4"),
        ({"opaque_names": 1.5}, "opaque_names"),
    ],
)
def test_unrealisable_configs(kwargs, constraint):
    with pytest.raises(GenerationError, match=constraint):
        SynthConfig(**kwargs)


def test_unknown_preset():
    with pytest.raises(ValueError, match="unknown preset 'hard'"):
        preset("hard")


def test_write_dataset(tmp_path):
    data = synth_generate(SynthConfig(entities=12, seed=6))
    paths = data.write(tmp_path / "out")
    assert sorted(paths) == ["relation_map", "scenarios", "seeds", "source", "target"]
    source = parse_tkg_file(paths["source"])
    target = parse_tkg_file(paths["target"])
    assert serialize_tkg(source) == serialize_tkg(data.source)
    seeds = parse_seed_file(paths["seeds"], source, target)
    assert labelled(seeds, source, target) == labelled(data.seeds, data.source, data.target)
    assert len(paths["scenarios"].read_text(encoding="utf-8").splitlines()) == len(data.seeds)
