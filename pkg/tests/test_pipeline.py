"""End-to-end tests of the iterative alignment loop."""

import numpy as np
import pytest

from wildalign import align_graphs
from wildalign.config import AlignConfig
from wildalign.errors import RoundAbortedError, TrainingError
from wildalign.evaluation import degradation
from wildalign.pipeline import AlignmentRun, build_reasoner, run_iterations, split_budget
from wildalign.projection import RelationMap
from wildalign.reasoner import MockReasoner, RemoteReasoner, ReplayReasoner
from wildalign.synth import preset, synth_generate

EASY_CONFIG = AlignConfig(
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


def run_easy(data, config=EASY_CONFIG):
    return run_iterations(data.source, data.target, data.seeds, config, rel_map=RelationMap(data.relation_pairs))


@pytest.fixture(scope="module")
def easy_run(easy_dataset):
    return run_easy(easy_dataset)


def test_split_budget():
    assert split_budget(10, 3) == [4, 3, 3]
    assert split_budget(0, 3) == [0, 0, 0]
    assert split_budget(-2, 2) == [0, 0]
    assert split_budget(5, 0) == []


def test_build_reasoner(tmp_path):
    assert isinstance(build_reasoner(AlignConfig()), MockReasoner)
    remote = build_reasoner(AlignConfig(reasoner="remote", reasoner_url="http://llm.test/v1"))
    assert isinstance(remote, RemoteReasoner)
    transcript = tmp_path / "transcript.jsonl"
    transcript.write_text("", encoding="utf-8")
    assert isinstance(build_reasoner(AlignConfig(reasoner="replay", transcript=str(transcript))), ReplayReasoner)


def test_easy_preset_is_aligned(easy_run, easy_dataset):
    assert not easy_run.aborted
    assert easy_run.metrics.hits[1] >= 0.95
    assert len(easy_run.metrics) == len(easy_dataset.seeds.test_pairs)
    assert len(easy_run.alignment) == easy_dataset.source.num_entities


def test_rounds_grow_the_pool(easy_run, easy_dataset):
    reports = easy_run.reports
    assert reports[0].round == 1
    assert reports[0].pool_size >= len(easy_dataset.seeds.train_pairs)
    assert [r.pool_size for r in reports] == sorted(r.pool_size for r in reports)
    assert set(reports[0].scale_pairs) == {1, 2, 3}
    assert reports[0].bank_size > 0
    assert reports[0].reasoner["select_calls"] > 0
    if len(reports) == 2:
        assert reports[1].metrics.hits[1] >= reports[0].metrics.hits[1]
    else:
        assert easy_run.state.converged


def test_train_pairs_are_never_reassigned(easy_run, easy_dataset):
    train = easy_dataset.seeds.train_pairs
    added = easy_run.state.seed_pool - frozenset(train)
    assert not {s for s, _ in added} & {s for s, _ in train}
    assert not {t for _, t in added} & {t for _, t in train}


def test_runs_are_deterministic(easy_run, easy_dataset):
    again = run_easy(easy_dataset)
    assert again.alignment == easy_run.alignment
    assert [r.to_json() for r in again.reports] == [r.to_json() for r in easy_run.reports]
    np.testing.assert_array_equal(again.similarity.scores, easy_run.similarity.scores)


def test_csls_only_is_a_single_round(easy_dataset):
    result = run_easy(easy_dataset, EASY_CONFIG.model_copy(update={"csls_only": True}))
    assert len(result.reports) == 1
    assert result.reports[0].scale_pairs == {}
    assert result.reports[0].reasoner["select_calls"] == 0
    assert result.state.pins == {}
    assert not result.state.converged


def test_first_round_failure_raises(toy_source, toy_target, toy_seeds, small_config):
    class BrokenReasoner(MockReasoner):
        def select(self, request):
            raise RuntimeError("reasoner state corrupted")

    with pytest.raises(RoundAbortedError, match="round 1 aborted: RuntimeError"):
        run_iterations(toy_source, toy_target, toy_seeds, small_config, reasoner=BrokenReasoner())


def test_later_round_failure_keeps_previous_result(easy_dataset, monkeypatch):
    original = AlignmentRun.round

    def failing(self, round_number, pool, previous):
        if round_number == 2:
            raise TrainingError("loss diverged")
        return original(self, round_number, pool, previous)

    monkeypatch.setattr(AlignmentRun, "round", failing)
    result = run_easy(easy_dataset)
    assert result.aborted
    assert result.state.round == 1
    assert "round 2 aborted" in result.state.abort_reason
    assert len(result.reports) == 1
    assert result.metrics is not None


def test_noise_changes_the_scores(toy_source, toy_target, toy_seeds, small_config):
    clean = run_iterations(toy_source, toy_target, toy_seeds, small_config.model_copy(update={"csls_only": True}))
    noisy = run_iterations(
        toy_source, toy_target, toy_seeds, small_config.model_copy(update={"csls_only": True, "noise_ratio": 0.5})
    )
    assert not np.allclose(clean.similarity.scores, noisy.similarity.scores)


def test_align_graphs_front_door(data_path, small_config):
    config = small_config.model_copy(update={"relation_map": data_path("relation_map.tsv")})
    result = align_graphs(data_path("source.tsv"), data_path("target.tsv"), data_path("seeds.tsv"), config)
    assert len(result.alignment) == 8
    assert all(0 <= t < 9 for t in result.alignment.values())
    assert len(result.metrics) == 4
    assert 1 <= len(result.reports) <= 2


WILD_CONFIG = EASY_CONFIG.model_copy(update={"top_k": 5, "max_context_facts": 60, "bank_include_targets": True})


@pytest.fixture(scope="module")
def wild_data():
    return synth_generate(preset("wild", seed=2, entities=200))


@pytest.fixture(scope="module")
def wild_runs(wild_data):
    full = run_easy(wild_data, WILD_CONFIG)
    baseline = run_easy(wild_data, WILD_CONFIG.model_copy(update={"csls_only": True}))
    return full, baseline


@pytest.mark.slow
def test_wild_preset_full_pipeline_beats_baseline(wild_runs, wild_data):
    full, baseline = wild_runs
    assert not full.aborted
    assert len(full.metrics) == len(baseline.metrics) == len(wild_data.seeds.test_pairs)
    assert full.reports[0].conflicts >= full.reports[0].resolved
    assert full.reports[0].empty_projections <= full.reports[0].projections
    assert full.metrics.hits[1] - baseline.metrics.hits[1] >= 0.10


@pytest.mark.slow
def test_wild_preset_noise_hurts_the_baseline_more(wild_runs, wild_data):
    full, baseline = wild_runs
    noisy = WILD_CONFIG.model_copy(update={"noise_ratio": 0.4})
    noisy_full = run_easy(wild_data, noisy)
    noisy_baseline = run_easy(wild_data, noisy.model_copy(update={"csls_only": True}))
    full_drop = degradation([full.metrics, noisy_full.metrics])
    baseline_drop = degradation([baseline.metrics, noisy_baseline.metrics])
    assert full_drop < baseline_drop


@pytest.mark.slow
def test_easy_preset_at_full_size():
    data = synth_generate(preset("easy", seed=3, entities=200))
    result = run_easy(data)
    assert not result.aborted
    assert result.metrics.hits[1] >= 0.95
    hits = [r.metrics.hits[1] for r in result.reports]
    assert hits == sorted(hits)
