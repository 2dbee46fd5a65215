"""Tests for the wildalign command line."""

import json

import pytest

from wildalign.cli import SCHEMA_VERSION, main
from wildalign.writers import read_similarity

SMALL_CONFIG = """\
# small encoders for a quick run
iterations = 1
walk_length = 8
walks_per_entity = 5
structural_dim = 16
skipgram_epochs = 3
time_dim = 8
time_frequencies = 4
name_dim = 32
epochs = 20
negatives = 3
k_csls = 2
top_k = 3
max_in_flight = 1
"""


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--preset", "easy", "--entities", "20", "--seed", "1", "--out", str(out)]) == 0
    config = out / "small.cfg"
    config.write_text(SMALL_CONFIG, encoding="utf-8")
    return out


def inputs(dataset):
    return [
        "--source", str(dataset / "source.tsv"),
        "--target", str(dataset / "target.tsv"),
        "--seeds", str(dataset / "seeds.tsv"),
        "--relation-map", str(dataset / "relation_map.tsv"),
        "--config", str(dataset / "small.cfg"),
    ]


def test_synth_writes_dataset(dataset):
    for name in ("source.tsv", "target.tsv", "seeds.tsv", "relation_map.tsv", "scenarios.tsv", "config.txt"):
        assert (dataset / name).is_file()
    assert "relation_map = " in (dataset / "config.txt").read_text(encoding="utf-8")


def test_align_then_eval(dataset, tmp_path):
    run = tmp_path / "run"
    log = tmp_path / "align.log"
    assert main(["align", *inputs(dataset), "--out", str(run), "--log-file", str(log)]) == 0

    payload = json.loads((run / "alignment.json").read_text(encoding="utf-8"))
    assert payload["schema_version"] == SCHEMA_VERSION
    assert len(payload["alignment"]) == 20
    assert "reasoner_token" not in payload["config"]
    assert len(payload["rounds"]) == 1
    assert payload["metrics"]["count"] == 14
    assert (run / "config.txt").is_file()
    assert read_similarity(run / "similarity.bin").shape == (20, 20)

    records = [json.loads(line) for line in log.read_text(encoding="utf-8").splitlines()]
    assert any(r["logger"] == "wildalign.pipeline" and r["level"] == "info" for r in records)
    assert all("timestamp" in r and "event" in r for r in records)

    metrics = tmp_path / "metrics.json"
    assert main(["eval", *inputs(dataset), "--run", str(run), "--out", str(metrics)]) == 0
    scored = json.loads(metrics.read_text(encoding="utf-8"))
    assert scored["metrics"]["count"] == 14
    assert scored["metrics"]["hits@1"] == pytest.approx(payload["metrics"]["hits@1"], abs=0.15)
    assert sum(s["count"] for s in scored["scenarios"].values()) == 14


def test_align_is_reproducible(dataset, tmp_path):
    for name in ("a", "b"):
        assert main(["align", *inputs(dataset), "--out", str(tmp_path / name)]) == 0
    first = (tmp_path / "a" / "alignment.json").read_text(encoding="utf-8")
    assert first == (tmp_path / "b" / "alignment.json").read_text(encoding="utf-8")


def test_encode_outputs(dataset, tmp_path):
    out = tmp_path / "encode"
    assert main(["encode", *inputs(dataset), "--out", str(out)]) == 0
    for name in ("corpus.txt", "similarity.bin", "temporal_source.bin", "temporal_target.bin", "bank.bin"):
        assert (out / name).is_file()
    summary = json.loads((out / "encode.json").read_text(encoding="utf-8"))
    assert summary["bank_entries"] > 0
    assert len(summary["alignment_losses"]) == 20
    assert summary["corpus_walks"] > 0


def test_stats_to_stdout(dataset, capsys):
    assert main(["stats", *inputs(dataset)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["stats"]["source"]["entities"] == 20
    assert payload["stats"]["interval_consistency"] == pytest.approx(100.0)


def test_noise_sweep(dataset, tmp_path):
    out = tmp_path / "sweep.json"
    argv = ["noise-sweep", *inputs(dataset), "--ratios", "0,0.5", "--compare-baseline", "--out", str(out)]
    assert main(argv) == 0
    rows = json.loads(out.read_text(encoding="utf-8"))["sweep"]
    assert [row["ratio"] for row in rows] == [0.0, 0.5]
    assert all("baseline" in row for row in rows)


def test_bad_ratios_are_a_usage_error(dataset):
    with pytest.raises(SystemExit) as info:
        main(["noise-sweep", *inputs(dataset), "--ratios", "0.2,2"])
    assert info.value.code == 2


def test_unknown_config_key_is_a_usage_error(dataset, tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n", encoding="utf-8")
    argv = ["stats", *inputs(dataset)[:-2], "--config", str(bad)]
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2
    assert "colour" in capsys.readouterr().err


def test_missing_input_fails(tmp_path, dataset):
    argv = ["stats", *inputs(dataset)]
    argv[argv.index("--source") + 1] = str(tmp_path / "absent.tsv")
    assert main(argv) == 1
