"""Tests for the rule-based, remote (mock HTTP transport) and replay reasoners."""

import json

import httpx
import pytest

from wildalign.errors import ReasonerError
from wildalign.kg import TimePoint
from wildalign.reasoner import (
    SELECT_INSTRUCTIONS,
    AugmentRequest,
    EntityContext,
    FactEdit,
    FactView,
    MockReasoner,
    RemoteReasoner,
    ReplayReasoner,
    SelectRequest,
    TranscriptLog,
    apply_edits,
    request_key,
)

URL = "http://reasoner.test/v1/chat/completions"


def fact(relation, other, begin="####", end="####", classes=None):
    return FactView(
        relation,
        other,
        begin=TimePoint.parse(begin),
        end=TimePoint.parse(end),
        classes=frozenset(classes or (relation,)),
    )


@pytest.fixture
def alice():
    return EntityContext(
        0,
        "Alice",
        (fact("P100", "Acme", "1990", "1995"), fact("P101", "Paris", "2001-03", "2004"), fact("P102", "Bob")),
    )


def candidate(entity, label, facts, score=0.0):
    return EntityContext(entity, label, tuple(facts), score)


def chat(content):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def remote(handler, **kwargs):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return RemoteReasoner(URL, "test-model", client=client, backoff=0, **kwargs)


# Rule-based reasoner


def test_mock_select_most_shared_class_years(alice):
    a = candidate(0, "<Acme-ish>", [fact("relation_0", "<Acme>", "1990", "1995", {"P100"})], score=0.5)
    b = candidate(
        1,
        "<Alice>",
        [
            fact("relation_1", "<Paris>", "2001", "2004", {"P101"}),
            fact("relation_0", "<Acme>", "1990", "1991", {"P100"}),
        ],
        score=0.1,
    )
    reasoner = MockReasoner()
    assert reasoner.select(SelectRequest(alice, (a, b))) == 1
    assert reasoner.stats.select_calls == 1


def test_mock_select_ties_by_score_then_order(alice):
    facts = [fact("relation_0", "<Acme>", "1990", "####", {"P100"})]
    low, high = candidate(0, "<A>", facts, 0.1), candidate(1, "<B>", facts, 0.9)
    assert MockReasoner().select(SelectRequest(alice, (low, high))) == 1
    same = candidate(2, "<C>", facts, 0.1)
    assert MockReasoner().select(SelectRequest(alice, (low, same))) == 0


def test_mock_select_none_without_overlap(alice):
    unrelated = candidate(0, "<X>", [fact("relation_9", "<Y>", "1800", "1801", {"P999"})])
    assert MockReasoner().select(SelectRequest(alice, (unrelated,))) is None
    assert MockReasoner().select(SelectRequest(alice, ())) is None


def test_mock_augment_supplements_and_trims(alice):
    target = candidate(
        3,
        "<Alice>",
        [
            fact("relation_0", "<Acme>", classes={"P100"}),
            fact("relation_1", "<Paris>", "1950", "1955", {"P101"}),
        ],
    )
    reasoner = MockReasoner()
    edits = reasoner.augment(AugmentRequest(alice, target))
    assert edits == [
        FactEdit("add", "candidate", "relation_0", "<Acme>", TimePoint(1990), TimePoint(1995)),
        FactEdit("remove", "candidate", "relation_1", "<Paris>", TimePoint(1950), TimePoint(1955)),
    ]
    assert reasoner.stats.augment_calls == 1


def test_mock_augment_keeps_overlapping_facts(alice):
    target = candidate(3, "<Alice>", [fact("relation_1", "<Paris>", "1999", "2002", {"P101"})])
    assert MockReasoner().augment(AugmentRequest(alice, target)) == []


def test_mock_augment_without_source_time():
    timeless = EntityContext(0, "Paris", (fact("P103", "France"),))
    target = candidate(2, "<Paris>", [fact("relation_3", "<France>", "1900", "1900", {"P103"})])
    assert MockReasoner().augment(AugmentRequest(timeless, target)) == []


def test_apply_edits():
    context = candidate(3, "<Alice>", [fact("relation_0", "<Acme>"), fact("relation_1", "<Paris>", "1950", "1955")])
    edits = [
        FactEdit("add", "candidate", "relation_0", "<Acme>", TimePoint(1990), TimePoint(1995)),
        FactEdit("add", "candidate", "relation_0", "<Acme>", TimePoint(1990), TimePoint(1995)),
        FactEdit("remove", "candidate", "relation_1", "<Paris>", TimePoint(1950), TimePoint(1955)),
        FactEdit("remove", "candidate", "relation_7", "<Nowhere>"),
    ]
    edited = apply_edits(context, edits, classes_of=lambda r: frozenset({"P100"}))
    assert [f.signature for f in edited.facts] == [
        ("relation_0", "<Acme>", True, "####", "####"),
        ("relation_0", "<Acme>", True, "1990", "1995"),
    ]
    assert edited.facts[1].classes == frozenset({"P100"})
    assert edited.facts[1].qid is None
    # The original is untouched.
    assert len(context.facts) == 2


def test_context_helpers(alice):
    assert alice.year_span() == (1990, 2004)
    assert ("P101", 2001) in alice.class_years()
    assert alice.classes == frozenset({"P100", "P101", "P102"})
    assert alice.to_json()["facts"][0] == {
        "relation": "P100",
        "other": "Acme",
        "direction": "out",
        "begin": "1990",
        "end": "1995",
    }


def test_select_payload_numbers_candidates(alice):
    payload = SelectRequest(alice, (candidate(0, "<A>", []), candidate(1, "<B>", [])), stage="scale-2").to_payload()
    assert payload["stage"] == "scale-2"
    assert [c["index"] for c in payload["candidates"]] == [0, 1]
    assert payload["candidates"][1]["entity"] == "<B>"


def test_request_key_is_canonical():
    assert request_key("select", {"a": 1, "b": 2}) == request_key("select", {"b": 2, "a": 1})
    assert request_key("select", {"a": 1}) != request_key("augment", {"a": 1})


# Remote reasoner


def test_remote_select(alice):
    seen = []

    def handler(request):
        seen.append(request)
        return chat('{"choice": 1}')

    reasoner = remote(handler, token="secret")
    request = SelectRequest(alice, (candidate(0, "<A>", []), candidate(1, "<B>", [])))
    assert reasoner.select(request) == 1
    body = json.loads(seen[0].content)
    assert body["model"] == "test-model"
    assert body["temperature"] == 0
    assert body["messages"][0] == {"role": "system", "content": SELECT_INSTRUCTIONS}
    assert json.loads(body["messages"][1]["content"]) == request.to_payload()
    assert seen[0].headers["Authorization"] == "Bearer secret"


def test_remote_select_none(alice):
    reasoner = remote(lambda request: chat('{"choice": "none"}'))
    assert reasoner.select(SelectRequest(alice, (candidate(0, "<A>", []),))) is None
    assert reasoner.stats.malformed == 0


@pytest.mark.parametrize("content", ["I think it is 1", '{"choice": 7}', '{"choice": true}', '{"pick": 0}'])
def test_remote_select_malformed(alice, content):
    reasoner = remote(lambda request: chat(content))
    assert reasoner.select(SelectRequest(alice, (candidate(0, "<A>", []), candidate(1, "<B>", [])))) is None
    assert reasoner.stats.malformed == 1


def test_remote_retries_transient_errors(alice):
    calls = []

    def handler(request):
        calls.append(request)
        if len(calls) == 1:
            raise httpx.ConnectError("connection refused", request=request)
        if len(calls) == 2:
            return httpx.Response(503)
        return chat('{"choice": 0}')

    reasoner = remote(handler, max_attempts=3)
    assert reasoner.select(SelectRequest(alice, (candidate(0, "<A>", []),))) == 0
    assert len(calls) == 3
    assert reasoner.stats.failures == 0


def test_remote_gives_up_after_max_attempts(alice):
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(429)

    reasoner = remote(handler, max_attempts=2)
    with pytest.raises(ReasonerError, match="select request"):
        reasoner.select(SelectRequest(alice, (candidate(0, "<A>", []),)))
    assert len(calls) == 2
    assert reasoner.stats.failures == 1


def test_remote_does_not_retry_client_errors(alice):
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(400)

    reasoner = remote(handler, max_attempts=5)
    with pytest.raises(ReasonerError):
        reasoner.select(SelectRequest(alice, (candidate(0, "<A>", []),)))
    assert len(calls) == 1


def test_remote_non_chat_body_is_malformed(alice):
    reasoner = remote(lambda request: httpx.Response(200, json={"result": "ok"}))
    assert reasoner.select(SelectRequest(alice, (candidate(0, "<A>", []),))) is None
    assert reasoner.stats.malformed == 1


def test_remote_augment_parses_edits(alice):
    reply = {
        "edits": [
            {"op": "add", "side": "candidate", "relation": "relation_0", "other": "<Acme>", "begin": "1990", "end": "1995"},
            {"op": "remove", "side": "source", "relation": "P102", "other": "Bob", "direction": "in"},
        ]
    }
    reasoner = remote(lambda request: chat(json.dumps(reply)))
    edits = reasoner.augment(AugmentRequest(alice, candidate(0, "<Alice>", [])))
    assert edits == [
        FactEdit("add", "candidate", "relation_0", "<Acme>", TimePoint(1990), TimePoint(1995)),
        FactEdit("remove", "source", "P102", "Bob", outgoing=False),
    ]


@pytest.mark.parametrize(
    "edit",
    [
        {"op": "add", "side": "candidate", "relation": "r", "other": "x", "begin": "1990-13"},
        {"op": "add", "side": "candidate", "relation": "r", "other": "x", "begin": "1995", "end": "1990"},
        {"op": "rename", "side": "candidate", "relation": "r", "other": "x"},
    ],
)
def test_remote_augment_malformed(alice, edit):
    reasoner = remote(lambda request: chat(json.dumps({"edits": [edit]})))
    assert reasoner.augment(AugmentRequest(alice, candidate(0, "<Alice>", []))) == []
    assert reasoner.stats.malformed == 1


def test_remote_requires_url():
    with pytest.raises(ValueError, match="endpoint URL"):
        RemoteReasoner("", "m")


# Transcript and replay


def test_transcript_replay(tmp_path, alice):
    path = tmp_path / "transcript.jsonl"
    live = remote(lambda request: chat('{"choice": 1}'), transcript=TranscriptLog(path))
    request = SelectRequest(alice, (candidate(0, "<A>", []), candidate(1, "<B>", [])))
    assert live.select(request) == 1

    record = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert record["kind"] == "select"
    assert record["key"] == request_key("select", request.to_payload())
    assert record["reply"] == '{"choice": 1}'

    replay = ReplayReasoner(path)
    assert replay.select(request) == 1
    assert replay.stats.select_calls == 1
    other = SelectRequest(alice, (candidate(0, "<C>", []),))
    with pytest.raises(ReasonerError, match="no transcript entry"):
        replay.select(other)
    assert replay.stats.failures == 1


def test_transcript_skips_unreadable_lines(tmp_path, caplog):
    path = tmp_path / "transcript.jsonl"
    path.write_text('not json\n{"key": "k", "reply": "r"}\n\n', encoding="utf-8")
    assert TranscriptLog(path).replies() == {"k": "r"}
    assert "skipping unreadable transcript record" in caplog.text


def test_transcript_missing(tmp_path):
    with pytest.raises(FileNotFoundError, match="Transcript not found"):
        ReplayReasoner(tmp_path / "missing.jsonl")
