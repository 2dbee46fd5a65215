"""Reasoner backends for fact augmentation and candidate selection.

A reasoner answers two kinds of request:

- ``augment``: given a source entity and one candidate target entity (their
  fact contexts), propose fact edits that supplement missing timestamps or
  trim facts that cannot belong to the same entity.
- ``select``: given a source entity and an ordered list of candidates,
  pick one candidate index or answer ``none``.

``MockReasoner`` implements both with deterministic rules. ``RemoteReasoner``
sends JSON prompts to a chat-completion endpoint, and ``ReplayReasoner``
answers the same prompts from a recorded transcript.
"""

import hashlib
import json
import logging
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Literal, Optional, Protocol, Sequence, Union

import httpx
from pydantic import BaseModel, StrictInt, ValidationError, field_validator
from tenacity import Retrying, retry_if_exception, stop_after_attempt, wait_exponential

from .errors import ReasonerError
from .kg import UNKNOWN_TIME, TemporalKG, TimeInterval, TimePoint

logger = logging.getLogger(__name__)

EditOp = Literal["add", "remove"]
EditSide = Literal["source", "candidate"]
RequestKind = Literal["select", "augment"]


@dataclass(frozen=True)
class FactView:
    """One fact as seen from an entity: relation, the other endpoint, and time.

    ``classes`` are the source-side relation labels the relation stands for
    (the label itself on the source graph). ``qid`` is None for facts added
    by an edit.
    """

    relation: str
    other: str
    outgoing: bool = True
    begin: TimePoint = UNKNOWN_TIME
    end: TimePoint = UNKNOWN_TIME
    classes: frozenset[str] = frozenset()
    qid: Optional[int] = None

    @property
    def signature(self) -> tuple[str, str, bool, str, str]:
        return (self.relation, self.other, self.outgoing, self.begin.literal, self.end.literal)

    @property
    def is_valid(self) -> bool:
        return self.begin.is_known or self.end.is_known

    @property
    def years(self) -> frozenset[int]:
        return frozenset(p.year for p in (self.begin, self.end) if p.is_known)

    def to_json(self) -> dict:
        return {
            "relation": self.relation,
            "other": self.other,
            "direction": "out" if self.outgoing else "in",
            "begin": self.begin.literal,
            "end": self.end.literal,
        }


def fact_view(kg: TemporalKG, entity: int, qid: int, classes: frozenset[str]) -> FactView:
    q = kg.quadruples[qid]
    outgoing = q.head == entity
    other = q.tail if outgoing else q.head
    return FactView(
        kg.relations[q.rel],
        kg.entities[other],
        outgoing,
        q.interval.begin,
        q.interval.end,
        classes,
        qid,
    )


@dataclass(frozen=True)
class EntityContext:
    """An entity label with the ordered facts shown to the reasoner."""

    entity: int
    label: str
    facts: tuple[FactView, ...] = ()
    score: float = 0.0

    def class_years(self) -> frozenset[tuple[str, int]]:
        """``(relation class, year)`` pairs of the valid facts."""
        return frozenset((c, y) for f in self.facts for c in f.classes for y in f.years)

    @property
    def classes(self) -> frozenset[str]:
        return frozenset(c for f in self.facts for c in f.classes)

    def year_span(self) -> Optional[tuple[int, int]]:
        years = [y for f in self.facts for y in f.years]
        if not years:
            return None
        return (min(years), max(years))

    def to_json(self) -> dict:
        return {"entity": self.label, "facts": [f.to_json() for f in self.facts]}


@dataclass(frozen=True)
class FactEdit:
    """Add or remove one fact on the source or candidate working copy."""

    op: EditOp
    side: EditSide
    relation: str
    other: str
    begin: TimePoint = UNKNOWN_TIME
    end: TimePoint = UNKNOWN_TIME
    outgoing: bool = True

    @property
    def signature(self) -> tuple[str, str, bool, str, str]:
        return (self.relation, self.other, self.outgoing, self.begin.literal, self.end.literal)


def apply_edits(
    context: EntityContext,
    edits: Sequence[FactEdit],
    classes_of: Callable[[str], frozenset[str]] = lambda r: frozenset((r,)),
) -> EntityContext:
    """Apply edits to a working copy of ``context``, in order.

    A removal drops every fact with the edit's signature; an addition is
    skipped when a fact with that signature is already present.
    ``classes_of`` gives the relation classes of an added fact.
    """
    facts = list(context.facts)
    for edit in edits:
        if edit.op == "remove":
            facts = [f for f in facts if f.signature != edit.signature]
        elif all(f.signature != edit.signature for f in facts):
            facts.append(
                FactView(
                    edit.relation,
                    edit.other,
                    edit.outgoing,
                    edit.begin,
                    edit.end,
                    classes_of(edit.relation),
                )
            )
    return replace(context, facts=tuple(facts))


@dataclass(frozen=True)
class SelectRequest:
    source: EntityContext
    candidates: tuple[EntityContext, ...]
    stage: str = "scale-1"

    def to_payload(self) -> dict:
        return {
            "stage": self.stage,
            "source": self.source.to_json(),
            "candidates": [dict(c.to_json(), index=i) for i, c in enumerate(self.candidates)],
        }


@dataclass(frozen=True)
class AugmentRequest:
    source: EntityContext
    candidate: EntityContext
    stage: str = "scale-1"

    def to_payload(self) -> dict:
        return {
            "stage": self.stage,
            "source": self.source.to_json(),
            "candidate": self.candidate.to_json(),
        }


@dataclass
class ReasonerStats:
    """Thread-safe call counters."""

    select_calls: int = 0
    augment_calls: int = 0
    failures: int = 0
    malformed: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def count(self, counter: str) -> None:
        with self._lock:
            setattr(self, counter, getattr(self, counter) + 1)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {
                "select_calls": self.select_calls,
                "augment_calls": self.augment_calls,
                "failures": self.failures,
                "malformed": self.malformed,
            }


class Reasoner(Protocol):
    stats: ReasonerStats

    def select(self, request: SelectRequest) -> Optional[int]: ...

    def augment(self, request: AugmentRequest) -> list[FactEdit]: ...


class MockReasoner:
    """Deterministic rule-based reasoner.

    select:
        The candidate sharing the most ``(relation class, year)`` pairs
        with the source, if it shares at least one. Ties go to the higher
        candidate score, then to the earlier candidate.
    augment:
        For every valid source fact, a copy of the first timeless candidate
        fact of the same class, stamped with the source fact's interval
        (supplementation). Every valid candidate fact of a class the source
        also has, whose years all fall outside the source's year span, is
        removed (trimming).
    """

    def __init__(self):
        self.stats = ReasonerStats()

    def select(self, request: SelectRequest) -> Optional[int]:
        self.stats.count("select_calls")
        wanted = request.source.class_years()
        best, best_key = None, None
        for i, candidate in enumerate(request.candidates):
            matched = len(wanted & candidate.class_years())
            if matched < 1:
                continue
            key = (matched, candidate.score)
            if best_key is None or key > best_key:
                best, best_key = i, key
        return best

    def augment(self, request: AugmentRequest) -> list[FactEdit]:
        self.stats.count("augment_calls")
        source, candidate = request.source, request.candidate
        edits: list[FactEdit] = []
        timeless = [f for f in candidate.facts if not f.is_valid]
        for fact in source.facts:
            if not fact.is_valid:
                continue
            match = next((f for f in timeless if fact.relation in f.classes), None)
            if match is None:
                continue
            edit = FactEdit("add", "candidate", match.relation, match.other, fact.begin, fact.end, match.outgoing)
            if edit not in edits:
                edits.append(edit)

        span = source.year_span()
        if span is not None:
            shared = source.classes
            for fact in candidate.facts:
                if not fact.is_valid or not fact.classes & shared:
                    continue
                if all(y < span[0] or y > span[1] for y in fact.years):
                    edits.append(
                        FactEdit("remove", "candidate", fact.relation, fact.other, fact.begin, fact.end, fact.outgoing)
                    )
        return edits


# Reply schemas


class SelectReply(BaseModel):
    choice: Union[StrictInt, Literal["none"]]


class EditReply(BaseModel):
    op: EditOp
    side: EditSide
    relation: str
    other: str
    begin: str = "####"
    end: str = "####"
    direction: Literal["out", "in"] = "out"

    @field_validator("begin", "end")
    @classmethod
    def _time_literal(cls, value: str) -> str:
        TimePoint.parse(value)
        return value

    def to_edit(self) -> FactEdit:
        interval = TimeInterval(TimePoint.parse(self.begin), TimePoint.parse(self.end))
        return FactEdit(
            self.op,
            self.side,
            self.relation,
            self.other,
            interval.begin,
            interval.end,
            self.direction == "out",
        )


class AugmentReply(BaseModel):
    edits: list[EditReply] = []


class ChatMessage(BaseModel):
    role: str = "assistant"
    content: Optional[str] = None


class ChatChoice(BaseModel):
    message: ChatMessage


class ChatCompletion(BaseModel):
    choices: list[ChatChoice]


SELECT_INSTRUCTIONS = (
    "You align entities between two temporal knowledge graphs. Given a source "
    "entity and numbered candidate entities with their dated facts, pick the "
    "candidate that denotes the same real-world entity. Reply with JSON only: "
    '{"choice": <candidate index>} or {"choice": "none"}.'
)

AUGMENT_INSTRUCTIONS = (
    "You repair the temporal facts of two entity descriptions before they are "
    "compared. Supplement facts that lack a timestamp when the other side "
    "dates the same relation, and remove facts whose dates cannot belong to "
    "the other entity. Reply with JSON only: "
    '{"edits": [{"op": "add"|"remove", "side": "source"|"candidate", '
    '"relation": str, "other": str, "direction": "out"|"in", "begin": str, "end": str}]}. '
    'Time literals are YYYY, YYYY-MM, YYYY-MM-DD or "####".'
)


def request_key(kind: RequestKind, payload: dict) -> str:
    """SHA-256 of the canonical JSON of a request; the transcript lookup key."""
    text = json.dumps({"kind": kind, "payload": payload}, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class TranscriptLog:
    """Append-only JSON-lines record of reasoner requests and raw replies."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, kind: RequestKind, key: str, payload: dict, reply: str) -> None:
        record = {"kind": kind, "key": key, "request": payload, "reply": reply}
        line = json.dumps(record, sort_keys=True, ensure_ascii=False)
        with self._lock:
            with self.path.open("a", encoding="utf-8") as f:
                f.write(line + "\n")

    def replies(self) -> dict[str, str]:
        """Recorded replies by request key; later records win.

        Raises:
            FileNotFoundError: If the transcript file doesn't exist.
        """
        if not self.path.exists():
            raise FileNotFoundError(f"Transcript not found: {self.path}")
        replies = {}
        with self.path.open(encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    replies[record["key"]] = record["reply"]
                except (json.JSONDecodeError, KeyError, TypeError):
                    logger.warning(f"{self.path}:{lineno}: skipping unreadable transcript record")
        return replies


class PromptingReasoner:
    """Prompt construction and strict reply parsing shared by text-backed reasoners.

    Subclasses implement ``_complete(kind, key, messages) -> str``. A reply
    that is not valid JSON for its schema counts as malformed: ``select``
    answers None and ``augment`` returns no edits.
    """

    def __init__(self, transcript: Optional[TranscriptLog] = None):
        self.stats = ReasonerStats()
        self.transcript = transcript

    def _complete(self, kind: RequestKind, key: str, messages: list[dict]) -> str:
        raise NotImplementedError

    def _ask(self, kind: RequestKind, payload: dict) -> str:
        self.stats.count(f"{kind}_calls")
        key = request_key(kind, payload)
        instructions = SELECT_INSTRUCTIONS if kind == "select" else AUGMENT_INSTRUCTIONS
        messages = [
            {"role": "system", "content": instructions},
            {"role": "user", "content": json.dumps(payload, ensure_ascii=False)},
        ]
        try:
            reply = self._complete(kind, key, messages)
        except ReasonerError:
            self.stats.count("failures")
            raise
        if self.transcript is not None:
            self.transcript.append(kind, key, payload, reply)
        return reply

    def select(self, request: SelectRequest) -> Optional[int]:
        if not request.candidates:
            return None
        reply = self._ask("select", request.to_payload())
        try:
            choice = SelectReply.model_validate_json(reply).choice
        except ValidationError as e:
            self.stats.count("malformed")
            logger.warning(f"Malformed select reply for {request.source.label!r}: {e.error_count()} errors")
            return None
        if choice == "none":
            return None
        if not 0 <= choice < len(request.candidates):
            self.stats.count("malformed")
            logger.warning(
                f"Select reply for {request.source.label!r} chose {choice}, "
                f"outside 0..{len(request.candidates) - 1}"
            )
            return None
        return choice

    def augment(self, request: AugmentRequest) -> list[FactEdit]:
        reply = self._ask("augment", request.to_payload())
        try:
            parsed = AugmentReply.model_validate_json(reply)
        except ValidationError as e:
            self.stats.count("malformed")
            logger.warning(f"Malformed augment reply for {request.source.label!r}: {e.error_count()} errors")
            return []
        try:
            return [edit.to_edit() for edit in parsed.edits]
        except ValueError as e:
            self.stats.count("malformed")
            logger.warning(f"Augment reply for {request.source.label!r} has an invalid interval: {e}")
            return []


def _is_transient(error: BaseException) -> bool:
    if isinstance(error, httpx.TransportError):
        return True
    if isinstance(error, httpx.HTTPStatusError):
        status = error.response.status_code
        return status == 429 or status >= 500
    return False


class RemoteReasoner(PromptingReasoner):
    """Chat-completion client over HTTP JSON.

    Transport errors, 429 and 5xx replies are retried with exponential
    backoff; after ``max_attempts`` a ReasonerError is raised. A response
    body that doesn't follow the chat-completion schema is treated as an
    empty (malformed) reply.

    Args:
        url: Full chat-completion endpoint URL.
        model: Model name sent with every request.
        token: Bearer token, if the endpoint needs one.
        timeout: Per-request timeout in seconds.
        max_attempts: Attempts per request, the first included.
        backoff: Base of the exponential wait between attempts, in seconds.
        transcript: Optional audit log of every request and reply.
        client: Pre-built ``httpx.Client`` (tests pass one with a mock
            transport).
    """

    def __init__(
        self,
        url: str,
        model: str,
        token: Optional[str] = None,
        timeout: float = 30.0,
        max_attempts: int = 3,
        backoff: float = 0.5,
        transcript: Optional[TranscriptLog] = None,
        client: Optional[httpx.Client] = None,
    ):
        super().__init__(transcript)
        if not url:
            raise ValueError("remote reasoner needs an endpoint URL")
        self.url = url
        self.model = model
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = client if client is not None else httpx.Client(timeout=timeout)
        self._headers = headers
        self._retrying = Retrying(
            stop=stop_after_attempt(max_attempts),
            wait=wait_exponential(multiplier=backoff, min=0, max=8 * backoff),
            retry=retry_if_exception(_is_transient),
            reraise=True,
        )

    def close(self) -> None:
        self._client.close()

    def _post(self, body: dict) -> httpx.Response:
        response = self._client.post(self.url, json=body, headers=self._headers)
        response.raise_for_status()
        return response

    def _complete(self, kind: RequestKind, key: str, messages: list[dict]) -> str:
        body = {"model": self.model, "temperature": 0, "messages": messages}
        try:
            response = self._retrying.copy()(self._post, body)
        except httpx.HTTPError as e:
            raise ReasonerError(f"{kind} request {key[:12]} failed: {e}") from e
        try:
            completion = ChatCompletion.model_validate_json(response.content)
            return completion.choices[0].message.content or ""
        except (ValidationError, IndexError):
            logger.warning(f"{kind} request {key[:12]}: response is not a chat completion")
            return ""


class ReplayReasoner(PromptingReasoner):
    """Answers from a recorded transcript through the same reply parser.

    Raises ReasonerError for a request that was never recorded.
    """

    def __init__(self, transcript: Union[str, Path, TranscriptLog]):
        super().__init__()
        log = transcript if isinstance(transcript, TranscriptLog) else TranscriptLog(transcript)
        self._replies = log.replies()

    def _complete(self, kind: RequestKind, key: str, messages: list[dict]) -> str:
        try:
            return self._replies[key]
        except KeyError:
            raise ReasonerError(f"no transcript entry for {kind} request {key[:12]}") from None
