"""Shared domain types, identity and normalization rules, and JSONL serialization.

Everything downstream (query expansion, harvesting, domain filtering,
annotation, splitting, evaluation) builds on the types in this module. All
types are immutable values after construction; updates go through
``dataclasses.replace``-style helpers that re-validate.
"""

from __future__ import annotations

import hashlib
import json
import unicodedata
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator

RESOURCE_TIERS = ("high", "medium", "low", "extremely_low")

# Topic set used when a run does not configure its own.
DEFAULT_TOPICS = (
    "Animals",
    "Business",
    "Clothing",
    "Education",
    "Events",
    "Food & Drinks",
    "General",
    "Geography",
    "Immigration",
    "Language",
    "Literature",
    "Names & Persons",
    "Plants",
    "Religion",
    "Sports & Games",
    "Tradition",
    "Travel",
    "Weather",
)

QUERY_PROVENANCES = ("manual", "synthesized", "related")

QA_STATUSES = (
    "harvested",
    "language_flagged",
    "domain_filtered",
    "annotation_pending",
    "accepted",
    "rejected",
)

# Lifecycle DAG: any transition not listed here is rejected.
ALLOWED_STATUS_TRANSITIONS = {
    "harvested": {"language_flagged", "domain_filtered", "annotation_pending"},
    "language_flagged": {"accepted", "rejected"},
    "domain_filtered": {"accepted", "rejected"},
    "annotation_pending": {"accepted", "rejected"},
    "accepted": set(),
    "rejected": set(),
}

_KEY_SEP = "\x1f"  # unit separator; cannot appear in normalized text fields


class ValidationError(ValueError):
    """A record or operation input violated a documented invariant."""


class MalformedRecordError(ValidationError):
    """A record is structurally unusable (e.g. empty text where required)."""


def normalize_text(raw: str) -> str:
    """Canonical text form backing exact-match de-duplication.

    Trims the ends, collapses internal whitespace runs to single spaces, and
    applies Unicode canonical composition (NFC). Case and punctuation are
    preserved: two questions that differ only in casing or punctuation are
    genuinely distinct.
    """
    collapsed = " ".join(raw.split())
    return unicodedata.normalize("NFC", collapsed)


def token_count(text: str) -> int:
    """Number of whitespace-delimited tokens (maximal non-whitespace runs)."""
    return len(text.split())


def content_id(*parts: str) -> str:
    """Stable identifier derived from content, so re-ingestion is idempotent."""
    digest = hashlib.sha256(_KEY_SEP.join(parts).encode("utf-8")).hexdigest()
    return digest[:16]


@dataclass(frozen=True, order=True)
class Locale:
    """A (language, location) pair with its language-resource tier."""

    language: str
    location: str
    resource_tier: str = "medium"

    def __post_init__(self):
        if not self.language or self.language != self.language.lower():
            raise ValidationError(f"language code must be non-empty lowercase: {self.language!r}")
        if not self.location:
            raise ValidationError("location must be non-empty")
        if self.resource_tier not in RESOURCE_TIERS:
            raise ValidationError(
                f"resource_tier must be one of {RESOURCE_TIERS}, got {self.resource_tier!r}"
            )

    @property
    def key(self) -> str:
        return f"{self.language}-{self.location}"

    def to_record(self) -> dict:
        return {
            "language": self.language,
            "location": self.location,
            "resource_tier": self.resource_tier,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Locale":
        return cls(rec["language"], rec["location"], rec.get("resource_tier", "medium"))


@dataclass(frozen=True)
class Topic:
    """A topic drawn from the run's configured topic list."""

    name: str

    def __post_init__(self):
        if not self.name:
            raise ValidationError("topic name must be non-empty")


def validate_topic(topic: Topic, allowed: Iterable[str] | None) -> None:
    """Enforce membership in the configured topic set (None disables the check)."""
    if allowed is not None and topic.name not in set(allowed):
        raise ValidationError(f"topic {topic.name!r} is not in the configured topic list")


@dataclass(frozen=True)
class Query:
    """A seed, synthesized, or related query with provenance and iteration index."""

    id: str
    text: str
    locale: Locale
    topic: Topic
    provenance: str
    iteration: int

    def __post_init__(self):
        if not self.text:
            raise MalformedRecordError("query text empty after normalization")
        if self.provenance not in QUERY_PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        if self.iteration < 0:
            raise ValidationError("iteration must be non-negative")
        if self.provenance == "manual" and self.iteration != 0:
            raise ValidationError("manual queries must carry iteration=0")
        if self.provenance == "related" and self.iteration < 1:
            raise ValidationError("related queries must carry iteration >= 1")

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "locale": self.locale.to_record(),
            "topic": self.topic.name,
            "provenance": self.provenance,
            "iteration": self.iteration,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Query":
        return cls(
            id=rec["id"],
            text=rec["text"],
            locale=Locale.from_record(rec["locale"]),
            topic=Topic(rec["topic"]),
            provenance=rec["provenance"],
            iteration=rec["iteration"],
        )


def make_query(
    text: str,
    locale: Locale,
    topic: Topic,
    provenance: str = "manual",
    iteration: int = 0,
) -> Query:
    """Build a Query with normalized text and a content-derived id."""
    normalized = normalize_text(text)
    if not normalized:
        raise MalformedRecordError(f"query text empty after normalization: {text!r}")
    qid = content_id(normalized, locale.language, locale.location)
    return Query(qid, normalized, locale, topic, provenance, iteration)


@dataclass(frozen=True)
class QAPair:
    """A question, its extracted answer, and its source attribution."""

    id: str
    question: str
    answer: str
    source_url: str
    domain: str
    locale: Locale
    topic: Topic
    iteration: int
    status: str = "harvested"
    edited_answer: str | None = None

    def __post_init__(self):
        if self.status not in QA_STATUSES:
            raise ValidationError(f"unknown status {self.status!r}")
        if self.iteration < 1:
            raise ValidationError("iteration must be positive")
        if self.status in ("harvested", "annotation_pending", "accepted"):
            if not self.question or not self.answer:
                raise MalformedRecordError(
                    f"question and answer must be non-empty for status {self.status}"
                )
        if self.status == "accepted" and not self.effective_answer:
            raise ValidationError("accepted pair must have a non-empty effective answer")
        if not self.domain:
            raise ValidationError("domain must be non-empty")

    @property
    def effective_answer(self) -> str:
        return self.edited_answer if self.edited_answer is not None else self.answer

    def with_status(self, new_status: str, edited_answer: str | None = None) -> "QAPair":
        """Transition along the lifecycle DAG; anything else is rejected."""
        if new_status not in ALLOWED_STATUS_TRANSITIONS.get(self.status, set()):
            raise ValidationError(f"illegal status transition {self.status} -> {new_status}")
        if edited_answer is None:
            return replace(self, status=new_status)
        return replace(self, status=new_status, edited_answer=edited_answer)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "answer": self.answer,
            "source_url": self.source_url,
            "domain": self.domain,
            "locale": self.locale.to_record(),
            "topic": self.topic.name,
            "iteration": self.iteration,
            "status": self.status,
            "edited_answer": self.edited_answer,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "QAPair":
        return cls(
            id=rec["id"],
            question=rec["question"],
            answer=rec["answer"],
            source_url=rec["source_url"],
            domain=rec["domain"],
            locale=Locale.from_record(rec["locale"]),
            topic=Topic(rec["topic"]),
            iteration=rec["iteration"],
            status=rec["status"],
            edited_answer=rec.get("edited_answer"),
        )


def make_qa_pair(
    question: str,
    answer: str,
    source_url: str,
    domain: str,
    locale: Locale,
    topic: Topic,
    iteration: int,
) -> QAPair:
    """Build a harvested QAPair with normalized texts and a content-derived id."""
    q = normalize_text(question)
    a = normalize_text(answer)
    if not q or not a:
        raise MalformedRecordError("harvested pair needs non-empty question and answer")
    pid = content_id(q, locale.language, locale.location, source_url)
    return QAPair(pid, q, a, source_url, domain, locale, topic, iteration)


def dedup_key(item: Query | QAPair) -> str:
    """Exact-match identity: normalized text plus language code and location.

    Two items are duplicates iff their keys are equal.
    """
    text = item.text if isinstance(item, Query) else item.question
    normalized = normalize_text(text)
    if not normalized:
        raise MalformedRecordError("cannot compute dedup key for empty text")
    return _KEY_SEP.join((normalized, item.locale.language, item.locale.location))


@dataclass(frozen=True)
class CollectionRun:
    """Bookkeeping for one harvesting run: per-iteration counters and timing.

    ``counters`` holds one entry per executed iteration with cumulative
    ``qa_total``/``queries_total`` (monotone non-decreasing) next to the
    per-iteration ``qa_new``/``queries_new`` discovery counts.
    """

    run_id: str
    locale: Locale
    n_iter: int
    started_at: str = ""
    finished_at: str = ""
    counters: tuple = ()
    failed_queries: tuple = ()
    budget_exhausted: bool = False

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValidationError("n_iter must be >= 1")
        totals = [(c["qa_total"], c["queries_total"]) for c in self.counters]
        if totals != sorted(totals):
            raise ValidationError("cumulative counters must be monotone non-decreasing")

    @property
    def fixed_point(self) -> bool:
        """True once some iteration discovered nothing new."""
        return any(c["qa_new"] == 0 and c["queries_new"] == 0 for c in self.counters)

    def to_record(self) -> dict:
        return {
            "run_id": self.run_id,
            "locale": self.locale.to_record(),
            "n_iter": self.n_iter,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "counters": list(self.counters),
            "failed_queries": list(self.failed_queries),
            "budget_exhausted": self.budget_exhausted,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CollectionRun":
        return cls(
            run_id=rec["run_id"],
            locale=Locale.from_record(rec["locale"]),
            n_iter=rec["n_iter"],
            started_at=rec.get("started_at", ""),
            finished_at=rec.get("finished_at", ""),
            counters=tuple(rec.get("counters", [])),
            failed_queries=tuple(rec.get("failed_queries", [])),
            budget_exhausted=rec.get("budget_exhausted", False),
        )


# ---------------------------------------------------------------------------
# JSONL persistence: one record per line, UTF-8, field names as in the types.
# ---------------------------------------------------------------------------


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, ensure_ascii=False)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps_record(rec))
            fh.write("\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_queries(path: str | Path, queries: Iterable[Query]) -> int:
    return write_jsonl(path, (q.to_record() for q in queries))


def read_queries(path: str | Path) -> list[Query]:
    return [Query.from_record(rec) for rec in read_jsonl(path)]


def write_pairs(path: str | Path, pairs: Iterable[QAPair]) -> int:
    return write_jsonl(path, (p.to_record() for p in pairs))


def read_pairs(path: str | Path) -> list[QAPair]:
    return [QAPair.from_record(rec) for rec in read_jsonl(path)]
