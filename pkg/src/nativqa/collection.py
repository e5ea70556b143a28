"""Iterative QA harvesting: expand the query frontier through the engine's
related-query suggestions, accumulate extracted QA pairs, de-duplicate, and
flag pairs the language identifier says are off-language.

Per iteration, every unprocessed frontier query is sent to the engine; its
QA results join the pair set and its related queries join the frontier for
the next iteration. By default each query hits the engine once per run
(provably output-identical for deterministic engines, since set union absorbs
repeats); ``faithful=True`` re-queries the whole frontier every iteration.
"""

from __future__ import annotations

import logging
import random
import unicodedata
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import NamedTuple, Protocol

from .corpus import (
    CollectionRun,
    Locale,
    MalformedRecordError,
    QAPair,
    Query,
    ValidationError,
    dedup_key,
    make_qa_pair,
    make_query,
    normalize_text,
)
from .domains import DomainExtractionError, extract_domain
from .engines import EngineCapability, EngineTransportError, RateLimiter, with_retries

log = logging.getLogger(__name__)

ENGINE_SELECTORS = ("live-google", "live-bing", "live-yahoo", "fixture")


@dataclass(frozen=True)
class CollectionConfig:
    n_iter: int
    locale: Locale
    engine: str = "fixture"
    rate_limit: float = 2.0
    cache_dir: str = ""
    faithful: bool = False
    concurrency: int = 1
    retries: int = 3
    backoff_base: float = 0.5
    request_budget: int | None = None

    def __post_init__(self):
        if not 1 <= self.n_iter <= 16:
            raise ValidationError("n_iter must be in [1, 16]")
        if self.rate_limit <= 0:
            raise ValidationError("rate_limit must be positive")
        if self.engine not in ENGINE_SELECTORS:
            raise ValidationError(f"engine must be one of {ENGINE_SELECTORS}")


class CollectionResult(NamedTuple):
    qa_pairs: set[QAPair]
    queries: set[Query]
    run: CollectionRun


class AllQueriesFailedError(Exception):
    """Every query of an iteration failed; partial results are attached."""

    def __init__(self, iteration: int, partial: CollectionResult):
        super().__init__(f"all queries failed in iteration {iteration}")
        self.partial = partial


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def collect(
    seeds: list[Query],
    cfg: CollectionConfig,
    engine: EngineCapability,
) -> CollectionResult:
    """Run the harvesting loop over the seed queries.

    Returns the accumulated pair set, the enriched query set, and the run
    report. Pair identity is the dedup key of the question text; the first
    occurrence keeps its answer and attribution.
    """
    if not seeds:
        raise ValidationError("collect needs at least one seed query")
    for seed in seeds:
        if (seed.locale.language, seed.locale.location) != (
            cfg.locale.language,
            cfg.locale.location,
        ):
            raise ValidationError(f"seed {seed.text!r} is not in run locale {cfg.locale.key}")

    limiter = RateLimiter(cfg.rate_limit) if getattr(engine, "is_live", False) else None
    backoff_rng = random.Random(0)
    started = _utcnow()

    pairs: dict[str, QAPair] = {}
    queries: dict[str, Query] = {}
    frontier: list[Query] = []
    for seed in seeds:
        key = dedup_key(seed)
        if key not in queries:
            queries[key] = seed
            frontier.append(seed)

    queried: set[str] = set()
    failed: list[str] = []
    counters: list[dict] = []
    requests_made = 0
    budget_exhausted = False

    def fetch(query: Query):
        if limiter is not None:
            limiter.acquire()
        qa = with_retries(
            lambda: engine.extract_qa(query.text, cfg.locale),
            retries=cfg.retries,
            base_delay=cfg.backoff_base,
            rng=backoff_rng,
        )
        related = with_retries(
            lambda: engine.extract_related(query.text, cfg.locale),
            retries=cfg.retries,
            base_delay=cfg.backoff_base,
            rng=backoff_rng,
        )
        return qa, related

    for iteration in range(1, cfg.n_iter + 1):
        if cfg.faithful:
            batch = [q for q in queries.values()]
        else:
            batch = [q for q in frontier if dedup_key(q) not in queried]
        frontier = []

        if cfg.request_budget is not None:
            remaining = max(0, cfg.request_budget - requests_made)
            if len(batch) > remaining:
                log.warning(
                    "request budget exhausted at iteration %d (%d queries skipped)",
                    iteration, len(batch) - remaining,
                )
                batch = batch[:remaining]
                budget_exhausted = True

        outcomes: list[tuple[Query, tuple | None]] = []
        if batch:
            if cfg.concurrency > 1:
                with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
                    fetched = list(pool.map(_safe_fetch(fetch), batch))
            else:
                fetched = [_safe_fetch(fetch)(q) for q in batch]
            outcomes = list(zip(batch, fetched))
            requests_made += len(batch)

        iteration_failed = 0
        qa_new = 0
        queries_new = 0
        for query, outcome in outcomes:
            queried.add(dedup_key(query))
            if outcome is None:
                failed.append(query.text)
                iteration_failed += 1
                continue
            qa_items, related_texts = outcome
            for question, answer, url in qa_items:
                pair = _build_pair(question, answer, url, query, cfg.locale, iteration)
                if pair is None:
                    continue
                key = dedup_key(pair)
                if key not in pairs:
                    pairs[key] = pair
                    qa_new += 1
            for text in related_texts:
                try:
                    related = make_query(
                        text, cfg.locale, query.topic, provenance="related", iteration=iteration
                    )
                except MalformedRecordError:
                    continue
                key = dedup_key(related)
                if key not in queries:
                    queries[key] = related
                    frontier.append(related)
                    queries_new += 1

        counters.append(
            {
                "iteration": iteration,
                "queried": len(outcomes),
                "failed": iteration_failed,
                "qa_new": qa_new,
                "queries_new": queries_new,
                "qa_total": len(pairs),
                "queries_total": len(queries),
            }
        )

        # An iteration where everything failed signals an engine outage, not
        # a bad query; a single-query iteration cannot distinguish the two,
        # so it degrades to the per-query failure path.
        if len(outcomes) >= 2 and iteration_failed == len(outcomes):
            run = _finish_run(cfg, started, counters, failed, budget_exhausted)
            raise AllQueriesFailedError(
                iteration, CollectionResult(set(pairs.values()), set(queries.values()), run)
            )

    run = _finish_run(cfg, started, counters, failed, budget_exhausted)
    return CollectionResult(set(pairs.values()), set(queries.values()), run)


def _safe_fetch(fetch):
    def inner(query: Query):
        try:
            return fetch(query)
        except EngineTransportError as exc:
            log.warning("query %r failed permanently: %s", query.text, exc)
            return None

    return inner


def _build_pair(
    question: str, answer: str, url: str, parent: Query, locale: Locale, iteration: int
) -> QAPair | None:
    if not normalize_text(question) or not normalize_text(answer):
        return None
    try:
        domain = extract_domain(url)
    except DomainExtractionError as exc:
        log.warning("dropping pair with bad attribution: %s", exc)
        return None
    return make_qa_pair(question, answer, url, domain, locale, parent.topic, iteration)


def _finish_run(cfg, started, counters, failed, budget_exhausted) -> CollectionRun:
    return CollectionRun(
        run_id=uuid.uuid4().hex[:12],
        locale=cfg.locale,
        n_iter=cfg.n_iter,
        started_at=started,
        finished_at=_utcnow(),
        counters=tuple(counters),
        failed_queries=tuple(failed),
        budget_exhausted=budget_exhausted,
    )


# ---------------------------------------------------------------------------
# Language filtering
# ---------------------------------------------------------------------------


class LanguageIdentifier(Protocol):
    def identify(self, text: str) -> tuple[str, float]:
        """Return (language code, confidence in [0, 1])."""
        ...


class MappingLanguageIdentifier:
    """Fixture identifier: exact normalized-text lookup with a default code."""

    def __init__(self, mapping: dict[str, str], default: str):
        self.mapping = {normalize_text(k): v for k, v in mapping.items()}
        self.default = default

    def identify(self, text):
        return self.mapping.get(normalize_text(text), self.default), 1.0


_SCRIPT_LANGS = [
    ((0x0600, 0x06FF), "ar"),
    ((0x0900, 0x097F), "hi"),  # Devanagari: Hindi unless told otherwise
    ((0x0980, 0x09FF), "bn"),  # Bengali script: Bangla unless Assamese letters appear
]

_ASSAMESE_LETTERS = {"ৰ", "ৱ"}  # ra and wa distinguish Assamese text
_TURKISH_LETTERS = set("ğĞşŞıİ")


class ScriptLanguageIdentifier:
    """Cheap Unicode-script heuristic; a real deployment plugs in a proper tool."""

    def identify(self, text):
        counts: dict[str, int] = {}
        letters = 0
        for ch in text:
            if not unicodedata.category(ch).startswith("L"):
                continue
            letters += 1
            code = ord(ch)
            for (lo, hi), lang in _SCRIPT_LANGS:
                if lo <= code <= hi:
                    counts[lang] = counts.get(lang, 0) + 1
                    break
            else:
                counts["latin"] = counts.get("latin", 0) + 1
        if letters == 0:
            raise ValueError("no letters to identify")
        lang, n = max(counts.items(), key=lambda kv: kv[1])
        confidence = n / letters
        if lang == "bn" and _ASSAMESE_LETTERS & set(text):
            lang = "as"
        if lang == "latin":
            lang = "tr" if _TURKISH_LETTERS & set(text) else "en"
            confidence *= 0.75  # Latin-script guesses are weaker
        return lang, confidence


def filter_by_language(pairs: set[QAPair], identifier: LanguageIdentifier) -> set[QAPair]:
    """Flag pairs whose question or answer is not in the pair's own language.

    Flagged pairs are retained (status language_flagged) for manual revision
    but leave the automatic pipeline. Identifier failures flag conservatively.
    """
    out: set[QAPair] = set()
    for pair in pairs:
        if pair.status != "harvested":
            out.add(pair)
            continue
        try:
            q_lang, _ = identifier.identify(pair.question)
            a_lang, _ = identifier.identify(pair.answer)
            on_language = q_lang == pair.locale.language and a_lang == pair.locale.language
        except Exception as exc:
            log.warning("language identification failed for %s (%s); flagging", pair.id, exc)
            on_language = False
        out.add(pair if on_language else pair.with_status("language_flagged"))
    return out
