"""Search-engine capability: fixture graphs for deterministic runs, a live
adapter speaking a configurable SERP API, caching, rate limiting, and retry.

An engine answers two questions about a query: which question/answer/source
triples the results page surfaces, and which related queries it suggests.
"""

from __future__ import annotations

import json
import logging
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .cache import ResponseCache
from .corpus import Locale

log = logging.getLogger(__name__)


class EngineTransportError(Exception):
    """Network-level engine failure; retried with backoff before giving up."""


class EngineCapability(Protocol):
    name: str
    is_live: bool

    def extract_qa(self, query: str, locale: Locale) -> list[tuple[str, str, str]]: ...

    def extract_related(self, query: str, locale: Locale) -> list[str]: ...


@dataclass
class SerpFixtureGraph:
    """Deterministic stand-in for a live engine snapshot.

    ``nodes`` maps query text to its results: ``{"qa": [[q, a, url], ...],
    "related": [...]}``. Queries absent from the map simply have no results.
    """

    nodes: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> "SerpFixtureGraph":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def qa_for(self, query: str) -> list[tuple[str, str, str]]:
        node = self.nodes.get(query, {})
        return [tuple(item) for item in node.get("qa", [])]

    def related_for(self, query: str) -> list[str]:
        return list(self.nodes.get(query, {}).get("related", []))


class FixtureEngine:
    name = "fixture"
    is_live = False

    def __init__(self, graph: SerpFixtureGraph):
        self.graph = graph
        self.calls = 0

    def extract_qa(self, query, locale):
        self.calls += 1
        return self.graph.qa_for(query)

    def extract_related(self, query, locale):
        return self.graph.related_for(query)


@dataclass
class LiveAdapterConfig:
    """Wire details for one SERP provider; parse rules keep the core generic."""

    name: str
    base_url: str
    api_key_env: str
    query_param: str = "q"
    language_param: str = "hl"
    location_param: str = "location"
    engine_param: str | None = "engine"
    engine_value: str | None = None
    qa_list_path: str = "related_questions"
    question_key: str = "question"
    answer_key: str = "snippet"
    url_key: str = "link"
    related_list_path: str = "related_searches"
    related_key: str = "query"
    timeout: float = 30.0


class LiveSerpEngine:
    """Engine backed by an HTTP SERP API, with the response cache in front.

    The engine's location and language request features are set per call so
    results are native to the run's locale.
    """

    is_live = True

    def __init__(self, adapter: LiveAdapterConfig, cache: ResponseCache | None = None):
        self.adapter = adapter
        self.name = adapter.name
        self.cache = cache

    def _fetch(self, query: str, locale: Locale) -> dict:
        key = json.dumps({"q": query, "lang": locale.language, "loc": locale.location})
        if self.cache is not None:
            hit = self.cache.replay(self.name, locale.key, key)
            if hit is not None:
                return json.loads(hit)
        import os

        import requests

        params = {
            self.adapter.query_param: query,
            self.adapter.language_param: locale.language,
            self.adapter.location_param: locale.location,
        }
        if self.adapter.engine_param and self.adapter.engine_value:
            params[self.adapter.engine_param] = self.adapter.engine_value
        api_key = os.environ.get(self.adapter.api_key_env, "")
        if api_key:
            params["api_key"] = api_key
        try:
            resp = requests.get(self.adapter.base_url, params=params, timeout=self.adapter.timeout)
            if resp.status_code >= 500 or resp.status_code == 429:
                raise EngineTransportError(f"{resp.status_code} from {self.name}")
            resp.raise_for_status()
        except EngineTransportError:
            raise
        except Exception as exc:  # requests' connection/timeout family
            raise EngineTransportError(str(exc)) from exc
        if self.cache is not None:
            self.cache.store(self.name, locale.key, key, resp.text)
        return resp.json()

    def parse_qa(self, payload: dict) -> list[tuple[str, str, str]]:
        out = []
        for item in payload.get(self.adapter.qa_list_path, []) or []:
            question = item.get(self.adapter.question_key, "")
            answer = item.get(self.adapter.answer_key, "")
            url = item.get(self.adapter.url_key, "")
            if question and answer and url:
                out.append((question, answer, url))
        return out

    def parse_related(self, payload: dict) -> list[str]:
        items = payload.get(self.adapter.related_list_path, []) or []
        out = []
        for item in items:
            text = item.get(self.adapter.related_key, "") if isinstance(item, dict) else str(item)
            if text:
                out.append(text)
        return out

    def extract_qa(self, query, locale):
        return self.parse_qa(self._fetch(query, locale))

    def extract_related(self, query, locale):
        return self.parse_related(self._fetch(query, locale))


LIVE_ADAPTERS = {
    "live-google": LiveAdapterConfig(
        name="google",
        base_url="https://serpapi.com/search",
        api_key_env="NATIVQA_SERP_API_KEY",
        engine_value="google",
    ),
    "live-bing": LiveAdapterConfig(
        name="bing",
        base_url="https://serpapi.com/search",
        api_key_env="NATIVQA_SERP_API_KEY",
        engine_value="bing",
    ),
    "live-yahoo": LiveAdapterConfig(
        name="yahoo",
        base_url="https://serpapi.com/search",
        api_key_env="NATIVQA_SERP_API_KEY",
        engine_value="yahoo",
        query_param="p",
    ),
}


class RateLimiter:
    """Token bucket: at most ``rate`` acquisitions per second, thread-safe."""

    def __init__(self, rate: float, capacity: float | None = None):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self):
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


def with_retries(fn, retries: int = 3, base_delay: float = 0.5, rng: random.Random | None = None):
    """Run fn(); on EngineTransportError back off exponentially with jitter."""
    rng = rng or random.Random()
    last_exc = None
    for attempt in range(retries):
        try:
            return fn()
        except EngineTransportError as exc:
            last_exc = exc
            if attempt == retries - 1:
                break
            delay = base_delay * (2**attempt) * (1.0 + rng.random() * 0.25)
            log.warning("engine call failed (%s); retry %d in %.2fs", exc, attempt + 1, delay)
            time.sleep(delay)
    raise last_exc


def build_engine(selector: str, graph_path: str | None = None,
                 cache: ResponseCache | None = None) -> EngineCapability:
    if selector == "fixture":
        if not graph_path:
            raise ValueError("fixture engine needs a graph path")
        return FixtureEngine(SerpFixtureGraph.from_file(graph_path))
    if selector in LIVE_ADAPTERS:
        return LiveSerpEngine(LIVE_ADAPTERS[selector], cache=cache)
    raise ValueError(f"unknown engine selector {selector!r}")
