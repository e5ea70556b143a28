"""Chat-style LLM provider interface plus fixture and HTTP adapters.

A provider is anything with ``chat(system, user, temperature, max_tokens)``
returning text. Live adapters speak an OpenAI-style wire format; recorded
fixture providers make every pipeline stage replayable offline.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

log = logging.getLogger(__name__)


class ProviderError(Exception):
    pass


class ProviderTransportError(ProviderError):
    """Network-level failure after retries; safe to retry the whole call later."""


class LLMProvider(Protocol):
    name: str

    def chat(
        self,
        system: str,
        user: str,
        temperature: float = 0.0,
        max_tokens: int | None = None,
    ) -> str: ...


@dataclass
class HttpChatProvider:
    """OpenAI-wire chat endpoint; credentials come from an environment variable."""

    name: str
    base_url: str
    model: str
    api_key_env: str = "NATIVQA_API_KEY"
    timeout: float = 60.0
    retries: int = 3
    backoff_base: float = 1.0

    def chat(self, system, user, temperature=0.0, max_tokens=None):
        import requests

        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": temperature,
        }
        if max_tokens is not None:
            payload["max_tokens"] = max_tokens
        url = self.base_url.rstrip("/") + "/chat/completions"
        last_exc = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(url, json=payload, headers=headers, timeout=self.timeout)
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise ProviderTransportError(f"{resp.status_code} from {self.name}")
                resp.raise_for_status()
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (ProviderTransportError, requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                delay = self.backoff_base * (2**attempt)
                log.warning("provider %s attempt %d failed (%s); retrying in %.1fs",
                            self.name, attempt + 1, exc, delay)
                time.sleep(delay)
        raise ProviderTransportError(f"provider {self.name} unreachable: {last_exc}")


class FixtureChatProvider:
    """Recorded-response provider for tests and offline fixture pipelines.

    The fixture file holds ordered rules: ``{"contains": snippet, "response":
    text}``. The first rule whose snippet occurs in the user prompt wins; an
    optional ``{"default": text}`` entry answers everything else. A rule may
    carry ``"responses"`` (a list) instead, consumed one per call, so re-ask
    behavior is scriptable.
    """

    def __init__(self, rules: list[dict] | None = None, default: str | None = None,
                 name: str = "fixture"):
        self.name = name
        self.rules = [dict(r) for r in (rules or [])]
        self.default = default
        self.calls: list[tuple[str, str]] = []

    @classmethod
    def from_file(cls, path: str | Path, name: str = "fixture") -> "FixtureChatProvider":
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(spec, dict):
            return cls(spec.get("rules", []), spec.get("default"), name=name)
        return cls(spec, name=name)

    def chat(self, system, user, temperature=0.0, max_tokens=None):
        self.calls.append((system, user))
        for rule in self.rules:
            if rule.get("contains", "") in user:
                if "responses" in rule:
                    queued = rule["responses"]
                    if not queued:
                        break
                    return queued.pop(0)
                return rule["response"]
        if self.default is not None:
            return self.default
        raise ProviderError(f"fixture provider {self.name} has no response for prompt: {user[:80]}")


class CachedProvider:
    """Record/replay wrapper: identical prompts never hit the backend twice."""

    def __init__(self, inner: LLMProvider, cache, locale_key: str = "any"):
        self.inner = inner
        self.cache = cache
        self.locale_key = locale_key
        self.name = f"cached:{inner.name}"

    def chat(self, system, user, temperature=0.0, max_tokens=None):
        key = json.dumps(
            {"system": system, "user": user, "temperature": temperature, "max_tokens": max_tokens},
            sort_keys=True,
            ensure_ascii=False,
        )
        hit = self.cache.replay(f"llm:{self.inner.name}", self.locale_key, key)
        if hit is not None:
            return hit
        text = self.inner.chat(system, user, temperature=temperature, max_tokens=max_tokens)
        self.cache.store(f"llm:{self.inner.name}", self.locale_key, key, text)
        return text


def parse_string_list(raw: str) -> tuple[list[str], list[str]]:
    """Tolerantly parse a provider payload into a list of strings.

    Accepts a bare JSON array or an object wrapping a single array field;
    strips code fences first. Returns (items, warnings) where non-string array
    entries are dropped with a warning instead of failing the whole payload.
    """
    warnings: list[str] = []
    text = raw.strip()
    if text.startswith("```"):
        lines = text.splitlines()
        body = [ln for ln in lines if not ln.strip().startswith("```")]
        text = "\n".join(body).strip()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError:
        # Last resort: find the first bracketed array in the text.
        start, end = text.find("["), text.rfind("]")
        if start == -1 or end <= start:
            return [], [f"unparseable list payload: {text[:120]!r}"]
        try:
            payload = json.loads(text[start : end + 1])
        except json.JSONDecodeError:
            return [], [f"unparseable list payload: {text[:120]!r}"]
    if isinstance(payload, dict):
        arrays = [v for v in payload.values() if isinstance(v, list)]
        if len(arrays) != 1:
            return [], [f"expected one array field, found {len(arrays)}"]
        payload = arrays[0]
    if not isinstance(payload, list):
        return [], [f"payload is {type(payload).__name__}, not a list"]
    items = []
    for entry in payload:
        if isinstance(entry, str):
            items.append(entry)
        else:
            warnings.append(f"dropped non-string list item: {entry!r}")
    return items, warnings
