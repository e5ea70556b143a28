"""Byte-exact response cache keyed by (engine, locale, request key).

Gives live search-engine and LLM calls replay determinism and provenance:
adapters consult the cache before the network, so a finished run can be
re-executed offline with identical results. Corrupt entries are ignored and
overwritten on the next store.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

log = logging.getLogger(__name__)

_MISS = None


class ResponseCache:
    """One file per (engine, locale, key) under ``root``; payloads are text."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.stores = 0
        self.hits = 0
        self.misses = 0

    def _path(self, engine: str, locale_key: str, key: str) -> Path:
        digest = hashlib.sha256(key.encode("utf-8")).hexdigest()
        safe_engine = engine.replace("/", "_").replace(":", "_")
        safe_locale = locale_key.replace("/", "_")
        return self.root / safe_engine / safe_locale / f"{digest}.json"

    def store(self, engine: str, locale_key: str, key: str, payload: str) -> Path:
        path = self._path(engine, locale_key, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {
            "engine": engine,
            "locale": locale_key,
            "key": key,
            "payload": payload,
            "sha256": hashlib.sha256(payload.encode("utf-8")).hexdigest(),
        }
        path.write_text(json.dumps(entry, ensure_ascii=False), encoding="utf-8")
        self.stores += 1
        return path

    def replay(self, engine: str, locale_key: str, key: str) -> str | None:
        """Return the stored payload, or None on a miss (absent or corrupt)."""
        path = self._path(engine, locale_key, key)
        if not path.exists():
            self.misses += 1
            return _MISS
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
            payload = entry["payload"]
            if hashlib.sha256(payload.encode("utf-8")).hexdigest() != entry["sha256"]:
                raise ValueError("digest mismatch")
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            log.warning("ignoring corrupt cache entry %s (%s)", path, exc)
            self.misses += 1
            return _MISS
        self.hits += 1
        return payload
