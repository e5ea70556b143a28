import json

import pytest

from nativqa.cache import ResponseCache
from nativqa.providers import (
    CachedProvider,
    FixtureChatProvider,
    HttpChatProvider,
    ProviderError,
    ProviderTransportError,
)


class TestHttpChatProvider:
    def provider(self):
        return HttpChatProvider(
            name="testllm", base_url="https://llm.test/v1", model="test-model",
            api_key_env="TEST_LLM_KEY", retries=3, backoff_base=0.01,
        )

    def test_retries_then_succeeds(self, monkeypatch):
        calls = {"n": 0}

        class FakeResponse:
            def __init__(self, status, body=None):
                self.status_code = status
                self._body = body or {}

            def raise_for_status(self):
                pass

            def json(self):
                return self._body

        def fake_post(url, json=None, headers=None, timeout=None):
            calls["n"] += 1
            if calls["n"] < 3:
                return FakeResponse(503)
            return FakeResponse(200, {"choices": [{"message": {"content": "hello"}}]})

        import requests

        monkeypatch.setattr(requests, "post", fake_post)
        assert self.provider().chat("sys", "user") == "hello"
        assert calls["n"] == 3

    def test_transport_error_after_retries(self, monkeypatch):
        import requests

        def always_down(url, json=None, headers=None, timeout=None):
            raise requests.ConnectionError("refused")

        monkeypatch.setattr(requests, "post", always_down)
        with pytest.raises(ProviderTransportError):
            self.provider().chat("sys", "user")

    def test_credentials_from_environment(self, monkeypatch):
        seen = {}

        class FakeResponse:
            status_code = 200

            def raise_for_status(self):
                pass

            def json(self):
                return {"choices": [{"message": {"content": "ok"}}]}

        def fake_post(url, json=None, headers=None, timeout=None):
            seen["headers"] = headers
            seen["payload"] = json
            return FakeResponse()

        import requests

        monkeypatch.setattr(requests, "post", fake_post)
        monkeypatch.setenv("TEST_LLM_KEY", "sk-test")
        self.provider().chat("sys", "user", temperature=0.0, max_tokens=64)
        assert seen["headers"]["Authorization"] == "Bearer sk-test"
        assert seen["payload"]["temperature"] == 0.0
        assert seen["payload"]["max_tokens"] == 64
        assert seen["payload"]["messages"][0]["role"] == "system"


class TestCachedProvider:
    def test_identical_prompts_hit_backend_once(self, tmp_path):
        inner = FixtureChatProvider(default="the reply")
        cached = CachedProvider(inner, ResponseCache(tmp_path))
        assert cached.chat("sys", "user") == "the reply"
        assert cached.chat("sys", "user") == "the reply"
        assert len(inner.calls) == 1
        assert cached.chat("sys", "other user") == "the reply"
        assert len(inner.calls) == 2

    def test_cache_survives_new_provider_instance(self, tmp_path):
        cache_dir = tmp_path / "cache"
        first = FixtureChatProvider(default="recorded")
        CachedProvider(first, ResponseCache(cache_dir)).chat("sys", "user")

        class DeadProvider:
            name = "fixture"  # same cache identity as the recording run

            def chat(self, *args, **kwargs):
                raise AssertionError("offline replay must not call the backend")

        replayed = CachedProvider(DeadProvider(), ResponseCache(cache_dir))
        assert replayed.chat("sys", "user") == "recorded"


class TestFixtureProvider:
    def test_rules_and_default(self):
        provider = FixtureChatProvider(
            rules=[{"contains": "alpha", "response": "A"}], default="D"
        )
        assert provider.chat("s", "says alpha here") == "A"
        assert provider.chat("s", "nothing matches") == "D"

    def test_response_queue_consumed_in_order(self):
        provider = FixtureChatProvider(rules=[{"contains": "q", "responses": ["one", "two"]}])
        assert provider.chat("s", "q") == "one"
        assert provider.chat("s", "q") == "two"

    def test_no_match_without_default_raises(self):
        provider = FixtureChatProvider(rules=[])
        with pytest.raises(ProviderError):
            provider.chat("s", "unmatched")

    def test_from_file(self, tmp_path):
        path = tmp_path / "rules.json"
        path.write_text(json.dumps({"rules": [{"contains": "x", "response": "y"}]}))
        provider = FixtureChatProvider.from_file(path)
        assert provider.chat("s", "x") == "y"
