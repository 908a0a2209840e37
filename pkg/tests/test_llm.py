import json

import pytest

from llmselect.corpus import InstructionRecord
from llmselect.errors import ConfigError
from llmselect.llm import (
    AuthError,
    ChatExchange,
    CostRates,
    ExhaustedRetries,
    LlmClient,
    LlmConfig,
    RetryPolicy,
    Timeout,
    UnknownId,
    cache_key,
    count_tokens,
    estimate_cost,
    mock_oracle,
    static_backend,
)
from llmselect.prompts import render_ranking_prompt, render_selection_prompt

from conftest import chat_body

FAST_RETRY = RetryPolicy(attempts=5, base_backoff_ms=1)


def mock_config(**kw):
    return LlmConfig(endpoint="unused", model="mock-model", **kw)


def test_mock_backend_echo_and_cache(tmp_path):
    client = LlmClient(mock_config(), backend=static_backend("[1]"), cache_dir=tmp_path / "cache")
    first = client.complete("pick one")
    assert first.reply == "[1]"
    assert first.cache_hit is False
    second = client.complete("pick one")
    assert second.cache_hit is True
    assert second.reply == first.reply
    assert second.latency_ms == 0.0


def test_cache_key_covers_sampling_settings():
    base = cache_key("m", 0.0, 512, "p")
    assert cache_key("m", 0.7, 512, "p") != base
    assert cache_key("m", 0.0, 256, "p") != base
    assert cache_key("other", 0.0, 512, "p") != base
    assert cache_key("m", 0.0, 512, "q") != base


def test_no_cache_bypasses_store(tmp_path):
    calls = []

    def backend(text, meta):
        calls.append(text)
        return "ok"

    client = LlmClient(mock_config(), backend=backend, cache_dir=tmp_path, use_cache=False)
    client.complete("x")
    client.complete("x")
    assert len(calls) == 2


def test_retry_then_success(scripted_server):
    scripted_server.enqueue(429, {"error": "slow down"})
    scripted_server.enqueue(429, {"error": "slow down"})
    scripted_server.enqueue(200, chat_body("hello", usage={"prompt_tokens": 7, "completion_tokens": 2}))
    config = LlmConfig(endpoint=scripted_server.url, model="m", retry=FAST_RETRY)
    exchange = LlmClient(config).complete("hi")
    assert exchange.reply == "hello"
    assert exchange.attempts == 3
    assert (exchange.prompt_tokens, exchange.completion_tokens) == (7, 2)
    assert exchange.usage_source == "reported"
    assert len(scripted_server.requests) == 3


def test_cache_prevents_second_network_call(scripted_server, tmp_path):
    scripted_server.enqueue(200, chat_body("first and only"))
    config = LlmConfig(endpoint=scripted_server.url, model="m", retry=FAST_RETRY)
    client = LlmClient(config, cache_dir=tmp_path)
    a = client.complete("hi")
    b = client.complete("hi")
    assert a.reply == b.reply == "first and only"
    assert b.cache_hit is True
    assert len(scripted_server.requests) == 1


def test_usage_estimated_when_missing(scripted_server):
    scripted_server.enqueue(200, chat_body("two words"))
    config = LlmConfig(endpoint=scripted_server.url, model="m", retry=FAST_RETRY)
    exchange = LlmClient(config).complete("hello world")
    assert exchange.usage_source == "estimated"
    assert exchange.prompt_tokens == count_tokens("hello world")
    assert exchange.completion_tokens == count_tokens("two words")


def test_auth_error_no_retry(scripted_server):
    scripted_server.enqueue(401, {"error": "bad key"})
    config = LlmConfig(endpoint=scripted_server.url, model="m", retry=FAST_RETRY)
    with pytest.raises(AuthError):
        LlmClient(config).complete("hi")
    assert len(scripted_server.requests) == 1


def test_exhausted_retries_reports_last_status(scripted_server):
    for _ in range(5):
        scripted_server.enqueue(503, {"error": "down"})
    config = LlmConfig(endpoint=scripted_server.url, model="m", retry=FAST_RETRY)
    with pytest.raises(ExhaustedRetries) as err:
        LlmClient(config).complete("hi")
    assert err.value.status == 503
    assert err.value.attempts == 5
    assert len(scripted_server.requests) == 5


def test_timeout_raises_timeout():
    # unroutable address forces a connect timeout
    config = LlmConfig(
        endpoint="http://10.255.255.1:9/v1/chat/completions",
        model="m",
        timeout_s=0.05,
        retry=RetryPolicy(attempts=2, base_backoff_ms=1),
    )
    with pytest.raises((Timeout, ExhaustedRetries)):
        LlmClient(config).complete("hi")


def test_api_key_header_sent(scripted_server, monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "sekret")
    scripted_server.enqueue(200, chat_body("ok"))
    config = LlmConfig(endpoint=scripted_server.url, model="m", retry=FAST_RETRY, api_key_env="TEST_LLM_KEY")
    LlmClient(config).complete("hi")
    assert scripted_server.requests[0]["headers"]["Authorization"] == "Bearer sekret"


def test_missing_api_key_is_config_error(scripted_server, monkeypatch):
    monkeypatch.delenv("NOPE_KEY", raising=False)
    config = LlmConfig(endpoint=scripted_server.url, model="m", api_key_env="NOPE_KEY")
    with pytest.raises(ConfigError):
        LlmClient(config).complete("hi")


def test_wire_format(scripted_server):
    scripted_server.enqueue(200, chat_body("ok"))
    config = LlmConfig(endpoint=scripted_server.url, model="my-model", temperature=0.5, max_tokens=64, retry=FAST_RETRY)
    LlmClient(config).complete("the prompt")
    payload = scripted_server.requests[0]["payload"]
    assert payload["model"] == "my-model"
    assert payload["temperature"] == 0.5
    assert payload["max_tokens"] == 64
    assert payload["messages"] == [{"role": "user", "content": "the prompt"}]


def test_mock_oracle_selection_ranking_grading():
    scores = {"a": 1.0, "b": 9.0, "c": 5.0}
    backend = mock_oracle(scores)
    records = [InstructionRecord(rid, f"inst {rid}") for rid in ("a", "b", "c")]
    assert backend("", render_selection_prompt(records, 1)) == "[2]"
    assert backend("", render_selection_prompt(records, 2)) == "[2,3]"
    assert backend("", render_ranking_prompt(records)) == "[2] > [3] > [1]"


def test_mock_oracle_unknown_id():
    backend = mock_oracle({"a": 1.0})
    records = [InstructionRecord("zzz", "inst")]
    with pytest.raises(UnknownId):
        backend("", render_selection_prompt(records, 1))
    with pytest.raises(UnknownId):
        backend("plain text prompt", None)


def test_count_tokens_examples():
    assert count_tokens("hello world") == 3
    assert count_tokens("") == 0
    assert count_tokens("a a a a a a a a a a") == 13


def test_count_tokens_pluggable():
    assert count_tokens("anything at all", tokenizer=lambda t: 42) == 42


def test_estimate_cost_blended_rate_anchors():
    assert estimate_cost(1_840_000, 0, CostRates(0.0015054, 0.0)) == pytest.approx(2.77, abs=0.01)
    assert estimate_cost(14_000_000, 0, CostRates(0.0016971, 0.0)) == pytest.approx(23.76, abs=0.01)
    assert estimate_cost(0, 0, CostRates(0.002, 0.002)) == 0.0


def test_estimate_cost_linearity():
    rates = CostRates(0.003, 0.006)
    for a, b in [(1000, 2000), (12345, 999), (7, 13)]:
        double = estimate_cost(2 * a, 2 * b, rates)
        single = estimate_cost(a, b, rates)
        assert double == pytest.approx(2 * single, abs=0.02)


def test_cached_exchange_round_trips_jsonable(tmp_path):
    client = LlmClient(mock_config(), backend=static_backend("ok"), cache_dir=tmp_path)
    exchange = client.complete("prompt")
    files = list(tmp_path.glob("*.json"))
    assert len(files) == 1
    stored = ChatExchange(**json.loads(files[0].read_text()))
    assert stored.reply == exchange.reply
    assert stored.prompt == "prompt"


def test_endpoint_schemes(tmp_path):
    scores_file = tmp_path / "scores.json"
    scores_file.write_text(json.dumps({"a": 2.0, "b": 1.0}))
    client = LlmClient(LlmConfig(endpoint=f"mock:{scores_file}", model="m"))
    records = [InstructionRecord("a", "x"), InstructionRecord("b", "y")]
    assert client.complete(render_selection_prompt(records, 1)).reply == "[1]"
    static = LlmClient(LlmConfig(endpoint="static:always this", model="m"))
    assert static.complete("whatever").reply == "always this"


def test_complete_many_preserves_order(tmp_path):
    def backend(text, meta):
        return f"echo:{text}"

    client = LlmClient(mock_config(), backend=backend, cache_dir=tmp_path)
    prompts = [f"p{i}" for i in range(8)]
    replies = [e.reply for e in client.complete_many(prompts, parallel=4)]
    assert replies == [f"echo:p{i}" for i in range(8)]
