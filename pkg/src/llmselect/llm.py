"""Chat-completion client for OpenAI-compatible endpoints.

Adds an on-disk reply cache keyed by (model, temperature, max_tokens,
prompt), jittered exponential backoff on 429/5xx, token/cost accounting,
and two offline backends: a deterministic hidden-score oracle and a
constant-reply stub. Endpoint pseudo-schemes "mock:<scores.json>" and
"static:<reply>" select the offline backends so whole pipelines run
without a network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import requests

from .errors import ConfigError, LlmSelectError
from .prompts import RenderedPrompt

logger = logging.getLogger(__name__)


class AuthError(LlmSelectError):
    def __init__(self, status: int):
        self.status = status
        super().__init__(f"authentication rejected (HTTP {status})")


class ExhaustedRetries(LlmSelectError):
    def __init__(self, status: int, attempts: int):
        self.status = status
        self.attempts = attempts
        super().__init__(f"gave up after {attempts} attempts (last HTTP status {status})")


class Timeout(LlmSelectError):
    pass


class UnknownId(LlmSelectError):
    pass


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 5
    base_backoff_ms: float = 500.0
    multiplier: float = 2.0
    jitter: float = 0.2

    def backoff_ms(self, attempt: int) -> float:
        base = self.base_backoff_ms * self.multiplier ** (attempt - 1)
        return base * (1.0 + self.jitter * (2.0 * random.random() - 1.0))


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str
    model: str = "gpt-3.5-turbo-0125"
    temperature: float = 0.0
    max_tokens: int = 512
    timeout_s: float = 60.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    api_key_env: str | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.retry.attempts < 1:
            raise ConfigError("retry attempts must be >= 1")


@dataclass(frozen=True)
class ChatExchange:
    prompt: str
    reply: str
    prompt_tokens: int
    completion_tokens: int
    usage_source: str  # reported | estimated
    latency_ms: float
    cache_hit: bool
    attempts: int = 1


@dataclass(frozen=True)
class CostRates:
    """Dollars per 1,000 tokens."""

    input_rate: float
    output_rate: float

    def __post_init__(self):
        if self.input_rate < 0 or self.output_rate < 0:
            raise ConfigError("rates must be >= 0")


def count_tokens(text: str, tokenizer: Callable[[str], int] | None = None) -> int:
    """Token count for usage estimates.

    Default heuristic: ceil(whitespace tokens x 1.3), computed in integer
    arithmetic; pass an exact counter to override.
    """
    if tokenizer is not None:
        return tokenizer(text)
    words = len(text.split())
    return (13 * words + 9) // 10


def estimate_cost(prompt_tokens: int, completion_tokens: int, rates: CostRates) -> float:
    """Dollar cost of a token total, rounded to cents."""
    dollars = prompt_tokens / 1000.0 * rates.input_rate + completion_tokens / 1000.0 * rates.output_rate
    return round(dollars, 2)


def post_with_retries(
    url: str,
    payload: dict,
    headers: dict[str, str],
    timeout_s: float,
    policy: RetryPolicy,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[dict, int]:
    """POST JSON until a 200, retrying 429/5xx/transport failures with
    jittered exponential backoff. Returns (response body, attempts used).

    401/403 fail immediately as AuthError; other 4xx are not retried.
    """
    last_status = 0
    timed_out = False
    for attempt in range(1, policy.attempts + 1):
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=timeout_s)
            timed_out = False
            last_status = resp.status_code
        except requests.exceptions.Timeout:
            timed_out = True
            last_status = 0
        except requests.exceptions.ConnectionError:
            timed_out = False
            last_status = 0
        else:
            if resp.status_code == 200:
                try:
                    return resp.json(), attempt
                except ValueError as exc:
                    raise LlmSelectError(f"endpoint returned non-JSON body: {exc}") from exc
            if resp.status_code in (401, 403):
                raise AuthError(resp.status_code)
            if resp.status_code != 429 and resp.status_code < 500:
                raise ExhaustedRetries(resp.status_code, attempt)
        if attempt < policy.attempts:
            delay = policy.backoff_ms(attempt) / 1000.0
            logger.debug("retrying after %.0f ms (status %s)", delay * 1000, last_status)
            sleep(delay)
    if timed_out:
        raise Timeout(f"request timed out after {policy.attempts} attempts")
    raise ExhaustedRetries(last_status, policy.attempts)


# A backend maps (prompt text, optional prompt metadata) to a reply string.
Backend = Callable[[str, RenderedPrompt | None], str]


def mock_oracle(hidden_scores: dict[str, float]) -> Backend:
    """Deterministic offline stand-in for the selection LLM.

    Selection and rationale prompts get the bracketed ordinals of the
    highest-scoring candidates, ranking prompts the full descending order,
    grading prompts the record's score. Ties break toward the lower ordinal.
    """

    def ranked_ordinals(meta: RenderedPrompt) -> list[int]:
        pairs = []
        for ordinal in sorted(meta.record_ids):
            record_id = meta.record_ids[ordinal]
            if record_id not in hidden_scores:
                raise UnknownId(f"no hidden score for record {record_id!r}")
            pairs.append((-hidden_scores[record_id], ordinal))
        return [ordinal for _, ordinal in sorted(pairs)]

    def backend(text: str, meta: RenderedPrompt | None) -> str:
        if meta is None or not meta.record_ids:
            raise UnknownId("mock oracle needs prompt metadata with record ids")
        if meta.kind in ("selection", "rationale"):
            picks = ranked_ordinals(meta)[: meta.expected_outputs]
            return "[" + ",".join(str(o) for o in picks) + "]"
        if meta.kind == "ranking":
            return " > ".join(f"[{o}]" for o in ranked_ordinals(meta))
        if meta.kind == "grader":
            record_id = meta.record_ids[1]
            if record_id not in hidden_scores:
                raise UnknownId(f"no hidden score for record {record_id!r}")
            return f"Score: {hidden_scores[record_id]:g}"
        raise LlmSelectError(f"mock oracle cannot answer a {meta.kind!r} prompt")

    return backend


def static_backend(reply: str) -> Backend:
    def backend(text: str, meta: RenderedPrompt | None) -> str:
        return reply
    return backend


def cache_key(model: str, temperature: float, max_tokens: int, prompt: str) -> str:
    payload = json.dumps([model, temperature, max_tokens, prompt], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _atomic_write_json(path: Path, obj: dict) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, ensure_ascii=False, sort_keys=True)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class LlmClient:
    """Caching client over an HTTP or offline backend."""

    def __init__(
        self,
        config: LlmConfig,
        backend: Backend | None = None,
        cache_dir: str | Path | None = None,
        use_cache: bool = True,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.use_cache = use_cache and self.cache_dir is not None
        self._sleep = sleep
        self.backend = backend if backend is not None else self._backend_from_endpoint()
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _backend_from_endpoint(self) -> Backend | None:
        endpoint = self.config.endpoint
        if endpoint.startswith("mock:"):
            with open(endpoint[len("mock:"):], encoding="utf-8") as fh:
                return mock_oracle(json.load(fh))
        if endpoint.startswith("static:"):
            return static_backend(endpoint[len("static:"):])
        return None

    def complete(self, prompt: str | RenderedPrompt, use_cache: bool | None = None) -> ChatExchange:
        """Resolve one prompt, consulting the cache first.

        `use_cache=False` forces a fresh call without storing it; sampling
        flows need this because the cache key ignores call multiplicity.
        """
        caching = self.use_cache if use_cache is None else (use_cache and self.use_cache)
        meta = prompt if isinstance(prompt, RenderedPrompt) else None
        text = meta.text if meta is not None else str(prompt)
        key = cache_key(self.config.model, self.config.temperature, self.config.max_tokens, text)

        if caching:
            cached = self._cache_load(key)
            if cached is not None:
                return replace(cached, cache_hit=True, latency_ms=0.0)

        start = time.perf_counter()
        if self.backend is not None:
            reply = self.backend(text, meta)
            usage = None
            attempts = 1
        else:
            reply, usage, attempts = self._post_chat(text)
        latency_ms = (time.perf_counter() - start) * 1000.0

        if usage is not None:
            prompt_tokens, completion_tokens = usage
            usage_source = "reported"
        else:
            prompt_tokens = count_tokens(text)
            completion_tokens = count_tokens(reply)
            usage_source = "estimated"
        exchange = ChatExchange(
            prompt=text,
            reply=reply,
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            usage_source=usage_source,
            latency_ms=latency_ms,
            cache_hit=False,
            attempts=attempts,
        )
        if caching:
            self._cache_store(key, exchange)
        return exchange

    def complete_many(self, prompts: list, parallel: int = 4) -> list[ChatExchange]:
        """Resolve prompts concurrently; results keep input order."""
        if parallel <= 1 or len(prompts) <= 1:
            return [self.complete(p) for p in prompts]
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(self.complete, prompts))

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if not key:
                raise ConfigError(f"API key env var {self.config.api_key_env!r} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post_chat(self, text: str) -> tuple[str, tuple[int, int] | None, int]:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": text}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        }
        body, attempts = post_with_retries(
            self.config.endpoint,
            payload,
            self._headers(),
            self.config.timeout_s,
            self.config.retry,
            sleep=self._sleep,
        )
        try:
            reply = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise LlmSelectError(f"malformed chat completion response: {exc!r}") from exc
        usage = None
        if isinstance(body.get("usage"), dict):
            u = body["usage"]
            if "prompt_tokens" in u and "completion_tokens" in u:
                usage = (int(u["prompt_tokens"]), int(u["completion_tokens"]))
        return reply, usage, attempts

    def _cache_path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def _cache_load(self, key: str) -> ChatExchange | None:
        path = self._cache_path(key)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return ChatExchange(**obj)

    def _cache_store(self, key: str, exchange: ChatExchange) -> None:
        _atomic_write_json(self._cache_path(key), exchange.__dict__)
