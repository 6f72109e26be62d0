"""Client for servers speaking the OpenAI-compatible HTTP protocol (OpenAI, vLLM, ...)."""

from __future__ import annotations

import logging
import os
import random
import threading
import time
from typing import Callable, Mapping, Sequence

import httpx

from .base import (
    CapabilityError,
    ContextOverflowError,
    FirstTokenDistribution,
    Message,
    PermanentError,
    Provider,
    ProviderConfig,
    RetriableError,
    ScoredSequence,
    TokenLogProb,
    check_temperature,
    check_top_n,
)
from .cache import ResponseCache, cache_key

log = logging.getLogger(__name__)

RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})
_CONTEXT_MARKERS = ("maximum context length", "context length", "context_length_exceeded", "too many tokens")


class MissingAPIKeyError(ValueError):
    def __init__(self, var: str):
        super().__init__(f"environment variable {var} is not set (API key for the remote provider)")
        self.var = var


def _base_url(endpoint: str) -> str:
    url = endpoint.rstrip("/")
    if url.endswith("/v1"):
        url = url[: -len("/v1")]
    return url


def parse_completion_logprobs(data: dict) -> list[TokenLogProb]:
    try:
        choice = data["choices"][0]
    except (KeyError, IndexError, TypeError):
        raise PermanentError("completion response has no choices") from None
    lp = choice.get("logprobs")
    if not lp or lp.get("tokens") is None or lp.get("token_logprobs") is None:
        raise CapabilityError("completion response carries no echoed token log-probabilities")
    tokens, values = lp["tokens"], lp["token_logprobs"]
    if len(tokens) != len(values):
        raise PermanentError("tokens and token_logprobs differ in length")
    prompt_tokens = (data.get("usage") or {}).get("prompt_tokens")
    if isinstance(prompt_tokens, int) and 0 < prompt_tokens < len(tokens):
        # some servers generate one token even with max_tokens=0; keep the prompt part only
        tokens, values = tokens[:prompt_tokens], values[:prompt_tokens]
    return [TokenLogProb(t, None if v is None else float(v)) for t, v in zip(tokens, values)]


def parse_chat_logprobs(data: dict, positions: int = 2) -> FirstTokenDistribution:
    try:
        choice = data["choices"][0]
    except (KeyError, IndexError, TypeError):
        raise PermanentError("chat response has no choices") from None
    content = (choice.get("logprobs") or {}).get("content")
    if content is None:
        raise CapabilityError("chat response carries no token log-probabilities")
    dists: list[dict[str, float]] = []
    for item in content[:positions]:
        dist = {alt["token"]: float(alt["logprob"]) for alt in item.get("top_logprobs") or []}
        dist.setdefault(item["token"], float(item["logprob"]))
        dists.append(dist)
    while len(dists) < positions:
        # model stopped early; the missing position is an empty distribution
        dists.append({})
    return FirstTokenDistribution(tuple(dists))


def parse_embeddings(data: dict) -> list[list[float]]:
    items = sorted(data["data"], key=lambda d: d["index"])
    return [[float(v) for v in item["embedding"]] for item in items]


class OpenAICompatibleProvider(Provider):
    def __init__(
        self,
        config: ProviderConfig,
        *,
        cache: ResponseCache | None = None,
        transport: httpx.BaseTransport | None = None,
        env: Mapping[str, str] | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
        token_inflation: float = 1.3,
    ):
        super().__init__()
        env = os.environ if env is None else env
        headers = {"Content-Type": "application/json"}
        if config.api_key_env:
            key = env.get(config.api_key_env)
            if not key:
                raise MissingAPIKeyError(config.api_key_env)
            headers["Authorization"] = f"Bearer {key}"
        self.config = config
        self.model_name = config.model_name
        self.max_parallel = config.max_parallel
        self.price_per_1k_input = config.price_per_1k_input
        self.price_per_1k_output = config.price_per_1k_output
        self.token_inflation = token_inflation
        self.cache = cache
        self.base_url = _base_url(config.endpoint_url)
        self._client = httpx.Client(base_url=self.base_url, headers=headers, timeout=config.timeout_s, transport=transport)
        self._slots = threading.BoundedSemaphore(config.max_parallel)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self.last_attempts = 0

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _backoff(self, attempt: int) -> float:
        base = self.config.retry_policy.base_backoff_ms / 1000.0
        return base * (2 ** (attempt - 1)) * (1.0 + self._rng.random())

    def _request(self, path: str, body: dict) -> dict:
        max_attempts = self.config.retry_policy.max_attempts
        last: Exception | None = None
        for attempt in range(1, max_attempts + 1):
            try:
                with self._slots:
                    resp = self._client.post(path, json=body)
            except httpx.TransportError as exc:
                last = exc
                log.warning("%s %s: transport error on attempt %d: %s", self.model_name, path, attempt, exc)
            else:
                if resp.status_code in RETRY_STATUSES:
                    last = RetriableError(f"HTTP {resp.status_code} from {path}")
                    log.warning("%s %s: HTTP %d on attempt %d", self.model_name, path, resp.status_code, attempt)
                elif resp.status_code == 404:
                    raise CapabilityError(f"{self.base_url}{path} not found (HTTP 404)")
                elif resp.status_code >= 400:
                    msg = resp.text[:500]
                    if any(m in msg.lower() for m in _CONTEXT_MARKERS):
                        raise ContextOverflowError(msg)
                    raise PermanentError(f"HTTP {resp.status_code} from {path}: {msg}")
                else:
                    data = resp.json()
                    usage = data.get("usage") or {}
                    self.last_attempts = attempt
                    self.usage.record(usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0), attempt)
                    return data
            if attempt < max_attempts:
                self._sleep(self._backoff(attempt))
        self.last_attempts = max_attempts
        raise RetriableError(f"{path} failed after {max_attempts} attempts: {last}")

    def _call(self, path: str, body: dict) -> dict:
        if self.cache is None:
            return self._request(path, body)
        key = cache_key(self.base_url + path, self.model_name, body)
        return self.cache.get_or_compute(key, lambda: self._request(path, body))

    def score_text(self, text: str) -> ScoredSequence:
        if not text:
            raise ValueError("score_text needs non-empty text")
        body = {"model": self.model_name, "prompt": text, "max_tokens": 0, "echo": True, "logprobs": 0}
        data = self._call("/v1/completions", body)
        return ScoredSequence.from_tokens(text, parse_completion_logprobs(data))

    def first_token_logprobs(self, messages: Sequence[Message], top_n: int = 20) -> FirstTokenDistribution:
        check_top_n(top_n)
        body = {
            "model": self.model_name,
            "messages": [dict(m) for m in messages],
            "max_tokens": 2,
            "logprobs": True,
            "top_logprobs": top_n,
            "temperature": 0,
        }
        return parse_chat_logprobs(self._call("/v1/chat/completions", body))

    def generate(self, messages: Sequence[Message], temperature: float = 0.5) -> str:
        check_temperature(temperature)
        body = {"model": self.model_name, "messages": [dict(m) for m in messages], "temperature": temperature}
        # sampled generations are not cached: regenerating must be able to give a new answer
        data = self._request("/v1/chat/completions", body)
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise PermanentError("chat response has no message content") from None

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        texts = list(texts)
        if not texts:
            return []
        if self.cache is None:
            unique = list(dict.fromkeys(texts))
            data = self._request("/v1/embeddings", {"model": self.model_name, "input": unique})
            table = dict(zip(unique, parse_embeddings(data)))
            return [table[t] for t in texts]

        def key(t: str) -> str:
            return cache_key(self.base_url + "/v1/embeddings", self.model_name, {"model": self.model_name, "input": t})

        missing = [t for t in dict.fromkeys(texts) if key(t) not in self.cache]
        if missing:
            data = self._request("/v1/embeddings", {"model": self.model_name, "input": missing})
            for t, vec in zip(missing, parse_embeddings(data)):
                self.cache.put(key(t), {"embedding": vec})
        return [list(self.cache.get(key(t))["embedding"]) for t in texts]
