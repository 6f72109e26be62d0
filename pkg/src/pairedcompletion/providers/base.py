from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Mapping, Sequence

Message = Mapping[str, str]


class ProviderError(RuntimeError):
    """Base class for everything a provider can raise."""


class RetriableError(ProviderError):
    """Transport failure, rate limit or 5xx that survived every retry."""


class PermanentError(ProviderError):
    """Request the upstream will never accept (bad request, auth, ...)."""


class ContextOverflowError(PermanentError):
    pass


class CapabilityError(ProviderError):
    """The provider cannot perform the requested kind of call."""


@dataclass(frozen=True)
class TokenLogProb:
    text: str
    logprob: float | None


@dataclass(frozen=True)
class ScoredSequence:
    text: str
    tokens: tuple[TokenLogProb, ...]
    total: float

    @classmethod
    def from_tokens(cls, text: str, tokens: Sequence[TokenLogProb]) -> "ScoredSequence":
        present = [t.logprob for t in tokens if t.logprob is not None]
        total = math.fsum(present)
        if not math.isfinite(total):
            raise ProviderError(f"non-finite total log-probability for {text[:40]!r}")
        return cls(text=text, tokens=tuple(tokens), total=total)

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "tokens": [[t.text, t.logprob] for t in self.tokens],
            "total": self.total,
        }


@dataclass(frozen=True)
class FirstTokenDistribution:
    """Top alternatives (token -> logprob) for each of the first generated positions."""

    positions: tuple[Mapping[str, float], ...]

    def __post_init__(self):
        if len(self.positions) < 2:
            raise ValueError("need distributions for at least two generated positions")
        for pos in self.positions:
            for tok, lp in pos.items():
                if not lp <= 0:
                    raise ValueError(f"logprob for {tok!r} must be <= 0, got {lp}")

    @property
    def entries(self) -> Mapping[str, float]:
        """Merged view; the earliest position wins on duplicate tokens."""
        merged: dict[str, float] = {}
        for pos in reversed(self.positions):
            merged.update(pos)
        return merged


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_backoff_ms: float = 500.0


@dataclass(frozen=True)
class ProviderConfig:
    endpoint_url: str
    model_name: str
    api_key_env: str | None = None
    max_parallel: int = 4
    retry_policy: RetryPolicy = field(default_factory=RetryPolicy)
    price_per_1k_input: float = 0.0
    price_per_1k_output: float = 0.0
    timeout_s: float = 60.0

    def __post_init__(self):
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if self.price_per_1k_input < 0 or self.price_per_1k_output < 0:
            raise ValueError("prices must be non-negative")
        if self.retry_policy.max_attempts < 1:
            raise ValueError("retry_policy.max_attempts must be >= 1")


class Usage:
    """Thread-safe counters for upstream calls (cache hits are not counted)."""

    def __init__(self):
        self._lock = threading.Lock()
        self.calls = 0
        self.input_tokens = 0
        self.output_tokens = 0
        self.attempts: list[int] = []

    def record(self, input_tokens: int, output_tokens: int, attempts: int = 1) -> None:
        with self._lock:
            self.calls += 1
            self.input_tokens += int(input_tokens)
            self.output_tokens += int(output_tokens)
            self.attempts.append(attempts)

    def snapshot(self) -> dict:
        with self._lock:
            return {"calls": self.calls, "input_tokens": self.input_tokens, "output_tokens": self.output_tokens}


class Provider:
    """Common surface. Subclasses override the calls they support."""

    model_name: str = "unknown"
    max_parallel: int = 1
    price_per_1k_input: float = 0.0
    price_per_1k_output: float = 0.0
    token_inflation: float = 1.3

    def __init__(self):
        self.usage = Usage()

    def score_text(self, text: str) -> ScoredSequence:
        raise CapabilityError(f"{type(self).__name__} does not support echo scoring")

    def first_token_logprobs(self, messages: Sequence[Message], top_n: int = 20) -> FirstTokenDistribution:
        raise CapabilityError(f"{type(self).__name__} does not support chat log-probabilities")

    def generate(self, messages: Sequence[Message], temperature: float = 0.5) -> str:
        raise CapabilityError(f"{type(self).__name__} does not support generation")

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        raise CapabilityError(f"{type(self).__name__} does not expose embeddings")


def check_top_n(top_n: int) -> None:
    if top_n < 5:
        raise ValueError(f"top_n must be >= 5, got {top_n}")


def check_temperature(temperature: float) -> None:
    if not temperature >= 0:
        raise ValueError(f"temperature must be >= 0, got {temperature}")
