"""Scripted stand-in for chat models.

A script is a JSON object::

    {
      "model_name": "scripted",
      "rules": [{"contains": "perspectives", "replies": ["...", "..."]}],
      "default_reply": "...",
      "first_token": [{"A": -0.1, "B": -2.4}, {}],
      "first_token_rules": [{"contains": "dogs", "positions": [{...}, {...}]}],
      "embedding_dim": 32
    }

Rules are matched against the concatenated message contents, first match
wins. A rule's replies are handed out in order; the last one repeats.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from pathlib import Path
from typing import Any, Sequence

from .base import CapabilityError, FirstTokenDistribution, Message, Provider, check_temperature, check_top_n

_WORD = re.compile(r"[a-z0-9']+")


def hashed_embedding(text: str, dim: int = 32) -> list[float]:
    """Deterministic bag-of-words hashing vector, L2-normalised."""
    vec = [0.0] * dim
    for word in _WORD.findall(text.lower()):
        h = int.from_bytes(hashlib.blake2b(word.encode(), digest_size=8).digest(), "big")
        vec[h % dim] += 1.0 if (h >> 32) & 1 else -1.0
    norm = sum(v * v for v in vec) ** 0.5
    return [v / norm for v in vec] if norm else vec


class ScriptedProvider(Provider):
    def __init__(self, script: dict[str, Any] | None = None):
        super().__init__()
        script = dict(script or {})
        self.model_name = script.get("model_name", "scripted")
        self.max_parallel = int(script.get("max_parallel", 1))
        self.price_per_1k_input = float(script.get("price_per_1k_input", 0.0))
        self.price_per_1k_output = float(script.get("price_per_1k_output", 0.0))
        self.rules = [dict(r) for r in script.get("rules", [])]
        self.default_reply = script.get("default_reply")
        self.first_token = script.get("first_token")
        self.first_token_rules = script.get("first_token_rules", [])
        self.embedding_dim = script.get("embedding_dim")
        self.requests: list[dict[str, Any]] = []
        self._cursor: dict[int, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProvider":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    @staticmethod
    def _joined(messages: Sequence[Message]) -> str:
        return "\n".join(m.get("content", "") for m in messages)

    def generate(self, messages: Sequence[Message], temperature: float = 0.5) -> str:
        check_temperature(temperature)
        text = self._joined(messages)
        with self._lock:
            self.requests.append({"kind": "generate", "messages": [dict(m) for m in messages], "temperature": temperature})
            for i, rule in enumerate(self.rules):
                if rule.get("contains", "") in text:
                    replies = rule["replies"]
                    n = self._cursor.get(i, 0)
                    self._cursor[i] = n + 1
                    reply = replies[min(n, len(replies) - 1)]
                    break
            else:
                if self.default_reply is None:
                    raise CapabilityError("scripted provider has no reply for this prompt")
                reply = self.default_reply
        self.usage.record(len(text.split()), len(reply.split()))
        return reply

    def first_token_logprobs(self, messages: Sequence[Message], top_n: int = 20) -> FirstTokenDistribution:
        check_top_n(top_n)
        text = self._joined(messages)
        positions = None
        for rule in self.first_token_rules:
            if rule.get("contains", "") in text:
                positions = rule["positions"]
                break
        if positions is None:
            positions = self.first_token
        if positions is None:
            raise CapabilityError("scripted provider has no first-token distribution")
        positions = [dict(p) for p in positions]
        while len(positions) < 2:
            positions.append({})
        with self._lock:
            self.requests.append({"kind": "first_token", "messages": [dict(m) for m in messages], "top_n": top_n})
        self.usage.record(len(text.split()), 2)
        return FirstTokenDistribution(tuple(positions))

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not self.embedding_dim:
            raise CapabilityError("scripted provider has no embedding_dim configured")
        texts = list(texts)
        if texts:
            self.usage.record(sum(len(t.split()) for t in texts), 0)
        return [hashed_embedding(t, int(self.embedding_dim)) for t in texts]
