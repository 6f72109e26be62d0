"""Offline character n-gram language models.

``NGramProvider`` is a deterministic add-alpha smoothed character model used
as a stand-in expressive entity in tests and offline runs.
``SpeakerMixtureProvider`` wraps several such models as one entity whose
speaker is latent: scoring a prefix shifts the posterior over speakers, so
the prefix genuinely conditions what follows.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from typing import Iterable, Sequence

from .base import PermanentError, Provider, ScoredSequence, TokenLogProb

BOS = "\x02"


class NGramProvider(Provider):
    def __init__(
        self,
        corpus: Sequence[str],
        order: int = 3,
        smoothing_alpha: float = 1.0,
        vocabulary: Iterable[str] | None = None,
        model_name: str | None = None,
    ):
        super().__init__()
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if not smoothing_alpha > 0:
            raise ValueError(f"smoothing_alpha must be > 0, got {smoothing_alpha}")
        corpus = [s for s in corpus if s]
        if not corpus:
            raise ValueError("cannot fit an n-gram model on an empty corpus")
        vocab = set("".join(corpus))
        if vocabulary is not None:
            vocab.update(vocabulary)
        if BOS in vocab:
            raise ValueError("corpus contains the reserved start symbol \\x02")

        self.order = order
        self.alpha = float(smoothing_alpha)
        self.vocabulary: tuple[str, ...] = tuple(sorted(vocab))
        self.model_name = model_name or f"char-{order}gram-a{smoothing_alpha:g}"
        self.max_parallel = 8
        self._counts: dict[str, Counter] = defaultdict(Counter)
        self._totals: Counter = Counter()
        for text in corpus:
            padded = BOS * order + text
            for i, ch in enumerate(text):
                ctx = padded[i : i + order]
                self._counts[ctx][ch] += 1
                self._totals[ctx] += 1

    def contexts(self) -> list[str]:
        return sorted(self._counts)

    def prob(self, context: str, char: str) -> float:
        """P(char | last ``order`` characters of ``context``), BOS-padded on the left."""
        ctx = (BOS * self.order + context)[-self.order :]
        num = self._counts.get(ctx, {}).get(char, 0) + self.alpha
        den = self._totals.get(ctx, 0) + self.alpha * len(self.vocabulary)
        return num / den

    def logprob(self, context: str, char: str) -> float:
        ctx = (BOS * self.order + context)[-self.order :]
        num = self._counts.get(ctx, {}).get(char, 0) + self.alpha
        den = self._totals.get(ctx, 0) + self.alpha * len(self.vocabulary)
        return math.log(num) - math.log(den)

    def token_logprobs(self, text: str) -> list[float]:
        vocab = set(self.vocabulary)
        bad = sorted({ch for ch in text if ch not in vocab})
        if bad:
            raise PermanentError(f"characters outside the model vocabulary: {bad!r}")
        padded = BOS * self.order + text
        out = []
        for i, ch in enumerate(text):
            ctx = padded[i : i + self.order]
            num = self._counts.get(ctx, {}).get(ch, 0) + self.alpha
            den = self._totals.get(ctx, 0) + self.alpha * len(self.vocabulary)
            out.append(math.log(num) - math.log(den))
        return out

    def score_text(self, text: str) -> ScoredSequence:
        if not text:
            raise ValueError("score_text needs non-empty text")
        lps = self.token_logprobs(text)
        self.usage.record(len(text), 0)
        return ScoredSequence.from_tokens(text, [TokenLogProb(ch, lp) for ch, lp in zip(text, lps)])


def ngram_fit(corpus: Sequence[str], order: int, smoothing_alpha: float, **kwargs) -> NGramProvider:
    return NGramProvider(corpus, order=order, smoothing_alpha=smoothing_alpha, **kwargs)


def _logsumexp(values: Sequence[float]) -> float:
    m = max(values)
    if m == -math.inf:
        return m
    return m + math.log(math.fsum(math.exp(v - m) for v in values))


class SpeakerMixtureProvider(Provider):
    """P(text) = sum_m w_m * P_m(text) over character models sharing one vocabulary."""

    def __init__(self, components: Sequence[NGramProvider], weights: Sequence[float] | None = None, model_name: str | None = None):
        super().__init__()
        if not components:
            raise ValueError("mixture needs at least one component")
        vocab = set()
        for c in components:
            vocab.update(c.vocabulary)
        for c in components:
            if set(c.vocabulary) != vocab:
                raise ValueError("mixture components must share a vocabulary (pass vocabulary= when fitting)")
        if weights is None:
            weights = [1.0 / len(components)] * len(components)
        if len(weights) != len(components) or any(w <= 0 for w in weights):
            raise ValueError("weights must be positive, one per component")
        total = math.fsum(weights)
        self.components = list(components)
        self.log_weights = [math.log(w / total) for w in weights]
        self.model_name = model_name or "mixture(" + ",".join(c.model_name for c in components) + ")"
        self.max_parallel = 8

    def token_logprobs(self, text: str) -> list[float]:
        per_comp = [c.token_logprobs(text) for c in self.components]
        cum = list(self.log_weights)
        prev = _logsumexp(cum)
        out = []
        for t in range(len(text)):
            cum = [cm + lps[t] for cm, lps in zip(cum, per_comp)]
            cur = _logsumexp(cum)
            out.append(cur - prev)
            prev = cur
        return out

    def score_text(self, text: str) -> ScoredSequence:
        if not text:
            raise ValueError("score_text needs non-empty text")
        lps = self.token_logprobs(text)
        self.usage.record(len(text), 0)
        return ScoredSequence.from_tokens(text, [TokenLogProb(ch, lp) for ch, lp in zip(text, lps)])
