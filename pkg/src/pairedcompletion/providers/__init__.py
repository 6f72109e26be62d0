from .base import (
    CapabilityError,
    ContextOverflowError,
    FirstTokenDistribution,
    PermanentError,
    Provider,
    ProviderConfig,
    ProviderError,
    RetriableError,
    RetryPolicy,
    ScoredSequence,
    TokenLogProb,
    Usage,
)
from .cache import ResponseCache, cache_key
from .ngram import NGramProvider, SpeakerMixtureProvider, ngram_fit
from .remote import MissingAPIKeyError, OpenAICompatibleProvider
from .scripted import ScriptedProvider, hashed_embedding

__all__ = [
    "CapabilityError",
    "ContextOverflowError",
    "FirstTokenDistribution",
    "MissingAPIKeyError",
    "NGramProvider",
    "OpenAICompatibleProvider",
    "PermanentError",
    "Provider",
    "ProviderConfig",
    "ProviderError",
    "ResponseCache",
    "RetriableError",
    "RetryPolicy",
    "ScoredSequence",
    "ScriptedProvider",
    "SpeakerMixtureProvider",
    "TokenLogProb",
    "Usage",
    "cache_key",
    "hashed_embedding",
    "ngram_fit",
]
