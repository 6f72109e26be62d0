"""Declarative run configuration (TOML), validated before any provider is contacted.

Example::

    seed = 0
    output_dir = "runs/demo"
    datasets = ["corpora/dogs.json"]

    [[providers]]
    name = "babbage"
    kind = "openai"              # openai | ngram | scripted
    endpoint_url = "https://api.openai.com"
    model_name = "babbage-002"
    api_key_env = "OPENAI_API_KEY"
    price_per_1k_input = 0.0004
    cache = "cache/babbage.jsonl"

    [[methods]]
    method = "paired"            # paired | prompt | tfidf | wordvec | embed
    models = ["babbage"]
    k = [1, 2]
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .baselines.runner import DEFAULT_SIZES
from .corpus import PROMPT_VARIANTS, FramingCorpus
from .providers.base import ProviderConfig, RetryPolicy

PROVIDER_KINDS = ("openai", "ngram", "scripted")
LR_METHODS = ("tfidf", "wordvec", "embed")
METHODS = ("paired", "prompt", *LR_METHODS)
# which provider kinds can serve each method
_CAPABLE = {
    "paired": {"openai", "ngram"},
    "prompt": {"openai", "scripted"},
    "embed": {"openai", "scripted"},
}
_NOMINAL_MODEL = {"tfidf": "tfidf", "wordvec": "fasttext"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProviderSpec:
    name: str
    kind: str
    options: dict[str, Any]

    def provider_config(self) -> ProviderConfig:
        o = self.options
        retry = o.get("retry", {})
        return ProviderConfig(
            endpoint_url=o["endpoint_url"],
            model_name=o.get("model_name", self.name),
            api_key_env=o.get("api_key_env"),
            max_parallel=int(o.get("max_parallel", 4)),
            retry_policy=RetryPolicy(int(retry.get("max_attempts", 5)), float(retry.get("base_backoff_ms", 500))),
            price_per_1k_input=float(o.get("price_per_1k_input", 0.0)),
            price_per_1k_output=float(o.get("price_per_1k_output", 0.0)),
            timeout_s=float(o.get("timeout_s", 60.0)),
        )


@dataclass(frozen=True)
class MethodSpec:
    method: str
    models: tuple[str, ...]
    variants: tuple[str, ...]
    options: dict[str, Any]


@dataclass(frozen=True)
class RunConfig:
    providers: dict[str, ProviderSpec]
    datasets: tuple[Path, ...]
    methods: tuple[MethodSpec, ...]
    output_dir: Path
    seed: int = 0
    evaluation: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, Any] = field(default_factory=dict)

    @property
    def bootstrap_replicates(self) -> int:
        return int(self.evaluation.get("bootstrap_replicates", 100))

    @property
    def bootstrap_sample_size(self) -> int:
        return int(self.evaluation.get("bootstrap_sample_size", 1000))

    def load_corpora(self) -> list[FramingCorpus]:
        return [FramingCorpus.load(p) for p in self.datasets]


def _variants(method: str, m: dict) -> tuple[str, ...]:
    if method == "paired":
        ks = m.get("k", [1, 2])
        for k in ks:
            if k not in (1, 2):
                raise ConfigError(f"paired: k must be 1 or 2, got {k!r}")
        return tuple(f"k={k}" for k in ks)
    if method == "prompt":
        vs = m.get("variants", list(PROMPT_VARIANTS))
        for v in vs:
            if v not in PROMPT_VARIANTS:
                raise ConfigError(f"prompt: unknown variant {v!r}; expected one of {PROMPT_VARIANTS}")
        return tuple(vs)
    sizes = m.get("n_train", list(DEFAULT_SIZES))
    for n in sizes:
        if not isinstance(n, int) or n < 2 or n % 2:
            raise ConfigError(f"{method}: n_train values must be even integers >= 2, got {n!r}")
    return tuple(f"n={n}" for n in sizes)


def parse_config(data: dict[str, Any], base_dir: Path | None = None) -> RunConfig:
    base_dir = base_dir or Path.cwd()

    def resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else base_dir / path

    providers: dict[str, ProviderSpec] = {}
    for p in data.get("providers", []):
        name, kind = p.get("name"), p.get("kind")
        if not name or kind not in PROVIDER_KINDS:
            raise ConfigError(f"provider entries need a name and kind in {PROVIDER_KINDS}: {p!r}")
        if name in providers:
            raise ConfigError(f"duplicate provider name {name!r}")
        opts = {k: v for k, v in p.items() if k not in ("name", "kind")}
        if "api_key" in opts:
            raise ConfigError(f"provider {name!r}: secrets belong in environment variables (use api_key_env)")
        if kind == "openai" and "endpoint_url" not in opts:
            raise ConfigError(f"provider {name!r}: endpoint_url is required")
        if kind == "scripted":
            if "script" not in opts:
                raise ConfigError(f"provider {name!r}: script path is required")
            opts["script"] = resolve(opts["script"])
            if not opts["script"].exists():
                raise ConfigError(f"provider {name!r}: script {opts['script']} does not exist")
        if "cache" in opts:
            opts["cache"] = resolve(opts["cache"])
        spec = ProviderSpec(name, kind, opts)
        if kind == "openai":
            try:
                spec.provider_config()
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"provider {name!r}: {exc}") from exc
        providers[name] = spec

    datasets = tuple(resolve(d) for d in data.get("datasets", []))
    if not datasets:
        raise ConfigError("no datasets configured")
    for d in datasets:
        if not d.exists():
            raise ConfigError(f"dataset {d} does not exist")

    methods = []
    for m in data.get("methods", []):
        method = m.get("method")
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
        opts = {k: v for k, v in m.items() if k not in ("method", "models")}
        if method in _NOMINAL_MODEL:
            models = tuple(m.get("models", [_NOMINAL_MODEL[method]]))
        else:
            models = tuple(m.get("models", []))
            if not models:
                raise ConfigError(f"{method}: at least one model (provider name) is required")
            for name in models:
                if name not in providers:
                    raise ConfigError(f"{method}: unknown provider {name!r}")
                if providers[name].kind not in _CAPABLE[method]:
                    raise ConfigError(f"{method}: provider {name!r} of kind {providers[name].kind!r} cannot serve this method")
        if method == "wordvec":
            if "word_vectors" not in opts:
                raise ConfigError("wordvec: word_vectors path is required")
            opts["word_vectors"] = resolve(opts["word_vectors"])
            if not opts["word_vectors"].exists():
                raise ConfigError(f"wordvec: {opts['word_vectors']} does not exist")
        if method == "prompt" and "template" in opts:
            opts["template"] = resolve(opts["template"])
            if not opts["template"].exists():
                raise ConfigError(f"prompt: template {opts['template']} does not exist")
        methods.append(MethodSpec(method, models, _variants(method, m), opts))
    if not methods:
        raise ConfigError("no methods configured")

    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return RunConfig(
        providers=providers,
        datasets=datasets,
        methods=tuple(methods),
        output_dir=resolve(data.get("output_dir", "runs")),
        seed=seed,
        evaluation=dict(data.get("evaluation", {})),
        raw=data,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(data, path.parent)
