"""Prompt-based comparison method: read the label decision from first-token log-probabilities."""

from __future__ import annotations

import string
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .corpus import PROMPT_VARIANTS
from .logprob import FramingLabel, label_from_score
from .paired import PrimingSet
from .providers.base import CapabilityError, FirstTokenDistribution, Provider

REQUIRED_FIELDS = frozenset({"label_a", "label_b", "context_a", "context_b", "target"})
DEFAULT_TOP_N = 20
NO_LABEL_TOKEN = "no_label_token"


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    system: str
    user: str
    variant: str = "seeds"
    version: str = "v1"

    def __post_init__(self):
        if self.variant not in PROMPT_VARIANTS:
            raise TemplateError(f"unknown prompt variant {self.variant!r}")
        fields = {f for part in (self.system, self.user) for _, f, _, _ in string.Formatter().parse(part) if f}
        missing = REQUIRED_FIELDS - fields
        if missing:
            raise TemplateError(f"template is missing placeholders: {sorted(missing)}")
        unknown = fields - REQUIRED_FIELDS
        if unknown:
            raise TemplateError(f"template has unknown placeholders: {sorted(unknown)}")

    @classmethod
    def parse(cls, text: str, variant: str = "seeds") -> "PromptTemplate":
        """Parse the asset format: leading ``#`` header lines, then ``[system]`` and ``[user]`` sections."""
        version = "unversioned"
        sections: dict[str, list[str]] = {}
        current = None
        for line in text.splitlines():
            if current is None and line.startswith("#"):
                head = line.lstrip("# ").strip()
                if head.startswith("framing-prompt"):
                    version = head.split()[-1]
                continue
            if line.strip() in ("[system]", "[user]"):
                current = line.strip()[1:-1]
                sections[current] = []
                continue
            if current is None:
                if line.strip():
                    raise TemplateError("template text before the first [system]/[user] section")
                continue
            sections[current].append(line)
        if "user" not in sections:
            raise TemplateError("template has no [user] section")
        system = "\n".join(sections.get("system", [])).strip()
        user = "\n".join(sections["user"]).strip()
        return cls(system=system, user=user, variant=variant, version=version)

    @classmethod
    def load(cls, path: str | Path | None = None, variant: str = "seeds") -> "PromptTemplate":
        if path is None:
            text = resources.files("pairedcompletion").joinpath("assets", "framing_prompt_v1.txt").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return cls.parse(text, variant=variant)

    def with_variant(self, variant: str) -> "PromptTemplate":
        return PromptTemplate(self.system, self.user, variant, self.version)


@dataclass(frozen=True)
class LabelTokenMap:
    label_a_first_token: str
    label_b_first_token: str

    def __post_init__(self):
        if _norm(self.label_a_first_token) == _norm(self.label_b_first_token):
            raise ValueError(f"labels share the first token {self.label_a_first_token!r}")

    def swapped(self) -> "LabelTokenMap":
        return LabelTokenMap(self.label_b_first_token, self.label_a_first_token)


@dataclass(frozen=True)
class PromptResult:
    label: FramingLabel | None
    delta_equiv: float | None
    tie: bool = False
    failure_mode: str | None = None


def _context_block(texts: Sequence[str]) -> str:
    return "\n".join(f"- {t.strip()}" for t in texts)


def render_prompt(template: PromptTemplate, priming: PrimingSet, target: str) -> list[dict[str, str]]:
    if not target:
        raise ValueError("target must be non-empty")
    if template.variant == "zero_shot":
        ctx_a = ctx_b = ""
    else:
        ctx_a, ctx_b = _context_block(priming.side_a), _context_block(priming.side_b)
    values = dict(label_a=priming.label_a, label_b=priming.label_b, context_a=ctx_a, context_b=ctx_b, target=target)
    messages = []
    if template.system:
        messages.append({"role": "system", "content": template.system.format(**values)})
    messages.append({"role": "user", "content": template.user.format(**values)})
    return messages


def _norm(token: str) -> str:
    return token.strip().lower()


def _lookup(dist, token: str) -> float | None:
    want = _norm(token)
    hits = [lp for tok, lp in dist.items() if _norm(tok) == want]
    return max(hits) if hits else None


def label_logprobs(dist: FirstTokenDistribution, label_map: LabelTokenMap) -> tuple[float | None, float | None]:
    """Log-probs of both label tokens, position one first, position two only for a token missing from one."""
    first, second = dist.positions[0], dist.positions[1]
    out = []
    for tok in (label_map.label_a_first_token, label_map.label_b_first_token):
        lp = _lookup(first, tok)
        if lp is None:
            lp = _lookup(second, tok)
        out.append(lp)
    return out[0], out[1]


def classify_by_prompt(
    template: PromptTemplate,
    priming: PrimingSet,
    target: str,
    provider: Provider,
    label_map: LabelTokenMap,
    top_n: int = DEFAULT_TOP_N,
) -> PromptResult:
    dist = provider.first_token_logprobs(render_prompt(template, priming, target), top_n=top_n)
    lp_a, lp_b = label_logprobs(dist, label_map)
    if lp_a is None and lp_b is None:
        return PromptResult(None, None, failure_mode=NO_LABEL_TOKEN)
    if lp_a is None or lp_b is None:
        # a label outside the top-N list is at most as likely as the least likely listed entry
        bound = min(dist.positions[0].values() or dist.positions[1].values())
        lp_a = bound if lp_a is None else lp_a
        lp_b = bound if lp_b is None else lp_b
    c = label_from_score(lp_a - lp_b)
    return PromptResult(c.label, c.aggregate_delta, tie=c.tie)


_label_token_cache: dict[tuple[str, str], str] = {}
_label_token_lock = threading.Lock()


def resolve_label_tokens(provider: Provider, label_a: str, label_b: str) -> LabelTokenMap:
    """First token of each label under the provider's tokenizer, cached per model.

    Providers without echo scoring fall back to the label's first word.
    """
    out = []
    for label in (label_a, label_b):
        key = (provider.model_name, label)
        with _label_token_lock:
            tok = _label_token_cache.get(key)
        if tok is None:
            try:
                tok = provider.score_text(label).tokens[0].text
            except CapabilityError:
                tok = label.split()[0]
            with _label_token_lock:
                _label_token_cache[key] = tok
        out.append(tok)
    return LabelTokenMap(out[0], out[1])
