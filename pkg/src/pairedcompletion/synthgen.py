"""Balanced synthetic framing corpora: seed perspectives first, then aligned sentences.

Distillations, summaries and names are produced from the seeds alone, before
any bulk sentence exists, and every prompt/reply pair is kept in the corpus
metadata so that ordering can be audited later.
"""

from __future__ import annotations

import hashlib
import re
import statistics
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from typing import Sequence

from .corpus import FramingCorpus, FramingSide
from .listparse import ListParseError, parse_blocks, parse_items
from .providers.base import Provider

TEMPERATURE = 0.5
MAX_FORMAT_ATTEMPTS = 3
BALANCE_THRESHOLD = 0.15
DERIVATIVE_STEPS = ("distill", "summary", "name")


class GenerationError(RuntimeError):
    def __init__(self, message: str, transcript: Sequence[dict]):
        super().__init__(message)
        self.transcript = list(transcript)


def _load_prompts() -> tuple[dict[str, str], str]:
    text = resources.files("pairedcompletion").joinpath("assets", "synth_prompts_v1.txt").read_text(encoding="utf-8")
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        m = re.fullmatch(r"\[(\w+)\]", line.strip())
        if m:
            current = m.group(1)
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    prompts = {k: "\n".join(v).strip() for k, v in sections.items()}
    return prompts, hashlib.sha256(text.encode("utf-8")).hexdigest()


PROMPTS, PROMPTS_HASH = _load_prompts()
PROMPTS_VERSION = "synth-prompts v1"


def dedup_key(text: str) -> str:
    return " ".join(text.lower().split())


@dataclass
class Generator:
    provider: Provider
    topic: str
    temperature: float = TEMPERATURE
    transcript: list[dict] = field(default_factory=list)

    def _ask(self, step: str, side: str | None, user: str) -> str:
        messages = [{"role": "system", "content": PROMPTS["system"]}, {"role": "user", "content": user}]
        reply = self.provider.generate(messages, temperature=self.temperature)
        self.transcript.append({"step": step, "side": side, "prompt": user, "reply": reply})
        return reply

    def _retry(self, step: str, side: str | None, user: str, parse):
        for _ in range(MAX_FORMAT_ATTEMPTS):
            reply = self._ask(step, side, user)
            try:
                return parse(reply)
            except (ListParseError, ValueError):
                continue
        raise GenerationError(
            f"{step}: no parseable reply after {MAX_FORMAT_ATTEMPTS} attempts",
            [t for t in self.transcript if t["step"] == step and t["side"] == side],
        )


def _seed_block(seeds: Sequence[str]) -> str:
    return "\n".join(f"- {s}" for s in seeds)


def gen_seeds(gen: Generator, n_seeds: int = 10) -> list[tuple[str, list[str]]]:
    """Two opposing perspectives as (heading name, seed sentences)."""

    def parse(reply: str):
        blocks = parse_blocks(reply)
        if len(blocks) != 2:
            raise ValueError(f"expected 2 perspectives, got {len(blocks)}")
        return [(b.name, list(b.items)) for b in blocks]

    return gen._retry("seeds", None, PROMPTS["seeds"].format(topic=gen.topic, n_seeds=n_seeds), parse)


def gen_sentences(gen: Generator, side: str, seeds: Sequence[str], count: int, max_requests: int = 10) -> list[str]:
    """Exactly ``count`` sentences, unique after case/whitespace folding, refilled as needed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    seen = {dedup_key(s) for s in seeds}
    out: list[str] = []
    for _ in range(max_requests):
        remaining = count - len(out)
        prompt = PROMPTS["sentences"].format(topic=gen.topic, seeds=_seed_block(seeds), count=remaining)
        for item in gen._retry("sentences", side, prompt, parse_items):
            key = dedup_key(item)
            if key in seen:
                continue
            seen.add(key)
            out.append(item)
            if len(out) == count:
                return out
    raise GenerationError(
        f"sentences for {side!r}: only {len(out)} unique of {count} after {max_requests} requests",
        [t for t in gen.transcript if t["step"] == "sentences" and t["side"] == side],
    )


def _parse_five(reply: str) -> list[str]:
    items = parse_items(reply)
    if len(items) != 5:
        raise ValueError(f"expected 5 distilled sentences, got {len(items)}")
    return items


def _parse_summary(reply: str) -> str:
    text = " ".join(reply.split())
    if not text:
        raise ValueError("empty summary")
    return text


def _parse_name(reply: str) -> str:
    lines = [ln.strip() for ln in reply.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty name")
    name = re.sub(r"^(name|label)\s*:\s*", "", lines[0], flags=re.IGNORECASE)
    name = name.strip().strip("\"'*`").rstrip(".").strip()
    if not name or len(name.split()) > 3:
        raise ValueError(f"name {name!r} is not 1-3 words")
    return name


def gen_derivatives(gen: Generator, side: str, seeds: Sequence[str]) -> tuple[list[str], str, str]:
    """(distilled 5, summary, simple name), each prompted with the seeds only."""
    block = _seed_block(seeds)
    distilled = gen._retry("distill", side, PROMPTS["distill"].format(topic=gen.topic, seeds=block), _parse_five)
    summary = gen._retry("summary", side, PROMPTS["summary"].format(topic=gen.topic, seeds=block), _parse_summary)
    name = gen._retry("name", side, PROMPTS["name"].format(topic=gen.topic, seeds=block), _parse_name)
    return distilled, summary, name


def build_corpus(
    topic: str,
    provider: Provider,
    *,
    sentences_per_side: int = 50,
    n_seeds: int = 10,
    temperature: float = TEMPERATURE,
    timestamp: str | None = None,
) -> FramingCorpus:
    gen = Generator(provider, topic, temperature)
    seed_sets = gen_seeds(gen, n_seeds)
    derivs = [gen_derivatives(gen, f"side{i + 1}", seeds) for i, (_, seeds) in enumerate(seed_sets)]
    names = [d[2] for d in derivs]
    if dedup_key(names[0]) == dedup_key(names[1]):
        raise GenerationError(f"both perspectives were named {names[0]!r}", gen.transcript)
    bulk = [gen_sentences(gen, f"side{i + 1}", seeds, sentences_per_side) for i, (_, seeds) in enumerate(seed_sets)]
    sides = [
        FramingSide(label=d[2], seed_sentences=seeds, distilled=d[0], summary=d[1], sentences=sents)
        for (_, seeds), d, sents in zip(seed_sets, derivs, bulk)
    ]
    meta = {
        "model_name": provider.model_name,
        "temperature": temperature,
        "seed_prompts_hash": PROMPTS_HASH,
        "prompts_version": PROMPTS_VERSION,
        "timestamp": timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "transcripts": gen.transcript,
    }
    return FramingCorpus(topic, sides[0], sides[1], meta)


def check_hierarchy(corpus: FramingCorpus) -> list[str]:
    """Bulk sentences that leaked into a derivative prompt (empty list means the hierarchy held)."""
    prompts = [t["prompt"] for t in corpus.meta.get("transcripts", []) if t["step"] in DERIVATIVE_STEPS]
    seeds = {s for side in corpus.sides for s in side.seed_sentences}
    leaks = []
    for side in corpus.sides:
        for sent in side.sentences:
            if sent in seeds:
                continue
            if any(sent in p for p in prompts):
                leaks.append(sent)
    return leaks


@dataclass(frozen=True)
class SideStats:
    label: str
    count: int
    char_length: tuple[float, float]
    token_count: tuple[float, float]
    mean_word_length: tuple[float, float]


@dataclass(frozen=True)
class BalanceReport:
    sides: tuple[SideStats, SideStats]
    divergence: dict[str, float]
    flags: tuple[str, ...]
    threshold: float = BALANCE_THRESHOLD

    def format(self) -> str:
        lines = [f"{'metric':<18}" + "".join(f"{s.label[:24]:>26}" for s in self.sides) + f"{'divergence':>12}"]
        for metric in ("char_length", "token_count", "mean_word_length"):
            row = f"{metric:<18}"
            for s in self.sides:
                mean, sd = getattr(s, metric)
                row += f"{mean:>18.2f} ± {sd:<5.2f}"
            flag = "  FLAG" if metric in self.flags else ""
            lines.append(row + f"{self.divergence[metric]:>12.1%}{flag}")
        lines.append(f"{'count':<18}" + "".join(f"{s.count:>26}" for s in self.sides))
        return "\n".join(lines)


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    return statistics.fmean(values), statistics.pstdev(values)


def balance_audit(corpus: FramingCorpus, threshold: float = BALANCE_THRESHOLD) -> BalanceReport:
    stats = []
    for side in corpus.sides:
        if len(side.sentences) < 20:
            raise ValueError(f"side {side.label!r} has {len(side.sentences)} sentences; the audit needs >= 20")
        words = [s.split() for s in side.sentences]
        stats.append(
            SideStats(
                label=side.label,
                count=len(side.sentences),
                char_length=_mean_sd([len(s) for s in side.sentences]),
                token_count=_mean_sd([len(w) for w in words]),
                mean_word_length=_mean_sd([statistics.fmean(len(x) for x in w) if w else 0.0 for w in words]),
            )
        )
    divergence = {}
    for metric in ("char_length", "token_count", "mean_word_length"):
        a, b = getattr(stats[0], metric)[0], getattr(stats[1], metric)[0]
        top = max(abs(a), abs(b))
        divergence[metric] = abs(a - b) / top if top else 0.0
    flags = tuple(m for m, d in divergence.items() if d > threshold)
    return BalanceReport(tuple(stats), divergence, flags, threshold)
