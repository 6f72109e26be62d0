"""Framing corpus data model and its JSON file format.

File layout::

    {"topic": str,
     "meta": {"model_name", "temperature", "seed_prompts_hash", "timestamp", ...},
     "sides": [{"label", "seeds": [...], "distilled": [5 items], "summary", "sentences": [...]}, x2]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .logprob import FramingLabel
from .paired import PrimingSet, TargetBatch

PROMPT_VARIANTS = ("seeds", "distilled", "summary", "zero_shot")


@dataclass(frozen=True)
class FramingSide:
    label: str
    seed_sentences: tuple[str, ...]
    distilled: tuple[str, ...]
    summary: str
    sentences: tuple[str, ...]

    def __post_init__(self):
        for name in ("seed_sentences", "distilled", "sentences"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if len(self.distilled) != 5:
            raise ValueError(f"side {self.label!r}: distilled must hold exactly 5 sentences, got {len(self.distilled)}")
        texts = [self.label, self.summary, *self.seed_sentences, *self.distilled, *self.sentences]
        if any(not t or not t.strip() for t in texts):
            raise ValueError(f"side {self.label!r} contains an empty text")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "seeds": list(self.seed_sentences),
            "distilled": list(self.distilled),
            "summary": self.summary,
            "sentences": list(self.sentences),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FramingSide":
        return cls(d["label"], d["seeds"], d["distilled"], d["summary"], d["sentences"])


@dataclass(frozen=True)
class FramingCorpus:
    topic: str
    side_a: FramingSide
    side_b: FramingSide
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.side_a.label == self.side_b.label:
            raise ValueError("the two sides need distinct labels")
        if "temperature" not in self.meta:
            raise ValueError("generation meta must record the temperature")

    @property
    def sides(self) -> tuple[FramingSide, FramingSide]:
        return (self.side_a, self.side_b)

    def labelled_sentences(self) -> list[tuple[str, FramingLabel]]:
        """Bulk sentences with their truth label, side A first."""
        return [(s, FramingLabel.A) for s in self.side_a.sentences] + [(s, FramingLabel.B) for s in self.side_b.sentences]

    def target_batch(self) -> tuple[TargetBatch, dict[str, FramingLabel]]:
        items = self.labelled_sentences()
        batch = TargetBatch(tuple((f"t{i}", s) for i, (s, _) in enumerate(items)))
        truth = {tid: lab for (tid, _), (_, lab) in zip(batch.targets, items)}
        return batch, truth

    def priming(self, variant: str = "distilled") -> PrimingSet:
        """Context/conditioner texts for a variant; zero_shot keeps seeds (only the labels get used)."""
        if variant not in PROMPT_VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {PROMPT_VARIANTS}")
        a, b = self.side_a, self.side_b
        if variant == "distilled":
            return PrimingSet(a.distilled, b.distilled, a.label, b.label)
        if variant == "summary":
            return PrimingSet((a.summary,), (b.summary,), a.label, b.label)
        return PrimingSet(a.seed_sentences, b.seed_sentences, a.label, b.label)

    def to_dict(self) -> dict:
        return {"topic": self.topic, "meta": self.meta, "sides": [self.side_a.to_dict(), self.side_b.to_dict()]}

    @classmethod
    def from_dict(cls, d: dict) -> "FramingCorpus":
        sides = d["sides"]
        if len(sides) != 2:
            raise ValueError(f"corpus must have exactly two sides, got {len(sides)}")
        return cls(d["topic"], FramingSide.from_dict(sides[0]), FramingSide.from_dict(sides[1]), dict(d.get("meta", {})))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FramingCorpus":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
