"""Paired completion: score each target as a continuation of conditioners from both framing sides."""

from __future__ import annotations

import json
import logging
import math
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .logprob import DeltaRecord, FramingLabel, classify, conditional_logprob, delta
from .providers.base import CapabilityError, Provider, ProviderError, ScoredSequence

log = logging.getLogger(__name__)

_TERMINAL = re.compile(r"[.!?…][\"'”’)\]]*$")


@dataclass(frozen=True)
class PrimingSet:
    side_a: tuple[str, ...]
    side_b: tuple[str, ...]
    label_a: str = "A"
    label_b: str = "B"

    def __post_init__(self):
        object.__setattr__(self, "side_a", tuple(self.side_a))
        object.__setattr__(self, "side_b", tuple(self.side_b))
        if not self.side_a or not self.side_b:
            raise ValueError("both priming sides need at least one text")
        if self.label_a == self.label_b:
            raise ValueError(f"priming labels must differ, both are {self.label_a!r}")

    def swapped(self) -> "PrimingSet":
        return PrimingSet(self.side_b, self.side_a, self.label_b, self.label_a)

    def side(self, label: FramingLabel) -> tuple[str, ...]:
        return self.side_a if label is FramingLabel.A else self.side_b


@dataclass(frozen=True)
class PairingPlan:
    k: int = 1
    repetitions: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        if self.k not in (1, 2):
            raise ValueError(f"k must be 1 or 2, got {self.k}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass(frozen=True)
class TargetBatch:
    targets: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple((str(i), t) for i, t in self.targets))
        ids = [i for i, _ in self.targets]
        if len(set(ids)) != len(ids):
            raise ValueError("target ids must be unique")
        if any(not t for _, t in self.targets):
            raise ValueError("target texts must be non-empty")

    @classmethod
    def from_texts(cls, texts: Iterable[str], prefix: str = "x") -> "TargetBatch":
        return cls(tuple((f"{prefix}{i}", t) for i, t in enumerate(texts)))


@dataclass(frozen=True)
class TargetResult:
    target_id: str
    label: FramingLabel
    aggregate_delta: float
    tie: bool
    records: tuple[DeltaRecord, ...]

    def to_dict(self) -> dict:
        return {
            "target_id": self.target_id,
            "label": self.label.value,
            "aggregate_delta": self.aggregate_delta,
            "tie": self.tie,
            "deltas": [r.to_dict() for r in self.records],
            "failure": None,
        }


@dataclass(frozen=True)
class TargetFailure:
    target_id: str
    error: str

    def to_dict(self) -> dict:
        return {"target_id": self.target_id, "label": None, "aggregate_delta": None, "deltas": [], "failure": self.error}


@dataclass
class PairedRun:
    results: list[TargetResult] = field(default_factory=list)
    failures: list[TargetFailure] = field(default_factory=list)
    score_calls: int = 0

    def by_id(self) -> dict[str, TargetResult]:
        return {r.target_id: r for r in self.results}


@dataclass(frozen=True)
class CallEstimate:
    num_score_calls: int
    est_tokens: int


def terminate(sentence: str) -> str:
    sentence = sentence.strip()
    if not sentence:
        raise ValueError("conditioner texts must be non-empty")
    return sentence if _TERMINAL.search(sentence) else sentence + "."


def join_conditioners(conditioners: Sequence[str]) -> str:
    if not conditioners:
        raise ValueError("need at least one conditioner")
    return " ".join(terminate(c) for c in conditioners)


def concatenate(conditioners: Sequence[str], target: str) -> str:
    """Conditioners in order, each closed with terminal punctuation, then the target unchanged."""
    if not target:
        raise ValueError("target must be non-empty")
    return join_conditioners(conditioners) + " " + target


@dataclass(frozen=True)
class _Pairing:
    target_id: str
    target: str
    ids_a: str
    ids_b: str
    prefix_a: str
    prefix_b: str

    @property
    def joint_a(self) -> str:
        return self.prefix_a + " " + self.target

    @property
    def joint_b(self) -> str:
        return self.prefix_b + " " + self.target


def _draws(texts: Sequence[str], label: str, target_id: str, plan: PairingPlan) -> list[list[int]]:
    if plan.k > len(texts):
        raise ValueError(f"side {label!r} has {len(texts)} texts, fewer than k={plan.k}")
    # one stream per (seed, target, side label): swapping sides keeps every side's draws
    rng = random.Random(f"{plan.rng_seed}|{target_id}|{label}")
    return [rng.sample(range(len(texts)), plan.k) for _ in range(plan.repetitions)]


def plan_pairings(priming: PrimingSet, batch: TargetBatch, plan: PairingPlan) -> list[_Pairing]:
    out = []
    for target_id, text in batch.targets:
        draws_a = _draws(priming.side_a, priming.label_a, target_id, plan)
        draws_b = _draws(priming.side_b, priming.label_b, target_id, plan)
        for da, db in zip(draws_a, draws_b):
            out.append(
                _Pairing(
                    target_id=target_id,
                    target=text,
                    ids_a="+".join(f"{priming.label_a}:{i}" for i in da),
                    ids_b="+".join(f"{priming.label_b}:{i}" for i in db),
                    prefix_a=join_conditioners([priming.side_a[i] for i in da]),
                    prefix_b=join_conditioners([priming.side_b[i] for i in db]),
                )
            )
    return out


def _distinct_texts(pairings: Sequence[_Pairing]) -> list[str]:
    texts = dict.fromkeys(t for p in pairings for t in (p.prefix_a, p.prefix_b, p.joint_a, p.joint_b))
    return list(texts)


def estimate_calls(priming: PrimingSet, batch: TargetBatch, plan: PairingPlan, token_inflation: float = 1.3) -> CallEstimate:
    """Upstream scoring calls and tokens for a cold cache: one call per distinct scored string."""
    texts = _distinct_texts(plan_pairings(priming, batch, plan))
    words = sum(len(t.split()) for t in texts)
    return CallEstimate(len(texts), math.ceil(words * token_inflation))


def run_paired(priming: PrimingSet, batch: TargetBatch, plan: PairingPlan, provider: Provider) -> PairedRun:
    pairings = plan_pairings(priming, batch, plan)
    texts = _distinct_texts(pairings)

    def score(text: str) -> ScoredSequence | ProviderError:
        try:
            return provider.score_text(text)
        except CapabilityError:
            raise
        except ProviderError as exc:
            return exc

    workers = max(1, int(getattr(provider, "max_parallel", 1)))
    if workers == 1 or len(texts) < 2:
        scored = dict(zip(texts, map(score, texts)))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scored = dict(zip(texts, pool.map(score, texts)))

    run = PairedRun(score_calls=len(texts))
    grouped: dict[str, list[DeltaRecord]] = {}
    failed: dict[str, str] = {}
    for p in pairings:
        parts = [scored[t] for t in (p.prefix_a, p.joint_a, p.prefix_b, p.joint_b)]
        errors = [e for e in parts if isinstance(e, ProviderError)]
        if errors:
            failed.setdefault(p.target_id, f"{type(errors[0]).__name__}: {errors[0]}")
            continue
        pa, ja, pb, jb = parts
        rec = delta(
            conditional_logprob(pa.total, ja.total),
            conditional_logprob(pb.total, jb.total),
            conditioner_a_id=p.ids_a,
            conditioner_b_id=p.ids_b,
            target_id=p.target_id,
        )
        grouped.setdefault(p.target_id, []).append(rec)

    for target_id, _ in batch.targets:
        if target_id in failed:
            log.warning("target %s failed: %s", target_id, failed[target_id])
            run.failures.append(TargetFailure(target_id, failed[target_id]))
            continue
        records = grouped[target_id]
        c = classify(records)
        run.results.append(TargetResult(target_id, c.label, c.aggregate_delta, c.tie, tuple(records)))
    return run


def write_records(path: str | Path, run: PairedRun) -> None:
    """One JSON object per target, results in input order followed by failures."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in run.results:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
        for f in run.failures:
            fh.write(json.dumps(f.to_dict(), sort_keys=True) + "\n")
