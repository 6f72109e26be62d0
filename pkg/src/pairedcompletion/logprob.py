"""Conditional log-probabilities, the paired delta, and the decision rule.

Everything here stays in natural-log space; nothing is exponentiated.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence


class FramingLabel(str, enum.Enum):
    A = "A"
    B = "B"

    @property
    def other(self) -> "FramingLabel":
        return FramingLabel.B if self is FramingLabel.A else FramingLabel.A


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ConditionalLogProb:
    """log P(x | s) obtained as ``joint_total - prefix_total``."""

    prefix_total: float
    joint_total: float
    value: float

    def shifted(self, offset: float) -> "ConditionalLogProb":
        """Same conditional with ``offset`` added to its value (used by property tests)."""
        return ConditionalLogProb(self.prefix_total, self.joint_total + offset, self.value + offset)


@dataclass(frozen=True)
class DeltaRecord:
    conditioner_a_id: str
    conditioner_b_id: str
    target_id: str
    lp_a: ConditionalLogProb
    lp_b: ConditionalLogProb
    delta: float

    def swapped(self) -> "DeltaRecord":
        return DeltaRecord(
            conditioner_a_id=self.conditioner_b_id,
            conditioner_b_id=self.conditioner_a_id,
            target_id=self.target_id,
            lp_a=self.lp_b,
            lp_b=self.lp_a,
            delta=self.lp_b.value - self.lp_a.value,
        )

    def to_dict(self) -> dict:
        return {
            "conditioner_a_id": self.conditioner_a_id,
            "conditioner_b_id": self.conditioner_b_id,
            "target_id": self.target_id,
            "lp_a": {"prefix": self.lp_a.prefix_total, "joint": self.lp_a.joint_total, "value": self.lp_a.value},
            "lp_b": {"prefix": self.lp_b.prefix_total, "joint": self.lp_b.joint_total, "value": self.lp_b.value},
            "delta": self.delta,
        }


@dataclass(frozen=True)
class Classification:
    label: FramingLabel
    aggregate_delta: float
    tie: bool = False


def conditional_logprob(prefix_total: float, joint_total: float) -> ConditionalLogProb:
    prefix_total = _check_finite("prefix_total", prefix_total)
    joint_total = _check_finite("joint_total", joint_total)
    return ConditionalLogProb(prefix_total, joint_total, joint_total - prefix_total)


def delta(
    lp_a: ConditionalLogProb,
    lp_b: ConditionalLogProb,
    *,
    conditioner_a_id: str,
    conditioner_b_id: str,
    target_id: str,
    target_id_b: str | None = None,
) -> DeltaRecord:
    """Build the record for ``lp_a - lp_b``.

    ``target_id_b`` names the target ``lp_b`` was computed for when the caller
    tracks them separately; it must agree with ``target_id``.
    """
    if target_id_b is not None and target_id_b != target_id:
        raise ValueError(f"conditionals computed over different targets: {target_id!r} vs {target_id_b!r}")
    return DeltaRecord(
        conditioner_a_id=conditioner_a_id,
        conditioner_b_id=conditioner_b_id,
        target_id=target_id,
        lp_a=lp_a,
        lp_b=lp_b,
        delta=lp_a.value - lp_b.value,
    )


def label_from_score(score: float) -> Classification:
    """Sign rule shared by every scoring method; an exact zero goes to B and is flagged."""
    if score > 0:
        return Classification(FramingLabel.A, score)
    return Classification(FramingLabel.B, score, tie=score == 0)


def classify(records: Sequence[DeltaRecord]) -> Classification:
    if not records:
        raise ValueError("classify needs at least one DeltaRecord")
    target_ids = {r.target_id for r in records}
    if len(target_ids) != 1:
        raise ValueError(f"records span several targets: {sorted(target_ids)}")
    # fsum keeps the mean independent of record order
    aggregate = math.fsum(r.delta for r in records) / len(records)
    return label_from_score(aggregate)
