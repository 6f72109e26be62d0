"""F1, bootstrap and replicate confidence intervals, bias asymmetry, cost ledger.

Labels are indexed A=0, B=1. Unclassified items (failures) are kept per
true side; they count as false negatives for the positive class and never
as true negatives.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .logprob import FramingLabel

_IDX = {FramingLabel.A: 0, FramingLabel.B: 1}
FAILED = 2


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: tuple[tuple[int, int], tuple[int, int]]
    failures: tuple[int, int] = (0, 0)

    def __post_init__(self):
        counts = tuple(tuple(int(c) for c in row) for row in self.counts)
        failures = tuple(int(f) for f in self.failures)
        if len(counts) != 2 or any(len(r) != 2 for r in counts) or len(failures) != 2:
            raise ValueError("confusion matrix must be 2x2 with two failure counts")
        if any(c < 0 for r in counts for c in r) or any(f < 0 for f in failures):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "failures", failures)

    @classmethod
    def from_outcomes(cls, truth: Sequence[FramingLabel], predicted: Sequence[FramingLabel | None]) -> "ConfusionMatrix":
        if len(truth) != len(predicted):
            raise ValueError("truth and predictions differ in length")
        counts = [[0, 0], [0, 0]]
        failures = [0, 0]
        for t, p in zip(truth, predicted):
            if p is None:
                failures[_IDX[t]] += 1
            else:
                counts[_IDX[t]][_IDX[p]] += 1
        return cls((tuple(counts[0]), tuple(counts[1])), tuple(failures))

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts)) + sum(self.failures)

    @property
    def total_failures(self) -> int:
        return sum(self.failures)

    def rates(self, positive: FramingLabel = FramingLabel.A) -> tuple[int, int, int]:
        """(TP, FP, FN) for the positive class."""
        p = _IDX[positive]
        n = 1 - p
        return self.counts[p][p], self.counts[n][p], self.counts[p][n] + self.failures[p]

    def relabeled(self) -> "ConfusionMatrix":
        (aa, ab), (ba, bb) = self.counts
        return ConfusionMatrix(((bb, ba), (ab, aa)), (self.failures[1], self.failures[0]))

    def scaled(self, factor: int) -> "ConfusionMatrix":
        return ConfusionMatrix(
            tuple(tuple(c * factor for c in row) for row in self.counts),
            tuple(f * factor for f in self.failures),
        )

    def to_dict(self) -> dict:
        return {"counts": [list(r) for r in self.counts], "failures": list(self.failures)}


def f1(cm: ConfusionMatrix, positive: FramingLabel = FramingLabel.A) -> float | None:
    """TP / (TP + (FP + FN)/2); None when TP + FP + FN == 0."""
    tp, fp, fn = cm.rates(positive)
    if tp + fp + fn == 0:
        return None
    return tp / (tp + 0.5 * (fp + fn))


@dataclass(frozen=True)
class MetricWithCI:
    point: float
    ci_low: float
    ci_high: float
    method: str

    @property
    def contains_point(self) -> bool:
        return self.ci_low <= self.point <= self.ci_high

    def to_dict(self) -> dict:
        return {"point": self.point, "ci_low": self.ci_low, "ci_high": self.ci_high, "method": self.method}


def _encode(truth: Sequence[FramingLabel], predicted: Sequence[FramingLabel | None]) -> tuple[np.ndarray, np.ndarray]:
    if len(truth) != len(predicted):
        raise ValueError("truth and predictions differ in length")
    t = np.array([_IDX[x] for x in truth], dtype=np.int8)
    p = np.array([FAILED if x is None else _IDX[x] for x in predicted], dtype=np.int8)
    return t, p


def _f1_rows(t: np.ndarray, p: np.ndarray, pos: int) -> np.ndarray:
    tp = np.sum((t == pos) & (p == pos), axis=-1)
    fp = np.sum((t != pos) & (p == pos), axis=-1)
    fn = np.sum((t == pos) & (p != pos), axis=-1)
    den = tp + 0.5 * (fp + fn)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, tp / np.where(den > 0, den, 1), np.nan)


def bootstrap_ci(
    truth: Sequence[FramingLabel],
    predicted: Sequence[FramingLabel | None],
    replicates: int = 100,
    sample_size: int = 1000,
    seed: int = 0,
    positive: FramingLabel = FramingLabel.A,
) -> MetricWithCI:
    """Percentile interval (2.5, 97.5) of F1 over item resamples drawn with replacement."""
    if not truth:
        raise ValueError("bootstrap_ci needs at least one outcome")
    point = f1(ConfusionMatrix.from_outcomes(truth, predicted), positive)
    if point is None:
        raise ValueError("F1 is undefined for these outcomes (no positives predicted or present)")
    t, p = _encode(truth, predicted)
    idx = np.random.default_rng(seed).integers(0, len(t), size=(replicates, sample_size))
    values = _f1_rows(t[idx], p[idx], _IDX[positive])
    values = values[~np.isnan(values)]
    lo, hi = np.percentile(values, [2.5, 97.5])
    return MetricWithCI(point, float(lo), float(hi), "bootstrap")


def replicate_ci(values: Sequence[float]) -> MetricWithCI:
    """mean +/- 1.96 * s / sqrt(r) with the sample standard deviation s."""
    if len(values) < 2:
        raise ValueError(f"replicate_ci needs >= 2 replicates, got {len(values)}")
    mean = statistics.fmean(values)
    half = 1.96 * statistics.stdev(values) / math.sqrt(len(values))
    return MetricWithCI(mean, mean - half, mean + half, "replicate")


class BiasResult(NamedTuple):
    bias: float
    significant: bool
    ci_low: float
    ci_high: float


def bias_value(cm: ConfusionMatrix) -> float:
    """Row-normalised A->B rate minus B->A rate; failures are left out of the rows."""
    (aa, ab), (ba, bb) = cm.counts
    if aa + ab == 0 or ba + bb == 0:
        raise ValueError("bias needs classified items from both true classes")
    return ab / (aa + ab) - ba / (ba + bb)


def bias(cm: ConfusionMatrix, replicates: int = 100, sample_size: int = 1000, seed: int = 0) -> BiasResult:
    point = bias_value(cm)
    (aa, ab), (ba, bb) = cm.counts
    t = np.repeat([0, 0, 1, 1], [aa, ab, ba, bb]).astype(np.int8)
    p = np.repeat([0, 1, 0, 1], [aa, ab, ba, bb]).astype(np.int8)
    idx = np.random.default_rng(seed).integers(0, len(t), size=(replicates, sample_size))
    ts, ps = t[idx], p[idx]
    row_a = np.sum(ts == 0, axis=1)
    row_b = np.sum(ts == 1, axis=1)
    ok = (row_a > 0) & (row_b > 0)
    a_to_b = np.sum((ts == 0) & (ps == 1), axis=1)[ok] / row_a[ok]
    b_to_a = np.sum((ts == 1) & (ps == 0), axis=1)[ok] / row_b[ok]
    lo, hi = np.percentile(a_to_b - b_to_a, [2.5, 97.5])
    return BiasResult(point, bool(lo > 0 or hi < 0), float(lo), float(hi))


@dataclass(frozen=True)
class CostLedger:
    input_tokens: int
    output_tokens: int
    calls: int
    price_per_1k_input: float = 0.0
    price_per_1k_output: float = 0.0

    @property
    def cost(self) -> float:
        return self.input_tokens / 1000 * self.price_per_1k_input + self.output_tokens / 1000 * self.price_per_1k_output

    def __add__(self, other: "CostLedger") -> "CostLedger":
        if (self.price_per_1k_input, self.price_per_1k_output) != (other.price_per_1k_input, other.price_per_1k_output):
            raise ValueError("cannot add ledgers priced differently")
        return CostLedger(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
            self.calls + other.calls,
            self.price_per_1k_input,
            self.price_per_1k_output,
        )

    def to_dict(self) -> dict:
        return {
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "calls": self.calls,
            "price_per_1k_input": self.price_per_1k_input,
            "price_per_1k_output": self.price_per_1k_output,
            "cost": self.cost,
        }
