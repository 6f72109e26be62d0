from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..corpus import FramingCorpus
from ..logprob import FramingLabel
from ..providers.base import Provider
from .logistic import logistic_train
from .tfidf import TfidfVectorizer
from .wordvec import fetch_embeddings, pool_word_vectors

DEFAULT_SIZES = (10, 20, 50, 100, 200, 500)
METHODS = ("tfidf", "wordvec", "embed")


@dataclass(frozen=True)
class TrainPlan:
    n_train: int
    replicates: int = 5
    seed: int = 0
    test_per_class: int = 100

    def __post_init__(self):
        if self.n_train < 2 or self.n_train % 2:
            raise ValueError(f"n_train must be an even number >= 2, got {self.n_train}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.test_per_class < 1:
            raise ValueError("test_per_class must be >= 1")


@dataclass(frozen=True)
class ReplicatePredictions:
    replicate: int
    train_texts: tuple[str, ...]
    test_ids: tuple[str, ...]
    truth: tuple[FramingLabel, ...]
    predictions: tuple[FramingLabel, ...]
    model_meta: dict


@dataclass(frozen=True)
class Split:
    pool_a: tuple[str, ...]
    pool_b: tuple[str, ...]
    test: tuple[tuple[str, str, FramingLabel], ...]


def split_corpus(corpus: FramingCorpus, plan: TrainPlan) -> Split:
    """Fixed held-out test set (same for every replicate and size) plus the training pools."""
    per_class = plan.n_train // 2
    need = plan.test_per_class + per_class
    have = (len(corpus.side_a.sentences), len(corpus.side_b.sentences))
    if min(have) < need:
        raise ValueError(
            f"need {need} sentences per side ({plan.test_per_class} test + {per_class} train), "
            f"corpus has {have[0]} / {have[1]}"
        )
    sides = []
    for side in corpus.sides:
        texts = list(side.sentences)
        random.Random(f"split|{plan.seed}|{side.label}").shuffle(texts)
        sides.append(texts)
    test = tuple(
        (f"{lab.value}{i}", text, lab)
        for lab, texts in zip((FramingLabel.A, FramingLabel.B), sides)
        for i, text in enumerate(texts[: plan.test_per_class])
    )
    return Split(tuple(sides[0][plan.test_per_class :]), tuple(sides[1][plan.test_per_class :]), test)


def _featurizer(method: str, provider: Provider | None, word_vectors: Mapping[str, np.ndarray] | None):
    if method == "tfidf":

        def featurize(train: Sequence[str], test: Sequence[str]):
            vec = TfidfVectorizer().fit(train)
            return vec.transform_dense(train), vec.transform_dense(test)

    elif method == "wordvec":
        if not word_vectors:
            raise ValueError("wordvec baseline needs a word-vector table")

        def featurize(train, test):
            return (
                np.array([pool_word_vectors(t, word_vectors) for t in train]),
                np.array([pool_word_vectors(t, word_vectors) for t in test]),
            )

    elif method == "embed":
        if provider is None:
            raise ValueError("embed baseline needs an embeddings provider")

        def featurize(train, test):
            vecs = fetch_embeddings(list(train) + list(test), provider)
            return np.array(vecs[: len(train)]), np.array(vecs[len(train) :])

    else:
        raise ValueError(f"unknown baseline method {method!r}; expected one of {METHODS}")
    return featurize


def run_baseline(
    method: str,
    corpus: FramingCorpus,
    plan: TrainPlan,
    provider: Provider | None = None,
    *,
    word_vectors: Mapping[str, np.ndarray] | None = None,
    l2_lambda: float = 1e-2,
) -> list[ReplicatePredictions]:
    featurize = _featurizer(method, provider, word_vectors)
    split = split_corpus(corpus, plan)
    per_class = plan.n_train // 2
    test_texts = [t for _, t, _ in split.test]
    truth = tuple(lab for _, _, lab in split.test)
    out = []
    for r in range(plan.replicates):
        rng = random.Random(f"train|{plan.seed}|{r}")
        train_a = rng.sample(split.pool_a, per_class)
        train_b = rng.sample(split.pool_b, per_class)
        train = train_a + train_b
        y = np.array([1] * per_class + [0] * per_class)
        X_train, X_test = featurize(train, test_texts)
        model = logistic_train(X_train, y, l2_lambda=l2_lambda, seed=plan.seed + r)
        pred = tuple(FramingLabel.A if p == 1 else FramingLabel.B for p in model.predict(X_test))
        out.append(
            ReplicatePredictions(
                replicate=r,
                train_texts=tuple(train),
                test_ids=tuple(i for i, _, _ in split.test),
                truth=truth,
                predictions=pred,
                model_meta=model.meta(),
            )
        )
    return out
