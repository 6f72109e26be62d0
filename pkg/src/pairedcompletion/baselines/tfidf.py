from __future__ import annotations

import math
import string
from collections import Counter
from typing import Sequence

import numpy as np

_STRIP = str.maketrans("", "", string.punctuation)


def tokenize(text: str) -> list[str]:
    """Lowercased, punctuation-stripped whitespace unigrams."""
    return text.lower().translate(_STRIP).split()


class TfidfVectorizer:
    """Smoothed tf-idf: idf(t) = ln((1 + N) / (1 + df(t))) + 1, rows L2-normalised."""

    def __init__(self):
        self.vocabulary: dict[str, int] = {}
        self.idf: np.ndarray = np.zeros(0)
        self.n_documents = 0

    def fit(self, corpus: Sequence[str]) -> "TfidfVectorizer":
        if not corpus:
            raise ValueError("cannot fit tf-idf on an empty corpus")
        df: Counter = Counter()
        for doc in corpus:
            df.update(set(tokenize(doc)))
        terms = sorted(df)
        n = len(corpus)
        self.vocabulary = {t: i for i, t in enumerate(terms)}
        self.idf = np.array([math.log((1 + n) / (1 + df[t])) + 1.0 for t in terms])
        self.n_documents = n
        return self

    def transform(self, text: str) -> dict[int, float]:
        tf = Counter(t for t in tokenize(text) if t in self.vocabulary)
        weights = {self.vocabulary[t]: c * self.idf[self.vocabulary[t]] for t, c in tf.items()}
        norm = math.sqrt(math.fsum(w * w for w in weights.values()))
        if norm == 0:
            return {}
        return {i: w / norm for i, w in sorted(weights.items())}

    def transform_dense(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), len(self.vocabulary)))
        for row, text in enumerate(texts):
            for i, w in self.transform(text).items():
                out[row, i] = w
        return out


def tfidf_fit(corpus: Sequence[str]) -> TfidfVectorizer:
    return TfidfVectorizer().fit(corpus)
