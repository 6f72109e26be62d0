"""Logistic-regression baselines over tf-idf, pooled word vectors and endpoint embeddings."""

from .logistic import LogisticModel, logistic_train, loss_and_grad, sigmoid
from .runner import DEFAULT_SIZES, METHODS, ReplicatePredictions, TrainPlan, run_baseline, split_corpus
from .tfidf import TfidfVectorizer, tfidf_fit, tokenize
from .wordvec import fetch_embeddings, load_word_vectors, pool_word_vectors

__all__ = [
    "DEFAULT_SIZES",
    "LogisticModel",
    "METHODS",
    "ReplicatePredictions",
    "TfidfVectorizer",
    "TrainPlan",
    "fetch_embeddings",
    "load_word_vectors",
    "logistic_train",
    "loss_and_grad",
    "pool_word_vectors",
    "run_baseline",
    "sigmoid",
    "split_corpus",
    "tfidf_fit",
    "tokenize",
]
