import math

import numpy as np
import pytest

from pairedcompletion.baselines import (
    TfidfVectorizer,
    TrainPlan,
    load_word_vectors,
    logistic_train,
    loss_and_grad,
    pool_word_vectors,
    run_baseline,
    sigmoid,
    split_corpus,
    tfidf_fit,
    tokenize,
)
from pairedcompletion.baselines.wordvec import fetch_embeddings
from pairedcompletion.corpus import FramingCorpus, FramingSide
from pairedcompletion.logprob import FramingLabel
from pairedcompletion.metrics import ConfusionMatrix, f1
from pairedcompletion.providers import ScriptedProvider



def finite_difference_grad(w, b, X, y, lam, h=1e-6):
    def loss(w_, b_):
        return loss_and_grad(w_, b_, X, y, lam)[0]

    gw = np.zeros_like(w)
    for i in range(len(w)):
        e = np.zeros_like(w)
        e[i] = h
        gw[i] = (loss(w + e, b) - loss(w - e, b)) / (2 * h)
    gb = (loss(w, b + h) - loss(w, b - h)) / (2 * h)
    return gw, gb


class TestTfidf:
    def test_tokenize(self):
        assert tokenize("Dogs, dogs! Lower-stress.") == ["dogs", "dogs", "lowerstress"]

    def test_idf_hand_values(self):
        v = tfidf_fit(["a b", "a c"])
        assert v.idf[v.vocabulary["a"]] == 1.0
        assert v.idf[v.vocabulary["b"]] == pytest.approx(math.log(1.5) + 1, abs=1e-15)
        assert v.idf[v.vocabulary["b"]] == pytest.approx(1.405, abs=5e-4)

    def test_transform_hand_values(self):
        v = tfidf_fit(["a b", "a c"])
        idf_b = math.log(1.5) + 1
        norm = math.hypot(2.0, idf_b)
        out = v.transform("a a b")
        assert out == {v.vocabulary["a"]: pytest.approx(2 / norm), v.vocabulary["b"]: pytest.approx(idf_b / norm)}
        assert math.fsum(w * w for w in out.values()) == pytest.approx(1.0, abs=1e-15)

    def test_unseen_only_is_zero(self):
        v = tfidf_fit(["a b", "a c"])
        assert v.transform("zzz qqq") == {}
        assert not v.transform_dense(["zzz"]).any()

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            tfidf_fit([])

    def test_duplicating_corpus(self):
        docs = ["a b", "a c", "b d e", "a e"]
        v1, v2 = tfidf_fit(docs), tfidf_fit(docs + docs)
        assert v1.vocabulary == v2.vocabulary
        # terms present in every document keep idf exactly 1
        v3, v4 = tfidf_fit(["a b", "a c"]), tfidf_fit(["a b", "a c"] * 2)
        assert v3.idf[v3.vocabulary["a"]] == v4.idf[v4.vocabulary["a"]] == 1.0
        # smoothed idf is not exactly duplication invariant, but the ranking of terms is
        assert list(np.argsort(v1.idf, kind="stable")) == list(np.argsort(v2.idf, kind="stable"))

    def test_dense_rows_unit_norm(self):
        v = tfidf_fit(["the cat sat", "the dog ran", "a cat ran"])
        m = v.transform_dense(["the cat ran", "dog dog"])
        assert np.allclose(np.linalg.norm(m, axis=1), 1.0)


class TestWordVectors:
    def test_mean(self):
        table = {"x": np.array([1.0, 0.0]), "y": np.array([0.0, 1.0])}
        assert pool_word_vectors("x y", table).tolist() == [0.5, 0.5]
        assert pool_word_vectors("x", table).tolist() == [1.0, 0.0]
        assert pool_word_vectors("nothing here", table).tolist() == [0.0, 0.0]

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        table = {w: rng.normal(size=4) for w in "abcdef"}
        assert np.allclose(pool_word_vectors("a b c d", table), pool_word_vectors("d c a b", table))

    def test_empty_table(self):
        with pytest.raises(ValueError):
            pool_word_vectors("x", {})

    def test_load(self, tmp_path):
        p = tmp_path / "v.vec"
        p.write_text("3 2\ndog 1.0 0.5\ncat -1 2\nthe 0 0\n")
        t = load_word_vectors(p)
        assert t["dog"].tolist() == [1.0, 0.5]
        assert len(load_word_vectors(p, limit=2)) == 2

    def test_load_dimension_mismatch(self, tmp_path):
        p = tmp_path / "v.vec"
        p.write_text("2 2\ndog 1.0 0.5\ncat -1 2 3\n")
        with pytest.raises(ValueError, match=":3: expected 2"):
            load_word_vectors(p)

    def test_load_bad_header(self, tmp_path):
        p = tmp_path / "v.vec"
        p.write_text("dog 1.0 0.5\n")
        with pytest.raises(ValueError, match="count dim"):
            load_word_vectors(p)

    def test_fetch_embeddings(self):
        p = ScriptedProvider({"embedding_dim": 8})
        out = fetch_embeddings(["a b", "c"], p)
        assert len(out) == 2 and all(v.shape == (8,) for v in out)
        assert fetch_embeddings([], p) == []


class TestLogistic:
    def test_sigmoid_stable(self):
        z = np.array([-1000.0, 0.0, 1000.0])
        assert sigmoid(z).tolist() == [0.0, 0.5, 1.0]

    def test_gradient_at_zero_analytic(self):
        rng = np.random.default_rng(1)
        X, y = rng.normal(size=(6, 3)), np.array([1, 0, 1, 1, 0, 0.0])
        _, gw, gb = loss_and_grad(np.zeros(3), 0.0, X, y, 0.3)
        assert np.allclose(gw, X.T @ (0.5 - y) / 6)
        assert gb == pytest.approx(np.mean(0.5 - y))

    @pytest.mark.parametrize("seed", range(10))
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        n, d = rng.integers(3, 12), rng.integers(1, 6)
        X = rng.normal(size=(n, d))
        y = rng.integers(0, 2, size=n).astype(float)
        w, b, lam = rng.normal(size=d), float(rng.normal()), float(rng.uniform(0, 1))
        _, gw, gb = loss_and_grad(w, b, X, y, lam)
        fw, fb = finite_difference_grad(w, b, X, y, lam)
        scale = max(1.0, np.abs(fw).max(), abs(fb))
        assert np.abs(gw - fw).max() / scale < 1e-5
        assert abs(gb - fb) / scale < 1e-5

    def test_separable_toy(self):
        X = np.array([[2.0, 1.0], [1.5, 2.0], [-1.0, -2.0], [-2.0, -0.5]])
        y = np.array([1, 1, 0, 0])
        m = logistic_train(X, y)
        assert (m.predict(X) == y).all()
        assert np.isfinite(m.weights).all()

    def test_large_lambda_shrinks_weights(self):
        X = np.array([[2.0, 1.0], [1.5, 2.0], [-1.0, -2.0], [-2.0, -0.5], [0.3, 0.1]])
        y = np.array([1, 1, 0, 0, 1])
        m = logistic_train(X, y, l2_lambda=1e6)
        assert np.linalg.norm(m.weights) < 1e-5
        # the bias alone carries the majority log-odds
        assert m.bias == pytest.approx(math.log(3 / 2), abs=1e-3)
        assert (m.predict(X) == 1).all()

    def test_loss_non_increasing(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(40, 5))
        y = (X[:, 0] + 0.5 * rng.normal(size=40) > 0).astype(int)
        m = logistic_train(X, y, l2_lambda=1e-3, step=8.0)
        h = np.array(m.loss_history)
        assert (np.diff(h) <= 0).all()
        assert m.final_loss == h[-1]

    def test_converges_and_records_meta(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(30, 3))
        y = (X[:, 1] > 0).astype(int)
        m = logistic_train(X, y, l2_lambda=0.1, seed=3)
        assert m.converged
        assert set(m.meta()) == {"l2_lambda", "iterations", "final_loss", "seed", "converged"}
        assert m.meta()["seed"] == 3

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(20, 4))
        y = (X[:, 0] > 0).astype(int)
        a, b = logistic_train(X, y, seed=2), logistic_train(X, y, seed=2)
        assert np.array_equal(a.weights, b.weights) and a.bias == b.bias

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="single class"):
            logistic_train(np.ones((3, 2)), np.ones(3))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            logistic_train(np.ones((3, 2)), np.array([0, 1]))


def disjoint_corpus(n: int = 400, seed: int = 0) -> FramingCorpus:
    rng = np.random.default_rng(seed)
    vocab_a = [f"alpha{i}" for i in range(40)]
    vocab_b = [f"beta{i}" for i in range(40)]

    def sents(vocab):
        return [" ".join(rng.choice(vocab, size=rng.integers(4, 9))) + "." for _ in range(n)]

    sides = []
    for label, vocab in (("pro", vocab_a), ("con", vocab_b)):
        s = sents(vocab)
        sides.append(FramingSide(label, s[:10], s[10:15], s[15], s))
    return FramingCorpus("toy", sides[0], sides[1], {"temperature": 0.5})


class TestRunBaseline:
    def test_n10_samples_five_per_class(self, corpus):
        reps = run_baseline("tfidf", corpus, TrainPlan(10, replicates=2, test_per_class=10))
        for r in reps:
            a = set(corpus.side_a.sentences) & set(r.train_texts)
            b = set(corpus.side_b.sentences) & set(r.train_texts)
            assert len(a) == 5 and len(b) == 5

    def test_test_set_fixed_and_disjoint(self, corpus):
        plan = TrainPlan(10, replicates=3, test_per_class=10)
        reps = run_baseline("tfidf", corpus, plan)
        assert len({r.test_ids for r in reps}) == 1
        split = split_corpus(corpus, plan)
        test_texts = {t for _, t, _ in split.test}
        assert all(not (set(r.train_texts) & test_texts) for r in reps)
        assert len({r.train_texts for r in reps}) == 3

    def test_deterministic(self, corpus):
        plan = TrainPlan(10, replicates=2, seed=4, test_per_class=10)
        assert run_baseline("tfidf", corpus, plan) == run_baseline("tfidf", corpus, plan)

    def test_separable_f1(self):
        c = disjoint_corpus()
        reps = run_baseline("tfidf", c, TrainPlan(200, replicates=2, test_per_class=100))
        for r in reps:
            score = f1(ConfusionMatrix.from_outcomes(r.truth, r.predictions))
            assert score >= 0.95

    def test_insufficient_data(self, corpus):
        with pytest.raises(ValueError, match=r"need 105 sentences per side \(100 test \+ 5 train\), corpus has 30 / 30"):
            run_baseline("tfidf", corpus, TrainPlan(10))

    def test_wordvec(self):
        c = disjoint_corpus(n=80)
        table = {f"alpha{i}": np.array([1.0, 0.1 * i]) for i in range(40)}
        table.update({f"beta{i}": np.array([-1.0, 0.1 * i]) for i in range(40)})
        reps = run_baseline("wordvec", c, TrainPlan(20, replicates=1, test_per_class=20), word_vectors=table)
        assert reps[0].predictions == reps[0].truth

    def test_embed(self):
        c = disjoint_corpus(n=80)
        reps = run_baseline("embed", c, TrainPlan(20, 1, test_per_class=20), ScriptedProvider({"embedding_dim": 64}))
        assert len(reps[0].predictions) == 40
        assert set(reps[0].truth) == {FramingLabel.A, FramingLabel.B}

    @pytest.mark.parametrize("method,kw", [("wordvec", {}), ("embed", {}), ("svm", {})])
    def test_missing_resources(self, corpus, method, kw):
        with pytest.raises(ValueError):
            run_baseline(method, corpus, TrainPlan(10, test_per_class=10), **kw)

    @pytest.mark.parametrize("n", [0, 3, 11])
    def test_plan_rejects_odd(self, n):
        with pytest.raises(ValueError):
            TrainPlan(n)


def test_vectorizer_is_reusable():
    v = TfidfVectorizer()
    assert v.fit(["x y"]) is v
