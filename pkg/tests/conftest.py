from __future__ import annotations

import json
import math
import random
from pathlib import Path

import httpx
import pytest

from pairedcompletion.corpus import FramingCorpus, FramingSide
from pairedcompletion.providers import NGramProvider, SpeakerMixtureProvider
from pairedcompletion.providers.ngram import BOS

FIXTURES = Path(__file__).parent / "fixtures"

SYLLABLES_A = ["ba", "ka", "ta", "mo", "lo", "ri"]
SYLLABLES_B = ["bi", "ke", "ta", "mo", "li", "re"]
SHARED_WORDS = ["the", "and", "is", "we", "it", "of"]


def load_fixture(name: str) -> dict:
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


def stylistic_sentences(rng: random.Random, syllables, n: int) -> list[str]:
    """Pseudo-sentences whose non-shared words are built from one syllable pool."""
    out = []
    for _ in range(n):
        words = []
        for _ in range(rng.randint(5, 9)):
            if rng.random() < 0.3:
                words.append(rng.choice(SHARED_WORDS))
            else:
                words.append("".join(rng.choice(syllables) for _ in range(rng.randint(1, 3))))
        s = " ".join(words)
        out.append(s[0].upper() + s[1:] + ".")
    return out


def stylistic_corpora(seed: int = 7, n: int = 500) -> tuple[list[str], list[str]]:
    rng = random.Random(seed)
    return stylistic_sentences(rng, SYLLABLES_A, n), stylistic_sentences(rng, SYLLABLES_B, n)


def mixture_entity(train_a, train_b, order: int = 3, alpha: float = 0.5, extra: str = ". ") -> SpeakerMixtureProvider:
    vocab = set("".join(train_a) + "".join(train_b)) | set(extra)
    return SpeakerMixtureProvider(
        [NGramProvider(train_a, order, alpha, vocabulary=vocab), NGramProvider(train_b, order, alpha, vocabulary=vocab)]
    )


# --- brute-force chain-rule oracle -------------------------------------------------
# Counts are recomputed from the raw corpus strings by direct scanning; nothing
# is read from the provider's own count tables.


def _brute_count(corpus, order, context: str, char: str | None) -> int:
    n = 0
    for s in corpus:
        padded = BOS * order + s
        for i in range(len(s)):
            if padded[i : i + order] == context and (char is None or s[i] == char):
                n += 1
    return n


def brute_logprob(corpus, order, alpha, vocab_size, history: str, char: str) -> float:
    ctx = (BOS * order + history)[-order:]
    num = _brute_count(corpus, order, ctx, char) + alpha
    den = _brute_count(corpus, order, ctx, None) + alpha * vocab_size
    return math.log(num / den)


def brute_sequence_logprob(corpus, order, alpha, vocab_size, text: str, start: int = 0) -> float:
    """sum_{i >= start} log P(text[i] | text[:i])."""
    return math.fsum(
        brute_logprob(corpus, order, alpha, vocab_size, text[:i], text[i]) for i in range(start, len(text))
    )


def _lse(values):
    m = max(values)
    return m + math.log(sum(math.exp(v - m) for v in values))


def brute_mixture_logprob(corpora, order, alpha, vocab_size, text: str) -> float:
    totals = [math.log(1 / len(corpora)) + brute_sequence_logprob(c, order, alpha, vocab_size, text) for c in corpora]
    return _lse(totals)


# --- HTTP replay ---------------------------------------------------------------------


class Recorder:
    """httpx transport handler that replays scripted responses and records requests."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests: list[httpx.Request] = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(request)
        item = self.responses.pop(0) if len(self.responses) > 1 else self.responses[0]
        if isinstance(item, Exception):
            raise item
        if callable(item):
            return item(request)
        status, payload = item
        return httpx.Response(status, json=payload)

    @property
    def bodies(self) -> list[dict]:
        return [json.loads(r.content) for r in self.requests]

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self)


# --- small corpora -------------------------------------------------------------------


def make_corpus(
    topic: str = "dog ownership",
    n: int = 30,
    seed: int = 0,
    labels=("pro dog", "anti dog"),
) -> FramingCorpus:
    rng = random.Random(seed)
    sides = []
    for label, syl in zip(labels, (SYLLABLES_A, SYLLABLES_B)):
        sents = stylistic_sentences(rng, syl, n + 16)
        sides.append(
            FramingSide(
                label=label,
                seed_sentences=sents[:10],
                distilled=sents[10:15],
                summary=sents[15],
                sentences=sents[16:],
            )
        )
    return FramingCorpus(topic, sides[0], sides[1], {"model_name": "fixture", "temperature": 0.5})


@pytest.fixture
def corpus() -> FramingCorpus:
    return make_corpus()


# --- scripted generation -------------------------------------------------------------


def numbered(items) -> str:
    return "\n".join(f"{i}. {s}" for i, s in enumerate(items, 1))


def synth_script(n_sentences: int = 30, n_seeds: int = 4) -> dict:
    """Scripted replies for the whole generation pipeline.

    Rules key on the last seed of a side followed by the step's instruction
    verb, which is how each prompt is laid out.
    """
    seeds_a = [f"Dogs make every home warmer, reason {i}." for i in range(n_seeds)]
    seeds_b = [f"Dogs make every home messier, reason {i}." for i in range(n_seeds)]
    seeds_reply = (
        "Here are the perspectives.\n\n"
        f"PERSPECTIVE 1: Dog lovers\n{numbered(seeds_a)}\n"
        f"PERSPECTIVE 2: Dog sceptics\n{numbered(seeds_b)}\n"
    )
    rules = [{"contains": "Describe two opposing perspectives", "replies": [seeds_reply]}]
    for side, seeds, word in (("a", seeds_a, "warm"), ("b", seeds_b, "messy")):
        last = f"- {seeds[-1]}\n\n"
        sents = [f"A dog keeps the house {word} in way {i}." for i in range(n_sentences)]
        rules += [
            {"contains": last + "Write", "replies": [numbered(sents)]},
            {"contains": last + "Distil", "replies": [numbered(f"Distilled {word} point {i}." for i in range(5))]},
            {"contains": last + "Summarise", "replies": [f"People who find dogs {word} say so often."]},
            {"contains": last + "Give", "replies": ["Dog lovers" if side == "a" else "Name: **Dog sceptics**"]},
        ]
    return {"model_name": "scripted-gen", "rules": rules}


# --- experiment-matrix fixtures ----------------------------------------------------------

TOPICS = ("dog ownership", "climate change", "domestic violence", "misogyny")


def write_corpora(tmp_path: Path, n: int, topics=TOPICS) -> list[Path]:
    paths = []
    for i, topic in enumerate(topics):
        p = tmp_path / "data" / f"{topic.replace(' ', '_')}.json"
        p.parent.mkdir(parents=True, exist_ok=True)
        make_corpus(topic, n=n, seed=100 + i).save(p)
        paths.append(p)
    return paths


def write_word_vectors(path: Path, corpora_paths, dim: int = 8) -> Path:
    from pairedcompletion.baselines import tokenize
    from pairedcompletion.providers import hashed_embedding

    words = set()
    for p in corpora_paths:
        for s, _ in FramingCorpus.load(p).labelled_sentences():
            words.update(tokenize(s))
    lines = [f"{len(words)} {dim}"]
    for w in sorted(words):
        lines.append(w + " " + " ".join(f"{v:.6f}" for v in hashed_embedding(w + " " + w[:2], dim)))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def table1_toml(tmp_path: Path, *, n_sentences: int = 40, sizes=(10, 20, 50, 100, 200, 500), price_in=0.001, price_out=0.002, extra: str = "") -> Path:
    """Config mirroring the five-method, four-topic matrix: 24 + 24 + 48 + 32 + 64 cells."""
    datasets = write_corpora(tmp_path, n_sentences)
    wv = write_word_vectors(tmp_path / "vectors.vec", datasets)
    lines = [
        "seed = 0",
        'output_dir = "out"',
        "datasets = [" + ", ".join(f'"{p.as_posix()}"' for p in datasets) + "]",
        "[evaluation]",
        "bootstrap_replicates = 20",
        "bootstrap_sample_size = 200",
    ]
    completion = ["babbage-002", "davinci-002", "mixtral-8x7b", "llama-2-70b"]
    chat = ["gpt-3.5-turbo", "gpt-4-turbo", "mixtral-8x7b-instruct", "llama-2-70b-chat"]
    embed = ["text-embedding-3-small", "text-embedding-3-large"]
    for name in completion + chat + embed:
        lines += [
            "[[providers]]",
            f'name = "{name}"',
            'kind = "openai"',
            'endpoint_url = "http://stub.invalid/v1"',
            f'model_name = "{name}"',
            f"price_per_1k_input = {price_in}",
            f"price_per_1k_output = {price_out}",
        ]
    size_list = "[" + ", ".join(map(str, sizes)) + "]"
    lines += [
        "[[methods]]", 'method = "tfidf"', f"n_train = {size_list}", "replicates = 2", "test_per_class = 10",
        "[[methods]]", 'method = "wordvec"', f"n_train = {size_list}", "replicates = 2", "test_per_class = 10",
        f'word_vectors = "{wv.as_posix()}"',
        "[[methods]]", 'method = "embed"', f"models = {json.dumps(embed)}", f"n_train = {size_list}", "replicates = 2",
        "test_per_class = 10",
        "[[methods]]", 'method = "paired"', f"models = {json.dumps(completion)}", "k = [1, 2]", "repetitions = 1",
        "targets_per_side = 5",
        "[[methods]]", 'method = "prompt"', f"models = {json.dumps(chat)}",
        'variants = ["seeds", "distilled", "summary", "zero_shot"]', "targets_per_side = 5",
    ]
    path = tmp_path / "table1.toml"
    path.write_text("\n".join(lines) + "\n" + extra, encoding="utf-8")
    return path


def stub_factory():
    """Offline stand-ins for every remote provider kind, keyed by the method each cell runs."""
    from pairedcompletion.experiments import fit_mock_entity
    from pairedcompletion.providers import ScriptedProvider

    made = {}

    def factory(spec, corpus):
        key = (spec.name, corpus.topic)
        if key not in made:
            if spec.name.startswith("text-embedding"):
                made[key] = ScriptedProvider({"model_name": spec.name, "embedding_dim": 16})
            elif spec.name in ("gpt-3.5-turbo", "gpt-4-turbo") or spec.name.endswith(("-instruct", "-chat")):
                made[key] = ScriptedProvider({"model_name": spec.name, "first_token": [{"pro": -0.3, "anti": -1.0}, {}]})
            else:
                made[key] = fit_mock_entity(corpus, {}, spec.name)
        return made[key]

    return factory
