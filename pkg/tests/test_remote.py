import json
import math
import random

import httpx
import pytest

from pairedcompletion.providers import (
    CapabilityError,
    ContextOverflowError,
    OpenAICompatibleProvider,
    PermanentError,
    ProviderConfig,
    ResponseCache,
    RetriableError,
    RetryPolicy,
)
from pairedcompletion.providers.remote import (
    MissingAPIKeyError,
    parse_chat_logprobs,
    parse_completion_logprobs,
    parse_embeddings,
)

from conftest import FIXTURES, Recorder, load_fixture

ENV = {"TEST_KEY": "sk-test-123"}


def make(recorder, *, cache=None, attempts=5, model="m", sleeps=None, endpoint="http://llm.local/v1"):
    cfg = ProviderConfig(endpoint, model, api_key_env="TEST_KEY", retry_policy=RetryPolicy(attempts, 10))
    return OpenAICompatibleProvider(
        cfg,
        cache=cache,
        transport=recorder.transport(),
        env=ENV,
        sleep=(sleeps.append if sleeps is not None else lambda s: None),
        rng=random.Random(0),
    )


class TestFixtureReplay:
    def test_completion_echo(self):
        fx = load_fixture("completions_echo.json")
        rec = Recorder([(200, fx["response"])])
        p = make(rec, model=fx["request"]["model"])
        s = p.score_text(fx["request"]["prompt"])
        assert [[t.text, t.logprob] for t in s.tokens] == fx["expected_tokens"]
        assert s.total == math.fsum(v for _, v in fx["expected_tokens"] if v is not None)
        assert rec.bodies[0] == fx["request"]
        assert rec.requests[0].url.path == "/v1/completions"
        assert rec.requests[0].headers["authorization"] == "Bearer sk-test-123"

    def test_vllm_extra_token_truncated(self):
        fx = load_fixture("completions_echo_vllm.json")
        toks = parse_completion_logprobs(fx["response"])
        assert [[t.text, t.logprob] for t in toks] == fx["expected_tokens"]

    def test_chat_logprobs(self):
        fx = load_fixture("chat_logprobs.json")
        dist = parse_chat_logprobs(fx["response"])
        assert [dict(p) for p in dist.positions] == fx["expected_positions"]

    def test_chat_request_body(self):
        fx = load_fixture("chat_logprobs.json")
        rec = Recorder([(200, fx["response"])])
        p = make(rec, model=fx["request"]["model"])
        p.first_token_logprobs([{"role": "user", "content": "x"}], top_n=5)
        body = rec.bodies[0]
        body.pop("messages")
        assert body == fx["request"]

    def test_embeddings_sorted_by_index(self):
        fx = load_fixture("embeddings.json")
        assert parse_embeddings(fx["response"]) == fx["expected_vectors"]
        rec = Recorder([(200, fx["response"])])
        p = make(rec, model=fx["request"]["model"])
        assert p.embed(fx["request"]["input"]) == fx["expected_vectors"]
        assert rec.bodies[0] == fx["request"]

    @pytest.mark.parametrize(
        "name,fn",
        [
            ("completions_echo.json", parse_completion_logprobs),
            ("completions_echo_vllm.json", parse_completion_logprobs),
            ("chat_logprobs.json", parse_chat_logprobs),
            ("embeddings.json", parse_embeddings),
        ],
    )
    def test_byte_stable(self, name, fn):
        raw = (FIXTURES / name).read_bytes()
        first = fn(json.loads(raw)["response"])
        for _ in range(3):
            assert fn(json.loads(raw)["response"]) == first


class TestRetries:
    def test_timeout_then_success(self):
        fx = load_fixture("completions_echo.json")
        rec = Recorder([httpx.ReadTimeout("slow"), (200, fx["response"])])
        sleeps = []
        p = make(rec, sleeps=sleeps)
        p.score_text("Owning a dog will improve your life.")
        assert p.last_attempts == 2
        assert len(rec.requests) == 2
        assert len(sleeps) == 1 and 0.01 <= sleeps[0] <= 0.02
        assert p.usage.attempts == [2]

    def test_backoff_doubles(self):
        rec = Recorder([(503, {})] * 4 + [(503, {})])
        sleeps = []
        p = make(rec, attempts=4, sleeps=sleeps)
        with pytest.raises(RetriableError, match="4 attempts"):
            p.score_text("x")
        assert len(sleeps) == 3
        for i, s in enumerate(sleeps):
            base = 0.01 * 2**i
            assert base <= s <= 2 * base
        assert p.last_attempts == 4

    @pytest.mark.parametrize("status", [429, 500, 502, 503, 504])
    def test_retriable_statuses(self, status):
        fx = load_fixture("completions_echo.json")
        rec = Recorder([(status, {"error": "busy"}), (200, fx["response"])])
        p = make(rec)
        p.score_text("Owning a dog will improve your life.")
        assert p.last_attempts == 2

    def test_404_is_capability_error(self):
        p = make(Recorder([(404, {"error": "no such route"})]))
        with pytest.raises(CapabilityError):
            p.score_text("x")

    def test_context_overflow(self):
        msg = {"error": {"message": "This model's maximum context length is 4097 tokens"}}
        rec = Recorder([(400, msg)])
        p = make(rec)
        with pytest.raises(ContextOverflowError):
            p.score_text("x" * 10)
        assert len(rec.requests) == 1

    def test_other_4xx_permanent_no_retry(self):
        rec = Recorder([(401, {"error": "bad key"})])
        p = make(rec)
        with pytest.raises(PermanentError):
            p.score_text("x")
        assert len(rec.requests) == 1

    def test_missing_echo_logprobs_is_capability(self):
        rec = Recorder([(200, {"choices": [{"text": "x", "logprobs": None}]})])
        with pytest.raises(CapabilityError):
            make(rec).score_text("x")


class TestRequestShape:
    def test_generate_temperature_in_body(self):
        reply = {"choices": [{"message": {"role": "assistant", "content": "hi"}}], "usage": {"prompt_tokens": 3, "completion_tokens": 1}}
        rec = Recorder([(200, reply)])
        p = make(rec)
        assert p.generate([{"role": "user", "content": "hello"}], temperature=0.5) == "hi"
        assert rec.bodies[0]["temperature"] == 0.5
        assert p.usage.snapshot() == {"calls": 1, "input_tokens": 3, "output_tokens": 1}

    def test_generate_rejects_bad_temperature(self):
        with pytest.raises(ValueError):
            make(Recorder([(200, {})])).generate([{"role": "user", "content": "x"}], temperature=-1)

    def test_top_n_below_five_rejected(self):
        rec = Recorder([(200, {})])
        with pytest.raises(ValueError):
            make(rec).first_token_logprobs([{"role": "user", "content": "x"}], top_n=1)
        assert rec.requests == []

    @pytest.mark.parametrize("endpoint", ["http://llm.local", "http://llm.local/", "http://llm.local/v1", "http://llm.local/v1/"])
    def test_endpoint_normalisation(self, endpoint):
        fx = load_fixture("completions_echo.json")
        rec = Recorder([(200, fx["response"])])
        make(rec, endpoint=endpoint).score_text("a")
        assert str(rec.requests[0].url) == "http://llm.local/v1/completions"


class TestKeys:
    def test_missing_key(self):
        cfg = ProviderConfig("http://x", "m", api_key_env="NOPE_NOT_SET")
        with pytest.raises(MissingAPIKeyError) as err:
            OpenAICompatibleProvider(cfg, env={})
        assert err.value.var == "NOPE_NOT_SET"

    def test_key_never_logged(self, caplog):
        rec = Recorder([(503, {})])
        p = make(rec, attempts=2)
        with caplog.at_level("DEBUG"), pytest.raises(RetriableError) as err:
            p.score_text("x")
        assert "sk-test-123" not in caplog.text
        assert "sk-test-123" not in str(err.value)


class TestCache:
    def test_score_cached_once(self, tmp_path):
        fx = load_fixture("completions_echo.json")
        rec = Recorder([(200, fx["response"])])
        cache = ResponseCache(tmp_path / "c.jsonl")
        p = make(rec, cache=cache)
        a = p.score_text("Owning a dog will improve your life.")
        b = p.score_text("Owning a dog will improve your life.")
        assert a == b
        assert len(rec.requests) == 1
        assert p.usage.calls == 1

    def test_cache_persists_across_instances(self, tmp_path):
        fx = load_fixture("completions_echo.json")
        path = tmp_path / "c.jsonl"
        make(Recorder([(200, fx["response"])]), cache=ResponseCache(path)).score_text("s")
        rec = Recorder([(500, {})])
        p = make(rec, cache=ResponseCache(path))
        assert p.score_text("s").total == math.fsum(v for _, v in fx["expected_tokens"] if v is not None)
        assert rec.requests == []

    def test_torn_line_tolerated(self, tmp_path):
        path = tmp_path / "c.jsonl"
        c = ResponseCache(path)
        c.put("k1", {"v": 1})
        with path.open("a") as fh:
            fh.write('{"key": "k2", "resp')
        c2 = ResponseCache(path)
        assert c2.get("k1") == {"v": 1}
        assert "k2" not in c2

    def test_generate_not_cached(self, tmp_path):
        reply = {"choices": [{"message": {"content": "hi"}}]}
        rec = Recorder([(200, reply)])
        p = make(rec, cache=ResponseCache(tmp_path / "c.jsonl"))
        msgs = [{"role": "user", "content": "x"}]
        p.generate(msgs)
        p.generate(msgs)
        assert len(rec.requests) == 2

    def test_embeddings_per_text(self, tmp_path):
        def reply(request):
            inputs = json.loads(request.content)["input"]
            return httpx.Response(
                200, json={"data": [{"index": i, "embedding": [float(len(t)), 1.0]} for i, t in enumerate(inputs)]}
            )

        rec = Recorder([reply])
        p = make(rec, cache=ResponseCache())
        out = p.embed(["aa", "b", "aa"])
        assert out == [[2.0, 1.0], [1.0, 1.0], [2.0, 1.0]]
        assert rec.bodies[-1]["input"] == ["aa", "b"]
        p.embed(["b", "ccc"])
        assert rec.bodies[-1]["input"] == ["ccc"]
        p.embed(["aa", "ccc"])
        assert len(rec.requests) == 2

    def test_embed_empty(self):
        rec = Recorder([(200, {})])
        assert make(rec).embed([]) == []
        assert rec.requests == []
