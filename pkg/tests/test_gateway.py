import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from labloop.errors import ContextOverflowError, ProviderError, ShapeMismatchError
from labloop.gateway import (ChatRequest, EmbeddingVector, Gateway, MockChatProvider,
                             MockEmbeddingProvider, MockScript, RemoteChatProvider, cosine)


def test_scripted_mock_routes_to_canned_answer():
    provider = MockChatProvider(script=MockScript([("route?", "LAB-NOTEBOOK")]))
    gw = Gateway(chat=provider, embedder=MockEmbeddingProvider())
    assert gw.ask("route?", tag="t") == "LAB-NOTEBOOK"


def test_mock_script_entries_consumed_once():
    provider = MockChatProvider(script=MockScript([("", "first"), ("", "second")]))
    gw = Gateway(chat=provider, embedder=MockEmbeddingProvider())
    assert gw.ask("x", tag="t") == "first"
    assert gw.ask("x", tag="t") == "second"
    assert gw.ask("x", tag="t").startswith("ECHO:")


def test_mock_context_overflow():
    provider = MockChatProvider(context_limit=50)
    gw = Gateway(chat=provider, embedder=MockEmbeddingProvider())
    with pytest.raises(ContextOverflowError):
        gw.ask("y" * 100, tag="t")


def test_unreachable_endpoint_errors_after_retries(monkeypatch):
    monkeypatch.setenv("LABLOOP_LLM_ENDPOINT", "http://example.invalid/v1")
    attempts = []

    def failing_transport(url, **kwargs):
        attempts.append(url)
        raise ConnectionError("unreachable")

    provider = RemoteChatProvider(
        {"endpoint_env": "LABLOOP_LLM_ENDPOINT", "api_key_env": "", "retries": 3,
         "backoff_base": 0.0, "model": "m"},
        transport=failing_transport)
    with pytest.raises(ProviderError) as excinfo:
        provider.complete(ChatRequest(messages=[("user", "hi")]))
    assert excinfo.value.retries == 3
    assert len(attempts) == 3


def test_every_complete_logs_one_llm_call(gateway, session):
    before = sum(1 for e in session.log if e.kind == "llm-call")
    gateway.ask("hello", tag="test-tag")
    events = [e for e in session.log if e.kind == "llm-call"]
    assert len(events) == before + 1
    assert events[-1].payload["tag"] == "test-tag"
    assert "prompt" in events[-1].payload
    assert "response_digest" in events[-1].payload
    assert events[-1].payload["provider"] == "mock"


def test_chat_request_validation():
    with pytest.raises(ValueError):
        ChatRequest(messages=[])
    with pytest.raises(ValueError):
        ChatRequest(messages=[("assistant", "bad first role")])
    with pytest.raises(ValueError):
        ChatRequest(messages=[("user", "x")], temperature=-1)


# --------------------------------------------------------------------------
# embeddings

def test_mock_embed_deterministic(bare_gateway):
    a, b = bare_gateway.embed(["a", "a"])
    assert np.allclose(a.values, b.values)


def test_mock_embed_distinct_strings_cosines_below_one(bare_gateway):
    # Independent check: compute cosines directly from the returned vectors.
    texts = ["alpha particle", "beta decay", "gamma ray"]
    vecs = bare_gateway.embed(texts)
    for i in range(3):
        for j in range(i + 1, 3):
            c = float(np.dot(vecs[i].values, vecs[j].values) /
                      (np.linalg.norm(vecs[i].values) * np.linalg.norm(vecs[j].values)))
            assert c < 1.0 - 1e-6


def test_embed_empty_text_rejected(bare_gateway):
    with pytest.raises(ValueError):
        bare_gateway.embed([""])
    with pytest.raises(ValueError):
        bare_gateway.embed([])


def test_embed_dim_constant(bare_gateway):
    vecs = bare_gateway.embed(["one", "two", "three"])
    assert {v.dim for v in vecs} == {64}


def test_all_zero_vector_rejected():
    with pytest.raises(ValueError):
        EmbeddingVector([0.0, 0.0, 0.0])


def test_mock_determinism_across_instances():
    a = MockEmbeddingProvider().embed(["stable text"])[0]
    b = MockEmbeddingProvider().embed(["stable text"])[0]
    assert np.array_equal(a.values, b.values)


# --------------------------------------------------------------------------
# cosine

def test_cosine_self_is_one(bare_gateway):
    v = bare_gateway.embed_one("self")
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)


def test_cosine_orthogonal():
    assert cosine(EmbeddingVector([1, 0]), EmbeddingVector([0, 1])) == pytest.approx(0.0)


def test_cosine_hand_value():
    # 1*1 + 1*0 over sqrt(2)*1 = 1/sqrt(2)
    expected = 1 / math.sqrt(2)
    assert cosine(EmbeddingVector([1, 1]), EmbeddingVector([1, 0])) == pytest.approx(expected, abs=1e-4)


def test_cosine_dim_mismatch():
    with pytest.raises(ShapeMismatchError):
        cosine(EmbeddingVector([1, 2]), EmbeddingVector([1, 2, 3]))


_coord = st.floats(min_value=-10, max_value=10, allow_subnormal=False)


@given(st.lists(_coord, min_size=3, max_size=3),
       st.lists(_coord, min_size=3, max_size=3),
       st.floats(min_value=0.01, max_value=100))
def test_cosine_symmetry_and_scale_invariance(a, b, alpha):
    if np.linalg.norm(a) < 1e-6 or np.linalg.norm(b) < 1e-6:
        return
    va, vb = EmbeddingVector(a), EmbeddingVector(b)
    assert cosine(va, vb) == pytest.approx(cosine(vb, va), abs=1e-9)
    scaled = EmbeddingVector([alpha * x for x in a])
    assert cosine(scaled, vb) == pytest.approx(cosine(va, vb), abs=1e-9)


def test_mock_embedding_deterministic_across_processes():
    import subprocess
    import sys

    code = (
        "from labloop.gateway import MockEmbeddingProvider;"
        "v = MockEmbeddingProvider().embed(['cross process text'])[0];"
        "print(','.join(f'{x:.17g}' for x in v.values))"
    )
    runs = [subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
            for _ in range(2)]
    assert runs[0].returncode == runs[1].returncode == 0
    assert runs[0].stdout == runs[1].stdout
