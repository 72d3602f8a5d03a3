"""Provider-agnostic chat-completion and embedding gateway.

Every other module talks to providers through this layer, so the whole
system runs offline against the deterministic mock provider. Remote
providers speak the de-facto chat-completions HTTP/JSON convention with the
endpoint URL and API key taken from environment variables named in the
config.
"""
from __future__ import annotations

import hashlib
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
import requests

from .config import Config
from .errors import ContextOverflowError, ProviderError, ShapeMismatchError
from .session import Session, log_event

logger = logging.getLogger(__name__)

Message = tuple[str, str]  # (role, text)


@dataclass
class ChatRequest:
    messages: list[Message]
    temperature: float = 0.0
    max_tokens: int = 2048
    tag: str = "untagged"

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0][0] not in ("system", "user"):
            raise ValueError("first message role must be system or user")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    @property
    def text(self) -> str:
        return "\n".join(content for _, content in self.messages)


class EmbeddingVector:
    """Fixed-length real vector; all-zero vectors are rejected at construction."""

    __slots__ = ("values",)

    def __init__(self, values: Sequence[float] | np.ndarray):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("embedding must be a non-empty 1-D vector")
        if not np.any(arr) or np.linalg.norm(arr) == 0.0:
            raise ValueError("all-zero embedding rejected")
        self.values = arr

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def tolist(self) -> list[float]:
        return self.values.tolist()

    def __repr__(self):
        return f"EmbeddingVector(dim={self.dim})"


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity a.b / (|a||b|), clamped into [-1, 1]."""
    if a.dim != b.dim:
        raise ShapeMismatchError(f"dim mismatch: {a.dim} vs {b.dim}")
    num = float(np.dot(a.values, b.values))
    den = float(np.linalg.norm(a.values) * np.linalg.norm(b.values))
    return max(-1.0, min(1.0, num / den))


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


# --------------------------------------------------------------------------
# chat providers

class MockScript:
    """Ordered (matcher -> canned response) entries for the mock provider.

    A matcher is a substring tested against the request tag and message
    contents, or a callable on the request. Each call consumes the first
    matching unconsumed entry; with no match the mock echoes the last
    message.
    """

    def __init__(self, entries: Sequence[tuple[Any, str]] | None = None):
        self.entries: list[tuple[Any, str]] = list(entries or [])

    def add(self, matcher: Any, response: str) -> "MockScript":
        self.entries.append((matcher, response))
        return self

    def pop_match(self, request: ChatRequest) -> str | None:
        for i, (matcher, response) in enumerate(self.entries):
            if callable(matcher):
                hit = bool(matcher(request))
            else:
                needle = str(matcher)
                hit = needle == "" or needle in request.tag or needle in request.text
            if hit:
                del self.entries[i]
                return response
        return None


class MockChatProvider:
    name = "mock"

    def __init__(self, script: MockScript | None = None, context_limit: int = 16000):
        self.script = script or MockScript()
        self.context_limit = context_limit
        self.calls: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> str:
        self.calls.append(request)
        if len(request.text) > self.context_limit:
            raise ContextOverflowError(
                f"prompt of {len(request.text)} chars exceeds mock context limit {self.context_limit}"
            )
        scripted = self.script.pop_match(request)
        if scripted is not None:
            return scripted
        return "ECHO: " + request.messages[-1][1]


class RemoteChatProvider:
    """Chat-completions HTTP provider (also covers local OpenAI-compatible runtimes)."""

    def __init__(self, params: dict[str, Any], name: str = "remote-endpoint",
                 transport: Callable[..., Any] | None = None,
                 default_endpoint: str | None = None):
        self.name = name
        self.params = params
        self.transport = transport or requests.post
        self.endpoint = os.environ.get(params["endpoint_env"], default_endpoint or "")
        key_env = params.get("api_key_env", "")
        self.api_key = os.environ.get(key_env, "") if key_env else ""
        if not self.endpoint:
            raise ProviderError(f"no endpoint configured; set ${params['endpoint_env']}")

    def complete(self, request: ChatRequest) -> str:
        payload = {
            "model": self.params.get("model", "default"),
            "messages": [{"role": role, "content": content} for role, content in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        retries = int(self.params.get("retries", 3))
        backoff = float(self.params.get("backoff_base", 0.25))
        last_error: Exception | None = None
        for attempt in range(retries):
            try:
                resp = self.transport(self.endpoint, json=payload, headers=headers,
                                      timeout=self.params.get("timeout", 60.0))
                resp.raise_for_status()
                body = resp.json()
                if "error" in body and "context" in str(body["error"]).lower():
                    raise ContextOverflowError(str(body["error"]))
                return body["choices"][0]["message"]["content"]
            except ContextOverflowError:
                raise
            except Exception as exc:  # transport, HTTP, decode
                last_error = exc
                if attempt < retries - 1:
                    time.sleep(backoff * (2 ** attempt))
        raise ProviderError(f"{self.name} failed after {retries} retries: {last_error}", retries=retries)


# --------------------------------------------------------------------------
# embedding providers

def _mock_vector(text: str, dim: int) -> np.ndarray:
    """Keyed hash of character trigrams scattered over `dim` coordinates.

    Deterministic across processes (no PYTHONHASHSEED dependence) and keeps
    'similar strings score higher' loosely true through shared trigrams.
    """
    vec = np.zeros(dim, dtype=np.float64)
    padded = f"\x02{text}\x03"
    for i in range(len(padded) - 2):
        gram = padded[i:i + 3].encode("utf-8")
        h = hashlib.blake2b(gram, digest_size=8, key=b"labloop-mock-embed").digest()
        idx = int.from_bytes(h[:4], "little") % dim
        sign = 1.0 if h[4] % 2 == 0 else -1.0
        vec[idx] += sign
    if not np.any(vec):
        h = hashlib.blake2b(text.encode("utf-8"), digest_size=32).digest()
        vec = np.array([(b - 127.5) for b in h[: max(2, dim // 8)]], dtype=np.float64)
        vec = np.resize(vec, dim)
    return vec / np.linalg.norm(vec)


class MockEmbeddingProvider:
    name = "mock"

    def __init__(self, dim: int = 64):
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [EmbeddingVector(_mock_vector(t, self._dim)) for t in texts]


class RemoteEmbeddingProvider:
    def __init__(self, params: dict[str, Any], name: str = "remote-endpoint",
                 transport: Callable[..., Any] | None = None,
                 default_endpoint: str | None = None):
        self.name = name
        self.params = params
        self.transport = transport or requests.post
        self.endpoint = os.environ.get(params["embedding_endpoint_env"], default_endpoint or "")
        key_env = params.get("api_key_env", "")
        self.api_key = os.environ.get(key_env, "") if key_env else ""
        if not self.endpoint:
            raise ProviderError(f"no embedding endpoint configured; set ${params['embedding_endpoint_env']}")

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        retries = int(self.params.get("retries", 3))
        backoff = float(self.params.get("backoff_base", 0.25))
        last_error: Exception | None = None
        for attempt in range(retries):
            try:
                resp = self.transport(
                    self.endpoint,
                    json={"model": self.params.get("embedding_model", "default"), "input": list(texts)},
                    headers=headers, timeout=self.params.get("timeout", 60.0),
                )
                resp.raise_for_status()
                data = resp.json()["data"]
                return [EmbeddingVector(item["embedding"]) for item in data]
            except Exception as exc:
                last_error = exc
                if attempt < retries - 1:
                    time.sleep(backoff * (2 ** attempt))
        raise ProviderError(f"{self.name} embedding failed after {retries} retries: {last_error}",
                            retries=retries)


# --------------------------------------------------------------------------
# the gateway

@dataclass
class Gateway:
    chat: Any
    embedder: Any
    session: Session | None = None
    calls: int = field(default=0)

    def complete(self, request: ChatRequest) -> str:
        response = self.chat.complete(request)
        if not response:
            raise ProviderError(f"{self.chat.name} returned an empty response")
        self.calls += 1
        if self.session is not None:
            log_event(self.session, "llm-call", {
                "tag": request.tag,
                "provider": self.chat.name,
                "prompt": [[role, content] for role, content in request.messages],
                "response": response,
                "response_digest": text_digest(response),
            })
        return response

    def ask(self, prompt: str, tag: str, system: str | None = None, **kwargs) -> str:
        messages: list[Message] = []
        if system:
            messages.append(("system", system))
        messages.append(("user", prompt))
        return self.complete(ChatRequest(messages=messages, tag=tag, **kwargs))

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise ValueError("texts must be non-empty")
        if any(not t for t in texts):
            raise ValueError("texts must not contain empty strings")
        vectors = self.embedder.embed(texts)
        dims = {v.dim for v in vectors}
        if len(dims) > 1:
            raise ShapeMismatchError(f"provider returned mixed dims {sorted(dims)}")
        return vectors

    def embed_one(self, text: str) -> EmbeddingVector:
        return self.embed([text])[0]


def build_gateway(config: Config, session: Session | None = None) -> Gateway:
    """Wire chat + embedding providers from the config's provider choices."""
    params = config.module_params("llm-gateway")
    if config.llm_provider == "mock":
        script = MockScript([(m, r) for m, r in params.get("mock_script", [])])
        chat: Any = MockChatProvider(script=script, context_limit=params["mock_context_limit"])
    elif config.llm_provider == "local":
        chat = RemoteChatProvider(params, name="local",
                                  default_endpoint="http://127.0.0.1:8080/v1/chat/completions")
    else:
        chat = RemoteChatProvider(params)
    if config.embedding_provider == "mock":
        embedder: Any = MockEmbeddingProvider(dim=params["mock_dim"])
    elif config.embedding_provider == "local":
        embedder = RemoteEmbeddingProvider(params, name="local",
                                           default_endpoint="http://127.0.0.1:8080/v1/embeddings")
    else:
        embedder = RemoteEmbeddingProvider(params)
    return Gateway(chat=chat, embedder=embedder, session=session)
