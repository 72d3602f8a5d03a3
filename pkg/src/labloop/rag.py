"""Retrieval-augmentation-generation over a vector index.

Stage order is fixed: expand -> retrieve -> compress -> rerank -> generate.
Retrieval is plain similarity or greedy maximal-marginal-relevance; optional
reranking runs personalized PageRank on the chunk-similarity graph so the
generation stage sees relevant but non-redundant material.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import prompts
from .errors import ContextOverflowError, LabloopError
from .gateway import ChatRequest, EmbeddingVector, Gateway, cosine
from .index import Chunk, VectorIndex, search
from .session import Session, log_event

logger = logging.getLogger(__name__)

NOT_RELEVANT = "NOT_RELEVANT"

RAG_MODES = ("vanilla", "similarity", "mmr")


@dataclass
class RetrievalConfig:
    mode: str = "mmr"
    k_retrieve: int = 10
    k_final: int = 5
    mmr_lambda: float = 0.5
    multi_query: int = 0
    compress: bool = False
    rerank: str = "none"
    damping: float = 0.85

    def __post_init__(self):
        if self.mode not in RAG_MODES:
            raise ValueError(f"mode must be one of {RAG_MODES}")
        if self.k_retrieve < 1 or self.k_final < 1:
            raise ValueError("k_retrieve and k_final must be positive")
        if self.k_final > self.k_retrieve:
            raise ValueError("k_final must not exceed k_retrieve")
        if not 0 <= self.mmr_lambda <= 1:
            raise ValueError("mmr_lambda must be in [0, 1]")
        if self.multi_query < 0:
            raise ValueError("multi_query must be >= 0")
        if self.rerank not in ("none", "pagerank"):
            raise ValueError("rerank must be none or pagerank")
        if not 0 < self.damping < 1:
            raise ValueError("damping must be in (0, 1)")

    @classmethod
    def vanilla(cls) -> "RetrievalConfig":
        return cls(mode="vanilla")

    @classmethod
    def standard(cls) -> "RetrievalConfig":
        """MMR retrieval and generation, nothing else."""
        return cls(mode="mmr")

    @classmethod
    def enhanced(cls) -> "RetrievalConfig":
        """MMR + multi-query + compression + PageRank reranking."""
        return cls(mode="mmr", multi_query=3, compress=True, rerank="pagerank")

    @classmethod
    def from_params(cls, params: dict) -> "RetrievalConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in params.items() if k in known})

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass
class RetrievedItem:
    chunk: Chunk
    score: float
    variants: list[int] = field(default_factory=list)
    compressed_text: str | None = None
    rank: float | None = None

    @property
    def effective_text(self) -> str:
        return self.compressed_text if self.compressed_text is not None else self.chunk.text


@dataclass
class RetrievedSet:
    items: list[RetrievedItem] = field(default_factory=list)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def chunk_ids(self) -> list[str]:
        return [item.chunk.chunk_id for item in self.items]


@dataclass
class RagAnswer:
    text: str
    citations: list[tuple[str, str]]          # (doc_id, chunk_id)
    config: dict
    trace: list[int]                          # seq numbers of the llm-call events involved
    low_confidence: bool = False
    retrieved: RetrievedSet = field(default_factory=RetrievedSet)


# --------------------------------------------------------------------------
# retrieval

def retrieve_mmr(index: VectorIndex, query_embedding: EmbeddingVector, k: int,
                 mmr_lambda: float) -> list[tuple[Chunk, float]]:
    """Greedy maximal-marginal-relevance selection.

    Each step picks the remaining chunk maximizing
    lambda*cos(query, c) - (1-lambda)*max_selected cos(c, s); the first pick
    is the pure-similarity maximum and ties fall to the smaller chunk_id.
    Returned scores are the query similarities of the picks, in pick order.
    """
    if not 0 <= mmr_lambda <= 1:
        raise ValueError("mmr_lambda must be in [0, 1]")
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.chunks:
        return []
    matrix = index.matrix()
    q = query_embedding.values / np.linalg.norm(query_embedding.values)
    sims = matrix @ q
    # candidate order fixes tie-breaks: strict improvement over a smaller id
    order = sorted(range(len(index.chunks)), key=lambda i: index.chunks[i].chunk_id)
    remaining = list(order)
    selected: list[int] = []
    while remaining and len(selected) < k:
        if not selected:
            best = _argmax_by_id(remaining, lambda i: sims[i])
        else:
            sel_rows = matrix[selected]
            best = _argmax_by_id(
                remaining,
                lambda i: mmr_lambda * sims[i] - (1 - mmr_lambda) * float(np.max(sel_rows @ matrix[i])),
            )
        remaining.remove(best)
        selected.append(best)
    return [(index.chunks[i], float(sims[i])) for i in selected]


def _argmax_by_id(candidates: list[int], score) -> int:
    best, best_score = None, None
    for i in candidates:  # candidates already sorted by chunk_id
        s = score(i)
        if best is None or s > best_score:
            best, best_score = i, s
    return best


def multi_query_expand(query: str, n: int, gateway: Gateway) -> list[str]:
    """The original query plus up to n LLM rephrasings (LLM failure degrades to none)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return [query]
    try:
        response = gateway.ask(prompts.render("multi_query", query=query, n=n), tag="multi-query")
    except LabloopError as exc:
        logger.warning("multi-query expansion failed (%s); querying without rephrasings", exc)
        return [query]
    rephrasings = []
    for line in response.splitlines():
        cleaned = re.sub(r"^\s*(?:\d+[.)]\s*|[-*]\s*)", "", line).strip()
        if cleaned and cleaned != query:
            rephrasings.append(cleaned)
    return [query] + rephrasings[:n]


def retrieve(index: VectorIndex, queries: Sequence[str], config: RetrievalConfig,
             gateway: Gateway, session: Session | None = None) -> RetrievedSet:
    """Retrieve for every query variant and union the results.

    A chunk hit by several variants appears once with its max score; with a
    single variant the retrieval order (greedy MMR order included) is kept.
    """
    if not index.chunks:
        if session is not None:
            log_event(session, "retrieval", {"action": "search", "queries": list(queries),
                                             "mode": config.mode, "hits": []})
        return RetrievedSet()
    vectors = gateway.embed(list(queries))
    by_chunk: dict[str, RetrievedItem] = {}
    order_first: list[str] = []
    for vi, vec in enumerate(vectors):
        if config.mode == "mmr":
            hits = retrieve_mmr(index, vec, config.k_retrieve, config.mmr_lambda)
        else:
            hits = search(index, vec, config.k_retrieve)
        for chunk, score in hits:
            item = by_chunk.get(chunk.chunk_id)
            if item is None:
                by_chunk[chunk.chunk_id] = RetrievedItem(chunk=chunk, score=score, variants=[vi])
                order_first.append(chunk.chunk_id)
            else:
                item.score = max(item.score, score)
                item.variants.append(vi)
    if len(vectors) == 1:
        items = [by_chunk[cid] for cid in order_first]
    else:
        items = sorted(by_chunk.values(), key=lambda it: (-it.score, it.chunk.chunk_id))
        items = items[:config.k_retrieve]
    rset = RetrievedSet(items=items)
    if session is not None:
        log_event(session, "retrieval", {
            "action": "search", "queries": list(queries), "mode": config.mode,
            "k": config.k_retrieve, "hits": rset.chunk_ids(),
        })
    return rset


# --------------------------------------------------------------------------
# augmentation

def compress_chunks(rset: RetrievedSet, query: str, gateway: Gateway) -> RetrievedSet:
    """One LLM call per chunk; chunks judged NOT_RELEVANT are dropped."""
    kept: list[RetrievedItem] = []
    for item in rset:
        try:
            response = gateway.ask(
                prompts.render("compress", query=query, chunk=item.chunk.text), tag="compress")
        except LabloopError as exc:
            logger.warning("compression failed for chunk %s (%s); keeping original text",
                           item.chunk.chunk_id, exc)
            kept.append(replace(item, compressed_text=item.chunk.text))
            continue
        if response.strip() == NOT_RELEVANT:
            continue
        kept.append(replace(item, compressed_text=response))
    return RetrievedSet(items=kept)


def personalized_pagerank(weights: np.ndarray, teleport: np.ndarray, damping: float) -> np.ndarray:
    """Solve r = damping*M r + (1-damping)*t on a weighted graph.

    `weights` is a symmetric non-negative matrix with zero diagonal; rows
    with no outgoing weight teleport. The result sums to 1.
    """
    n = weights.shape[0]
    if n == 1:
        return np.ones(1)
    t = teleport / teleport.sum()
    row_sums = weights.sum(axis=1)
    # column-stochastic transition: column j holds where mass at j flows
    M = np.zeros((n, n))
    for j in range(n):
        if row_sums[j] > 0:
            M[:, j] = weights[j, :] / row_sums[j]
        else:
            M[:, j] = t
    ranks = np.linalg.solve(np.eye(n) - damping * M, (1 - damping) * t)
    return ranks / ranks.sum()


def rerank_pagerank(rset: RetrievedSet, query_embedding: EmbeddingVector, k_final: int,
                    damping: float = 0.85) -> RetrievedSet:
    """Keep the k_final most central chunks of the retrieved similarity graph.

    Edges are max(0, cosine) between chunks; teleport weights are
    max(0, cosine(query, chunk)), falling back to uniform when all zero.
    """
    if not rset.items:
        raise ValueError("retrieved set must be non-empty")
    if not 0 < damping < 1:
        raise ValueError("damping must be in (0, 1)")
    n = len(rset.items)
    vectors = np.stack([item.chunk.embedding.values for item in rset.items])
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    unit = vectors / norms
    sims = np.clip(unit @ unit.T, 0.0, None)
    np.fill_diagonal(sims, 0.0)
    q = query_embedding.values / np.linalg.norm(query_embedding.values)
    teleport = np.clip(unit @ q, 0.0, None)
    if teleport.sum() == 0:
        teleport = np.ones(n)
    ranks = personalized_pagerank(sims, teleport, damping)
    order = sorted(range(n), key=lambda i: (-ranks[i], rset.items[i].chunk.chunk_id))
    items = [replace(rset.items[i], rank=float(ranks[i])) for i in order[:k_final]]
    return RetrievedSet(items=items)


# --------------------------------------------------------------------------
# the full pipeline

def _generation_prompt(query: str, rset: RetrievedSet, memory: Sequence[tuple[str, str]]) -> list:
    messages: list[tuple[str, str]] = [("system", "You are a careful research assistant.")]
    for role, text in memory:
        messages.append((role, text))
    if rset.items:
        context = "\n---\n".join(
            f"[{item.chunk.doc_id}/{item.chunk.chunk_id}] {item.effective_text}" for item in rset)
        messages.append(("user", prompts.render("generate_answer", query=query, context=context)))
    else:
        messages.append(("user", prompts.render("generate_answer_empty", query=query)))
    return messages


def answer(index: VectorIndex, query: str, config: RetrievalConfig, gateway: Gateway,
           session: Session | None = None, memory: Sequence[tuple[str, str]] = ()) -> RagAnswer:
    """Run the pipeline stages implied by the config and generate an answer.

    An empty index still answers (bare LLM) but flags the result
    low-confidence and cites nothing.
    """
    start_seq = session.seq if session is not None else 0
    low_confidence = False
    if config.mode == "vanilla":
        rset = RetrievedSet()
    else:
        queries = multi_query_expand(query, config.multi_query, gateway)
        rset = retrieve(index, queries, config, gateway, session)
        if not rset.items:
            low_confidence = True
        if rset.items and config.compress:
            rset = compress_chunks(rset, query, gateway)
        if rset.items and config.rerank == "pagerank":
            q_vec = gateway.embed_one(query)
            rset = rerank_pagerank(rset, q_vec, config.k_final, config.damping)

    working = rset
    compressed_already = config.compress
    while True:
        try:
            text = gateway.complete(ChatRequest(
                messages=_generation_prompt(query, working, memory), tag="generate"))
            break
        except ContextOverflowError:
            if working.items and not compressed_already:
                working = compress_chunks(working, query, gateway)
                compressed_already = True
            elif working.items:
                working = RetrievedSet(items=working.items[:-1])
                if session is not None:
                    log_event(session, "retrieval", {
                        "action": "truncate", "reason": "context overflow",
                        "kept": working.chunk_ids(),
                    })
            else:
                raise

    trace = []
    if session is not None:
        trace = [e.seq for e in session.log if e.seq > start_seq and e.kind == "llm-call"]
    return RagAnswer(
        text=text,
        citations=[(item.chunk.doc_id, item.chunk.chunk_id) for item in working],
        config=config.to_dict(),
        trace=trace,
        low_confidence=low_confidence,
        retrieved=working,
    )
