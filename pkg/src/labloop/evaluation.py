"""RAG evaluation: claim decomposition, the five metrics (faithfulness,
answer relevance, context precision, context recall, answer correctness),
and evolution-based question generation.

All metrics land in [0, 1]. Degenerate denominators (no claims, no relevant
chunks) score 0 with a logged notice instead of raising mid-suite; only a
missing set of generated questions makes answer relevance meaningless
enough to error.
"""
from __future__ import annotations

import csv
import json
import logging
import random
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import prompts
from .errors import LabloopError, UndefinedMetricError
from .gateway import Gateway, cosine
from .index import VectorIndex
from .session import Session

logger = logging.getLogger(__name__)

METRICS = ("faithfulness", "answer_relevance", "context_precision",
           "context_recall", "answer_correctness")

QUESTION_KINDS = ("simple", "reasoning", "multicontext")


@dataclass
class EvalRecord:
    question: str
    answer: str
    contexts: list[str]
    ground_truth: str = ""
    answer_claims: list[str] | None = None
    ground_truth_claims: list[str] | None = None
    relevance_flags: list[bool] | None = None
    generated_questions: list[str] | None = None
    kind: str = ""
    topic: str = ""

    def __post_init__(self):
        if self.relevance_flags is not None and len(self.relevance_flags) != len(self.contexts):
            raise ValueError("relevance_flags must align with contexts")

    @classmethod
    def from_dict(cls, data: dict) -> "EvalRecord":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class ClaimConfusion:
    tp: int
    fp: int
    fn: int

    def f1(self) -> float:
        denom = self.tp + 0.5 * (self.fp + self.fn)
        if denom == 0:
            logger.warning("claim confusion is empty; F1 degenerate, scoring 0")
            return 0.0
        return self.tp / denom


class SentenceClaimExtractor:
    """Deterministic default: sentence-level claims, normalized-substring verification."""

    def decompose(self, text: str) -> list[str]:
        parts = re.split(r"(?<=[.!?])\s+|\n+", text.strip())
        return [p.strip() for p in parts if p.strip()]

    def verify(self, claim: str, evidence: str) -> bool:
        return self._norm(claim) in self._norm(evidence)

    @staticmethod
    def _norm(text: str) -> str:
        return re.sub(r"[^a-z0-9 ]", "", re.sub(r"\s+", " ", text.casefold())).strip()


class LlmClaimExtractor:
    """LLM-backed decomposition and verification (scriptable through the mock)."""

    def __init__(self, gateway: Gateway):
        self.gateway = gateway

    def decompose(self, text: str) -> list[str]:
        response = self.gateway.ask(prompts.render("decompose_claims", text=text),
                                    tag="decompose-claims")
        claims = [re.sub(r"^\s*(?:\d+[.)]|[-*])\s*", "", line).strip()
                  for line in response.splitlines()]
        return [c for c in claims if c]

    def verify(self, claim: str, evidence: str) -> bool:
        response = self.gateway.ask(prompts.render("verify_claim", claim=claim, evidence=evidence),
                                    tag="verify-claim")
        return response.strip().upper().startswith("YES")


def _claims_of(record_claims: list[str] | None, text: str, extractor) -> list[str]:
    if record_claims is not None:
        return record_claims
    return extractor.decompose(text)


# --------------------------------------------------------------------------
# the five metrics

def faithfulness(record: EvalRecord, extractor) -> float:
    """Fraction of answer claims inferable from the retrieved contexts."""
    if not record.contexts:
        raise ValueError("faithfulness needs non-empty contexts")
    claims = _claims_of(record.answer_claims, record.answer, extractor)
    if not claims:
        logger.warning("faithfulness: no answer claims; degenerate, scoring 0")
        return 0.0
    evidence = "\n".join(record.contexts)
    verified = sum(1 for claim in claims if extractor.verify(claim, evidence))
    return verified / len(claims)


def answer_relevance(record: EvalRecord, gateway: Gateway, n_questions: int = 3) -> float:
    """Mean cosine between the original question and questions generated
    from the answer, clamped into [0, 1]."""
    questions = record.generated_questions
    if questions is None:
        response = gateway.ask(
            prompts.render("questions_from_answer", n=n_questions, answer=record.answer),
            tag="questions-from-answer")
        questions = [re.sub(r"^\s*(?:\d+[.)]|[-*])\s*", "", line).strip()
                     for line in response.splitlines()]
        questions = [q for q in questions if q]
    if not questions:
        raise UndefinedMetricError("answer relevance needs at least one generated question")
    vectors = gateway.embed([record.question] + list(questions))
    original, generated = vectors[0], vectors[1:]
    mean = sum(cosine(v, original) for v in generated) / len(generated)
    if mean < 0:
        logger.warning("answer relevance %.4f clamped to 0 (anticorrelated embeddings)", mean)
    return min(1.0, max(0.0, mean))


def context_precision(record: EvalRecord) -> float:
    """Rank-weighted precision of the relevant retrieved chunks:
    (1/|relevant|) * sum_k precision@k * delta_k."""
    if record.relevance_flags is None:
        raise ValueError("context_precision needs relevance_flags")
    flags = [bool(f) for f in record.relevance_flags]
    total_relevant = sum(flags)
    if total_relevant == 0:
        logger.warning("context precision: no relevant chunks; degenerate, scoring 0")
        return 0.0
    score = 0.0
    seen_relevant = 0
    for k, flag in enumerate(flags, start=1):
        if flag:
            seen_relevant += 1
            score += seen_relevant / k
    return score / total_relevant


def context_recall(record: EvalRecord, extractor) -> float:
    """Fraction of ground-truth claims linkable to the retrieved contexts."""
    claims = _claims_of(record.ground_truth_claims, record.ground_truth, extractor)
    if not claims:
        logger.warning("context recall: no ground-truth claims; degenerate, scoring 0")
        return 0.0
    evidence = "\n".join(record.contexts)
    linked = sum(1 for claim in claims if extractor.verify(claim, evidence))
    return linked / len(claims)


def build_confusion(record: EvalRecord, extractor) -> ClaimConfusion:
    """TP: answer claims present in the ground truth; FP: the rest;
    FN: ground-truth claims absent from the answer."""
    answer_claims = _claims_of(record.answer_claims, record.answer, extractor)
    gt_claims = _claims_of(record.ground_truth_claims, record.ground_truth, extractor)
    tp = sum(1 for c in answer_claims if extractor.verify(c, record.ground_truth))
    fp = len(answer_claims) - tp
    fn = sum(1 for g in gt_claims if not extractor.verify(g, record.answer))
    return ClaimConfusion(tp=tp, fp=fp, fn=fn)


def answer_correctness(record: EvalRecord, gateway: Gateway, extractor) -> float:
    """Average of semantic similarity to the ground truth and the claim F1."""
    if not record.ground_truth:
        raise ValueError("answer_correctness needs a ground truth")
    answer_vec, truth_vec = gateway.embed([record.answer, record.ground_truth])
    semantic = max(0.0, cosine(answer_vec, truth_vec))
    factual = build_confusion(record, extractor).f1()
    return 0.5 * semantic + 0.5 * factual


def derive_relevance_flags(record: EvalRecord, extractor) -> list[bool]:
    """Mark each context relevant when it supports some ground-truth claim."""
    claims = _claims_of(record.ground_truth_claims, record.ground_truth, extractor)
    flags = []
    for ctx in record.contexts:
        flags.append(any(extractor.verify(claim, ctx) for claim in claims))
    return flags


def evaluate_record(record: EvalRecord, gateway: Gateway, extractor=None,
                    n_questions: int = 3) -> dict[str, float]:
    """All five metrics for one record; missing relevance flags are derived."""
    extractor = extractor or SentenceClaimExtractor()
    if record.relevance_flags is None:
        record.relevance_flags = derive_relevance_flags(record, extractor)
    return {
        "faithfulness": faithfulness(record, extractor),
        "answer_relevance": answer_relevance(record, gateway, n_questions),
        "context_precision": context_precision(record),
        "context_recall": context_recall(record, extractor),
        "answer_correctness": answer_correctness(record, gateway, extractor),
    }


# --------------------------------------------------------------------------
# evolution-based question generation

@dataclass
class GeneratedQuestion:
    question: str
    ground_truth: str
    source_chunk_ids: list[str]
    kind: str
    topic: str = ""


def evolve_questions(index: VectorIndex, n_base: int, n_rounds: int, gateway: Gateway,
                     seed: int = 0) -> list[GeneratedQuestion]:
    """Generate base questions from sampled chunks, then evolve them round by
    round (alternating more complex / simpler rewrites).

    Every second question draws on two chunks and is tagged multicontext;
    the rest are simple until evolved, then reasoning. A failed rewrite
    keeps the pre-round question.
    """
    if not index.chunks:
        raise ValueError("index must be non-empty")
    if n_base < 1:
        raise ValueError("n_base must be >= 1")
    rng = random.Random(seed)
    questions: list[GeneratedQuestion] = []
    for i in range(n_base):
        multicontext = i % 2 == 1 and len(index.chunks) > 1
        chunks = rng.sample(index.chunks, 2 if multicontext else 1)
        context = "\n---\n".join(c.text for c in chunks)
        text = gateway.ask(prompts.render("generate_questions", context=context),
                           tag="generate-questions").strip()
        questions.append(GeneratedQuestion(
            question=text,
            ground_truth=context,
            source_chunk_ids=[c.chunk_id for c in chunks],
            kind="multicontext" if multicontext else "simple",
        ))
    for round_no in range(n_rounds):
        direction = "more complex" if round_no % 2 == 0 else "simpler"
        for gq in questions:
            try:
                rewritten = gateway.ask(
                    prompts.render("evolve_question", direction=direction, question=gq.question),
                    tag="evolve-question").strip()
            except LabloopError as exc:
                logger.warning("evolution round %d failed for a question (%s); keeping it",
                               round_no + 1, exc)
                continue
            if rewritten:
                gq.question = rewritten
                if gq.kind == "simple":
                    gq.kind = "reasoning"
    return questions


# --------------------------------------------------------------------------
# suite runner

def load_records(path: str | Path) -> list[EvalRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(EvalRecord.from_dict(json.loads(line)))
    return records


def run_suite(records: Sequence[EvalRecord], gateway: Gateway, extractor=None,
              out_path: str | Path | None = None) -> list[dict]:
    """Score every record on every metric; one output row per (record, metric),
    plus aggregate means per question kind and topic."""
    rows: list[dict] = []
    sums: dict[tuple[str, str], list[float]] = defaultdict(list)
    for idx, record in enumerate(records):
        scores = evaluate_record(record, gateway, extractor)
        for metric, value in scores.items():
            rows.append({
                "record": idx, "question": record.question, "kind": record.kind,
                "topic": record.topic, "metric": metric, "value": round(value, 6),
            })
            if record.kind:
                sums[("kind:" + record.kind, metric)].append(value)
            if record.topic:
                sums[("topic:" + record.topic, metric)].append(value)
            sums[("all", metric)].append(value)
    for (group, metric), values in sorted(sums.items()):
        rows.append({
            "record": "mean", "question": "", "kind": group, "topic": "",
            "metric": metric, "value": round(sum(values) / len(values), 6),
        })
    if out_path is not None:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["record", "question", "kind", "topic",
                                                    "metric", "value"])
            writer.writeheader()
            writer.writerows(rows)
    return rows
