"""Text chunking: recursive separator-based splitting, semantic merging of
adjacent sentences, and separator-density filtering of reference sections.

Recursive chunks are (start, end) spans into the source text. Separators
stay attached to the piece they close, so with overlap 0 the spans partition
the text exactly and the document reassembles from its chunks.
"""
from __future__ import annotations

import re
from typing import Callable, Sequence

from .gateway import EmbeddingVector, cosine

Span = tuple[int, int]

DEFAULT_SEPARATORS = ("\n\n", ". ", "\n", " ")
# Punctuation profile used for reference-section detection: citation lists
# are dense in periods, commas, and line breaks.
DENSITY_SEPARATORS = (".", ",", ";", "\n")

_SENTENCE_RE = re.compile(r"[^.!?\n]*[.!?]+[\"')\]]*\s*|[^.!?\n]+\n?|\n")


def chunk_recursive(text: str, max_size: int, overlap: int = 0,
                    separators: Sequence[str] | None = None) -> list[Span]:
    """Split `text` into spans of at most `max_size` chars.

    Splits happen at the highest-priority separator present; pieces that are
    still too large fall through to lower-priority separators, and to a hard
    character split as the last resort. Adjacent small pieces are merged
    back up to `max_size`. Each span after the first may reach back into its
    predecessor by up to `overlap` chars.
    """
    if max_size <= overlap or overlap < 0:
        raise ValueError("require max_size > overlap >= 0")
    separators = tuple(separators) if separators else DEFAULT_SEPARATORS
    if not separators:
        raise ValueError("separators must be non-empty")
    if not text:
        return []
    parts = _split(text, 0, len(text), max_size, separators)
    if overlap == 0:
        return parts
    widened: list[Span] = [parts[0]]
    for start, end in parts[1:]:
        back = min(overlap, max_size - (end - start), start)
        widened.append((start - back, end))
    return widened


def _split(text: str, lo: int, hi: int, max_size: int, separators: Sequence[str]) -> list[Span]:
    if hi - lo <= max_size:
        return [(lo, hi)]
    for si, sep in enumerate(separators):
        bounds = []
        idx = text.find(sep, lo, hi)
        while idx != -1:
            end = idx + len(sep)
            if end >= hi:
                break
            bounds.append(end)
            idx = text.find(sep, end, hi)
        if not bounds:
            continue
        segments: list[Span] = []
        prev = lo
        for b in bounds:
            segments.append((prev, b))
            prev = b
        segments.append((prev, hi))
        pieces: list[Span] = []
        for s, e in segments:
            if e - s <= max_size:
                pieces.append((s, e))
            else:
                pieces.extend(_split(text, s, e, max_size, separators[si + 1:]))
        merged: list[Span] = []
        for s, e in pieces:
            if merged and e - merged[-1][0] <= max_size:
                merged[-1] = (merged[-1][0], e)
            else:
                merged.append((s, e))
        return merged
    # No separator in range: hard split.
    return [(s, min(s + max_size, hi)) for s in range(lo, hi, max_size)]


def split_sentences(text: str) -> list[Span]:
    """Spans of sentence-ish units (terminator-delimited, newline-aware)."""
    spans = []
    for m in _SENTENCE_RE.finditer(text):
        if m.group().strip():
            spans.append((m.start(), m.end()))
    return spans


def chunk_semantic(sentences: Sequence[str], similarity_threshold: float,
                   embed: Callable[[Sequence[str]], list[EmbeddingVector]]) -> list[Span]:
    """Group adjacent sentences whose embeddings agree at the threshold.

    Returns contiguous [i, j) index ranges over the sentence list, in order.
    """
    if not 0 < similarity_threshold <= 1:
        raise ValueError("similarity_threshold must be in (0, 1]")
    if not sentences:
        return []
    vectors = embed(list(sentences))
    groups: list[Span] = []
    start = 0
    for i in range(1, len(sentences)):
        if cosine(vectors[i - 1], vectors[i]) >= similarity_threshold:
            continue
        groups.append((start, i))
        start = i
    groups.append((start, len(sentences)))
    return groups


def separator_density(text: str, separators: Sequence[str] = DENSITY_SEPARATORS) -> float:
    """Separator occurrences per character; 0 for empty text."""
    if not text:
        return 0.0
    return sum(text.count(sep) for sep in separators) / len(text)


def split_densities(densities: Sequence[float]) -> tuple[float, float, float] | None:
    """Exact 1-D 2-means over density values.

    Returns (low mean, high mean, threshold between the clusters), or None
    when there are under two values or no nonzero spread. The threshold is
    the midpoint between the closest members of the two clusters.
    """
    values = sorted(densities)
    n = len(values)
    if n < 2 or values[0] == values[-1]:
        return None
    best = None
    for cut in range(1, n):
        lo, hi = values[:cut], values[cut:]
        m_lo = sum(lo) / len(lo)
        m_hi = sum(hi) / len(hi)
        sse = sum((v - m_lo) ** 2 for v in lo) + sum((v - m_hi) ** 2 for v in hi)
        if best is None or sse < best[0]:
            best = (sse, m_lo, m_hi, (lo[-1] + hi[0]) / 2)
    _, m_lo, m_hi, threshold = best
    return m_lo, m_hi, threshold


def filter_references(chunks: Sequence, relative_gap: float = 0.2) -> tuple[list, list]:
    """Drop chunks in the high-density mode of a bimodal density profile.

    Chunks must carry `separator_density`. When the 2-means cluster means sit
    within `relative_gap` of each other the profile counts as unimodal and
    nothing is dropped.
    """
    chunks = list(chunks)
    if not chunks:
        return [], []
    split = split_densities([c.separator_density for c in chunks])
    if split is None:
        return chunks, []
    m_lo, m_hi, threshold = split
    if m_hi <= 0 or (m_hi - m_lo) / m_hi < relative_gap:
        return chunks, []
    kept = [c for c in chunks if c.separator_density <= threshold]
    dropped = [c for c in chunks if c.separator_density > threshold]
    return kept, dropped
