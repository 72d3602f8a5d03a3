"""The notebook vector index: documents in, embedded chunks out, exact
top-k cosine search over the result.

Persisted as a directory of `catalog.json` + `chunks.jsonl` + `vectors.bin`
(float32 rows aligned with the jsonl order).
"""
from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import chunking
from .errors import DuplicateDocumentError, ShapeMismatchError
from .gateway import EmbeddingVector, Gateway
from .session import Session, log_event, utc_now

DOC_SOURCES = ("local-file", "arxiv", "biorxiv", "pubmed")


@dataclass
class Document:
    doc_id: str
    title: str
    source: str
    pages: list[str]
    ingested_at: str = field(default_factory=utc_now)

    def __post_init__(self):
        if self.source not in DOC_SOURCES:
            raise ValueError(f"unknown document source {self.source!r}")
        if not self.pages:
            raise ValueError("document needs at least one page")

    @property
    def text(self) -> str:
        return "".join(self.pages)


@dataclass
class Chunk:
    chunk_id: str
    doc_id: str
    text: str
    span: tuple[int, int]
    separator_density: float
    page: int = 0
    embedding: EmbeddingVector | None = None


def make_chunk_id(doc_id: str, span: tuple[int, int]) -> str:
    return hashlib.sha1(f"{doc_id}:{span[0]}:{span[1]}".encode("utf-8")).hexdigest()[:12]


class VectorIndex:
    """Exact (linear scan) vector index; empty is valid and queryable."""

    def __init__(self, dim: int | None = None):
        self.dim = dim
        self.chunks: list[Chunk] = []
        self.docs: dict[str, dict] = {}
        self._lock = threading.Lock()
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.chunks)

    def has_doc(self, doc_id: str) -> bool:
        return doc_id in self.docs

    def insert(self, chunks: Sequence[Chunk], doc: Document) -> None:
        """Insert a document's chunks atomically."""
        with self._lock:
            if doc.doc_id in self.docs:
                raise DuplicateDocumentError(f"doc_id {doc.doc_id!r} already ingested")
            for chunk in chunks:
                if chunk.embedding is None:
                    raise ValueError(f"chunk {chunk.chunk_id} has no embedding")
                if self.dim is None:
                    self.dim = chunk.embedding.dim
                elif chunk.embedding.dim != self.dim:
                    raise ShapeMismatchError(f"chunk dim {chunk.embedding.dim} != index dim {self.dim}")
            self.docs[doc.doc_id] = {
                "doc_id": doc.doc_id,
                "title": doc.title,
                "source": doc.source,
                "pages": len(doc.pages),
                "ingested_at": doc.ingested_at,
            }
            self.chunks.extend(chunks)
            self._matrix = None

    def matrix(self) -> np.ndarray:
        with self._lock:
            if self._matrix is None:
                if not self.chunks:
                    self._matrix = np.zeros((0, self.dim or 0))
                else:
                    rows = np.stack([c.embedding.values for c in self.chunks])
                    norms = np.linalg.norm(rows, axis=1, keepdims=True)
                    self._matrix = rows / norms
            return self._matrix


def search(index: VectorIndex, query_embedding: EmbeddingVector, k: int) -> list[tuple[Chunk, float]]:
    """Top-k chunks by cosine, scores non-increasing, ties by chunk_id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.chunks:
        return []
    if index.dim is not None and query_embedding.dim != index.dim:
        raise ShapeMismatchError(f"query dim {query_embedding.dim} != index dim {index.dim}")
    q = query_embedding.values / np.linalg.norm(query_embedding.values)
    scores = index.matrix() @ q
    order = sorted(range(len(index.chunks)), key=lambda i: (-scores[i], index.chunks[i].chunk_id))
    return [(index.chunks[i], float(scores[i])) for i in order[:k]]


def build_chunks(document: Document, mode: str, embed, params: dict) -> tuple[list[Chunk], list[Chunk]]:
    """Chunk, density-filter, and embed a document. Returns (kept, dropped)."""
    text = document.text
    if mode == "recursive":
        spans = chunking.chunk_recursive(
            text, params["max_chunk_size"], params["chunk_overlap"], params["separators"])
    elif mode == "semantic":
        sentence_spans = chunking.split_sentences(text)
        sentences = [text[s:e] for s, e in sentence_spans]
        groups = chunking.chunk_semantic(sentences, params["semantic_threshold"], embed)
        spans = [(sentence_spans[i][0], sentence_spans[j - 1][1]) for i, j in groups]
    else:
        raise ValueError(f"unknown chunking mode {mode!r}")

    page_starts = []
    offset = 0
    for page in document.pages:
        page_starts.append(offset)
        offset += len(page)

    chunks = []
    for span in spans:
        chunk_text = text[span[0]:span[1]]
        if not chunk_text.strip():
            continue
        page = max(i for i, start in enumerate(page_starts) if start <= span[0])
        chunks.append(Chunk(
            chunk_id=make_chunk_id(document.doc_id, span),
            doc_id=document.doc_id,
            text=chunk_text,
            span=span,
            separator_density=chunking.separator_density(chunk_text),
            page=page,
        ))
    kept, dropped = chunking.filter_references(chunks, params.get("reference_gap", 0.2))
    if kept:
        vectors = embed([c.text for c in kept])
        for chunk, vec in zip(kept, vectors):
            chunk.embedding = vec
    return kept, dropped


def ingest_document(index: VectorIndex, document: Document, gateway: Gateway,
                    chunking_mode: str = "recursive", session: Session | None = None,
                    params: dict | None = None) -> int:
    """Chunk + filter + embed + insert one document; returns chunks added."""
    if index.has_doc(document.doc_id):
        raise DuplicateDocumentError(f"doc_id {document.doc_id!r} already ingested")
    if params is None:
        cfg = session.config if session is not None else None
        params = cfg.module_params("notebook-index") if cfg else {
            "max_chunk_size": 1000, "chunk_overlap": 200,
            "semantic_threshold": 0.8, "separators": list(chunking.DEFAULT_SEPARATORS),
            "reference_gap": 0.2,
        }
    kept, dropped = build_chunks(document, chunking_mode, gateway.embed, params)
    index.insert(kept, document)
    if session is not None:
        log_event(session, "retrieval", {
            "action": "ingest",
            "doc_id": document.doc_id,
            "source": document.source,
            "chunks_added": len(kept),
            "chunks_dropped_as_references": len(dropped),
            "chunking": chunking_mode,
        })
    return len(kept)


# --------------------------------------------------------------------------
# persistence

def save_index(index: VectorIndex, dirpath: str | Path) -> Path:
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    catalog = {"dim": index.dim, "docs": index.docs}
    (dirpath / "catalog.json").write_text(json.dumps(catalog, indent=2, sort_keys=True), encoding="utf-8")
    with open(dirpath / "chunks.jsonl", "w", encoding="utf-8") as fh:
        for chunk in index.chunks:
            fh.write(json.dumps({
                "chunk_id": chunk.chunk_id,
                "doc_id": chunk.doc_id,
                "text": chunk.text,
                "span": list(chunk.span),
                "separator_density": chunk.separator_density,
                "page": chunk.page,
            }, sort_keys=True) + "\n")
    if index.chunks:
        rows = np.stack([c.embedding.values for c in index.chunks]).astype(np.float32)
    else:
        rows = np.zeros((0, index.dim or 0), dtype=np.float32)
    rows.tofile(dirpath / "vectors.bin")
    return dirpath


def load_index(dirpath: str | Path) -> VectorIndex:
    dirpath = Path(dirpath)
    catalog = json.loads((dirpath / "catalog.json").read_text(encoding="utf-8"))
    index = VectorIndex(dim=catalog["dim"])
    index.docs = catalog["docs"]
    records = []
    with open(dirpath / "chunks.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    if records:
        flat = np.fromfile(dirpath / "vectors.bin", dtype=np.float32)
        rows = flat.reshape(len(records), index.dim or (flat.size // len(records)))
        for rec, row in zip(records, rows):
            index.chunks.append(Chunk(
                chunk_id=rec["chunk_id"],
                doc_id=rec["doc_id"],
                text=rec["text"],
                span=tuple(rec["span"]),
                separator_density=rec["separator_density"],
                page=rec.get("page", 0),
                embedding=EmbeddingVector(row.astype(np.float64)),
            ))
    return index
