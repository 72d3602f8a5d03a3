"""Online connectors: literature search (arXiv, bioRxiv, PubMed), gene-set
enrichment, and Gene Ontology lookups, plus the pathway from search hits
into the notebook index.

Every live connector has a stub twin that replays canned responses, so the
whole test suite runs without network. Live connectors share a token-bucket
rate limiter out of politeness to the public APIs.
"""
from __future__ import annotations

import csv
import logging
import re
import threading
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import requests

from . import prompts
from .errors import ConnectorError, LabloopError, ParameterError
from .gateway import Gateway
from .index import Document, VectorIndex, ingest_document
from .session import Session, log_event

logger = logging.getLogger(__name__)

LITERATURE_SOURCES = ("arxiv", "biorxiv", "pubmed")
GO_ID_RE = re.compile(r"^GO:\d{7}$")


@dataclass
class LiteratureHit:
    source: str
    external_id: str
    title: str
    abstract: str
    link: str
    pdf_available: bool = True


@dataclass
class EnrichmentResult:
    library_name: str
    term: str
    p_value: float
    adjusted_p: float
    overlap_genes: list[str]


@dataclass
class GoTerm:
    go_id: str
    name: str
    namespace: str
    definition: str
    related_paper_refs: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not GO_ID_RE.match(self.go_id):
            raise ParameterError(f"malformed GO id {self.go_id!r}")
        if self.namespace not in ("biological_process", "molecular_function", "cellular_component"):
            raise ParameterError(f"unknown GO namespace {self.namespace!r}")


class RateLimiter:
    """Token bucket; safe under concurrent acquisition."""

    def __init__(self, per_sec: float = 1.0, burst: int = 1):
        self.per_sec = per_sec
        self.capacity = burst
        self.tokens = float(burst)
        self.updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.per_sec)
                self.updated = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.per_sec
            time.sleep(wait)


# --------------------------------------------------------------------------
# literature connectors

class StubLiteratureConnector:
    """Replays canned hits and texts; search is side-effect-free."""

    def __init__(self, source: str, hits: Sequence[LiteratureHit] = (),
                 texts: dict[str, str] | None = None):
        if source not in LITERATURE_SOURCES:
            raise ParameterError(f"unknown literature source {source!r}")
        self.source = source
        self.hits = list(hits)
        self.texts = texts or {}
        self.searches: list[tuple[str, int]] = []

    def search(self, term: str, limit: int) -> list[LiteratureHit]:
        self.searches.append((term, limit))
        matched = [h for h in self.hits
                   if term.lower() in (h.title + " " + h.abstract).lower()] or list(self.hits)
        return matched[:limit]

    def fetch(self, hit: LiteratureHit) -> str:
        if hit.external_id not in self.texts:
            raise ConnectorError(f"no text for {hit.external_id}", source=self.source)
        return self.texts[hit.external_id]


class ArxivConnector:
    source = "arxiv"
    endpoint = "http://export.arxiv.org/api/query"

    def __init__(self, limiter: RateLimiter | None = None, transport=None):
        self.limiter = limiter or RateLimiter()
        self.transport = transport or requests.get

    def search(self, term: str, limit: int) -> list[LiteratureHit]:
        self.limiter.acquire()
        try:
            resp = self.transport(self.endpoint, params={
                "search_query": f"all:{term}", "start": 0, "max_results": limit}, timeout=30)
            resp.raise_for_status()
            root = ET.fromstring(resp.text)
        except Exception as exc:
            raise ConnectorError(f"arxiv search failed: {exc}", source=self.source) from exc
        ns = {"atom": "http://www.w3.org/2005/Atom"}
        hits = []
        for entry in root.findall("atom:entry", ns):
            link = entry.findtext("atom:id", default="", namespaces=ns)
            hits.append(LiteratureHit(
                source=self.source,
                external_id=link.rsplit("/", 1)[-1],
                title=(entry.findtext("atom:title", default="", namespaces=ns) or "").strip(),
                abstract=(entry.findtext("atom:summary", default="", namespaces=ns) or "").strip(),
                link=link,
                pdf_available=True,
            ))
        return hits[:limit]

    def fetch(self, hit: LiteratureHit) -> str:
        self.limiter.acquire()
        url = f"https://arxiv.org/abs/{hit.external_id}"
        try:
            resp = self.transport(url, timeout=30)
            resp.raise_for_status()
            return resp.text
        except Exception as exc:
            raise ConnectorError(f"arxiv fetch failed: {exc}", source=self.source) from exc


class BiorxivConnector:
    source = "biorxiv"
    endpoint = "https://api.biorxiv.org/details/biorxiv"

    def __init__(self, limiter: RateLimiter | None = None, transport=None):
        self.limiter = limiter or RateLimiter()
        self.transport = transport or requests.get

    def search(self, term: str, limit: int) -> list[LiteratureHit]:
        self.limiter.acquire()
        try:
            resp = self.transport(f"{self.endpoint}/{term}/0", timeout=30)
            resp.raise_for_status()
            data = resp.json()
        except Exception as exc:
            raise ConnectorError(f"biorxiv search failed: {exc}", source=self.source) from exc
        hits = []
        for item in data.get("collection", [])[:limit]:
            doi = item.get("doi", "")
            hits.append(LiteratureHit(
                source=self.source, external_id=doi, title=item.get("title", ""),
                abstract=item.get("abstract", ""), link=f"https://doi.org/{doi}",
                pdf_available=True,
            ))
        return hits

    def fetch(self, hit: LiteratureHit) -> str:
        self.limiter.acquire()
        try:
            resp = self.transport(hit.link, timeout=30)
            resp.raise_for_status()
            return resp.text
        except Exception as exc:
            raise ConnectorError(f"biorxiv fetch failed: {exc}", source=self.source) from exc


class PubMedConnector:
    source = "pubmed"
    esearch = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/esearch.fcgi"
    efetch = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/efetch.fcgi"

    def __init__(self, limiter: RateLimiter | None = None, transport=None):
        self.limiter = limiter or RateLimiter()
        self.transport = transport or requests.get

    def search(self, term: str, limit: int) -> list[LiteratureHit]:
        self.limiter.acquire()
        try:
            resp = self.transport(self.esearch, params={
                "db": "pubmed", "term": term, "retmax": limit, "retmode": "json"}, timeout=30)
            resp.raise_for_status()
            ids = resp.json().get("esearchresult", {}).get("idlist", [])
        except Exception as exc:
            raise ConnectorError(f"pubmed search failed: {exc}", source=self.source) from exc
        hits = []
        for pmid in ids[:limit]:
            hits.append(LiteratureHit(
                source=self.source, external_id=pmid, title=f"PMID {pmid}", abstract="",
                link=f"https://pubmed.ncbi.nlm.nih.gov/{pmid}/",
                # Only publicly accessible full text gets fetched; the hit
                # still shows up in search results.
                pdf_available=False,
            ))
        return hits

    def fetch(self, hit: LiteratureHit) -> str:
        self.limiter.acquire()
        try:
            resp = self.transport(self.efetch, params={
                "db": "pubmed", "id": hit.external_id, "rettype": "abstract", "retmode": "text"},
                timeout=30)
            resp.raise_for_status()
            return resp.text
        except Exception as exc:
            raise ConnectorError(f"pubmed fetch failed: {exc}", source=self.source) from exc


# --------------------------------------------------------------------------
# operations

def derive_search_terms(user_query: str, chat_memory: Sequence[tuple[str, str]],
                        gateway: Gateway) -> tuple[str, list[str]]:
    """LLM picks the source and 1-10 search terms; unparseable output falls
    back to the raw query on arxiv."""
    memory_text = "\n".join(f"{role}: {text}" for role, text in chat_memory) or "(none)"
    response = gateway.ask(
        prompts.render("derive_search_terms", sources=", ".join(LITERATURE_SOURCES),
                       max_terms=10, memory=memory_text, query=user_query),
        tag="derive-search-terms")
    source = "arxiv"
    terms = []
    for line in response.splitlines():
        line = line.strip().strip("-*").strip()
        if not line:
            continue
        m = re.match(r"SOURCE:\s*(\w+)", line, re.IGNORECASE)
        if m:
            candidate = m.group(1).lower()
            if candidate in LITERATURE_SOURCES:
                source = candidate
            continue
        cleaned = re.sub(r"^\d+[.)]\s*", "", line).strip().strip('"')
        if cleaned:
            terms.append(cleaned)
    if not terms:
        logger.warning("search-term derivation produced nothing parseable; using the raw query")
        terms = [user_query]
    return source, terms[:10]


def search_literature(connector, terms: Sequence[str], limit: int,
                      session: Session | None = None) -> list[LiteratureHit]:
    """Search each term (<= limit hits per term), dedup by (source, external_id)."""
    if limit < 1:
        raise ValueError("limit must be >= 1")
    seen: set[tuple[str, str]] = set()
    hits: list[LiteratureHit] = []
    for term in terms:
        found = connector.search(term, limit)
        if session is not None:
            log_event(session, "db-query", {
                "source": connector.source, "term": term, "limit": limit,
                "hits": [h.external_id for h in found],
            })
        for hit in found:
            key = (hit.source, hit.external_id)
            if key not in seen:
                seen.add(key)
                hits.append(hit)
    return hits


def fetch_and_ingest(connector, hits: Sequence[LiteratureHit], index: VectorIndex,
                     gateway: Gateway, session: Session | None = None,
                     chunking_mode: str = "recursive") -> int:
    """Fetch every accessible hit and ingest it; per-hit failures never abort the batch."""
    if not hits:
        raise ValueError("hits must be non-empty")
    ingested = 0
    for hit in hits:
        doc_id = f"{hit.source}:{hit.external_id}"
        if not hit.pdf_available:
            logger.info("skipping %s: no public access", doc_id)
            if session is not None:
                log_event(session, "file-op", {"action": "skip-fetch", "doc_id": doc_id,
                                               "reason": "no public access"})
            continue
        if index.has_doc(doc_id):
            logger.info("skipping %s: already ingested", doc_id)
            continue
        try:
            text = connector.fetch(hit)
            document = Document(doc_id=doc_id, title=hit.title, source=hit.source, pages=[text])
            ingest_document(index, document, gateway, chunking_mode=chunking_mode, session=session)
            ingested += 1
        except LabloopError as exc:
            logger.warning("skipping %s: %s", doc_id, exc)
            if session is not None:
                log_event(session, "file-op", {"action": "skip-fetch", "doc_id": doc_id,
                                               "reason": str(exc)})
    return ingested


# --------------------------------------------------------------------------
# enrichment

class StubEnrichmentClient:
    """Canned enrichment tables keyed by library name."""

    def __init__(self, tables: dict[str, list[EnrichmentResult]]):
        self.tables = tables

    @property
    def libraries(self) -> list[str]:
        return sorted(self.tables)

    def enrich(self, genes: Sequence[str], library: str, limit: int) -> list[EnrichmentResult]:
        rows = []
        gene_set = set(genes)
        for row in self.tables[library][:limit]:
            overlap = [g for g in row.overlap_genes if g in gene_set]
            rows.append(EnrichmentResult(library_name=row.library_name, term=row.term,
                                         p_value=row.p_value, adjusted_p=row.adjusted_p,
                                         overlap_genes=overlap))
        return rows


class EnrichrClient:
    """Thin client for the public enrichment HTTP API."""

    base = "https://maayanlab.cloud/Enrichr"
    libraries = ["KEGG_2021_Human", "GO_Biological_Process_2023", "Reactome_2022"]

    def __init__(self, limiter: RateLimiter | None = None, transport=None):
        self.limiter = limiter or RateLimiter()
        self.transport = transport or requests

    def enrich(self, genes: Sequence[str], library: str, limit: int) -> list[EnrichmentResult]:
        self.limiter.acquire()
        try:
            add = self.transport.post(
                f"{self.base}/addList",
                files={"list": (None, "\n".join(genes)), "description": (None, "labloop")},
                timeout=30)
            add.raise_for_status()
            user_list = add.json()["userListId"]
            self.limiter.acquire()
            resp = self.transport.get(
                f"{self.base}/enrich",
                params={"userListId": user_list, "backgroundType": library}, timeout=30)
            resp.raise_for_status()
            rows = resp.json().get(library, [])
        except Exception as exc:
            raise ConnectorError(f"enrichment failed: {exc}", source="enrichr") from exc
        results = []
        for row in rows[:limit]:
            results.append(EnrichmentResult(
                library_name=library, term=row[1], p_value=float(row[2]),
                adjusted_p=float(row[6]), overlap_genes=list(row[5]),
            ))
        return results


def enrich_genes(gene_symbols: Sequence[str], libraries: Sequence[str], limit: int,
                 client, session: Session) -> list[EnrichmentResult]:
    """Run enrichment per library, write one CSV artifact per library."""
    if not gene_symbols:
        raise ValueError("gene_symbols must be non-empty")
    genes = [g.upper() for g in gene_symbols]
    known = list(client.libraries)
    for library in libraries:
        if library not in known:
            raise ParameterError(f"unknown enrichment library {library!r}; valid: {known}")
    all_results: list[EnrichmentResult] = []
    for library in libraries:
        rows = sorted(client.enrich(genes, library, limit), key=lambda r: r.adjusted_p)
        log_event(session, "db-query", {
            "source": "enrichr", "library": library, "genes": genes,
            "terms": [r.term for r in rows],
        })
        artifact = session.output_dir / f"enrichment-{re.sub(r'[^A-Za-z0-9]+', '_', library)}.csv"
        with open(artifact, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["library", "term", "p_value", "adjusted_p", "overlap_genes"])
            for r in rows:
                writer.writerow([r.library_name, r.term, r.p_value, r.adjusted_p,
                                 ";".join(r.overlap_genes)])
        log_event(session, "file-op", {"action": "write", "path": artifact.name})
        all_results.extend(rows)
    return all_results


# --------------------------------------------------------------------------
# gene ontology

class StubGoClient:
    def __init__(self, terms: Sequence[GoTerm], charts: dict[str, bytes] | None = None):
        self.terms = list(terms)
        self.charts = charts or {}

    def lookup(self, query: str) -> list[GoTerm]:
        if GO_ID_RE.match(query):
            return [t for t in self.terms if t.go_id == query]
        q = query.lower()
        return [t for t in self.terms if q in t.name.lower() or q in t.definition.lower()]

    def chart(self, go_id: str) -> bytes | None:
        return self.charts.get(go_id)


class GoClient:
    base = "https://api.geneontology.org/api/ontology/term"

    def __init__(self, limiter: RateLimiter | None = None, transport=None):
        self.limiter = limiter or RateLimiter()
        self.transport = transport or requests.get

    def lookup(self, query: str) -> list[GoTerm]:
        self.limiter.acquire()
        try:
            resp = self.transport(f"{self.base}/{query}", timeout=30)
            resp.raise_for_status()
            data = resp.json()
        except Exception as exc:
            raise ConnectorError(f"GO lookup failed: {exc}", source="gene-ontology") from exc
        namespace = (data.get("namespace") or "biological_process").replace(" ", "_")
        return [GoTerm(go_id=data["goid"], name=data.get("label", ""), namespace=namespace,
                       definition=data.get("definition", ""))]

    def chart(self, go_id: str) -> bytes | None:
        return None


def go_lookup(keyword_or_id: str, client, session: Session | None = None) -> list[GoTerm]:
    """Resolve a GO id or keyword to terms; GO-id syntax is checked up front."""
    if not keyword_or_id or not keyword_or_id.strip():
        raise ValueError("query must be non-empty")
    query = keyword_or_id.strip()
    if query.upper().startswith("GO:") and not GO_ID_RE.match(query):
        raise ParameterError(f"malformed GO id {query!r}; expected GO: followed by 7 digits")
    terms = client.lookup(query)
    if session is not None:
        log_event(session, "db-query", {"source": "gene-ontology", "term": query,
                                        "hits": [t.go_id for t in terms]})
        for term in terms:
            chart = client.chart(term.go_id)
            if chart:
                name = f"go-{term.go_id.replace(':', '-')}.png"
                (session.output_dir / name).write_bytes(chart)
                log_event(session, "file-op", {"action": "write", "path": name})
    return terms
