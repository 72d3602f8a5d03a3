"""Semantic routing of user prompts to modules.

Each route holds exemplar prompts with their embeddings; a prompt goes to
the route whose best exemplar scores highest, or to the default route when
no route clears its threshold. Feedback appends the prompt to the right
route's exemplars (and removes it from wrong ones), so the same prompt is
guaranteed to route correctly afterwards.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParameterError
from .gateway import EmbeddingVector, Gateway, cosine
from .session import Session, log_event

DEFAULT_THRESHOLD = 0.75


@dataclass
class Route:
    name: str
    exemplars: list[tuple[str, EmbeddingVector]]
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if not self.exemplars:
            raise ValueError(f"route {self.name!r} needs at least one exemplar")
        if not 0 <= self.threshold <= 1:
            raise ValueError("threshold must be in [0, 1]")

    def best_score(self, prompt_embedding: EmbeddingVector) -> float:
        return max(cosine(vec, prompt_embedding) for _, vec in self.exemplars)


@dataclass
class RouteTable:
    routes: list[Route]
    default_route: str
    version: int = 0

    def __post_init__(self):
        names = [r.name for r in self.routes]
        if len(set(names)) != len(names):
            raise ValueError("route names must be unique")
        if self.default_route not in names:
            raise ValueError(f"default route {self.default_route!r} is not registered")

    def get(self, name: str) -> Route:
        for route in self.routes:
            if route.name == name:
                return route
        raise ParameterError(f"unknown route {name!r}; known: {[r.name for r in self.routes]}")

    def names(self) -> list[str]:
        return [r.name for r in self.routes]


def classify(table: RouteTable, prompt_embedding: EmbeddingVector) -> tuple[str, float]:
    """Winner = argmax over routes of max exemplar cosine; threshold miss
    falls back to the default route. Ties break by route name."""
    best_name, best_score = None, None
    for route in sorted(table.routes, key=lambda r: r.name):
        score = route.best_score(prompt_embedding)
        if best_score is None or score > best_score:
            best_name, best_score = route.name, score
    if best_score < table.get(best_name).threshold:
        return table.default_route, best_score
    return best_name, best_score


def feedback(table: RouteTable, prompt: str, correct_route: str, gateway: Gateway) -> RouteTable:
    """Record `prompt` as an exemplar of `correct_route` (dedup by text).

    The prompt is removed from other routes so a re-classification of the
    exact prompt is guaranteed to land on `correct_route`.
    """
    target = table.get(correct_route)
    for route in table.routes:
        if route is target:
            continue
        survivors = [(t, v) for t, v in route.exemplars if t != prompt]
        if survivors:
            route.exemplars = survivors
    if all(text != prompt for text, _ in target.exemplars):
        target.exemplars.append((prompt, gateway.embed_one(prompt)))
    table.version += 1
    return table


def force_route(table: RouteTable, prompt: str, route: str, gateway: Gateway,
                session: Session | None = None) -> tuple[str, float]:
    """Bypass classification; the forced choice counts as implicit feedback."""
    table.get(route)
    feedback(table, prompt, route, gateway)
    if session is not None:
        log_event(session, "route-decision", {"route": route, "forced": True, "prompt": prompt})
    return route, 1.0


# --------------------------------------------------------------------------
# persistence

def table_to_dict(table: RouteTable) -> dict:
    return {
        "default_route": table.default_route,
        "version": table.version,
        "routes": [
            {
                "name": r.name,
                "threshold": r.threshold,
                "exemplars": [{"text": t, "embedding": v.tolist()} for t, v in r.exemplars],
            }
            for r in table.routes
        ],
    }


def table_from_dict(data: dict) -> RouteTable:
    routes = [
        Route(
            name=r["name"],
            threshold=r["threshold"],
            exemplars=[(e["text"], EmbeddingVector(e["embedding"])) for e in r["exemplars"]],
        )
        for r in data["routes"]
    ]
    return RouteTable(routes=routes, default_route=data["default_route"],
                      version=data.get("version", 0))


def save_route_table(table: RouteTable, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(table_to_dict(table), indent=2, sort_keys=True), encoding="utf-8")
    return path


def load_route_table(path: str | Path) -> RouteTable:
    return table_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# Seed exemplars for the built-in modules. The chat route doubles as the
# fallback for prompts nothing else claims.
SEED_EXEMPLARS: dict[str, list[str]] = {
    "lab-notebook": [
        "what does the literature in my database say about chromatin structure",
        "answer from the documents: how does the protocol prepare samples",
        "according to my papers, what is known about this pathway",
    ],
    "digital-library": [
        "search arxiv for recent papers on foundation models",
        "find new literature about gene regulation on pubmed",
        "look up enrichment for these genes in enrichr",
        "define the gene ontology term GO:0006260",
    ],
    "software": [
        "run the clustering script on my data",
        "execute the embedding pipeline and save the figures",
        "use the analysis code to process the counts matrix",
    ],
    "planner": [
        "build a multi step plan to research this question",
        "coordinate several modules to answer this",
        "first download papers, then answer, then check the answer",
    ],
    "report": [
        "write a report of everything done this session",
        "generate documentation summarizing the analysis",
    ],
    "chat": [
        "hello there",
        "what can you do",
        "thanks, that helps",
    ],
}


def default_route_table(gateway: Gateway, threshold: float = DEFAULT_THRESHOLD) -> RouteTable:
    routes = []
    for name, texts in SEED_EXEMPLARS.items():
        vectors = gateway.embed(texts)
        routes.append(Route(name=name, exemplars=list(zip(texts, vectors)), threshold=threshold))
    return RouteTable(routes=routes, default_route="chat")
