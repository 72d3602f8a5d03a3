"""labloop: provider-agnostic agentic RAG orchestration.

Semantic routing of queries to modules, an enhanced retrieval pipeline
(MMR, multi-query, contextual compression, PageRank reranking), whitelisted
code execution with a repair loop, online literature connectors, planner
workflows with human approval, agent meshes, and a built-in RAG evaluation
suite -- all runnable offline against deterministic mock providers.
"""

__version__ = "0.1.0"

from .config import Config, load_config
from .session import Session, create_session, log_event, restore_session, save_session

__all__ = [
    "Config",
    "load_config",
    "Session",
    "create_session",
    "log_event",
    "save_session",
    "restore_session",
    "__version__",
]
