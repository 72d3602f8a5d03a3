"""Configuration: defaults for every parameter, JSON overrides for the rest.

A supplemental config (file or dict) overrides only the keys it names; every
other key keeps its default. Module-specific parameters live under
``module_overrides`` keyed by module name and are merged the same way.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import SetupError

PROVIDERS = ("remote-endpoint", "local", "mock")

# Per-module parameter defaults. Everything here can be overridden per module
# via Config.module_overrides.
MODULE_DEFAULTS: dict[str, dict[str, Any]] = {
    "core-session": {
        "memory_window": 20,          # turns kept in-prompt; full transcript stays on disk
    },
    "llm-gateway": {
        "retries": 3,
        "backoff_base": 0.25,         # seconds, doubled per retry
        "timeout": 60.0,
        "mock_context_limit": 16000,  # characters across all messages
        "mock_dim": 64,
        "mock_script": [],            # [matcher, response] pairs for scripted mock runs
        "endpoint_env": "LABLOOP_LLM_ENDPOINT",
        "api_key_env": "LABLOOP_LLM_API_KEY",
        "model": "default",
        "embedding_endpoint_env": "LABLOOP_EMBED_ENDPOINT",
        "embedding_model": "default",
    },
    "notebook-index": {
        "max_chunk_size": 1000,
        "chunk_overlap": 200,
        "semantic_threshold": 0.8,
        "separators": ["\n\n", ". ", "\n", " "],
        "reference_gap": 0.2,         # relative gap below which densities count as unimodal
    },
    "notebook-rag": {
        "mode": "mmr",
        "k_retrieve": 10,
        "k_final": 5,
        "mmr_lambda": 0.5,
        "multi_query": 3,
        "compress": False,
        "rerank": "none",
        "damping": 0.85,
    },
    "digital-library": {
        "rate_limit_per_sec": 1.0,
        "search_limit": 10,
    },
    "software-exec": {
        "max_attempts": 3,
        "timeout": 300.0,
        "allow_freeform": False,
        "matlab_runner": ["matlab", "-batch"],
    },
    "semantic-router": {
        "threshold": 0.75,
    },
    "planner": {
        "max_visits": 5,
        "build_retries": 3,
    },
    "agent-mesh": {
        "collect_timeout": 600.0,
    },
    "rag-eval": {
        "n_questions": 3,             # generated questions per answer for relevance
    },
    "report-writer": {
        "template": "standard",
    },
    "service-api": {
        "host": "127.0.0.1",
        "port": 8320,
    },
}


@dataclass
class Config:
    output_directory_root: str = "output"
    llm_provider: str = "mock"
    embedding_provider: str = "mock"
    debug: bool = False
    module_overrides: dict[str, dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self):
        if self.llm_provider not in PROVIDERS:
            raise SetupError(f"unknown llm_provider {self.llm_provider!r}; expected one of {PROVIDERS}")
        if self.embedding_provider not in PROVIDERS:
            raise SetupError(f"unknown embedding_provider {self.embedding_provider!r}; expected one of {PROVIDERS}")
        for name in self.module_overrides:
            if name not in MODULE_DEFAULTS:
                raise SetupError(f"module_overrides names unknown module {name!r}")

    def module_params(self, module: str) -> dict[str, Any]:
        """Defaults for `module` merged with any overrides naming it."""
        if module not in MODULE_DEFAULTS:
            raise SetupError(f"unknown module {module!r}")
        params = copy.deepcopy(MODULE_DEFAULTS[module])
        params.update(self.module_overrides.get(module, {}))
        return params

    def to_dict(self) -> dict[str, Any]:
        return {
            "output_directory_root": self.output_directory_root,
            "llm_provider": self.llm_provider,
            "embedding_provider": self.embedding_provider,
            "debug": self.debug,
            "module_overrides": copy.deepcopy(self.module_overrides),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Config":
        known = {"output_directory_root", "llm_provider", "embedding_provider", "debug", "module_overrides"}
        unknown = set(data) - known
        if unknown:
            raise SetupError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def validate_root(self) -> Path:
        """The output root must exist and be writable before a session starts."""
        root = Path(self.output_directory_root)
        if not root.is_dir():
            raise SetupError(f"output_directory_root {root} does not exist")
        if not os.access(root, os.W_OK):
            raise SetupError(f"output_directory_root {root} is not writable")
        return root


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> Config:
    """Build a Config from defaults, then a JSON file, then an explicit dict.

    Later sources override only the keys they name.
    """
    data: dict[str, Any] = {}
    if path is not None:
        raw = Path(path).read_text(encoding="utf-8")
        try:
            file_data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SetupError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(file_data, dict):
            raise SetupError(f"config file {path} must hold a JSON object")
        data.update(file_data)
    if overrides:
        for key, value in overrides.items():
            if key == "module_overrides" and isinstance(data.get(key), dict) and isinstance(value, dict):
                merged = copy.deepcopy(data[key])
                for mod, params in value.items():
                    merged.setdefault(mod, {}).update(params)
                data[key] = merged
            else:
                data[key] = value
    return Config.from_dict(data)
