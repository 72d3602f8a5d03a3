"""The per-session runtime: routes each user input to a module, dispatches
it, and carries the shared state (index, route table, current plan,
connectors, script registry) that the modules need.

The service API and the CLI are thin shells over this class; the agent mesh
injects messages through the same entry point a human would use.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import library, planner, rag, report, router, software
from .config import Config
from .errors import LabloopError, ParameterError
from .gateway import Gateway, build_gateway
from .index import VectorIndex
from .planner import Plan, StepOutcome
from .rag import RetrievalConfig
from .session import Session, add_turn, create_session, log_event, restore_session, save_session

logger = logging.getLogger(__name__)

# Modules a plan instruction may dispatch to (planner itself excluded: plans
# do not nest).
PLAN_MODULES = ("lab-notebook", "digital-library", "software", "chat", "report")


@dataclass
class TurnResult:
    text: str
    route: str
    citations: list[tuple[str, str]] = field(default_factory=list)
    low_confidence: bool = False


class AgentRuntime:
    def __init__(self, config: Config, session: Session | None = None,
                 index: VectorIndex | None = None,
                 literature_connector=None,
                 enrichment_client=None,
                 go_client=None,
                 script_registry: dict[str, software.ScriptManifest] | None = None,
                 gateway: Gateway | None = None):
        self.config = config
        self.session = session or create_session(config)
        self.gateway = gateway or build_gateway(config, self.session)
        self.index = index if index is not None else VectorIndex()
        self.literature_connector = literature_connector
        self.enrichment_client = enrichment_client
        self.go_client = go_client
        self.script_registry = script_registry or {}
        self.plan: Plan | None = None
        self.plan_store = self.session.output_dir / "plans"
        if "route_table" in self.session.extras:
            self.route_table = router.table_from_dict(self.session.extras["route_table"])
        else:
            self.route_table = router.default_route_table(
                self.gateway, threshold=config.module_params("semantic-router")["threshold"])

    # ------------------------------------------------------------------
    # the chat turn

    def handle_message(self, text: str, force_route: str | None = None) -> TurnResult:
        session = self.session
        log_event(session, "user-input", {"text": text})
        add_turn(session, "user", text)
        if force_route is not None:
            route_name, score = router.force_route(self.route_table, text, force_route,
                                                   self.gateway, session)
        else:
            route_name, score = router.classify(self.route_table, self.gateway.embed_one(text))
            log_event(session, "route-decision", {"route": route_name, "score": score,
                                                  "forced": False, "prompt": text})
        result = self._dispatch(route_name, text)
        log_event(session, "output", {"text": result.text, "route": route_name})
        add_turn(session, "assistant", result.text)
        return result

    def _dispatch(self, route_name: str, text: str) -> TurnResult:
        handlers = {
            "lab-notebook": self._handle_notebook,
            "digital-library": self._handle_library,
            "software": self._handle_software,
            "planner": self._handle_planner,
            "report": self._handle_report,
            "chat": self._handle_chat,
        }
        handler = handlers.get(route_name, self._handle_chat)
        try:
            return handler(text)
        except LabloopError as exc:
            logger.warning("module %s failed: %s", route_name, exc)
            return TurnResult(text=f"The {route_name} module failed: {exc}", route=route_name)

    def _rag_config(self) -> RetrievalConfig:
        return RetrievalConfig.from_params(self.config.module_params("notebook-rag"))

    def _memory_window(self) -> Sequence[tuple[str, str]]:
        # Drop the turn just logged for this message; it is the query itself.
        return self.session.recent_memory()[:-1]

    def _handle_chat(self, text: str) -> TurnResult:
        messages: list[tuple[str, str]] = [("system", "You are a helpful research assistant.")]
        messages.extend(self._memory_window())
        messages.append(("user", text))
        from .gateway import ChatRequest
        answer = self.gateway.complete(ChatRequest(messages=messages, tag="chat"))
        return TurnResult(text=answer, route="chat")

    def _handle_notebook(self, text: str) -> TurnResult:
        result = rag.answer(self.index, text, self._rag_config(), self.gateway,
                            self.session, self._memory_window())
        return TurnResult(text=result.text, route="lab-notebook", citations=result.citations,
                          low_confidence=result.low_confidence)

    def _handle_library(self, text: str) -> TurnResult:
        if self.literature_connector is None:
            return TurnResult(text="No literature connector is configured for this session.",
                              route="digital-library")
        params = self.config.module_params("digital-library")
        source, terms = library.derive_search_terms(text, self._memory_window(), self.gateway)
        hits = library.search_literature(self.literature_connector, terms,
                                         params["search_limit"], self.session)
        if not hits:
            return TurnResult(text=f"No results on {source} for: {', '.join(terms)}",
                              route="digital-library")
        count = library.fetch_and_ingest(self.literature_connector, hits, self.index,
                                         self.gateway, self.session)
        listing = "\n".join(f"- {h.title or h.external_id} ({h.link})" for h in hits[:10])
        answer = (f"Searched {source} for {', '.join(terms)}; found {len(hits)} result(s), "
                  f"ingested {count} into the notebook database.\n{listing}")
        return TurnResult(text=answer, route="digital-library")

    def _handle_software(self, text: str) -> TurnResult:
        params = self.config.module_params("software-exec")
        manifest = software.select_script(self.script_registry, text, self.gateway)
        result = software.run_with_repair(
            manifest, text, self.session, self.gateway,
            max_attempts=params["max_attempts"], timeout=params["timeout"],
            matlab_runner=params["matlab_runner"])
        return TurnResult(text=result.summary, route="software")

    def _handle_planner(self, text: str) -> TurnResult:
        params = self.config.module_params("planner")
        saved = planner.load_saved_plans(self.plan_store)
        self.plan = planner.build_plan(text, PLAN_MODULES, saved, self.gateway,
                                       retries=params["build_retries"],
                                       default_max_visits=params["max_visits"])
        lines = "\n".join(f"{i.id}. [{i.module}] {i.prompt} -> {i.successors}"
                          for i in self.plan.instructions)
        return TurnResult(
            text=f"Drafted a {len(self.plan.instructions)}-step plan (awaiting approval):\n{lines}",
            route="planner")

    def _handle_report(self, text: str) -> TurnResult:
        template = self.config.module_params("report-writer")["template"]
        path = report.render_report(self.session, template, self.gateway)
        return TurnResult(text=f"Report written to {path.name}", route="report")

    # ------------------------------------------------------------------
    # plan control (HITL surface)

    def edit_plan(self, edits: Sequence[dict]) -> Plan:
        if self.plan is None:
            raise ParameterError("no plan to edit")
        self.plan = planner.review_plan(self.plan, edits, PLAN_MODULES)
        return self.plan

    def approve_plan(self) -> Plan:
        if self.plan is None:
            raise ParameterError("no plan to approve")
        self.plan = planner.approve(self.plan, self.plan_store, PLAN_MODULES)
        return self.plan

    def step_plan(self) -> StepOutcome:
        if self.plan is None:
            raise ParameterError("no plan to step")
        return planner.step(self.plan, self.execute_instruction, self.gateway, self.session)

    def run_plan(self) -> list[StepOutcome]:
        if self.plan is None:
            raise ParameterError("no plan to run")
        return planner.run_plan(self.plan, self.execute_instruction, self.gateway, self.session)

    def execute_instruction(self, module: str, prompt: str, plan: Plan) -> tuple[str, list[str]]:
        """Plan executor: dispatch one instruction to a module, no routing."""
        before = {p.name for p in self.session.output_dir.iterdir()}
        result = self._dispatch(module, prompt)
        created = sorted({p.name for p in self.session.output_dir.iterdir()} - before)
        return result.text, created

    # ------------------------------------------------------------------
    # persistence

    def save(self) -> Path:
        self.session.extras["route_table"] = router.table_to_dict(self.route_table)
        return save_session(self.session)

    @classmethod
    def restore(cls, path: str | Path, **kwargs) -> "AgentRuntime":
        session = restore_session(path)
        return cls(config=session.config, session=session, **kwargs)
