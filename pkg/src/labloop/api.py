"""HTTP/JSON facade over the agent runtime: sessions, chat, live event
tailing, plan review/approval/stepping, artifacts, router feedback, and
eval runs.

Handlers stay thin: every behavior is a call into a core module, and every
error carries a machine-readable code string. Artifact serving never
escapes the session output directory.
"""
from __future__ import annotations

import copy
import threading
import time
from pathlib import Path
from typing import Any, Callable

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse

from . import evaluation, planner, router
from .agent import AgentRuntime
from .config import Config
from .errors import (ApprovalError, LabloopError, ParameterError, PlanEditError,
                     PlanningError, SetupError)
from .gateway import build_gateway


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


RuntimeFactory = Callable[[Config], AgentRuntime]


class ServerState:
    def __init__(self, base_config: Config, runtime_factory: RuntimeFactory | None = None):
        self.base_config = base_config
        self.runtime_factory = runtime_factory or (lambda cfg: AgentRuntime(cfg))
        self.runtimes: dict[str, AgentRuntime] = {}
        self.locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def create(self, overrides: dict[str, Any]) -> AgentRuntime:
        if overrides:
            base = self.base_config.to_dict()
            merged_mods = copy.deepcopy(base.get("module_overrides", {}))
            for mod, params in (overrides.get("module_overrides") or {}).items():
                merged_mods.setdefault(mod, {}).update(params)
            merged = {**base, **overrides, "module_overrides": merged_mods}
            config = Config.from_dict(merged)
        else:
            config = self.base_config
        runtime = self.runtime_factory(config)
        with self._registry_lock:
            self.runtimes[runtime.session.id] = runtime
            self.locks[runtime.session.id] = threading.Lock()
        return runtime

    def get(self, session_id: str) -> AgentRuntime:
        runtime = self.runtimes.get(session_id)
        if runtime is None:
            raise ApiError(404, "session-not-found", f"no session {session_id!r}")
        return runtime

    def lock(self, session_id: str) -> threading.Lock:
        self.get(session_id)
        return self.locks[session_id]


def create_app(config: Config | None = None, state: ServerState | None = None) -> FastAPI:
    state = state or ServerState(config or Config())
    app = FastAPI(title="labloop", version="0.1.0")
    app.state.server = state

    @app.exception_handler(ApiError)
    async def api_error_handler(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    @app.exception_handler(LabloopError)
    async def core_error_handler(_request: Request, exc: LabloopError):
        mapping = {
            PlanEditError: (409, "plan-invalid"),
            ApprovalError: (409, "plan-invalid"),
            PlanningError: (502, "planning-failed"),
            ParameterError: (400, "bad-parameter"),
            SetupError: (400, "bad-config"),
        }
        status, code = mapping.get(type(exc), (500, "internal-error"))
        return JSONResponse(status_code=status, content={"code": code, "message": str(exc)})

    # -- sessions ----------------------------------------------------------

    @app.post("/sessions")
    def create_session_endpoint(payload: dict | None = None):
        overrides = (payload or {}).get("config", {})
        runtime = state.create(overrides)
        return {"session_id": runtime.session.id,
                "output_dir": str(runtime.session.output_dir)}

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, payload: dict):
        text = payload.get("text", "")
        if not text:
            raise ApiError(400, "bad-parameter", "message text is required")
        runtime = state.get(session_id)
        with state.lock(session_id):
            result = runtime.handle_message(text, force_route=payload.get("force_route"))
        return {
            "answer": result.text,
            "route": result.route,
            "citations": [{"doc_id": d, "chunk_id": c} for d, c in result.citations],
            "low_confidence": result.low_confidence,
        }

    @app.get("/sessions/{session_id}/events")
    def get_events(session_id: str, since: int = 0, wait_ms: int = 0):
        runtime = state.get(session_id)
        deadline = time.monotonic() + wait_ms / 1000.0
        while True:
            events = [e.to_dict() for e in runtime.session.log if e.seq > since]
            if events or time.monotonic() >= deadline:
                return {"events": events, "latest": runtime.session.seq}
            time.sleep(0.05)

    # -- plans -------------------------------------------------------------

    def _plan_or_404(runtime: AgentRuntime) -> planner.Plan:
        if runtime.plan is None:
            raise ApiError(404, "plan-missing", "this session has no plan")
        return runtime.plan

    @app.get("/sessions/{session_id}/plan")
    def get_plan(session_id: str):
        runtime = state.get(session_id)
        return planner.plan_to_dict(_plan_or_404(runtime))

    @app.put("/sessions/{session_id}/plan")
    def put_plan(session_id: str, payload: dict):
        runtime = state.get(session_id)
        _plan_or_404(runtime)
        with state.lock(session_id):
            plan = runtime.edit_plan(payload.get("edits", []))
        return planner.plan_to_dict(plan)

    @app.post("/sessions/{session_id}/plan/approve")
    def approve_plan(session_id: str):
        runtime = state.get(session_id)
        _plan_or_404(runtime)
        with state.lock(session_id):
            plan = runtime.approve_plan()
        return planner.plan_to_dict(plan)

    @app.post("/sessions/{session_id}/plan/step")
    def step_plan(session_id: str):
        runtime = state.get(session_id)
        _plan_or_404(runtime)
        with state.lock(session_id):
            outcome = runtime.step_plan()
        return {
            "outcome": {
                "instruction_id": outcome.instruction_id,
                "response": outcome.response,
                "artifacts": outcome.artifacts,
                "chosen_next": outcome.chosen_next,
                "loop_guard": outcome.loop_guard,
            },
            "plan": planner.plan_to_dict(runtime.plan),
        }

    @app.post("/sessions/{session_id}/plan/run")
    def run_plan(session_id: str):
        runtime = state.get(session_id)
        _plan_or_404(runtime)
        with state.lock(session_id):
            outcomes = runtime.run_plan()
        return {"steps": len(outcomes), "plan": planner.plan_to_dict(runtime.plan)}

    # -- artifacts ----------------------------------------------------------

    @app.get("/sessions/{session_id}/artifacts")
    def list_artifacts(session_id: str):
        runtime = state.get(session_id)
        out = runtime.session.output_dir
        files = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file())
        return {"files": files}

    @app.get("/sessions/{session_id}/artifacts/{artifact_path:path}")
    def get_artifact(session_id: str, artifact_path: str):
        runtime = state.get(session_id)
        out = runtime.session.output_dir.resolve()
        target = (out / artifact_path).resolve()
        if not target.is_relative_to(out):
            raise ApiError(403, "path-forbidden", "artifact path escapes the session directory")
        if not target.is_file():
            raise ApiError(404, "artifact-not-found", f"no artifact {artifact_path!r}")
        return FileResponse(target)

    # -- router feedback -----------------------------------------------------

    @app.post("/router/feedback")
    def router_feedback(payload: dict):
        prompt = payload.get("prompt", "")
        route = payload.get("route", "")
        if not prompt or not route:
            raise ApiError(400, "bad-parameter", "prompt and route are required")
        session_id = payload.get("session_id")
        if session_id is None:
            if len(state.runtimes) != 1:
                raise ApiError(400, "bad-parameter",
                               "session_id required when several sessions exist")
            session_id = next(iter(state.runtimes))
        runtime = state.get(session_id)
        with state.lock(session_id):
            table = router.feedback(runtime.route_table, prompt, route, runtime.gateway)
            runtime.save()
        return {"version": table.version}

    # -- eval ----------------------------------------------------------------

    @app.post("/eval/run")
    def eval_run(payload: dict):
        dataset = payload.get("dataset", "")
        if not dataset or not Path(dataset).is_file():
            raise ApiError(400, "bad-parameter", f"dataset {dataset!r} not found")
        records = evaluation.load_records(dataset)
        gateway = build_gateway(state.base_config)
        out = payload.get("out") or str(Path(dataset).with_suffix(".results.csv"))
        evaluation.run_suite(records, gateway, out_path=out)
        return {"results_csv": out, "records": len(records)}

    return app
