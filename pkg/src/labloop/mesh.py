"""Multi-agent coordination: a coordinator distributes instruction blocks to
worker agents over FIFO inboxes; responses flow back correlated.

A message arriving at an agent is injected exactly as user input would be,
so a worker behaves identically whether a human or another agent wrote the
text. Workers share no mutable state beyond the queues (and whatever file
paths messages name explicitly).
"""
from __future__ import annotations

import logging
import queue
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import prompts
from .config import Config
from .errors import SetupError
from .gateway import Gateway, build_gateway
from .session import Session, create_session, log_event

logger = logging.getLogger(__name__)

MESSAGE_KINDS = ("instruction", "response", "idle")


@dataclass
class AgentMessage:
    from_id: str
    to_id: str
    kind: str
    body: str
    correlation_id: str

    def __post_init__(self):
        if self.kind not in MESSAGE_KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")


@dataclass
class AgentHandle:
    agent_id: str
    session: Session
    role: str                                   # "coordinator" | "worker"
    gateway: Gateway
    inbox: "queue.Queue[AgentMessage]" = field(default_factory=queue.Queue)
    plans: list = field(default_factory=list)   # drafts awaiting human approval


@dataclass
class CollectResult:
    responses: list[AgentMessage]
    missing: list[str]                          # correlation ids that never arrived

    @property
    def complete(self) -> bool:
        return not self.missing


class Mesh:
    def __init__(self, coordinator: AgentHandle, workers: list[AgentHandle]):
        self.handles: dict[str, AgentHandle] = {coordinator.agent_id: coordinator}
        for worker in workers:
            if worker.agent_id in self.handles:
                raise SetupError(f"duplicate agent id {worker.agent_id!r}")
            self.handles[worker.agent_id] = worker
        self.coordinator = coordinator
        self.workers = workers
        self.pending: dict[str, str] = {}       # correlation id -> worker id
        self._correlation_counter = 0

    def next_correlation(self) -> str:
        self._correlation_counter += 1
        return f"task-{self._correlation_counter}"

    def send(self, message: AgentMessage) -> None:
        recipient = self.handles[message.to_id]
        log_event(self.handles[message.from_id].session, "agent-message", {
            "direction": "sent", "to": message.to_id, "kind": message.kind,
            "correlation_id": message.correlation_id, "body": message.body,
        })
        recipient.inbox.put(message)


GatewayFactory = Callable[[Session], Gateway]


def spawn_mesh(n_workers: int, config: Config,
               gateway_factory: GatewayFactory | None = None) -> Mesh:
    """One coordinator plus n workers, each with its own session and output dir."""
    if n_workers < 1:
        raise ValueError("n_workers must be >= 1")
    factory = gateway_factory or (lambda session: build_gateway(config, session))
    created: list[AgentHandle] = []
    try:
        coord_session = create_session(config)
        coordinator = AgentHandle(agent_id="coordinator", session=coord_session,
                                  role="coordinator", gateway=factory(coord_session))
        created.append(coordinator)
        workers = []
        for i in range(1, n_workers + 1):
            session = create_session(config)
            handle = AgentHandle(agent_id=f"worker-{i}", session=session, role="worker",
                                 gateway=factory(session))
            created.append(handle)
            workers.append(handle)
    except Exception:
        for handle in created:
            logger.warning("mesh setup failed; abandoning session %s", handle.session.id)
        raise
    return Mesh(coordinator=coordinator, workers=workers)


def distribute(mesh: Mesh, objective: str, documentation: str = "") -> list[tuple[str, str]]:
    """Coordinator LLM splits the objective into one block per worker.

    Workers without a block get an idle notice. Returns the (worker id,
    instruction text) assignments; workers process them via run_workers.
    """
    coordinator = mesh.coordinator
    n = len(mesh.workers)
    response = coordinator.gateway.ask(
        prompts.render("distribute_objective", n=n, objective=objective,
                       documentation=documentation or "(none)"),
        tag="distribute")
    blocks = [b.strip() for b in re.split(r"WORKER\s+\d+\s*:", response) if b.strip()]
    assignments: list[tuple[str, str]] = []
    for i, worker in enumerate(mesh.workers):
        correlation = mesh.next_correlation()
        if i < len(blocks):
            mesh.send(AgentMessage(from_id=coordinator.agent_id, to_id=worker.agent_id,
                                   kind="instruction", body=blocks[i], correlation_id=correlation))
            mesh.pending[correlation] = worker.agent_id
            assignments.append((worker.agent_id, blocks[i]))
        else:
            logger.info("worker %s has no assignment this round; idling", worker.agent_id)
            mesh.send(AgentMessage(from_id=coordinator.agent_id, to_id=worker.agent_id,
                                   kind="idle", body="no assignment this round",
                                   correlation_id=correlation))
    return assignments


WorkerHandler = Callable[[AgentHandle, str], str]


def chat_worker_handler(worker: AgentHandle, text: str) -> str:
    """Answer the instruction directly through the worker's own gateway."""
    return worker.gateway.ask(text, tag="worker-task")


def planning_worker_handler(available_modules: Sequence[str]) -> WorkerHandler:
    """Workers translate their instructions into draft plans awaiting approval."""
    from . import planner

    def handler(worker: AgentHandle, text: str) -> str:
        plan = planner.build_plan(text, available_modules, [], worker.gateway)
        worker.plans.append(plan)
        lines = "; ".join(f"{i.id}:{i.module}" for i in plan.instructions)
        return f"PLANNED {len(plan.instructions)} instructions ({lines}); awaiting approval"

    return handler


def process_inbox(mesh: Mesh, worker: AgentHandle, handler: WorkerHandler) -> int:
    """Drain one worker's inbox; instructions are injected as user input."""
    handled = 0
    while True:
        try:
            message = worker.inbox.get_nowait()
        except queue.Empty:
            return handled
        if message.kind == "instruction":
            # Exactly what a human typing the same text would produce.
            log_event(worker.session, "user-input", {"text": message.body})
            result = handler(worker, message.body)
            log_event(worker.session, "output", {"text": result})
            mesh.send(AgentMessage(from_id=worker.agent_id, to_id=mesh.coordinator.agent_id,
                                   kind="response", body=result,
                                   correlation_id=message.correlation_id))
        else:
            log_event(worker.session, "agent-message", {
                "direction": "received", "from": message.from_id, "kind": message.kind,
                "correlation_id": message.correlation_id, "body": message.body,
            })
        handled += 1


def run_workers(mesh: Mesh, handler: WorkerHandler | None = None, threaded: bool = True) -> None:
    """Let every worker process its pending messages (concurrently by default)."""
    handler = handler or chat_worker_handler
    if not threaded:
        for worker in mesh.workers:
            process_inbox(mesh, worker, handler)
        return
    threads = [threading.Thread(target=process_inbox, args=(mesh, worker, handler), daemon=True)
               for worker in mesh.workers]
    for t in threads:
        t.start()
    for t in threads:
        t.join()


def collect(mesh: Mesh, timeout: float = 600.0) -> CollectResult:
    """Block until every pending instruction has a response, or the deadline.

    Response bodies land in the coordinator log as user input, mirroring the
    instruction injection on the worker side.
    """
    coordinator = mesh.coordinator
    deadline = time.monotonic() + timeout
    responses: list[AgentMessage] = []
    while mesh.pending:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            break
        try:
            message = coordinator.inbox.get(timeout=min(remaining, 0.25))
        except queue.Empty:
            continue
        if message.kind != "response":
            continue
        log_event(coordinator.session, "user-input", {
            "text": message.body, "from_agent": message.from_id,
            "correlation_id": message.correlation_id,
        })
        responses.append(message)
        mesh.pending.pop(message.correlation_id, None)
    missing = sorted(mesh.pending)
    if missing:
        logger.warning("collect timed out; missing correlation ids: %s", missing)
    return CollectResult(responses=responses, missing=missing)


def batch_approve(mesh: Mesh, store_dir=None) -> int:
    """HITL convenience: approve every worker's draft plans at once."""
    from . import planner

    approved = 0
    for worker in mesh.workers:
        for plan in worker.plans:
            if plan.status == "draft":
                planner.approve(plan, store_dir)
                approved += 1
    return approved
