"""Plans: ordered instructions with successor sets executed under an
instruction pointer, supporting sequences, branches, and bounded loops.

Plans are drafted by the LLM (or matched against saved ones), edited and
approved by a human, then stepped one instruction at a time. Per-instruction
visit limits guarantee termination.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import re
import secrets
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from . import prompts
from .errors import ApprovalError, LabloopError, PlanEditError, PlanningError
from .gateway import Gateway
from .session import Session, log_event

logger = logging.getLogger(__name__)

STOP = "STOP"

PLAN_STATUSES = ("draft", "approved", "running", "done", "halted")


@dataclass
class Instruction:
    id: int
    module: str
    prompt: str
    successors: list[Any]          # instruction ids and/or STOP
    condition_hint: str = ""
    max_visits: int = 5

    def __post_init__(self):
        if not self.successors:
            raise ValueError(f"instruction {self.id}: successors must be non-empty")
        if self.max_visits < 1:
            raise ValueError(f"instruction {self.id}: max_visits must be positive")


@dataclass
class StepOutcome:
    instruction_id: int
    response: str
    artifacts: list[str]
    chosen_next: Any
    loop_guard: bool = False


@dataclass
class Plan:
    plan_id: str
    name: str
    query: str
    instructions: list[Instruction]
    ip: Any = None                 # current instruction id, or STOP
    visit_counts: dict[int, int] = field(default_factory=dict)
    status: str = "draft"

    def __post_init__(self):
        if self.ip is None and self.instructions:
            self.ip = self.instructions[0].id

    def instruction(self, instruction_id: int) -> Instruction:
        for instr in self.instructions:
            if instr.id == instruction_id:
                return instr
        raise KeyError(f"no instruction with id {instruction_id}")

    def ids(self) -> set[int]:
        return {i.id for i in self.instructions}


def validate_plan(plan: Plan, available_modules: Sequence[str] | None = None) -> list[str]:
    """Structural problems, empty when the plan is sound."""
    problems = []
    if not plan.instructions:
        problems.append("plan has no instructions")
    ids = [i.id for i in plan.instructions]
    if len(set(ids)) != len(ids):
        problems.append("duplicate instruction ids")
    known = set(ids)
    for instr in plan.instructions:
        for succ in instr.successors:
            if succ != STOP and succ not in known:
                problems.append(f"instruction {instr.id}: dangling successor {succ!r}")
        if available_modules is not None and instr.module not in available_modules:
            problems.append(f"instruction {instr.id}: unknown module {instr.module!r}")
    if plan.ip is not None and plan.ip != STOP and plan.ip not in known:
        problems.append(f"instruction pointer {plan.ip!r} references nothing")
    return problems


def _query_digest(query: str) -> str:
    canon = re.sub(r"\s+", " ", query.strip().lower())
    return hashlib.sha1(canon.encode("utf-8")).hexdigest()[:12]


def _fresh_plan_id() -> str:
    return secrets.token_hex(4)


# --------------------------------------------------------------------------
# building

def _parse_plan_json(raw: str, query: str, default_max_visits: int) -> Plan:
    match = re.search(r"\[.*\]", raw, re.DOTALL)
    if not match:
        raise PlanningError("no JSON array in plan output", raw_output=raw)
    try:
        entries = json.loads(match.group(0))
    except json.JSONDecodeError as exc:
        raise PlanningError(f"plan JSON malformed: {exc}", raw_output=raw) from exc
    if not isinstance(entries, list) or not entries:
        raise PlanningError("plan must be a non-empty array", raw_output=raw)
    instructions = []
    for pos, entry in enumerate(entries, start=1):
        if not isinstance(entry, dict) or "module" not in entry or "prompt" not in entry:
            raise PlanningError(f"instruction {pos} missing module/prompt", raw_output=raw)
        successors = entry.get("successors") or ([pos + 1] if pos < len(entries) else [STOP])
        successors = [s if s == STOP else int(s) for s in successors]
        instructions.append(Instruction(
            id=pos,
            module=str(entry["module"]),
            prompt=str(entry["prompt"]),
            successors=successors,
            condition_hint=str(entry.get("condition_hint", "")),
            max_visits=int(entry.get("max_visits", default_max_visits)),
        ))
    return Plan(plan_id=_fresh_plan_id(), name=query[:60], query=query, instructions=instructions)


def build_plan(user_query: str, available_modules: Sequence[str], saved_plans: Sequence[Plan],
               gateway: Gateway, retries: int = 3, default_max_visits: int = 5) -> Plan:
    """A draft plan: a saved one the LLM recognizes, or a freshly generated one."""
    if saved_plans:
        catalog = "\n".join(f"- {p.name}" for p in saved_plans)
        answer = gateway.ask(prompts.render("plan_match", catalog=catalog, query=user_query),
                             tag="plan-match").strip()
        for saved in saved_plans:
            if answer == saved.name:
                clone = copy.deepcopy(saved)
                clone.plan_id = _fresh_plan_id()
                clone.status = "draft"
                clone.visit_counts = {}
                clone.ip = clone.instructions[0].id if clone.instructions else STOP
                return clone
    last_raw = ""
    for _ in range(retries):
        raw = gateway.ask(
            prompts.render("plan_generate", query=user_query, modules=sorted(available_modules)),
            tag="plan-generate")
        last_raw = raw
        try:
            plan = _parse_plan_json(raw, user_query, default_max_visits)
        except PlanningError as exc:
            logger.warning("plan generation rejected: %s", exc)
            continue
        problems = validate_plan(plan, available_modules)
        if not problems:
            return plan
        logger.warning("plan generation invalid: %s", problems)
    raise PlanningError(f"no valid plan after {retries} attempts", raw_output=last_raw)


# --------------------------------------------------------------------------
# review / approval

def review_plan(plan: Plan, edits: Sequence[dict], available_modules: Sequence[str] | None = None) -> Plan:
    """Apply human edits atomically; any invalid outcome rejects the batch."""
    if plan.status != "draft":
        raise PlanEditError(f"only draft plans are editable (status={plan.status})")
    candidate = copy.deepcopy(plan)
    for edit in edits:
        op = edit.get("op")
        if op == "insert":
            spec = dict(edit["instruction"])
            new_id = int(spec.get("id", max(candidate.ids(), default=0) + 1))
            if new_id in candidate.ids():
                raise PlanEditError(f"insert: id {new_id} already exists")
            instr = Instruction(
                id=new_id, module=spec["module"], prompt=spec["prompt"],
                successors=[s if s == STOP else int(s) for s in spec.get("successors", [STOP])],
                condition_hint=spec.get("condition_hint", ""),
                max_visits=int(spec.get("max_visits", 5)),
            )
            pos = edit.get("position")
            if pos is None:
                candidate.instructions.append(instr)
            else:
                candidate.instructions.insert(int(pos), instr)
        elif op == "delete":
            target = int(edit["id"])
            if target not in candidate.ids():
                raise PlanEditError(f"delete: no instruction {target}")
            candidate.instructions = [i for i in candidate.instructions if i.id != target]
            if candidate.ip == target:
                candidate.ip = candidate.instructions[0].id if candidate.instructions else STOP
        elif op == "modify":
            target = candidate.instruction(int(edit["id"]))
            fields = edit.get("fields", {})
            for key, value in fields.items():
                if key == "successors":
                    target.successors = [s if s == STOP else int(s) for s in value]
                elif key in ("module", "prompt", "condition_hint"):
                    setattr(target, key, str(value))
                elif key == "max_visits":
                    target.max_visits = int(value)
                else:
                    raise PlanEditError(f"modify: unknown field {key!r}")
        elif op == "reorder":
            order = [int(i) for i in edit["order"]]
            if sorted(order) != sorted(candidate.ids()):
                raise PlanEditError("reorder: order must be a permutation of instruction ids")
            by_id = {i.id: i for i in candidate.instructions}
            candidate.instructions = [by_id[i] for i in order]
        else:
            raise PlanEditError(f"unknown edit op {op!r}")
    problems = validate_plan(candidate, available_modules)
    if problems:
        raise PlanEditError("edits rejected: " + "; ".join(problems))
    return candidate


def approve(plan: Plan, store_dir: str | Path | None = None,
            available_modules: Sequence[str] | None = None) -> Plan:
    """Mark a valid draft approved and persist it for future reuse."""
    if plan.status == "approved":
        return plan
    if plan.status != "draft":
        raise ApprovalError(f"cannot approve a plan with status {plan.status}")
    problems = validate_plan(plan, available_modules)
    if problems:
        raise ApprovalError("approval refused: " + "; ".join(problems), report=problems)
    plan.status = "approved"
    plan.ip = plan.instructions[0].id
    plan.visit_counts = {}
    if store_dir is not None:
        save_plan(plan, store_dir)
    return plan


# --------------------------------------------------------------------------
# execution

Executor = Callable[[str, str, Plan], tuple[str, list[str]]]


def step(plan: Plan, executor: Executor, gateway: Gateway,
         session: Session | None = None) -> StepOutcome:
    """Dispatch the current instruction and advance the instruction pointer."""
    if plan.status not in ("approved", "running"):
        raise LabloopError(f"plan not executable (status={plan.status}); approve it first")
    if plan.ip == STOP:
        raise LabloopError("plan already stopped")
    plan.status = "running"
    instr = plan.instruction(plan.ip)
    try:
        response, artifacts = executor(instr.module, instr.prompt, plan)
    except Exception as exc:  # module failure is an outcome, not a crash
        logger.warning("instruction %s (%s) failed: %s", instr.id, instr.module, exc)
        response, artifacts = f"ERROR: {exc}", []
    plan.visit_counts[instr.id] = plan.visit_counts.get(instr.id, 0) + 1

    chosen = _choose_successor(instr, response, gateway)
    loop_guard = False
    if chosen != STOP:
        nxt = plan.instruction(chosen)
        if plan.visit_counts.get(chosen, 0) + 1 > nxt.max_visits:
            loop_guard = True
            chosen = STOP
    plan.ip = chosen
    if chosen == STOP:
        plan.status = "halted" if loop_guard else "done"
    if session is not None:
        log_event(session, "plan-step", {
            "plan_id": plan.plan_id,
            "instruction": instr.id,
            "module": instr.module,
            "prompt": instr.prompt,
            "response": response[:2000],
            "artifacts": artifacts,
            "visits": plan.visit_counts[instr.id],
            "chosen_next": chosen,
            "loop_guard": loop_guard,
        })
    return StepOutcome(instruction_id=instr.id, response=response, artifacts=artifacts,
                       chosen_next=chosen, loop_guard=loop_guard)


def _choose_successor(instr: Instruction, response: str, gateway: Gateway) -> Any:
    if len(instr.successors) == 1:
        return instr.successors[0]
    candidates = [str(s) for s in instr.successors]
    for _ in range(2):  # one ask plus one re-ask
        answer = gateway.ask(
            prompts.render("choose_successor", condition=instr.condition_hint or "none given",
                           response=response, candidates=", ".join(candidates)),
            tag="choose-successor").strip()
        if answer in candidates:
            return STOP if answer == STOP else int(answer)
    logger.warning("instruction %s: LLM chose no listed successor; taking %r",
                   instr.id, instr.successors[0])
    return instr.successors[0]


def run_plan(plan: Plan, executor: Executor, gateway: Gateway,
             session: Session | None = None) -> list[StepOutcome]:
    """Step until STOP; bounded by the sum of per-instruction visit limits."""
    outcomes = []
    bound = sum(i.max_visits for i in plan.instructions)
    while plan.ip != STOP and len(outcomes) < bound:
        outcomes.append(step(plan, executor, gateway, session))
    return outcomes


# --------------------------------------------------------------------------
# persistence

def plan_to_dict(plan: Plan) -> dict:
    return {
        "plan_id": plan.plan_id,
        "name": plan.name,
        "query": plan.query,
        "query_digest": _query_digest(plan.query),
        "status": plan.status,
        "ip": plan.ip,
        "visit_counts": {str(k): v for k, v in plan.visit_counts.items()},
        "instructions": [
            {
                "id": i.id, "module": i.module, "prompt": i.prompt,
                "successors": i.successors, "condition_hint": i.condition_hint,
                "max_visits": i.max_visits,
            }
            for i in plan.instructions
        ],
    }


def plan_from_dict(data: dict) -> Plan:
    return Plan(
        plan_id=data["plan_id"],
        name=data["name"],
        query=data["query"],
        instructions=[Instruction(
            id=entry["id"], module=entry["module"], prompt=entry["prompt"],
            successors=[s if s == STOP else int(s) for s in entry["successors"]],
            condition_hint=entry.get("condition_hint", ""),
            max_visits=entry.get("max_visits", 5),
        ) for entry in data["instructions"]],
        ip=data.get("ip"),
        visit_counts={int(k): v for k, v in data.get("visit_counts", {}).items()},
        status=data.get("status", "draft"),
    )


def save_plan(plan: Plan, store_dir: str | Path) -> Path:
    store = Path(store_dir)
    store.mkdir(parents=True, exist_ok=True)
    slug = re.sub(r"[^a-z0-9]+", "-", plan.name.lower()).strip("-")[:40] or "plan"
    path = store / f"{_query_digest(plan.query)}-{slug}.json"
    path.write_text(json.dumps(plan_to_dict(plan), indent=2, sort_keys=True), encoding="utf-8")
    return path


def load_saved_plans(store_dir: str | Path) -> list[Plan]:
    store = Path(store_dir)
    if not store.is_dir():
        return []
    plans = []
    for path in sorted(store.glob("*.json")):
        try:
            plans.append(plan_from_dict(json.loads(path.read_text(encoding="utf-8"))))
        except (json.JSONDecodeError, KeyError) as exc:
            logger.warning("skipping unreadable saved plan %s: %s", path, exc)
    return plans
