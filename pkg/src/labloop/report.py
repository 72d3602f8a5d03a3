"""End-of-run reports: a structured-text narrative built from the session
log and output directory.

The section skeleton is deterministic (one section per module invocation in
the log); the LLM only fills narrative paragraphs, so a weak model degrades
prose, never structure.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import prompts
from .errors import TemplateError
from .gateway import Gateway
from .session import LogEvent, Session, log_event

logger = logging.getLogger(__name__)

DEFAULT_TEMPLATES_DIR = Path(__file__).parent / "templates"

# Kinds that start a module invocation; each yields exactly one section.
BOUNDARY_KINDS = ("route-decision", "plan-step")


@dataclass
class Report:
    title: str
    session_id: str
    sections: list[tuple[str, str, list[str]]] = field(default_factory=list)


def _available_templates(templates_dir: Path) -> list[str]:
    return sorted(p.stem for p in templates_dir.glob("*.md"))


def _detail_facts(events: list[LogEvent], output_dir: Path) -> tuple[list[str], list[str]]:
    """Action/output/artifact fact lines for the events inside one invocation."""
    facts: list[str] = []
    artifacts: list[str] = []
    llm_tags: list[str] = []
    for event in events:
        payload = event.payload
        if event.kind == "retrieval":
            action = payload.get("action")
            if action == "search":
                facts.append(f"retrieved {len(payload.get('hits', []))} chunk(s) "
                             f"for {payload.get('queries', [])} ({payload.get('mode', '?')})")
            elif action == "ingest":
                facts.append(f"ingested {payload.get('doc_id')} "
                             f"({payload.get('chunks_added', 0)} chunks)")
            elif action == "truncate":
                facts.append("context overflow: low-ranked chunks truncated")
        elif event.kind == "llm-call":
            llm_tags.append(str(payload.get("tag", "untagged")))
        elif event.kind == "db-query":
            facts.append(f"queried {payload.get('source')} for {payload.get('term') or payload.get('library')}")
        elif event.kind == "code-exec":
            facts.append(f"executed {payload.get('script')} (exit {payload.get('exit_status')})")
            stdout = str(payload.get("stdout", "")).strip()
            if stdout:
                facts.append(f"stdout: {stdout[:300]}")
            artifacts.extend(payload.get("artifacts", []))
        elif event.kind == "file-op" and payload.get("action") == "write":
            artifacts.append(str(payload.get("path")))
        elif event.kind == "output":
            facts.append(f"answer: {str(payload.get('text', ''))[:400]}")
    if llm_tags:
        facts.append(f"llm calls: {', '.join(llm_tags)}")
    artifacts = [a for a in dict.fromkeys(artifacts) if (output_dir / a).is_file()]
    return facts, artifacts


def _section_for(event: LogEvent, details: list[LogEvent],
                 output_dir: Path) -> tuple[str, str, list[str]]:
    payload = event.payload
    facts = []
    artifacts: list[str] = []
    if event.kind == "route-decision":
        module = payload.get("route", "unknown")
        heading = f"{module} (turn at event {event.seq})"
        if payload.get("forced"):
            facts.append("routing was forced by the user")
        if "score" in payload:
            facts.append(f"router score {payload['score']:.3f}")
        if "prompt" in payload:
            facts.append(f"input: {payload['prompt']}")
        detail_facts, artifacts = _detail_facts(details, output_dir)
        facts.extend(detail_facts)
    else:
        module = payload.get("module", "unknown")
        heading = f"{module} (plan {payload.get('plan_id', '?')} instruction {payload.get('instruction', '?')})"
        facts.append(f"instruction: {payload.get('prompt', '')}")
        response = payload.get("response", "")
        if response:
            facts.append(f"response: {response[:500]}")
        if payload.get("loop_guard"):
            facts.append("loop guard forced STOP")
        for name in payload.get("artifacts", []):
            if (output_dir / name).is_file():
                artifacts.append(name)
    body = "\n".join(f"- {fact}" for fact in facts) or "- (no structured details)"
    return heading, body, artifacts


def build_report(session: Session, gateway: Gateway | None = None) -> Report:
    """One section per module invocation (route decision or plan step).

    A route-decision section absorbs the turn's follow-on events (retrieval,
    llm calls, answer, artifacts) up to the next invocation boundary.
    """
    reportable = [e for e in session.log if e.kind not in ("session",)]
    if not reportable:
        raise ValueError("session log holds no activity to report on")
    report = Report(title="Run Report", session_id=session.id)
    boundaries = [e for e in session.log if e.kind in BOUNDARY_KINDS]
    boundary_seqs = {e.seq for e in boundaries}
    for boundary in boundaries:
        details: list[LogEvent] = []
        if boundary.kind == "route-decision":
            for event in session.log:
                if event.seq <= boundary.seq:
                    continue
                if event.seq in boundary_seqs or event.kind == "user-input":
                    break
                details.append(event)
        heading, body, artifacts = _section_for(boundary, details, session.output_dir)
        if gateway is not None:
            narrative = gateway.ask(
                prompts.render("report_narrative", heading=heading, facts=body),
                tag="report-narrative")
            body = body + "\n\n" + narrative
        report.sections.append((heading, body, artifacts))
    return report


def render_report(session: Session, template_name: str = "standard",
                  gateway: Gateway | None = None,
                  templates_dir: str | Path | None = None) -> Path:
    """Render the report through a named template into the output directory."""
    templates_dir = Path(templates_dir) if templates_dir else DEFAULT_TEMPLATES_DIR
    template_path = templates_dir / f"{template_name}.md"
    if not template_path.is_file():
        raise TemplateError(
            f"no template {template_name!r}; available: {_available_templates(templates_dir)}")
    report = build_report(session, gateway)
    template = template_path.read_text(encoding="utf-8")

    sections_text = []
    for heading, body, artifacts in report.sections:
        block = f"## {heading}\n\n{body}"
        if artifacts:
            block += "\n\nArtifacts:\n" + "\n".join(f"- [{a}]({a})" for a in artifacts)
        sections_text.append(block)

    kind_counts: dict[str, int] = {}
    for event in session.log:
        kind_counts[event.kind] = kind_counts.get(event.kind, 0) + 1
    resources = "\n".join(f"- {kind}: {count}" for kind, count in sorted(kind_counts.items()))

    files = sorted(str(p.relative_to(session.output_dir))
                   for p in session.output_dir.rglob("*")
                   if p.is_file() and p.name not in ("log.jsonl", "state.json"))
    artifacts_text = "\n".join(f"- {f}" for f in files) or "- (none)"

    summary = (f"{len(report.sections)} module invocation(s) across "
               f"{kind_counts.get('user-input', 0)} user input(s).")

    rendered = template.format(
        title=report.title,
        session_id=report.session_id,
        created_at=session.created_at,
        summary=summary,
        sections="\n\n".join(sections_text) or "(no module invocations)",
        resources=resources,
        artifacts=artifacts_text,
    )
    existing = len(list(session.output_dir.glob("report-*.md")))
    out_path = session.output_dir / f"report-{existing + 1}.md"
    out_path.write_text(rendered, encoding="utf-8")
    log_event(session, "file-op", {"action": "write", "path": out_path.name, "template": template_name})
    return out_path
