"""Whitelisted script execution: selection, invocation synthesis, validation,
iterative repair, and child-process execution with captured output.

Generated invocations use the call form ``run('<script>', key=value, ...)``;
the named script must be in the registry, and every path argument must stay
inside the session output directory or a registered data root. Nothing
executes without a fully passing validation report.
"""
from __future__ import annotations

import ast
import logging
import os
import re
import shutil
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import prompts
from .errors import (ExecutionTimeoutError, LabloopError, ParameterError, RegistryError,
                     RepairExhaustedError, SelectionError, SynthesisError)
from .gateway import Gateway
from .session import Session, log_event

logger = logging.getLogger(__name__)

LANGUAGES = ("python-script", "matlab-script", "shell-script")
CODE_BLOCK_RE = re.compile(r"```(?:[a-zA-Z0-9_+-]*)\n(.*?)```", re.DOTALL)


@dataclass
class ScriptManifest:
    name: str
    path: Path
    language: str
    summary_doc: str
    full_doc: str
    output_arg: str
    few_shot_examples: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise RegistryError(f"unknown language {self.language!r} for {self.name}")
        if self.output_arg not in self.full_doc:
            raise RegistryError(f"manifest {self.name}: output_arg {self.output_arg!r} "
                                "is not described in full_doc")


@dataclass
class CodeCandidate:
    text: str
    attempt: int
    validation_report: list[dict] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return bool(self.validation_report) and all(c["passed"] for c in self.validation_report)


@dataclass
class ExecutionResult:
    exit_status: int
    stdout: str
    stderr: str
    artifacts: list[str]
    wall_time: float
    summary: str = ""


def load_registry(path: str | Path, scripts_root: str | Path) -> dict[str, ScriptManifest]:
    """Load the whitelist; every script path must resolve inside scripts_root."""
    import json
    scripts_root = Path(scripts_root).resolve()
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list) or not raw:
        raise RegistryError(f"registry {path} must be a non-empty JSON list")
    registry: dict[str, ScriptManifest] = {}
    for entry in raw:
        script_path = (scripts_root / entry["path"]).resolve()
        if not script_path.is_relative_to(scripts_root):
            raise RegistryError(f"script {entry['name']}: path escapes the scripts root")
        if not script_path.is_file():
            raise RegistryError(f"script {entry['name']}: {script_path} does not exist")
        manifest = ScriptManifest(
            name=entry["name"],
            path=script_path,
            language=entry["language"],
            summary_doc=entry["summary_doc"],
            full_doc=entry["full_doc"],
            output_arg=entry["output_arg"],
            few_shot_examples=list(entry.get("few_shot_examples", [])),
        )
        if manifest.name in registry:
            raise RegistryError(f"duplicate script name {manifest.name!r}")
        registry[manifest.name] = manifest
    return registry


def select_script(registry: dict[str, ScriptManifest], user_query: str,
                  gateway: Gateway) -> ScriptManifest:
    """Show all summary docs to the LLM; the answer must be a registered name."""
    if not registry:
        raise RegistryError("script registry is empty")
    catalog = "\n".join(f"- {name}: {m.summary_doc}" for name, m in sorted(registry.items()))
    response = gateway.ask(prompts.render("select_script", catalog=catalog, query=user_query),
                           tag="select-script")
    answer = response.strip().strip("`'\"")
    if answer in registry:
        return registry[answer]
    mentioned = [name for name in registry
                 if re.search(rf"(?<![\w.]){re.escape(name)}(?![\w.])", response)]
    if len(mentioned) == 1:
        return registry[mentioned[0]]
    raise SelectionError(f"LLM answered {response!r}, which names no registered script")


def synthesize_call(manifest: ScriptManifest, user_query: str, output_dir: Path,
                    gateway: Gateway, feedback: str = "", previous: str = "",
                    attempt: int = 1) -> CodeCandidate:
    """Ask the LLM for a run(...) invocation; the fenced block is the candidate."""
    doc = manifest.full_doc
    if manifest.few_shot_examples:
        doc += "\n\nExample invocations:\n" + "\n".join(manifest.few_shot_examples)
    if feedback:
        prompt = prompts.render("repair_call", query=user_query, code=previous, failures=feedback)
    else:
        prompt = prompts.render("synthesize_call", doc=doc, query=user_query,
                                output_arg=manifest.output_arg, output_dir=str(output_dir))
    response = gateway.ask(prompt, tag="synthesize")
    match = CODE_BLOCK_RE.search(response)
    if not match:
        raise SynthesisError("response contained no fenced code block")
    return CodeCandidate(text=match.group(1).strip(), attempt=attempt)


# --------------------------------------------------------------------------
# validation

def _balanced_delimiters(text: str) -> tuple[bool, str]:
    pairs = {")": "(", "]": "[", "}": "{"}
    stack: list[str] = []
    quote: str | None = None
    i = 0
    while i < len(text):
        ch = text[i]
        if quote:
            if ch == "\\":
                i += 2
                continue
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch in "([{":
            stack.append(ch)
        elif ch in ")]}":
            if not stack or stack[-1] != pairs[ch]:
                return False, f"unexpected {ch!r} at position {i}"
            stack.pop()
        i += 1
    if quote:
        return False, f"unclosed quote {quote}"
    if stack:
        return False, f"unclosed {stack[-1]!r}"
    return True, "all delimiters closed"


def _parse_invocation(text: str) -> tuple[ast.Call | None, str]:
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        return None, f"parse error: {exc.msg}"
    if not isinstance(tree.body, ast.Call):
        return None, "candidate must be a single run(...) call"
    call = tree.body
    if not (isinstance(call.func, ast.Name) and call.func.id == "run"):
        return None, "candidate must call run(...)"
    for node in list(call.args) + [kw.value for kw in call.keywords]:
        if not isinstance(node, ast.Constant):
            return None, "arguments must be literal constants"
    if not call.args or not isinstance(call.args[0].value, str):
        return None, "first argument must be the script name"
    return call, "parsed"


def _confined(value: str, roots: Sequence[Path], base: Path) -> bool:
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    try:
        resolved = p.resolve()
    except OSError:
        return False
    return any(resolved.is_relative_to(root) for root in roots)


def validate(candidate: CodeCandidate, manifest: ScriptManifest, output_dir: Path,
             data_roots: Sequence[Path] = ()) -> list[dict]:
    """Run all checks in order; failures are report entries, never exceptions."""
    report: list[dict] = []
    output_dir = Path(output_dir).resolve()
    allowed_roots = [output_dir] + [Path(r).resolve() for r in data_roots]

    ok, msg = _balanced_delimiters(candidate.text)
    report.append({"check": "delimiters", "passed": ok, "message": msg})

    call, msg = _parse_invocation(candidate.text) if ok else (None, "skipped: delimiters failed")
    report.append({"check": "syntax", "passed": call is not None, "message": msg})

    if call is not None:
        target = call.args[0].value
        whitelisted = target == manifest.name or Path(target).name == manifest.path.name
        report.append({
            "check": "whitelist",
            "passed": whitelisted,
            "message": f"target {target!r} " + ("matches the selected manifest" if whitelisted
                                                else "is not the selected whitelisted script"),
        })
        kwargs = {kw.arg: kw.value.value for kw in call.keywords}
        out_value = kwargs.get(manifest.output_arg)
        out_ok = isinstance(out_value, str) and _confined(out_value, [output_dir], output_dir)
        report.append({
            "check": "output-arg",
            "passed": out_ok,
            "message": (f"{manifest.output_arg}={out_value!r} inside the output directory" if out_ok
                        else f"{manifest.output_arg} missing or outside the output directory"),
        })
        bad_paths = []
        for value in list(kwargs.values()) + [a.value for a in call.args[1:]]:
            if isinstance(value, str) and ("/" in value or value.startswith("~") or "\\" in value):
                if not _confined(value, allowed_roots, output_dir):
                    bad_paths.append(value)
        report.append({
            "check": "path-confinement",
            "passed": not bad_paths,
            "message": ("all path arguments confined" if not bad_paths
                        else f"paths escape the allowed roots: {bad_paths}"),
        })
    else:
        for name in ("whitelist", "output-arg", "path-confinement"):
            report.append({"check": name, "passed": False, "message": "skipped: no parsed call"})

    report.append(_script_syntax_check(manifest))
    candidate.validation_report = report
    return report


def _script_syntax_check(manifest: ScriptManifest) -> dict:
    if manifest.language == "python-script":
        try:
            compile(manifest.path.read_text(encoding="utf-8"), str(manifest.path), "exec")
            return {"check": "script-syntax", "passed": True, "message": "python script compiles"}
        except SyntaxError as exc:
            return {"check": "script-syntax", "passed": False, "message": f"script syntax error: {exc}"}
    if manifest.language == "shell-script":
        bash = shutil.which("bash")
        if bash:
            proc = subprocess.run([bash, "-n", str(manifest.path)], capture_output=True, text=True)
            return {"check": "script-syntax", "passed": proc.returncode == 0,
                    "message": proc.stderr.strip() or "bash -n clean"}
    # No parser available (matlab, or bash missing): delimiter and path checks
    # above are the whole validation.
    logger.info("no syntax checker for %s; relying on delimiter and path checks", manifest.language)
    return {"check": "script-syntax", "passed": True,
            "message": f"no parser for {manifest.language}; check degraded"}


# --------------------------------------------------------------------------
# execution

def _render_argv(call_text: str, manifest: ScriptManifest, matlab_runner: Sequence[str]) -> list[str]:
    call, _ = _parse_invocation(call_text)
    argv: list[str]
    if manifest.language == "python-script":
        argv = [sys.executable, str(manifest.path)]
    elif manifest.language == "shell-script":
        argv = [shutil.which("bash") or "bash", str(manifest.path)]
    else:
        argv = list(matlab_runner) + [str(manifest.path)]
    for arg in call.args[1:]:
        argv.append(str(arg.value))
    for kw in call.keywords:
        argv.extend([f"--{kw.arg}", str(kw.value.value)])
    return argv


def _snapshot(output_dir: Path) -> set[str]:
    return {str(p.relative_to(output_dir)) for p in output_dir.rglob("*") if p.is_file()}


def execute(candidate: CodeCandidate, manifest: ScriptManifest, output_dir: Path,
            timeout: float, matlab_runner: Sequence[str] = ("matlab", "-batch")) -> ExecutionResult:
    """Run a validated candidate in a child process confined to output_dir."""
    if not candidate.valid:
        raise LabloopError("refusing to execute an unvalidated candidate")
    output_dir = Path(output_dir).resolve()
    argv = _render_argv(candidate.text, manifest, matlab_runner)
    env = {
        "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
        "HOME": str(output_dir),
        "OUTPUT_DIR": str(output_dir),
    }
    before = _snapshot(output_dir)
    start = time.monotonic()
    try:
        proc = subprocess.run(argv, cwd=output_dir, env=env, capture_output=True,
                              text=True, timeout=timeout)
    except subprocess.TimeoutExpired as exc:
        raise ExecutionTimeoutError(f"{manifest.name} exceeded {timeout}s and was killed") from exc
    wall = time.monotonic() - start
    created = sorted(_snapshot(output_dir) - before)
    return ExecutionResult(exit_status=proc.returncode, stdout=proc.stdout, stderr=proc.stderr,
                           artifacts=created, wall_time=wall)


def run_with_repair(manifest: ScriptManifest, user_query: str, session: Session,
                    gateway: Gateway, max_attempts: int = 3, timeout: float = 300.0,
                    data_roots: Sequence[Path] = (),
                    matlab_runner: Sequence[str] = ("matlab", "-batch")) -> ExecutionResult:
    """synthesize -> validate -> repair loop, then sandboxed execution.

    Validation failures go back to the LLM with the offending code and the
    original query; the loop gives up after max_attempts.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    output_dir = session.output_dir
    last_report: list[dict] = []
    feedback_text, previous = "", ""
    for attempt in range(1, max_attempts + 1):
        try:
            candidate = synthesize_call(manifest, user_query, output_dir, gateway,
                                        feedback=feedback_text, previous=previous, attempt=attempt)
        except SynthesisError as exc:
            last_report = [{"check": "synthesis", "passed": False, "message": str(exc)}]
            feedback_text, previous = str(exc), ""
            continue
        report = validate(candidate, manifest, output_dir, data_roots)
        last_report = report
        if candidate.valid:
            result = execute(candidate, manifest, output_dir, timeout, matlab_runner)
            log_event(session, "code-exec", {
                "script": manifest.name,
                "language": manifest.language,
                "invocation": candidate.text,
                "attempt": attempt,
                "validation_report": report,
                "exit_status": result.exit_status,
                "stdout": result.stdout[-4000:],
                "stderr": result.stderr[-4000:],
                "artifacts": result.artifacts,
                "wall_time": result.wall_time,
            })
            result.summary = gateway.ask(
                prompts.render("summarize_execution", query=user_query, script=manifest.name,
                               exit_status=result.exit_status, stdout=result.stdout[:2000],
                               stderr=result.stderr[:2000], artifacts=", ".join(result.artifacts) or "none"),
                tag="summarize-execution")
            return result
        failures = "\n".join(f"- {c['check']}: {c['message']}" for c in report if not c["passed"])
        feedback_text, previous = failures, candidate.text
    raise RepairExhaustedError(
        f"no valid invocation for {manifest.name} after {max_attempts} attempts", report=last_report)


def run_freeform(code: str, session: Session, timeout: float, allow_freeform: bool = False) -> ExecutionResult:
    """Escape hatch for running non-whitelisted python; off unless configured on."""
    if not allow_freeform:
        raise ParameterError("free-form code execution is disabled "
                             "(software-exec.allow_freeform = false)")
    ok, msg = _balanced_delimiters(code)
    if not ok:
        raise SynthesisError(f"free-form code rejected: {msg}")
    try:
        compile(code, "<freeform>", "exec")
    except SyntaxError as exc:
        raise SynthesisError(f"free-form code rejected: {exc}") from exc
    output_dir = session.output_dir.resolve()
    env = {"PATH": os.environ.get("PATH", "/usr/bin:/bin"), "HOME": str(output_dir)}
    before = _snapshot(output_dir)
    start = time.monotonic()
    try:
        proc = subprocess.run([sys.executable, "-c", code], cwd=output_dir, env=env,
                              capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired as exc:
        raise ExecutionTimeoutError(f"free-form code exceeded {timeout}s") from exc
    wall = time.monotonic() - start
    created = sorted(_snapshot(output_dir) - before)
    log_event(session, "code-exec", {
        "script": "<freeform>", "invocation": code[:500], "exit_status": proc.returncode,
        "validation_report": [{"check": "freeform-gate", "passed": True, "message": "enabled by config"}],
        "artifacts": created,
    })
    return ExecutionResult(exit_status=proc.returncode, stdout=proc.stdout, stderr=proc.stderr,
                           artifacts=created, wall_time=wall)
