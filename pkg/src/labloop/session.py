"""Sessions: timestamped output directories, the append-only event log, chat
memory, and save/restore.

Each session owns a directory ``<root>/<YYYY-MM-DDTHH-MM-SS>-<suffix>``
holding ``log.jsonl`` (one event per line, flushed per event) and, after a
save, ``state.json``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import secrets
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable

from .config import Config
from .errors import RestoreError, SetupError

logger = logging.getLogger(__name__)

EVENT_KINDS = (
    "session",        # lifecycle: created / restored / degraded
    "user-input",
    "route-decision",
    "llm-call",
    "retrieval",
    "file-op",
    "db-query",
    "code-exec",
    "plan-step",
    "agent-message",
    "output",
)

STATE_FILE = "state.json"
LOG_FILE = "log.jsonl"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class LogEvent:
    seq: int
    timestamp: str
    kind: str
    payload: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {"seq": self.seq, "timestamp": self.timestamp, "kind": self.kind, "payload": self.payload}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LogEvent":
        return cls(seq=data["seq"], timestamp=data["timestamp"], kind=data["kind"], payload=data["payload"])


@dataclass
class Session:
    id: str
    created_at: str
    output_dir: Path
    config: Config
    memory: list[tuple[str, str]] = field(default_factory=list)
    log: list[LogEvent] = field(default_factory=list)
    seq: int = 0
    degraded: bool = False
    # JSON-serializable state that other modules stash for persistence
    # (e.g. the router's exemplar table).
    extras: dict[str, Any] = field(default_factory=dict)
    _log_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def log_path(self) -> Path:
        return self.output_dir / LOG_FILE

    def recent_memory(self, window: int | None = None) -> list[tuple[str, str]]:
        """Last `window` turns for prompting; the full transcript stays on disk."""
        if window is None:
            window = self.config.module_params("core-session")["memory_window"]
        return self.memory[-window:] if window > 0 else []


def create_session(config: Config) -> Session:
    """Create a fresh session with its own timestamped output directory."""
    root = config.validate_root()
    created_at = utc_now()
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H-%M-%S")
    # Timestamp alone collides under rapid creation; a random suffix keeps
    # directories distinct.
    for _ in range(8):
        name = f"{stamp}-{secrets.token_hex(3)}"
        out = root / name
        try:
            out.mkdir(parents=False, exist_ok=False)
            break
        except FileExistsError:
            continue
    else:
        raise SetupError(f"could not create a unique session directory under {root}")
    session = Session(id=name, created_at=created_at, output_dir=out, config=config)
    log_event(session, "session", {"action": "created"})
    return session


def log_event(session: Session, kind: str, payload: dict[str, Any]) -> LogEvent:
    """Append an event with the next seq and flush it to the log file.

    A write failure marks the session degraded (the in-memory log keeps
    growing) instead of crashing the assistant.
    """
    if kind not in EVENT_KINDS:
        raise ValueError(f"unknown event kind {kind!r}")
    with session._log_lock:
        session.seq += 1
        event = LogEvent(seq=session.seq, timestamp=utc_now(), kind=kind, payload=payload)
        session.log.append(event)
        line = json.dumps(event.to_dict(), sort_keys=True)
        try:
            with open(session.log_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
        except OSError as exc:
            if not session.degraded:
                session.degraded = True
                logger.warning("session %s: log write failed (%s); continuing degraded", session.id, exc)
    return event


def add_turn(session: Session, role: str, text: str) -> None:
    session.memory.append((role, text))


def save_session(session: Session) -> Path:
    """Write state.json so the session can be resumed later."""
    state = {
        "id": session.id,
        "created_at": session.created_at,
        "config": session.config.to_dict(),
        "memory": [[role, text] for role, text in session.memory],
        "seq": session.seq,
        "extras": session.extras,
    }
    path = session.output_dir / STATE_FILE
    path.write_text(json.dumps(state, indent=2, sort_keys=True), encoding="utf-8")
    return path


def restore_session(path: str | Path) -> Session:
    """Rebuild a Session from a saved state file (or its directory)."""
    path = Path(path)
    if path.is_dir():
        path = path / STATE_FILE
    if not path.is_file():
        raise RestoreError(f"no saved state at {path}")
    try:
        state = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise RestoreError(f"state file {path.name} unreadable: {exc}") from exc
    for field_name, typ in (("id", str), ("created_at", str), ("config", dict), ("memory", list), ("seq", int)):
        if field_name not in state:
            raise RestoreError(f"saved state missing field {field_name!r}")
        if not isinstance(state[field_name], typ):
            raise RestoreError(f"saved state field {field_name!r} has wrong type")
    try:
        config = Config.from_dict(state["config"])
    except SetupError as exc:
        raise RestoreError(f"saved state field 'config' invalid: {exc}") from exc
    memory: list[tuple[str, str]] = []
    for turn in state["memory"]:
        if not (isinstance(turn, list) and len(turn) == 2):
            raise RestoreError("saved state field 'memory' has a malformed turn")
        memory.append((turn[0], turn[1]))
    session = Session(
        id=state["id"],
        created_at=state["created_at"],
        output_dir=path.parent,
        config=config,
        memory=memory,
        seq=state["seq"],
        extras=state.get("extras", {}),
    )
    if session.log_path.is_file():
        session.log = read_log(session.log_path)
    log_event(session, "session", {"action": "restored"})
    return session


def read_log(path: str | Path) -> list[LogEvent]:
    """Replay a log file into its event sequence."""
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(LogEvent.from_dict(json.loads(line)))
    return events


def _strip_keys(value: Any, exclude: frozenset[str]) -> Any:
    if isinstance(value, dict):
        return {k: _strip_keys(v, exclude) for k, v in sorted(value.items()) if k not in exclude}
    if isinstance(value, list):
        return [_strip_keys(v, exclude) for v in value]
    return value


def log_digest(events: Iterable[LogEvent], exclude_keys: Iterable[str] = ("timestamp",)) -> str:
    """Digest of an event sequence, dropping volatile keys (timestamps by default)."""
    exclude = frozenset(exclude_keys)
    canon = [_strip_keys(e.to_dict(), exclude) for e in events]
    return hashlib.sha256(json.dumps(canon, sort_keys=True).encode("utf-8")).hexdigest()
