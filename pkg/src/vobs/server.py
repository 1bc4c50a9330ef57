"""HTTP/JSON API over a loaded project: dashboard data, on-demand checks,
manual discharges, and interactive animation sessions with trace recording.

Sessions live in memory and expire after an hour idle; saved traces are the
durable artifact.  Checks run synchronously under a time budget; requests for
the same VO are serialized while distinct VOs may run concurrently.
"""

from __future__ import annotations

import re
import socket
import threading
import time
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, HTMLResponse, JSONResponse

from .engine import (
    Limits, State, TransitionLabel, domain_values, enabled, inhabits,
    initial_state, member_order, step, value_str,
)
from .lang import BoolType, EnumType, IntRange, Machine, SetType, TypeExpr, VobsError
from .manager import (
    DISCHARGED, FAILED, Ledger, VoRecord, check_vo, discharge_manual, rfc3339,
    status_report,
)
from .project import Project, append_vo, load_project
from .traces import format_trace, trace_from_history

SESSION_IDLE_SECONDS = 3600.0
CHECK_BUDGET_SECONDS = 30.0


class ApiError(Exception):
    def __init__(self, status_code: int, error: str, detail: str = "", **extra):
        super().__init__(error)
        self.status_code = status_code
        self.error = error
        self.detail = detail
        self.extra = extra


def _value_json(value):
    if isinstance(value, frozenset):
        return sorted(value)
    return value


def _json_value(raw, ty: TypeExpr, machine: Machine):
    """Decode a JSON parameter value against its declared type."""
    if isinstance(ty, BoolType) and isinstance(raw, bool):
        return raw
    if isinstance(ty, IntRange) and isinstance(raw, int) and not isinstance(raw, bool):
        return raw
    if isinstance(ty, EnumType) and isinstance(raw, str):
        return raw
    if isinstance(ty, SetType) and isinstance(raw, list) and all(
            isinstance(m, str) for m in raw):
        return frozenset(raw)
    raise ApiError(400, "bad_parameter", f"value {raw!r} does not fit {ty}")


def _type_json(ty: TypeExpr) -> str:
    return str(ty)


@dataclass
class Session:
    id: str
    machine: str
    history: list[tuple[State, TransitionLabel]] = field(default_factory=list)
    current: State = field(default_factory=dict)
    last_used: float = 0.0
    lock: threading.Lock = field(default_factory=threading.Lock)


class AppState:
    def __init__(self, project_dir: Path, clock: Optional[Callable[[], float]] = None,
                 check_budget: float = CHECK_BUDGET_SECONDS):
        self.project_dir = Path(project_dir)
        self.project: Project = load_project(self.project_dir)
        self.clock = clock or time.time
        self.check_budget = check_budget
        self.sessions: dict[str, Session] = {}
        self.session_counter = 0
        self.registry_lock = threading.Lock()
        self.ledger_lock = threading.Lock()
        self.vo_locks: dict[str, threading.Lock] = {}
        self.executor = ThreadPoolExecutor(max_workers=4)

    def reload_project(self) -> None:
        self.project = load_project(self.project_dir)

    def ledger(self) -> Ledger:
        return Ledger.load(self.project.ledger_path)

    def save_record(self, record: VoRecord) -> None:
        with self.ledger_lock:
            ledger = self.ledger()
            ledger.put(record)
            ledger.save(self.project.ledger_path)

    def vo_lock(self, vo_id: str) -> threading.Lock:
        with self.registry_lock:
            return self.vo_locks.setdefault(vo_id, threading.Lock())

    # -- sessions -----------------------------------------------------------

    def new_session(self, machine_name: str) -> Session:
        machine = self.project.machines.get(machine_name)
        if machine is None:
            raise ApiError(404, "unknown_machine", f"no machine {machine_name}")
        if machine.is_generic():
            raise ApiError(409, "generic_machine",
                           f"{machine_name} has unbound constants; animate an "
                           f"instantiation instead")
        with self.registry_lock:
            self.session_counter += 1
            session = Session(f"s{self.session_counter}", machine_name,
                              current=initial_state(machine),
                              last_used=self.clock())
            self.sessions[session.id] = session
        return session

    def get_session(self, session_id: str) -> Session:
        now = self.clock()
        with self.registry_lock:
            for sid in [s for s, sess in self.sessions.items()
                        if now - sess.last_used > SESSION_IDLE_SECONDS]:
                del self.sessions[sid]
            session = self.sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {session_id}")
        session.last_used = now
        return session


def session_view(state: AppState, session: Session) -> dict:
    machine = state.project.machines[session.machine]
    order = member_order(machine)
    labels = enabled(machine, session.current)
    return {
        "session": session.id,
        "machine": session.machine,
        "state": {name: _value_json(v) for name, v in session.current.items()},
        "state_text": ", ".join(f"{v.name}={value_str(session.current[v.name], order)}"
                                for v in machine.vars),
        "enabled": [
            {"event": lb.event,
             "params": {k: _value_json(v) for k, v in lb.args},
             "label": str(lb)}
            for lb in labels],
        "history": [{"event": lb.event,
                     "params": {k: _value_json(v) for k, v in lb.args},
                     "label": str(lb)}
                    for _, lb in session.history],
        "history_length": len(session.history),
    }


def machine_json(machine: Machine, generic: bool) -> dict:
    return {
        "name": machine.name,
        "generic": generic,
        "vars": [{"name": v.name, "type": _type_json(v.ty)} for v in machine.vars],
        "events": [
            {"name": e.name,
             "params": [
                 {"name": p.name, "type": _type_json(p.ty),
                  "domain": [] if generic else
                  [_value_json(v) for v in domain_values(p.ty, machine)]}
                 for p in e.params]}
            for e in machine.events],
    }


def create_app(project_dir: Path | str, ui_dir: Optional[Path | str] = None,
               clock: Optional[Callable[[], float]] = None,
               check_budget: float = CHECK_BUDGET_SECONDS) -> FastAPI:
    state = AppState(Path(project_dir), clock=clock, check_budget=check_budget)
    app = FastAPI(title="vobs", docs_url=None, redoc_url=None)
    app.state.vobs = state

    if ui_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui_dir = candidate if candidate.is_dir() else None
    else:
        ui_dir = Path(ui_dir)

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        body = {"error": exc.error, "detail": exc.detail}
        body.update(exc.extra)
        return JSONResponse(status_code=exc.status_code, content=body)

    @app.exception_handler(VobsError)
    async def vobs_error_handler(request: Request, exc: VobsError):
        return JSONResponse(status_code=400,
                            content={"error": "vobs_error", "detail": str(exc)})

    # -- project and VOs ------------------------------------------------------

    @app.get("/api/project")
    def get_project():
        project = state.project
        with state.ledger_lock:
            ledger = state.ledger()
        report = status_report(project, ledger)
        return {
            "name": project.name,
            "models": [machine_json(project.machines[n],
                                    project.machines[n].is_generic())
                       for n in project.lattice.order],
            "edges": [{"from": e.source, "to": e.target, "kind": e.kind}
                      for e in project.lattice.edges],
            "vos": [vars(row) for row in report.rows],
            "rollup_by_model": report.by_model,
            "rollup_by_tag": report.by_tag,
            "validated": report.validated,
        }

    def _vo_json(vo, record: VoRecord) -> dict:
        return {
            "id": vo.id, "target": vo.target, "kind": vo.kind,
            "requirement_tag": vo.requirement_tag,
            "formula": vo.formula_text, "trace": vo.trace_path,
            "abstract_trace": vo.abstract_trace_path,
            "edge": {"from": vo.edge[0], "to": vo.edge[1]} if vo.edge else None,
            "description": vo.description,
            "record": record.to_json(),
        }

    @app.get("/api/vos")
    def get_vos():
        with state.ledger_lock:
            ledger = state.ledger()
        return [_vo_json(vo, ledger.get(vo.id)) for vo in state.project.vos]

    @app.get("/api/vos/{vo_id}")
    def get_vo(vo_id: str):
        vo = state.project.vo(vo_id)
        if vo is None:
            raise ApiError(404, "unknown_vo", f"no vo {vo_id}")
        with state.ledger_lock:
            ledger = state.ledger()
        return _vo_json(vo, ledger.get(vo_id))

    @app.post("/api/vos/{vo_id}/check")
    def post_check(vo_id: str):
        vo = state.project.vo(vo_id)
        if vo is None:
            raise ApiError(404, "unknown_vo", f"no vo {vo_id}")
        if vo.kind == "manual":
            raise ApiError(409, "manual_vo",
                           f"{vo_id} needs human evidence; use "
                           f"POST /api/vos/{vo_id}/discharge")
        with state.vo_lock(vo_id):
            future = state.executor.submit(
                check_vo, state.project, vo_id, None, None, state.clock)
            try:
                record = future.result(timeout=state.check_budget)
            except FutureTimeout:
                from .manager import _deps
                record = VoRecord(vo_id, status=FAILED,
                                  evidence="inconclusive: budget",
                                  dep_hashes=_deps(state.project, vo),
                                  timestamp=rfc3339(state.clock))
            state.save_record(record)
        return record.to_json()

    @app.post("/api/vos/{vo_id}/discharge")
    def post_discharge(vo_id: str, body: dict):
        vo = state.project.vo(vo_id)
        if vo is None:
            raise ApiError(404, "unknown_vo", f"no vo {vo_id}")
        if vo.kind != "manual":
            raise ApiError(409, "not_manual", f"{vo_id} is a {vo.kind} VO")
        note = str(body.get("note", "")).strip()
        actor = str(body.get("actor", "")).strip()
        if not note or not actor:
            raise ApiError(400, "missing_fields", "note and actor are required")
        with state.ledger_lock:
            ledger = state.ledger()
            record = discharge_manual(state.project, ledger, vo_id, note, actor,
                                      state.clock)
            ledger.save(state.project.ledger_path)
        return record.to_json()

    # -- animation sessions ---------------------------------------------------

    @app.post("/api/sessions")
    def post_session(body: dict):
        machine = body.get("machine")
        if not machine:
            raise ApiError(400, "missing_fields", "machine is required")
        session = state.new_session(machine)
        return session_view(state, session)

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        return session_view(state, state.get_session(session_id))

    @app.post("/api/sessions/{session_id}/step")
    def post_step(session_id: str, body: dict):
        session = state.get_session(session_id)
        machine = state.project.machines[session.machine]
        event = machine.event(str(body.get("event", "")))
        if event is None:
            raise ApiError(404, "unknown_event", f"no event {body.get('event')}")
        raw = body.get("params", {}) or {}
        given = set(raw)
        declared = {p.name for p in event.params}
        if given != declared:
            raise ApiError(400, "bad_parameter",
                           f"expected parameters {sorted(declared)}, got {sorted(given)}")
        args = tuple((p.name, _json_value(raw[p.name], p.ty, machine))
                     for p in event.params)
        for (name, value), p in zip(args, event.params):
            if not inhabits(value, p.ty, machine):
                raise ApiError(400, "bad_parameter",
                               f"{name}={value_str(value)} outside {p.ty}")
        label = TransitionLabel(event.name, args)
        with session.lock:
            labels = enabled(machine, session.current)
            if label not in labels:
                raise ApiError(409, "not_enabled", f"{label} is not enabled",
                               enabled=[str(lb) for lb in labels])
            new_state = step(machine, session.current, label)
            session.history.append((session.current, label))
            session.current = new_state
        return session_view(state, session)

    @app.post("/api/sessions/{session_id}/undo")
    def post_undo(session_id: str):
        session = state.get_session(session_id)
        with session.lock:
            if not session.history:
                raise ApiError(409, "empty_history", "nothing to undo")
            previous, _ = session.history.pop()
            session.current = previous
        return session_view(state, session)

    @app.post("/api/sessions/{session_id}/save")
    def post_save(session_id: str, body: dict):
        session = state.get_session(session_id)
        name = str(body.get("name", "")).strip()
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_-]*", name):
            raise ApiError(400, "bad_name", "name must be a valid file stem")
        with session.lock:
            if not session.history:
                raise ApiError(409, "empty_history", "record at least one step first")
            history = [label for _, label in session.history]
        traces_dir = state.project.root / "traces"
        traces_dir.mkdir(exist_ok=True)
        path = traces_dir / f"{name}.trace"
        if path.exists():
            raise ApiError(409, "name_collision", f"{path.name} already exists")
        trace = trace_from_history(session.machine, history)
        path.write_text(format_trace(trace), encoding="utf-8")
        result = {"trace_path": f"traces/{name}.trace"}
        if body.get("register_as_vo"):
            vo_id = f"trace_{name}"
            if state.project.vo(vo_id) is not None:
                raise ApiError(409, "name_collision", f"vo {vo_id} already exists")
            lines = [f'id = "{vo_id}"',
                     f'target = "{session.machine}"',
                     'kind = "trace"',
                     f'trace = "traces/{name}.trace"']
            tag = str(body.get("requirement_tag", "") or "").strip()
            if tag:
                lines.append(f'requirement_tag = "{tag}"')
            append_vo(state.project, lines)
            state.reload_project()
            result["vo_id"] = vo_id
        return result

    # -- UI bundle ------------------------------------------------------------

    fallback = HTMLResponse(
        "<!doctype html><title>vobs</title><h1>vobs API</h1>"
        "<p>No UI bundle found. Build the frontend (frontend/dist) or call "
        "the JSON API under <code>/api/</code>.</p>")

    @app.get("/", include_in_schema=False)
    def index():
        if ui_dir is not None and (ui_dir / "index.html").exists():
            return FileResponse(ui_dir / "index.html")
        return fallback

    @app.get("/{asset_path:path}", include_in_schema=False)
    def assets(asset_path: str):
        if ui_dir is not None and asset_path and "/.." not in f"/{asset_path}":
            target = (ui_dir / asset_path).resolve()
            if target.is_file() and str(target).startswith(str(Path(ui_dir).resolve())):
                return FileResponse(target)
        raise ApiError(404, "not_found", asset_path)

    return app


def serve(project_dir: Path | str, port: int = 7070,
          ui_dir: Optional[Path | str] = None) -> int:
    """Run the API bound to localhost; returns an exit code."""
    import uvicorn

    try:
        app = create_app(project_dir, ui_dir=ui_dir)
    except VobsError as e:
        print(f"error: {e}")
        return 2
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind(("127.0.0.1", port))
        port = probe.getsockname()[1]  # resolves port 0 to the assigned one
    except OSError as e:
        print(f"error: cannot bind 127.0.0.1:{port}: {e}")
        return 2
    finally:
        probe.close()
    print(f"serving on http://127.0.0.1:{port}")
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="info")
    return 0
