"""Project loading: the `project.vobs` TOML file, machine files, generated
instantiations, the refinement lattice, and validation-obligation payloads.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .engine import literal_value
from .lang import Machine, VobsError, instantiate, well_formed
from .ltl import Formula, parse_ltl, validate_formula
from .parser import ParseError, parse_literal, parse_machine
from .refinement import Lattice, LatticeError, RefinementEdge, build_lattice
from .traces import Trace, parse_trace

PROJECT_FILE = "project.vobs"
LEDGER_DIR = ".vobs"
LEDGER_FILE = "status.json"

VO_KINDS = ("ltl", "invariant_mc", "deadlock", "trace", "coverage",
            "simulation", "abstract_witness", "manual")


class LoadError(VobsError):
    pass


@dataclass
class VoDef:
    id: str
    target: str
    kind: str
    requirement_tag: Optional[str] = None
    formula: Optional[Formula] = None
    formula_text: Optional[str] = None
    trace_path: Optional[str] = None
    trace: Optional[Trace] = None
    abstract_trace_path: Optional[str] = None
    abstract_trace: Optional[Trace] = None
    edge: Optional[tuple[str, str]] = None
    thresholds: dict = field(default_factory=dict)
    description: Optional[str] = None
    limits: dict = field(default_factory=dict)


@dataclass
class Project:
    root: Path
    name: str
    lattice: Lattice
    vos: list[VoDef]
    machine_files: dict[str, Optional[Path]]  # None for generated machines
    project_file: Path

    @property
    def machines(self) -> dict[str, Machine]:
        return self.lattice.models

    @property
    def ledger_path(self) -> Path:
        return self.root / LEDGER_DIR / LEDGER_FILE

    def vo(self, vo_id: str) -> Optional[VoDef]:
        for v in self.vos:
            if v.id == vo_id:
                return v
        return None


def _parse_machine_file(path: Path) -> Machine:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise LoadError(f"{path}: {e}")
    try:
        machine = parse_machine(text)
    except ParseError as e:
        raise LoadError(f"{path}:{e.line}:{e.column}: {e.message}")
    problems = well_formed(machine)
    if problems:
        raise LoadError(f"{path}: {problems[0]}")
    return machine


def _binding_value(raw: Any, generic: Machine, where: str) -> object:
    if isinstance(raw, bool) or isinstance(raw, int):
        return raw
    if isinstance(raw, str):
        try:
            expr = parse_literal(raw)
        except ParseError as e:
            raise LoadError(f"{where}: bad literal {raw!r}: {e.message}")
        value = literal_value(expr, generic)
        if value is None:
            raise LoadError(f"{where}: {raw!r} is not a ground literal")
        return value
    raise LoadError(f"{where}: unsupported binding value {raw!r}")


def _require(table: dict, key: str, where: str) -> Any:
    if key not in table:
        raise LoadError(f"{where}: missing {key}")
    return table[key]


def load_project(path: Path | str) -> Project:
    """Load and fully resolve a project directory (or its project.vobs)."""
    path = Path(path)
    project_file = path / PROJECT_FILE if path.is_dir() else path
    root = project_file.parent
    if not project_file.exists():
        raise LoadError(f"{project_file}: no such project file")
    try:
        with open(project_file, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise LoadError(f"{project_file}: {e}")

    name = data.get("project", {}).get("name") or root.name

    machines: dict[str, Machine] = {}
    machine_files: dict[str, Optional[Path]] = {}
    order: list[str] = []
    instantiation_entries: list[dict] = []
    for entry in data.get("model", []):
        mname = _require(entry, "name", f"{project_file}: model")
        if mname in machines or mname in [e["name"] for e in instantiation_entries]:
            raise LoadError(f"{project_file}: duplicate model {mname}")
        order.append(mname)
        if "file" in entry and "instantiates" in entry:
            raise LoadError(f"{project_file}: model {mname} has both file and instantiates")
        if "file" in entry:
            machine = _parse_machine_file(root / entry["file"])
            if machine.name != mname:
                raise LoadError(
                    f"{project_file}: model {mname} file declares machine {machine.name}")
            if machine.header is not None and machine.header.kind == "instantiates":
                raise LoadError(
                    f"{project_file}: model {mname}: instantiating machines are "
                    f"declared in the project file, not as machine files")
            machines[mname] = machine
            machine_files[mname] = root / entry["file"]
        elif "instantiates" in entry:
            instantiation_entries.append(entry)
        else:
            raise LoadError(f"{project_file}: model {mname} needs file or instantiates")

    edges: list[RefinementEdge] = []
    for entry in instantiation_entries:
        mname = entry["name"]
        generic_name = entry["instantiates"]
        generic = machines.get(generic_name)
        if generic is None:
            raise LoadError(
                f"{project_file}: model {mname} instantiates unknown model {generic_name}")
        raw_bind = entry.get("with", {})
        where = f"{project_file}: model {mname}"
        bind = {k: _binding_value(v, generic, where) for k, v in raw_bind.items()}
        try:
            machines[mname] = instantiate(generic, bind, mname)
        except VobsError as e:
            raise LoadError(f"{where}: {e}")
        machine_files[mname] = None
        edges.append(RefinementEdge(mname, generic_name, "instantiates", bind=bind))

    from .parser import parse_expr
    for entry in data.get("edge", []):
        where = f"{project_file}: edge"
        source = _require(entry, "from", where)
        target = _require(entry, "to", where)
        kind = _require(entry, "kind", f"{where} {source}->{target}")
        if kind == "instantiates":
            raise LoadError(
                f"{where} {source}->{target}: instantiation edges are generated "
                f"from model entries")
        glue = {}
        for var, text in entry.get("glue", {}).items():
            try:
                glue[var] = parse_expr(text)
            except ParseError as e:
                raise LoadError(f"{where} {source}->{target}: glue {var}: {e.message}")
        edges.append(RefinementEdge(source, target, kind,
                                    dict(entry.get("event_map", {})), glue))

    # Machine headers record intent only; the project must agree.
    for mname, machine in machines.items():
        h = machine.header
        if h is None:
            continue
        match = [e for e in edges
                 if e.source == mname and e.target == h.target and e.kind == h.kind]
        if not match:
            raise LoadError(
                f"{project_file}: {mname} declares `{h.kind} {h.target}` but the "
                f"project has no such edge")

    try:
        lattice = build_lattice(machines, edges, order)
    except LatticeError as e:
        raise LoadError(f"{project_file}: {e}")

    vos: list[VoDef] = []
    seen_ids: set[str] = set()
    for entry in data.get("vo", []):
        where = f"{project_file}: vo"
        vo_id = _require(entry, "id", where)
        where = f"{project_file}: vo {vo_id}"
        if vo_id in seen_ids:
            raise LoadError(f"{where}: duplicate id")
        seen_ids.add(vo_id)
        target = _require(entry, "target", where)
        kind = _require(entry, "kind", where)
        if target not in machines:
            raise LoadError(f"{where}: unknown target {target}")
        if kind not in VO_KINDS:
            raise LoadError(f"{where}: unknown kind {kind}")
        vo = VoDef(vo_id, target, kind,
                   requirement_tag=entry.get("requirement_tag"),
                   thresholds=dict(entry.get("thresholds", {})),
                   limits=dict(entry.get("limits", {})))
        if kind == "ltl":
            vo.formula_text = _require(entry, "formula", where)
            try:
                vo.formula = parse_ltl(vo.formula_text)
            except ParseError as e:
                raise LoadError(f"{where}: formula: {e.message}")
            problems = validate_formula(machines[target], vo.formula)
            if problems:
                raise LoadError(f"{where}: formula: {problems[0]}")
        elif kind in ("trace", "abstract_witness"):
            vo.trace_path = _require(entry, "trace", where)
            vo.trace = _load_trace(root, vo.trace_path, where)
        if kind == "trace" and vo.trace.machine != target:
            raise LoadError(
                f"{where}: trace is for {vo.trace.machine}, target is {target}")
        if kind in ("simulation", "abstract_witness"):
            raw_edge = _require(entry, "edge", where)
            pair = (raw_edge.get("from"), raw_edge.get("to"))
            if lattice.edge(*pair) is None:
                raise LoadError(f"{where}: no edge {pair[0]}->{pair[1]}")
            vo.edge = pair
        if kind == "abstract_witness":
            if vo.trace.machine != vo.edge[0] or target != vo.edge[0]:
                raise LoadError(
                    f"{where}: concrete trace and target must be on {vo.edge[0]}")
            vo.abstract_trace_path = _require(entry, "abstract_trace", where)
            vo.abstract_trace = _load_trace(root, vo.abstract_trace_path, where)
            if vo.abstract_trace.machine != vo.edge[1]:
                raise LoadError(
                    f"{where}: abstract trace is for {vo.abstract_trace.machine}, "
                    f"edge target is {vo.edge[1]}")
        if kind == "coverage":
            frac = vo.thresholds.get("min_event_coverage", 1.0)
            if not (isinstance(frac, (int, float)) and 0 <= frac <= 1):
                raise LoadError(f"{where}: min_event_coverage must be in [0, 1]")
        if kind == "manual":
            vo.description = _require(entry, "description", where)
            if not str(vo.description).strip():
                raise LoadError(f"{where}: empty description")
        vos.append(vo)

    return Project(root, name, lattice, vos, machine_files, project_file)


def _load_trace(root: Path, rel: str, where: str) -> Trace:
    path = root / rel
    if not path.exists():
        raise LoadError(f"{where}: trace file {rel} not found")
    try:
        return parse_trace(path.read_text(encoding="utf-8"))
    except ParseError as e:
        raise LoadError(f"{where}: {rel}:{e.line}: {e.message}")


def append_vo(project: Project, lines: list[str]) -> None:
    """Append a `[[vo]]` block to the project file (register a saved trace)."""
    with open(project.project_file, "a", encoding="utf-8") as fh:
        fh.write("\n[[vo]]\n")
        for line in lines:
            fh.write(line + "\n")
