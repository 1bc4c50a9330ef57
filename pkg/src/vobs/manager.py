"""Validation-obligation bookkeeping: running checks, persisting verdicts
with model hashes, recomputing staleness after model evolution, reporting.

A record's dep_hashes name every model its verdict depends on (the target,
plus both edge endpoints for edge-bound kinds).  Evolution never flips a
verdict by itself: a hash mismatch only marks the record stale until someone
re-checks.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

from .engine import Limits, coverage, explore, state_str
from .lang import VobsError, canonical_hash
from .ltl import check_ltl, format_lasso, print_formula
from .project import Project, VoDef
from .refinement import check_simulation, inheritance_check
from .traces import replay_trace, translate_trace

UNCHECKED = "unchecked"
DISCHARGED = "discharged"
FAILED = "failed"
STALE = "stale"


def rfc3339(clock: Optional[Callable[[], float]] = None) -> str:
    t = (clock or time.time)()
    return datetime.fromtimestamp(t, tz=timezone.utc).isoformat(timespec="seconds")


@dataclass
class VoRecord:
    id: str
    status: str = UNCHECKED
    via: Optional[str] = None  # auto | manual | inherited:<from>-><to>
    evidence: str = ""
    dep_hashes: dict[str, str] = field(default_factory=dict)
    actor: Optional[str] = None
    note: Optional[str] = None
    timestamp: str = ""
    previous: Optional[str] = None  # the pre-stale status

    def to_json(self) -> dict:
        out = {"id": self.id, "status": self.status, "via": self.via,
               "evidence": self.evidence, "dep_hashes": dict(sorted(self.dep_hashes.items())),
               "timestamp": self.timestamp}
        if self.actor is not None:
            out["actor"] = self.actor
        if self.note is not None:
            out["note"] = self.note
        if self.previous is not None:
            out["previous"] = self.previous
        return out

    @staticmethod
    def from_json(data: dict) -> "VoRecord":
        return VoRecord(
            id=data["id"], status=data["status"], via=data.get("via"),
            evidence=data.get("evidence", ""),
            dep_hashes=dict(data.get("dep_hashes", {})),
            actor=data.get("actor"), note=data.get("note"),
            timestamp=data.get("timestamp", ""), previous=data.get("previous"))


class Ledger:
    """Persisted VO records; writes are atomic whole-file replacements."""

    def __init__(self, records: Optional[dict[str, VoRecord]] = None):
        self.records: dict[str, VoRecord] = records or {}

    def get(self, vo_id: str) -> VoRecord:
        return self.records.get(vo_id, VoRecord(vo_id))

    def put(self, record: VoRecord) -> None:
        self.records[record.id] = record

    @staticmethod
    def load(path: Path) -> "Ledger":
        if not path.exists():
            return Ledger()
        data = json.loads(path.read_text(encoding="utf-8"))
        return Ledger({r["id"]: VoRecord.from_json(r) for r in data})

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(
            [self.records[k].to_json() for k in sorted(self.records)],
            indent=2, sort_keys=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".status-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload + "\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


# ---------------------------------------------------------------------------
# Checking


def _deps(project: Project, vo: VoDef) -> dict[str, str]:
    names = {vo.target}
    if vo.edge is not None:
        names.update(vo.edge)
    return {n: canonical_hash(project.machines[n]) for n in sorted(names)}


def _limits_for(vo: VoDef, override: Optional[dict]) -> Limits:
    return Limits().merged(vo.limits).merged(override)


def check_vo(project: Project, vo_id: str,
             limits_override: Optional[dict] = None,
             ledger: Optional[Ledger] = None,
             clock: Optional[Callable[[], float]] = None) -> VoRecord:
    """Run one obligation and return its fresh record.

    Manual obligations are never auto-discharged: their current record comes
    back unchanged.  A truncated exploration yields a failed record whose
    evidence says `inconclusive`.
    """
    vo = project.vo(vo_id)
    if vo is None:
        raise VobsError(f"unknown vo {vo_id}")
    if vo.kind == "manual":
        return ledger.get(vo_id) if ledger else VoRecord(vo_id)
    limits = _limits_for(vo, limits_override)
    status, evidence = _dispatch(project, vo, limits)
    return VoRecord(vo.id, status=status, via="auto" if status == DISCHARGED else None,
                    evidence=evidence, dep_hashes=_deps(project, vo),
                    timestamp=rfc3339(clock))


def _dispatch(project: Project, vo: VoDef, limits: Limits) -> tuple[str, str]:
    machine = project.machines[vo.target]
    lattice = project.lattice

    if vo.kind == "ltl":
        space = explore(machine, limits)
        if space.error is not None:
            return FAILED, f"exploration error at state {space.error[0]}: {space.error[1]}"
        result = check_ltl(machine, vo.formula, limits, space=space)
        if result.verdict == "pass":
            return DISCHARGED, f"holds on all paths ({len(space.states)} states)"
        if result.verdict == "inconclusive":
            return FAILED, f"inconclusive: truncated ({space.limit_hit})"
        return FAILED, "counterexample lasso:\n" + format_lasso(machine, space, result.lasso)

    if vo.kind in ("invariant_mc", "deadlock", "coverage"):
        space = explore(machine, limits)
        if space.error is not None:
            return FAILED, f"exploration error at state {space.error[0]}: {space.error[1]}"
        if vo.kind == "invariant_mc":
            if space.invariant_violations:
                idx, pred = space.invariant_violations[0]
                return FAILED, (f"state {idx} {state_str(machine, space.states[idx])} "
                                f"violates {pred}")
            if space.truncated:
                return FAILED, f"inconclusive: truncated ({space.limit_hit})"
            return DISCHARGED, f"invariants hold on {len(space.states)} states"
        if vo.kind == "deadlock":
            if space.deadlocks:
                idx = space.deadlocks[0]
                more = f" (+{len(space.deadlocks) - 1} more)" if len(space.deadlocks) > 1 else ""
                return FAILED, f"deadlock state {idx} {state_str(machine, space.states[idx])}{more}"
            if space.truncated:
                return FAILED, f"inconclusive: truncated ({space.limit_hit})"
            return DISCHARGED, f"deadlock-free on {len(space.states)} states"
        # coverage
        if space.truncated:
            return FAILED, f"inconclusive: truncated ({space.limit_hit})"
        report = coverage(space, machine, limits)
        gaps: list[str] = []
        min_frac = float(vo.thresholds.get("min_event_coverage", 1.0))
        if report.event_coverage < min_frac:
            gaps.append(f"event coverage {report.event_coverage:.2f} < {min_frac:.2f}: "
                        f"uncovered {', '.join(report.uncovered_events)}")
        if vo.thresholds.get("require_conjunct_both_polarities"):
            for event, text, side in report.missing_polarities():
                gaps.append(f"{event}: conjunct {text} never seen {side}")
        if gaps:
            return FAILED, "; ".join(gaps)
        fired = ", ".join(f"{e}={n}" for e, n in report.event_fired.items())
        return DISCHARGED, f"coverage ok: {fired}"

    if vo.kind == "trace":
        result = replay_trace(machine, vo.trace, limits)
        if result.passed:
            return DISCHARGED, f"replayed {len(result.labels)} steps"
        return FAILED, (f"step {result.failed_step}: {result.reason}; "
                        f"state before: {result.state_before}")

    if vo.kind == "simulation":
        edge = lattice.edge(*vo.edge)
        result = check_simulation(lattice, edge, limits)
        if result.verdict == "pass":
            return DISCHARGED, f"simulation holds along {edge.name}"
        if result.verdict == "inconclusive":
            return FAILED, f"inconclusive: {result.reason}"
        return FAILED, f"simulation broken: {result.witness}"

    if vo.kind == "abstract_witness":
        edge = lattice.edge(*vo.edge)
        translated = translate_trace(lattice, edge, vo.trace)
        stored = vo.abstract_trace
        mismatch = _trace_mismatch(project, translated, stored, edge.target)
        if mismatch:
            return FAILED, f"translated trace differs from stored witness: {mismatch}"
        concrete_replay = replay_trace(machine, vo.trace, limits)
        if not concrete_replay.passed:
            return FAILED, f"concrete trace fails: {concrete_replay}"
        abstract_replay = replay_trace(project.machines[edge.target], stored, limits)
        if not abstract_replay.passed:
            return FAILED, f"abstract witness fails: {abstract_replay}"
        return DISCHARGED, (f"translation matches stored witness "
                            f"({len(stored.steps)} abstract steps) and both replay")

    raise VobsError(f"unhandled vo kind {vo.kind}")


def _trace_mismatch(project: Project, got, want, abstract_name: str) -> str:
    from .engine import literal_value
    abstract = project.machines[abstract_name]
    if len(got.steps) != len(want.steps):
        return f"{len(got.steps)} steps vs {len(want.steps)} stored"
    for i, (g, w) in enumerate(zip(got.steps, want.steps)):
        if g.event != w.event:
            return f"step {i}: {g.event} vs {w.event}"
        gv = {n: literal_value(e, abstract) for n, e in g.args}
        wv = {n: literal_value(e, abstract) for n, e in w.args}
        if gv != wv:
            return f"step {i}: parameters differ"
    return ""


def check_all(project: Project, ledger: Ledger,
              limits_override: Optional[dict] = None,
              clock: Optional[Callable[[], float]] = None) -> list[VoRecord]:
    """Check every obligation in lattice order (abstract models first).

    Within a model, simulations run before temporal properties so that an
    abstract result discharged earlier in the same run can be inherited along
    an edge whose simulation just passed.  Manual obligations are reported
    untouched.  One obligation's error never aborts the others.
    """
    order = {name: i for i, name in enumerate(project.lattice.topological())}
    kind_rank = {"simulation": 0, "ltl": 2}
    todo = sorted(enumerate(project.vos),
                  key=lambda iv: (order[iv[1].target],
                                  kind_rank.get(iv[1].kind, 1), iv[0]))
    results: list[VoRecord] = []
    for _, vo in todo:
        if vo.kind == "manual":
            results.append(ledger.get(vo.id))
            continue
        record = None
        if vo.kind == "ltl":
            record = _try_inherit(project, ledger, vo, clock)
        if record is None:
            try:
                record = check_vo(project, vo.id, limits_override, ledger, clock)
            except VobsError as e:
                record = VoRecord(vo.id, status=FAILED, evidence=f"error: {e}",
                                  dep_hashes=_deps(project, vo),
                                  timestamp=rfc3339(clock))
        ledger.put(record)
        results.append(record)
    positions = {v.id: i for i, v in enumerate(project.vos)}
    results.sort(key=lambda r: positions[r.id])
    return results


def _try_inherit(project: Project, ledger: Ledger, vo: VoDef,
                 clock: Optional[Callable[[], float]]) -> Optional[VoRecord]:
    """Discharge an LTL obligation by inheritance along an edge whose
    simulation is discharged and whose abstract twin was already discharged,
    if the translated abstract formula is this obligation's formula."""
    lattice = project.lattice
    for edge in lattice.edges_from(vo.target):
        sim_ok = any(
            other.kind == "simulation" and other.edge == (edge.source, edge.target)
            and ledger.get(other.id).status == DISCHARGED
            for other in project.vos)
        for abstract_vo in project.vos:
            if abstract_vo.kind != "ltl" or abstract_vo.target != edge.target:
                continue
            if ledger.get(abstract_vo.id).status != DISCHARGED:
                continue
            decision = inheritance_check(abstract_vo.formula, lattice, edge, sim_ok)
            if not decision.applicable:
                continue
            if print_formula(decision.translated) != print_formula(vo.formula):
                continue
            deps = {name: canonical_hash(project.machines[name])
                    for name in sorted({edge.source, edge.target})}
            return VoRecord(
                vo.id, status=DISCHARGED, via=f"inherited:{edge.name}",
                evidence=f"inherited from {abstract_vo.id} along {edge.name}",
                dep_hashes=deps, timestamp=rfc3339(clock))
    return None


def discharge_manual(project: Project, ledger: Ledger, vo_id: str,
                     note: str, actor: str,
                     clock: Optional[Callable[[], float]] = None) -> VoRecord:
    vo = project.vo(vo_id)
    if vo is None:
        raise VobsError(f"unknown vo {vo_id}")
    if vo.kind != "manual":
        raise VobsError(f"{vo_id} is not a manual VO")
    if not note.strip():
        raise VobsError("manual discharge needs a non-empty evidence note")
    if not actor.strip():
        raise VobsError("manual discharge needs an actor")
    record = VoRecord(vo_id, status=DISCHARGED, via="manual", evidence=note,
                      dep_hashes=_deps(project, vo), actor=actor, note=note,
                      timestamp=rfc3339(clock))
    ledger.put(record)
    return record


def refresh_staleness(project: Project, ledger: Ledger,
                      clock: Optional[Callable[[], float]] = None) -> list[str]:
    """Mark discharged/failed records stale when any model they depend on has
    changed (or vanished).  Never re-checks anything."""
    staled: list[str] = []
    current = {name: canonical_hash(m) for name, m in project.machines.items()}
    for vo_id in sorted(ledger.records):
        record = ledger.records[vo_id]
        if record.status not in (DISCHARGED, FAILED):
            continue
        reasons = []
        for model, digest in record.dep_hashes.items():
            if model not in current:
                reasons.append(f"{model} missing from project")
            elif current[model] != digest:
                reasons.append(f"{model} changed")
        if reasons:
            ledger.put(replace(record, status=STALE, previous=record.status,
                               evidence=record.evidence + f" [stale: {'; '.join(reasons)}]",
                               timestamp=rfc3339(clock)))
            staled.append(vo_id)
    return staled


# ---------------------------------------------------------------------------
# Reporting


@dataclass
class StatusRow:
    id: str
    target: str
    kind: str
    status: str
    via: str
    requirement_tag: str


@dataclass
class StatusReport:
    rows: list[StatusRow]
    by_model: dict[str, dict[str, int]]
    by_tag: dict[str, dict[str, int]]
    validated: bool

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for row in self.rows:
            out[row.status] = out.get(row.status, 0) + 1
        return out


UNTAGGED = "(untagged)"


def status_report(project: Project, ledger: Ledger) -> StatusReport:
    rows = []
    by_model: dict[str, dict[str, int]] = {}
    by_tag: dict[str, dict[str, int]] = {}
    for vo in project.vos:
        record = ledger.get(vo.id)
        tag = vo.requirement_tag or UNTAGGED
        rows.append(StatusRow(vo.id, vo.target, vo.kind, record.status,
                              record.via or "", vo.requirement_tag or ""))
        for bucket, key in ((by_model, vo.target), (by_tag, tag)):
            slot = bucket.setdefault(key, {})
            slot[record.status] = slot.get(record.status, 0) + 1
    validated = all(
        ledger.get(vo.id).status == DISCHARGED for vo in project.vos)
    return StatusReport(rows,
                        dict(sorted(by_model.items())),
                        dict(sorted(by_tag.items())),
                        validated)
