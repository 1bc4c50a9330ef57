"""Scenario traces: the `.trace` file format, replay, and translation.

A trace file is line-based: a `trace for <Machine>` header, `step` lines with
the event and parameter values, and optional `assert` lines that are checked
after the preceding step.  Translated traces can omit abstract parameters the
concrete events never carried; replay then searches the missing values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from .engine import (
    EngineError, EvalError, Limits, State, TransitionLabel, const_env,
    domain_size, domain_values, guard_holds, inhabits, initial_state,
    literal_value, state_str, step, value_str,
)
from .lang import Expr, Machine, VobsError, print_expr, print_literal, value_to_literal
from .parser import ParseError, parse_expr, parse_literal


@dataclass
class TraceStep:
    event: str
    args: list[tuple[str, Expr]] = field(default_factory=list)  # literal exprs
    assertion: Optional[Expr] = None


@dataclass
class Trace:
    machine: str
    steps: list[TraceStep] = field(default_factory=list)


class TraceError(VobsError):
    pass


def _split_params(text: str) -> list[str]:
    """Split `a=1, s={x,y}` on commas outside braces."""
    parts = []
    depth = 0
    current = []
    for ch in text:
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    if current:
        parts.append("".join(current))
    return [p.strip() for p in parts if p.strip()]


def parse_trace(text: str) -> Trace:
    machine_name: Optional[str] = None
    steps: list[TraceStep] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if machine_name is None:
            if not line.startswith("trace for "):
                raise ParseError(line_no, 1, "expected `trace for <Machine>` header")
            machine_name = line[len("trace for "):].strip()
            if not machine_name:
                raise ParseError(line_no, 1, "missing machine name in header")
            continue
        if line.startswith("step"):
            body = line[4:].strip()
            if not body:
                raise ParseError(line_no, 1, "step line needs an event name")
            event, _, rest = body.partition(" ")
            args: list[tuple[str, Expr]] = []
            for piece in _split_params(rest):
                name, eq, value_text = piece.partition("=")
                if not eq:
                    raise ParseError(line_no, 1, f"expected name=value, found {piece!r}")
                try:
                    args.append((name.strip(), parse_literal(value_text.strip())))
                except ParseError as e:
                    raise ParseError(line_no, 1, f"bad value for {name.strip()}: {e.message}")
            steps.append(TraceStep(event, args))
        elif line.startswith("assert"):
            if not steps:
                raise ParseError(line_no, 1, "assert before any step")
            if steps[-1].assertion is not None:
                raise ParseError(line_no, 1, "step already has an assertion")
            try:
                steps[-1].assertion = parse_expr(line[len("assert"):].strip())
            except ParseError as e:
                raise ParseError(line_no, 1, f"bad assertion: {e.message}")
        else:
            raise ParseError(line_no, 1, f"expected step or assert, found {line!r}")
    if machine_name is None:
        raise ParseError(1, 1, "empty trace file")
    return Trace(machine_name, steps)


def format_trace(trace: Trace) -> str:
    lines = [f"trace for {trace.machine}"]
    for s in trace.steps:
        if s.args:
            inner = ", ".join(f"{n}={print_literal(v)}" for n, v in s.args)
            lines.append(f"step {s.event} {inner}")
        else:
            lines.append(f"step {s.event}")
        if s.assertion is not None:
            lines.append(f"assert {print_expr(s.assertion)}")
    return "\n".join(lines) + "\n"


def trace_from_history(machine_name: str,
                       history: list[TransitionLabel]) -> Trace:
    steps = [TraceStep(label.event,
                       [(n, value_to_literal(v)) for n, v in label.args])
             for label in history]
    return Trace(machine_name, steps)


@dataclass
class ReplayResult:
    passed: bool
    failed_step: Optional[int] = None  # 0-based
    reason: str = ""
    state_before: str = ""  # rendering of the state before the failing step
    labels: list[TransitionLabel] = field(default_factory=list)  # resolved

    def __str__(self) -> str:
        if self.passed:
            return f"replayed {len(self.labels)} steps"
        return f"failed at step {self.failed_step}: {self.reason}"


def replay_trace(machine: Machine, trace: Trace,
                 limits: Limits = Limits()) -> ReplayResult:
    """Replay from the initial state; each step's event must be enabled with
    exactly the given parameter values, then its assertion must hold.

    Parameters a step does not mention (possible only in translated traces)
    are searched over their domains with backtracking; the reported failure is
    the deepest one any completion reached.
    """
    consts = const_env(machine)
    deepest: list = [-1, "no steps", ""]

    def fail(i: int, reason: str, state: State) -> None:
        if i > deepest[0]:
            deepest[0] = i
            deepest[1] = reason
            deepest[2] = state_str(machine, state)

    def attempt(state: State, i: int, chosen: list[TransitionLabel]) -> bool:
        if i == len(trace.steps):
            return True
        ts = trace.steps[i]
        event = machine.event(ts.event)
        if event is None:
            fail(i, f"unknown event {ts.event}", state)
            return False
        given: dict[str, object] = {}
        for name, lit in ts.args:
            param = next((p for p in event.params if p.name == name), None)
            if param is None:
                fail(i, f"event {ts.event} has no parameter {name}", state)
                return False
            value = literal_value(lit, machine)
            if value is None or not inhabits(value, param.ty, machine):
                fail(i, f"value for {name} does not have type {param.ty}", state)
                return False
            given[name] = value
        free = [p for p in event.params if p.name not in given]
        total = 1
        for p in free:
            total *= domain_size(p.ty, machine)
            if total > limits.binding_cap:
                fail(i, f"parameter search exceeds cap {limits.binding_cap}", state)
                return False
        domains = [domain_values(p.ty, machine) for p in free]
        for combo in itertools.product(*domains):
            binding = dict(given)
            binding.update(zip((p.name for p in free), combo))
            args = tuple((p.name, binding[p.name]) for p in event.params)
            label = TransitionLabel(event.name, args)
            env = {**consts, **state, **binding}
            try:
                if not guard_holds(event, env, machine):
                    fail(i, "event not enabled", state)
                    continue
                new_state = step(machine, state, label)
            except (EvalError, EngineError) as e:
                fail(i, str(e), state)
                continue
            if ts.assertion is not None:
                try:
                    env2 = {**consts, **new_state}
                    from .engine import eval_expr
                    if not eval_expr(ts.assertion, env2, machine):
                        fail(i, f"assertion {print_expr(ts.assertion)} is false",
                             new_state)
                        continue
                except EvalError as e:
                    fail(i, f"assertion {print_expr(ts.assertion)}: {e}", new_state)
                    continue
            chosen.append(label)
            if attempt(new_state, i + 1, chosen):
                return True
            chosen.pop()
        return False

    try:
        init = initial_state(machine)
    except (EvalError, EngineError) as e:
        return ReplayResult(False, 0, f"initialization failed: {e}")
    chosen: list[TransitionLabel] = []
    if attempt(init, 0, chosen):
        return ReplayResult(True, labels=chosen)
    return ReplayResult(False, deepest[0] if deepest[0] >= 0 else 0,
                        deepest[1], deepest[2])


def translate_trace(lattice, edge, trace: Trace) -> Trace:
    """Project a concrete trace along an edge: drop NEW-mapped steps, rename
    the rest, keep parameters the abstract event declares with the same name
    and type, and drop assertions (they speak about concrete variables)."""
    from .refinement import translate_label

    concrete = lattice.models[edge.source]
    abstract = lattice.models[edge.target]
    out = Trace(edge.target, [])
    for ts in trace.steps:
        cev = concrete.event(ts.event)
        if cev is None:
            raise TraceError(f"trace event {ts.event} unknown in {edge.source}")
        values: dict[str, object] = {}
        for name, lit in ts.args:
            v = literal_value(lit, concrete)
            if v is None:
                raise TraceError(
                    f"step {ts.event}: {name} is not a ground literal")
            values[name] = v
        label = TransitionLabel(ts.event, tuple(values.items()))
        translated = translate_label(abstract, concrete, edge, label)
        if translated is None:
            continue
        event_name, kept = translated
        out.steps.append(TraceStep(
            event_name, [(n, value_to_literal(v)) for n, v in kept.items()]))
    return out
