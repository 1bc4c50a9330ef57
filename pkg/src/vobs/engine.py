"""Expression evaluation, successor computation, and state-space exploration.

States map every machine variable to a value (bool, int, enum member, or a
frozenset of enum members).  Exploration is breadth-first with a canonical
event/parameter order, so state numbering, transition order, and all counts
are reproducible across runs.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

from .lang import (
    Binary, BoolType, Card, EnumType, Event, Expr, IntRange, Lit, Machine,
    Name, SetLit, SetType, TypeExpr, Unary, VobsError, print_expr,
)

Value = Union[bool, int, str, frozenset]
State = dict[str, Value]


class EngineError(VobsError):
    pass


class EvalError(EngineError):
    pass


@dataclass(frozen=True)
class Limits:
    max_states: int = 100_000
    max_transitions: int = 500_000
    binding_cap: int = 10_000  # max parameter bindings enumerated per event

    def merged(self, overrides: Optional[dict]) -> "Limits":
        if not overrides:
            return self
        return Limits(
            max_states=int(overrides.get("max_states", self.max_states)),
            max_transitions=int(overrides.get("max_transitions", self.max_transitions)),
            binding_cap=int(overrides.get("binding_cap", self.binding_cap)),
        )


@dataclass(frozen=True)
class TransitionLabel:
    event: str
    args: tuple[tuple[str, Value], ...] = ()  # parameter order of the event

    @property
    def binding(self) -> dict[str, Value]:
        return dict(self.args)

    def __str__(self) -> str:
        if not self.args:
            return self.event
        inner = ", ".join(f"{k}={value_str(v)}" for k, v in self.args)
        return f"{self.event}({inner})"


STUTTER = "$stutter"  # reserved label for deadlock self-loops in LTL checking


def value_str(value: Value, order: Optional[dict[str, int]] = None) -> str:
    """Render a value; enum sets sorted by declaration order when known."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, frozenset):
        members = sorted(value, key=(lambda m: order[m]) if order else None)
        return "{" + ", ".join(members) + "}"
    return str(value)


def state_str(machine: Machine, state: State) -> str:
    order = member_order(machine)
    return "{" + ", ".join(
        f"{v.name}={value_str(state[v.name], order)}" for v in machine.vars) + "}"


def member_order(machine: Machine) -> dict[str, int]:
    order: dict[str, int] = {}
    for s in machine.sets:
        for i, m in enumerate(s.members):
            order[m] = i
    return order


# ---------------------------------------------------------------------------
# Values and domains

def inhabits(value: Value, ty: TypeExpr, machine: Machine) -> bool:
    if isinstance(ty, BoolType):
        return isinstance(value, bool)
    if isinstance(ty, IntRange):
        return isinstance(value, int) and not isinstance(value, bool) \
            and ty.lo <= value <= ty.hi
    if isinstance(ty, EnumType):
        decl = machine.set_decl(ty.set_name)
        return decl is not None and isinstance(value, str) and value in decl.members
    if isinstance(ty, SetType):
        decl = machine.set_decl(ty.set_name)
        return decl is not None and isinstance(value, frozenset) \
            and all(m in decl.members for m in value)
    return False


def domain_values(ty: TypeExpr, machine: Machine) -> list[Value]:
    """All values of a finite type in canonical order: false < true, ints
    ascending, enum members in declaration order, subsets by bitmask."""
    if isinstance(ty, BoolType):
        return [False, True]
    if isinstance(ty, IntRange):
        return list(range(ty.lo, ty.hi + 1))
    decl = machine.set_decl(ty.set_name)
    if decl is None:
        raise EvalError(f"unknown set {ty.set_name}")
    if isinstance(ty, EnumType):
        return list(decl.members)
    members = decl.members
    out: list[Value] = []
    for mask in range(1 << len(members)):
        out.append(frozenset(m for i, m in enumerate(members) if mask >> i & 1))
    return out


def domain_size(ty: TypeExpr, machine: Machine) -> int:
    if isinstance(ty, BoolType):
        return 2
    if isinstance(ty, IntRange):
        return ty.hi - ty.lo + 1
    decl = machine.set_decl(ty.set_name)
    if decl is None:
        raise EvalError(f"unknown set {ty.set_name}")
    n = len(decl.members)
    return n if isinstance(ty, EnumType) else 1 << n


def literal_value(expr: Optional[Expr], machine: Machine) -> Optional[Value]:
    """Value of a ground literal expression, or None if not ground."""
    if expr is None:
        return None
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Unary) and expr.op == "-" and isinstance(expr.operand, Lit):
        return -expr.operand.value
    members = machine.member_sets()
    if isinstance(expr, Name):
        return expr.ident if expr.ident in members else None
    if isinstance(expr, SetLit):
        vals = []
        for m in expr.members:
            if not (isinstance(m, Name) and m.ident in members):
                return None
            vals.append(m.ident)
        return frozenset(vals)
    return None


def const_env(machine: Machine) -> dict[str, Value]:
    """Values of all bound constants; raises if any constant is generic."""
    env: dict[str, Value] = {}
    for c in machine.consts:
        if c.value is None:
            raise EngineError(
                f"{machine.name} has unbound constant {c.name}; "
                f"instantiate it before exploring")
        v = literal_value(c.value, machine)
        if v is None:
            raise EvalError(f"constant {c.name} has a non-literal value")
        env[c.name] = v
    return env


# ---------------------------------------------------------------------------
# Evaluation

def _div(a: int, b: int) -> int:
    if b == 0:
        raise EvalError("division by zero")
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def eval_expr(expr: Expr, env: dict[str, Value], machine: Machine) -> Value:
    """Strict evaluation of a type-checked expression.

    env holds constants, state variables, and any event parameters.  div and
    mod truncate toward zero; division by zero raises EvalError.
    """
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Name):
        if expr.ident in env:
            return env[expr.ident]
        if expr.ident in machine.member_sets():
            return expr.ident
        raise EvalError(f"unknown identifier {expr.ident}")
    if isinstance(expr, SetLit):
        return frozenset(eval_expr(m, env, machine) for m in expr.members)
    if isinstance(expr, Card):
        return len(eval_expr(expr.operand, env, machine))
    if isinstance(expr, Unary):
        v = eval_expr(expr.operand, env, machine)
        return (not v) if expr.op == "not" else -v
    if isinstance(expr, Binary):
        a = eval_expr(expr.left, env, machine)
        b = eval_expr(expr.right, env, machine)
        op = expr.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "div":
            return _div(a, b)
        if op == "mod":
            return a - b * _div(a, b)
        if op == "=":
            return a == b
        if op == "/=":
            return a != b
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        if op == ">=":
            return a >= b
        if op == "and":
            return a and b
        if op == "or":
            return a or b
        if op == "=>":
            return (not a) or b
        if op == "\\/":
            return a | b
        if op == "/\\":
            return a & b
        if op == "\\":
            return a - b
        if op == ":":
            return a in b
    raise EvalError(f"cannot evaluate {expr!r}")


def initial_state(machine: Machine) -> State:
    """Evaluate init expressions in declaration order; the single initial
    state (initialization is deterministic by construction)."""
    env = const_env(machine)
    state: State = {}
    for v in machine.vars:
        value = eval_expr(v.init, env, machine)
        if not inhabits(value, v.ty, machine):
            raise EvalError(
                f"init of {v.name} evaluates to {value_str(value)}, "
                f"outside {v.ty}")
        state[v.name] = value
        env[v.name] = value
    return state


def _bindings(event: Event, machine: Machine, limits: Limits) -> list[tuple[tuple[str, Value], ...]]:
    if not event.params:
        return [()]
    total = 1
    for p in event.params:
        total *= domain_size(p.ty, machine)
        if total > limits.binding_cap:
            raise EngineError(
                f"event {event.name}: parameter bindings exceed cap "
                f"{limits.binding_cap}")
    domains = [domain_values(p.ty, machine) for p in event.params]
    names = [p.name for p in event.params]
    return [tuple(zip(names, combo)) for combo in itertools.product(*domains)]


def guard_holds(event: Event, env: dict[str, Value], machine: Machine) -> bool:
    """Conjuncts left to right, stopping at the first false one; an EvalError
    in a reached conjunct propagates (reported, never silently skipped)."""
    for g in event.guard:
        if not eval_expr(g, env, machine):
            return False
    return True


def enabled(machine: Machine, state: State,
            limits: Limits = Limits()) -> list[TransitionLabel]:
    """All enabled transition labels in canonical order: events in declaration
    order, parameter values in ascending domain order."""
    consts = const_env(machine)
    out: list[TransitionLabel] = []
    for event in machine.events:
        for args in _bindings(event, machine, limits):
            env = {**consts, **state, **dict(args)}
            if guard_holds(event, env, machine):
                out.append(TransitionLabel(event.name, args))
    return out


def step(machine: Machine, state: State, label: TransitionLabel) -> State:
    """Fire an enabled label: all right-hand sides evaluate in the pre-state,
    then assign simultaneously; unassigned variables are unchanged."""
    event = machine.event(label.event)
    if event is None:
        raise EngineError(f"unknown event {label.event}")
    env = {**const_env(machine), **state, **label.binding}
    if not guard_holds(event, env, machine):
        raise EngineError(f"{label} is not enabled")
    updates: dict[str, Value] = {}
    for target, rhs in event.actions:
        value = eval_expr(rhs, env, machine)
        decl = machine.var_decl(target)
        if decl is None or not inhabits(value, decl.ty, machine):
            ty = decl.ty if decl else "?"
            raise EvalError(
                f"event {event.name}: {target} := {value_str(value)} "
                f"leaves {ty}")
        updates[target] = value
    new_state = dict(state)
    new_state.update(updates)
    return new_state


# ---------------------------------------------------------------------------
# Exploration


@dataclass
class StateSpace:
    machine: Machine
    states: list[State] = field(default_factory=list)  # index 0 = initial
    transitions: list[tuple[int, TransitionLabel, int]] = field(default_factory=list)
    invariant_violations: list[tuple[int, str]] = field(default_factory=list)
    deadlocks: list[int] = field(default_factory=list)
    truncated: bool = False
    limit_hit: Optional[str] = None
    error: Optional[tuple[int, str]] = None  # state index, message

    def outgoing(self, index: int) -> list[tuple[TransitionLabel, int]]:
        return [(label, dst) for src, label, dst in self.transitions if src == index]


def state_key(machine: Machine, state: State) -> tuple:
    return tuple(state[v.name] for v in machine.vars)


def explore(machine: Machine, limits: Limits = Limits()) -> StateSpace:
    """Breadth-first reachability with canonical successor order.

    Invariants are evaluated at every discovered state; deadlocks are states
    with no enabled label.  An evaluation error is recorded with its state and
    stops the exploration.
    """
    space = StateSpace(machine)
    consts = const_env(machine)

    try:
        init = initial_state(machine)
    except EvalError as e:
        space.error = (0, str(e))
        return space

    index: dict[tuple, int] = {state_key(machine, init): 0}
    space.states.append(init)
    queue: deque[int] = deque([0])

    def check_invariants(idx: int, state: State) -> None:
        env = {**consts, **state}
        for inv in machine.invariants:
            if not eval_expr(inv, env, machine):
                space.invariant_violations.append((idx, print_expr(inv)))

    current = 0
    try:
        check_invariants(0, init)
        while queue:
            current = queue.popleft()
            state = space.states[current]
            labels = enabled(machine, state, limits)
            if not labels:
                space.deadlocks.append(current)
            for label in labels:
                succ = step(machine, state, label)
                key = state_key(machine, succ)
                dst = index.get(key)
                if dst is None:
                    if len(space.states) >= limits.max_states:
                        space.truncated = True
                        space.limit_hit = "max_states"
                        continue
                    dst = len(space.states)
                    index[key] = dst
                    space.states.append(succ)
                    check_invariants(dst, succ)
                    queue.append(dst)
                if len(space.transitions) >= limits.max_transitions:
                    space.truncated = True
                    space.limit_hit = "max_transitions"
                    queue.clear()
                    break
                space.transitions.append((current, label, dst))
    except EngineError as e:
        space.error = (current, str(e))
    return space


# ---------------------------------------------------------------------------
# Coverage


@dataclass
class ConjunctCoverage:
    text: str
    seen_true: int = 0
    seen_false: int = 0

    @property
    def both_polarities(self) -> bool:
        return self.seen_true > 0 and self.seen_false > 0


@dataclass
class CoverageReport:
    event_fired: dict[str, int]
    conjuncts: dict[str, list[ConjunctCoverage]]

    @property
    def uncovered_events(self) -> list[str]:
        return [e for e, n in self.event_fired.items() if n == 0]

    @property
    def event_coverage(self) -> float:
        if not self.event_fired:
            return 1.0
        fired = sum(1 for n in self.event_fired.values() if n > 0)
        return fired / len(self.event_fired)

    def missing_polarities(self) -> list[tuple[str, str, str]]:
        """(event, conjunct, missing side) for every single-sided conjunct."""
        out = []
        for event, items in self.conjuncts.items():
            for c in items:
                if c.seen_true == 0:
                    out.append((event, c.text, "true"))
                if c.seen_false == 0:
                    out.append((event, c.text, "false"))
        return out


def coverage(space: StateSpace, machine: Machine,
             limits: Limits = Limits()) -> CoverageReport:
    """Event fired counts over the explored transitions plus dual-polarity
    counts for every top-level guard conjunct, evaluated at every reachable
    state under every canonical parameter binding."""
    fired = {e.name: 0 for e in machine.events}
    for _, label, _ in space.transitions:
        if label.event in fired:
            fired[label.event] += 1

    consts = const_env(machine)
    conjuncts: dict[str, list[ConjunctCoverage]] = {}
    for event in machine.events:
        conjuncts[event.name] = [ConjunctCoverage(print_expr(g)) for g in event.guard]
    for state in space.states:
        for event in machine.events:
            covs = conjuncts[event.name]
            if not covs:
                continue
            for args in _bindings(event, machine, limits):
                env = {**consts, **state, **dict(args)}
                for g, cov in zip(event.guard, covs):
                    try:
                        value = eval_expr(g, env, machine)
                    except EvalError:
                        continue  # errored contexts count for neither side
                    if value:
                        cov.seen_true += 1
                    else:
                        cov.seen_false += 1
    return CoverageReport(fired, conjuncts)
