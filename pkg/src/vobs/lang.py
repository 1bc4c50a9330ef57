"""Machine AST, type checking, canonical printing and hashing, instantiation.

A machine is the unit of refinement: finite-domain variables, optionally
generic constants, invariants, and guarded events.  All datatypes are finite
by construction (bool, bounded int ranges, enumerated sets, sets over an
enumerated set), so every well-formed machine with bound constants has a
finite state space.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterator, Optional, Union


class VobsError(Exception):
    """Base class for all tool errors."""


class SpecError(VobsError):
    """A machine-level error (instantiation misuse, bad literal, ...)."""


# ---------------------------------------------------------------------------
# Type expressions


@dataclass(frozen=True)
class BoolType:
    def __str__(self) -> str:
        return "BOOL"


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int

    def __str__(self) -> str:
        return f"{self.lo} .. {self.hi}"


@dataclass(frozen=True)
class EnumType:
    set_name: str

    def __str__(self) -> str:
        return self.set_name


@dataclass(frozen=True)
class SetType:
    set_name: str

    def __str__(self) -> str:
        return f"set of {self.set_name}"


TypeExpr = Union[BoolType, IntRange, EnumType, SetType]

# Static types erase integer bounds: any arithmetic expression is INT and
# range membership is enforced at assignment/init time, not statically.
STATIC_BOOL = "bool"
STATIC_INT = "int"


def static_of(ty: TypeExpr) -> object:
    """Collapse a declared type to its static type used by the checker."""
    if isinstance(ty, BoolType):
        return STATIC_BOOL
    if isinstance(ty, IntRange):
        return STATIC_INT
    return ty  # EnumType / SetType stand for themselves


# ---------------------------------------------------------------------------
# Expressions

BINARY_OPS = {
    "+", "-", "*", "div", "mod",
    "=", "/=", "<", "<=", ">", ">=",
    "and", "or", "=>",
    "\\/", "/\\", "\\", ":",
}
UNARY_OPS = {"not", "-"}


@dataclass(frozen=True)
class Lit:
    value: Union[bool, int]


@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class SetLit:
    members: tuple["Expr", ...]


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Card:
    operand: "Expr"


Expr = Union[Lit, Name, SetLit, Unary, Binary, Card]


# ---------------------------------------------------------------------------
# Machine structure


@dataclass(frozen=True)
class SetDecl:
    name: str
    members: tuple[str, ...]


@dataclass(frozen=True)
class ConstDecl:
    name: str
    ty: TypeExpr
    value: Optional[Expr]  # literal expression, None for generic constants


@dataclass(frozen=True)
class VarDecl:
    name: str
    ty: TypeExpr
    init: Expr


@dataclass(frozen=True)
class Param:
    name: str
    ty: TypeExpr


@dataclass(frozen=True)
class Event:
    name: str
    params: tuple[Param, ...]
    guard: tuple[Expr, ...]  # top-level conjuncts, empty means always enabled
    actions: tuple[tuple[str, Expr], ...]


@dataclass(frozen=True)
class Header:
    kind: str  # refines | views | instantiates
    target: str
    bindings: tuple[tuple[str, Expr], ...]  # instantiates only


@dataclass(frozen=True)
class Machine:
    name: str
    header: Optional[Header]
    sets: tuple[SetDecl, ...]
    consts: tuple[ConstDecl, ...]
    vars: tuple[VarDecl, ...]
    invariants: tuple[Expr, ...]
    events: tuple[Event, ...]

    def set_decl(self, name: str) -> Optional[SetDecl]:
        for s in self.sets:
            if s.name == name:
                return s
        return None

    def var_decl(self, name: str) -> Optional[VarDecl]:
        for v in self.vars:
            if v.name == name:
                return v
        return None

    def const_decl(self, name: str) -> Optional[ConstDecl]:
        for c in self.consts:
            if c.name == name:
                return c
        return None

    def event(self, name: str) -> Optional[Event]:
        for e in self.events:
            if e.name == name:
                return e
        return None

    def member_sets(self) -> dict[str, str]:
        """Map each enum member to the set declaring it."""
        out: dict[str, str] = {}
        for s in self.sets:
            for m in s.members:
                out.setdefault(m, s.name)
        return out

    def unbound_consts(self) -> list[ConstDecl]:
        return [c for c in self.consts if c.value is None]

    def is_generic(self) -> bool:
        return bool(self.unbound_consts())


# ---------------------------------------------------------------------------
# Well-formedness


@dataclass(frozen=True)
class WfError:
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


class _TypeMismatch(Exception):
    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


def _type_name(st: object) -> str:
    if st is STATIC_BOOL:
        return "BOOL"
    if st is STATIC_INT:
        return "INT"
    if isinstance(st, EnumType):
        return st.set_name
    if isinstance(st, SetType):
        return f"set of {st.set_name}"
    if st is None:
        return "empty set"
    return str(st)


def _set_compat(a: object, b: object) -> Optional[object]:
    """Join two set-ish static types; None stands for the {} literal."""
    if a is None:
        return b
    if b is None:
        return a
    if isinstance(a, SetType) and isinstance(b, SetType) and a == b:
        return a
    return False  # incompatible


def infer_type(expr: Expr, ctx: dict[str, TypeExpr], members: dict[str, str]) -> object:
    """Static type of expr: STATIC_BOOL, STATIC_INT, EnumType, SetType, or
    None for the polymorphic empty-set literal.  Raises _TypeMismatch."""
    if isinstance(expr, Lit):
        return STATIC_BOOL if isinstance(expr.value, bool) else STATIC_INT
    if isinstance(expr, Name):
        if expr.ident in ctx:
            return static_of(ctx[expr.ident])
        if expr.ident in members:
            return EnumType(members[expr.ident])
        raise _TypeMismatch(f"unknown identifier {expr.ident}")
    if isinstance(expr, SetLit):
        if not expr.members:
            return None
        elem_sets = set()
        for m in expr.members:
            mt = infer_type(m, ctx, members)
            if not isinstance(mt, EnumType):
                raise _TypeMismatch("set literal members must be enum values")
            elem_sets.add(mt.set_name)
        if len(elem_sets) > 1:
            raise _TypeMismatch("set literal mixes members of different sets")
        return SetType(elem_sets.pop())
    if isinstance(expr, Card):
        ot = infer_type(expr.operand, ctx, members)
        if ot is not None and not isinstance(ot, SetType):
            raise _TypeMismatch(f"card expects a set, got {_type_name(ot)}")
        return STATIC_INT
    if isinstance(expr, Unary):
        ot = infer_type(expr.operand, ctx, members)
        if expr.op == "not":
            if ot is not STATIC_BOOL:
                raise _TypeMismatch(f"not expects BOOL, got {_type_name(ot)}")
            return STATIC_BOOL
        if ot is not STATIC_INT:
            raise _TypeMismatch(f"unary - expects INT, got {_type_name(ot)}")
        return STATIC_INT
    if isinstance(expr, Binary):
        lt = infer_type(expr.left, ctx, members)
        rt = infer_type(expr.right, ctx, members)
        op = expr.op
        if op in ("+", "-", "*", "div", "mod"):
            if lt is not STATIC_INT or rt is not STATIC_INT:
                raise _TypeMismatch(f"{op} expects INT operands")
            return STATIC_INT
        if op in ("<", "<=", ">", ">="):
            if lt is not STATIC_INT or rt is not STATIC_INT:
                raise _TypeMismatch(f"{op} expects INT operands")
            return STATIC_BOOL
        if op in ("=", "/="):
            if isinstance(lt, SetType) or isinstance(rt, SetType) or lt is None or rt is None:
                if _set_compat(lt, rt) is False:
                    raise _TypeMismatch(
                        f"{op} compares {_type_name(lt)} with {_type_name(rt)}")
            elif lt != rt:
                raise _TypeMismatch(
                    f"{op} compares {_type_name(lt)} with {_type_name(rt)}")
            return STATIC_BOOL
        if op in ("and", "or", "=>"):
            if lt is not STATIC_BOOL or rt is not STATIC_BOOL:
                raise _TypeMismatch(f"{op} expects BOOL operands")
            return STATIC_BOOL
        if op in ("\\/", "/\\", "\\"):
            joined = _set_compat(lt, rt)
            if joined is False:
                raise _TypeMismatch(
                    f"{op} expects sets over the same base, got "
                    f"{_type_name(lt)} and {_type_name(rt)}")
            return joined  # may still be None for {} op {}
        if op == ":":
            if not isinstance(lt, EnumType):
                raise _TypeMismatch("membership expects an enum value on the left")
            if rt is not None and rt != SetType(lt.set_name):
                raise _TypeMismatch(
                    f"membership of {lt.set_name} value in {_type_name(rt)}")
            return STATIC_BOOL
        raise _TypeMismatch(f"unknown operator {op}")
    raise _TypeMismatch(f"unknown expression {expr!r}")


def assignable(value_type: object, declared: TypeExpr) -> bool:
    """Can an expression of this static type be assigned to the declared type?"""
    target = static_of(declared)
    if value_type is None:
        return isinstance(declared, SetType)
    return value_type == target


def _check_type_ref(ty: TypeExpr, machine: Machine, loc: str, errors: list[WfError]) -> None:
    if isinstance(ty, IntRange) and ty.lo > ty.hi:
        errors.append(WfError(loc, f"empty range {ty.lo} .. {ty.hi}"))
    if isinstance(ty, (EnumType, SetType)) and machine.set_decl(ty.set_name) is None:
        errors.append(WfError(loc, f"unknown set {ty.set_name}"))


def _check_bool(expr: Expr, ctx: dict[str, TypeExpr], members: dict[str, str],
                loc: str, errors: list[WfError]) -> None:
    try:
        t = infer_type(expr, ctx, members)
        if t is not STATIC_BOOL:
            errors.append(WfError(loc, f"expected BOOL, got {_type_name(t)}"))
    except _TypeMismatch as e:
        errors.append(WfError(loc, e.message))


def well_formed(machine: Machine) -> list[WfError]:
    """All static errors of a parsed machine; empty iff the machine is sound.

    Never raises: any parser-accepted AST yields a (possibly empty) error list.
    """
    errors: list[WfError] = []
    members = machine.member_sets()

    seen_sets: set[str] = set()
    for s in machine.sets:
        if s.name in seen_sets:
            errors.append(WfError(f"set {s.name}", "duplicate set"))
        seen_sets.add(s.name)
        seen_members: set[str] = set()
        for m in s.members:
            if m in seen_members:
                errors.append(WfError(f"set {s.name}", f"duplicate member {m}"))
            seen_members.add(m)

    # Value namespace: members, constants, variables (and per-event params)
    # must be pairwise distinct so a bare identifier resolves unambiguously.
    value_names: set[str] = set()
    for s in machine.sets:
        for m in s.members:
            if m in value_names:
                errors.append(WfError(f"set {s.name}", f"member {m} clashes with another declaration"))
            value_names.add(m)

    ctx: dict[str, TypeExpr] = {}
    for c in machine.consts:
        if c.name in value_names or c.name in ctx:
            errors.append(WfError(f"const {c.name}", f"duplicate declaration {c.name}"))
            continue
        value_names.add(c.name)
        _check_type_ref(c.ty, machine, f"const {c.name}", errors)
        ctx[c.name] = c.ty
        if c.value is not None:
            try:
                t = infer_type(c.value, ctx, members)
                if not assignable(t, c.ty):
                    errors.append(WfError(f"const {c.name}",
                                          f"value does not have type {c.ty}"))
                else:
                    from .engine import literal_value, inhabits
                    v = literal_value(c.value, machine)
                    if v is not None and not inhabits(v, c.ty, machine):
                        errors.append(WfError(f"const {c.name}",
                                              f"value outside {c.ty}"))
            except _TypeMismatch as e:
                errors.append(WfError(f"const {c.name}", e.message))

    for v in machine.vars:
        if v.name in value_names:
            errors.append(WfError(f"var {v.name}", f"duplicate variable {v.name}"))
            continue
        value_names.add(v.name)
        _check_type_ref(v.ty, machine, f"var {v.name}", errors)
        ctx[v.name] = v.ty

    for v in machine.vars:
        if machine.var_decl(v.name) is not v:
            continue  # duplicate, reported above
        try:
            t = infer_type(v.init, ctx, members)
            if not assignable(t, v.ty):
                errors.append(WfError(f"var {v.name}",
                                      f"init does not have type {v.ty}"))
        except _TypeMismatch as e:
            errors.append(WfError(f"var {v.name} init", e.message))

    for i, inv in enumerate(machine.invariants):
        _check_bool(inv, ctx, members, f"invariant {i + 1}", errors)

    seen_events: set[str] = set()
    for ev in machine.events:
        loc = f"event {ev.name}"
        if ev.name in seen_events:
            errors.append(WfError(loc, "duplicate event"))
            continue
        seen_events.add(ev.name)

        ectx = dict(ctx)
        seen_params: set[str] = set()
        for p in ev.params:
            if p.name in seen_params or p.name in value_names:
                errors.append(WfError(loc, f"parameter {p.name} clashes with another declaration"))
            seen_params.add(p.name)
            _check_type_ref(p.ty, machine, f"{loc} param {p.name}", errors)
            ectx[p.name] = p.ty

        for j, g in enumerate(ev.guard):
            _check_bool(g, ectx, members, f"{loc} guard {j + 1}", errors)

        assigned: set[str] = set()
        for target, rhs in ev.actions:
            aloc = f"{loc} action {target}"
            if target in assigned:
                errors.append(WfError(aloc, f"{target} assigned twice"))
            assigned.add(target)
            decl = machine.var_decl(target)
            if decl is None:
                errors.append(WfError(aloc, f"{target} is not a variable"))
                continue
            try:
                t = infer_type(rhs, ectx, members)
                if not assignable(t, decl.ty):
                    errors.append(WfError(aloc, f"value does not have type {decl.ty}"))
            except _TypeMismatch as e:
                errors.append(WfError(aloc, e.message))

    return errors


# ---------------------------------------------------------------------------
# Canonical printing and hashing

def _print_type(ty: TypeExpr) -> str:
    if isinstance(ty, BoolType):
        return "BOOL"
    if isinstance(ty, IntRange):
        return f"{ty.lo} .. {ty.hi}"
    if isinstance(ty, EnumType):
        return ty.set_name
    return f"set of {ty.set_name}"


def print_expr(expr: Expr) -> str:
    """Fully parenthesized canonical form; reparses to the same AST."""
    if isinstance(expr, Lit):
        if isinstance(expr.value, bool):
            return "true" if expr.value else "false"
        assert expr.value >= 0, "negative ints appear as unary minus in exprs"
        return str(expr.value)
    if isinstance(expr, Name):
        return expr.ident
    if isinstance(expr, SetLit):
        if not expr.members:
            return "{ }"
        return "{ " + " , ".join(print_expr(m) for m in expr.members) + " }"
    if isinstance(expr, Unary):
        return f"( {expr.op} {print_expr(expr.operand)} )"
    if isinstance(expr, Binary):
        return f"( {print_expr(expr.left)} {expr.op} {print_expr(expr.right)} )"
    if isinstance(expr, Card):
        return f"card ( {print_expr(expr.operand)} )"
    raise SpecError(f"cannot print {expr!r}")


def print_literal(expr: Expr) -> str:
    """Literal slots (const values, instantiation bindings) print bare."""
    if isinstance(expr, Lit) and isinstance(expr.value, int) and not isinstance(expr.value, bool):
        return str(expr.value)  # may carry a sign; relexes to [-, INT]
    if isinstance(expr, SetLit):
        if not expr.members:
            return "{ }"
        return "{ " + " , ".join(print_literal(m) for m in expr.members) + " }"
    if isinstance(expr, (Lit, Name)):
        return print_expr(expr)
    raise SpecError(f"not a literal: {expr!r}")


def canonical_print(machine: Machine) -> str:
    """Deterministic single-space token rendering of the whole machine."""
    parts: list[str] = ["machine", machine.name]
    if machine.header is not None:
        h = machine.header
        parts.append(h.kind)
        parts.append(h.target)
        if h.kind == "instantiates":
            parts.append("with")
            binds = []
            for name, value in h.bindings:
                binds.append(f"{name} = {print_literal(value)}")
            parts.append(" , ".join(binds))
    for s in machine.sets:
        parts.append(f"set {s.name} = {{ {' , '.join(s.members)} }}")
    for c in machine.consts:
        piece = f"const {c.name} : {_print_type(c.ty)}"
        if c.value is not None:
            piece += f" = {print_literal(c.value)}"
        parts.append(piece)
    for v in machine.vars:
        parts.append(f"var {v.name} : {_print_type(v.ty)} init {print_expr(v.init)}")
    if machine.invariants:
        parts.append("invariant " + " ; ".join(print_expr(p) for p in machine.invariants))
    for ev in machine.events:
        piece = f"event {ev.name}"
        if ev.params:
            piece += " ( " + " , ".join(f"{p.name} : {_print_type(p.ty)}" for p in ev.params) + " )"
        if ev.guard:
            piece += " when " + " & ".join(print_expr(g) for g in ev.guard)
        piece += " then " + " ; ".join(f"{t} := {print_expr(e)}" for t, e in ev.actions)
        piece += " end"
        parts.append(piece)
    parts.append("end")
    return " ".join(parts)


def canonical_hash(machine: Machine) -> str:
    """Hex digest over the canonical printing: stable under reformatting and
    comment edits, changed by any semantic edit."""
    return hashlib.sha256(canonical_print(machine).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Expression helpers

def walk(expr: Expr) -> Iterator[Expr]:
    yield expr
    if isinstance(expr, SetLit):
        for m in expr.members:
            yield from walk(m)
    elif isinstance(expr, (Unary, Card)):
        yield from walk(expr.operand)
    elif isinstance(expr, Binary):
        yield from walk(expr.left)
        yield from walk(expr.right)


def substitute(expr: Expr, mapping: dict[str, Expr]) -> Expr:
    """Replace identifiers by expressions (no binders in the language)."""
    if isinstance(expr, Name):
        return mapping.get(expr.ident, expr)
    if isinstance(expr, Lit):
        return expr
    if isinstance(expr, SetLit):
        return SetLit(tuple(substitute(m, mapping) for m in expr.members))
    if isinstance(expr, Unary):
        return Unary(expr.op, substitute(expr.operand, mapping))
    if isinstance(expr, Card):
        return Card(substitute(expr.operand, mapping))
    if isinstance(expr, Binary):
        return Binary(expr.op, substitute(expr.left, mapping),
                      substitute(expr.right, mapping))
    raise SpecError(f"cannot substitute in {expr!r}")


def value_to_expr(value: object) -> Expr:
    """Embed a runtime value into an expression slot."""
    if isinstance(value, bool):
        return Lit(value)
    if isinstance(value, int):
        return Lit(value) if value >= 0 else Unary("-", Lit(-value))
    if isinstance(value, str):
        return Name(value)
    if isinstance(value, frozenset):
        return SetLit(tuple(Name(m) for m in sorted(value)))
    raise SpecError(f"not a value: {value!r}")


def value_to_literal(value: object) -> Expr:
    """Embed a runtime value into a literal slot (signed Lit allowed)."""
    if isinstance(value, bool) or isinstance(value, int):
        return Lit(value)
    return value_to_expr(value)


# ---------------------------------------------------------------------------
# Instantiation

def instantiate(machine: Machine, bindings: dict[str, object],
                new_name: Optional[str] = None) -> Machine:
    """Bind the machine's generic constants to literal values.

    Every constant (pre-bound or newly bound) is substituted away, yielding a
    constant-free machine ready for direct exploration.  Bindings must cover
    exactly the unbound constants with type-correct values.
    """
    from .engine import inhabits, literal_value

    unbound = {c.name for c in machine.unbound_consts()}
    for name in bindings:
        decl = machine.const_decl(name)
        if decl is None:
            raise SpecError(f"{machine.name}: binding a non-constant {name}")
        if decl.value is not None:
            raise SpecError(f"{machine.name}: constant {name} already has a value")
    missing = unbound - set(bindings)
    if missing:
        raise SpecError(
            f"{machine.name}: missing binding for {', '.join(sorted(missing))}")

    mapping: dict[str, Expr] = {}
    for c in machine.consts:
        if c.name in bindings:
            value = bindings[c.name]
            if not inhabits(value, c.ty, machine):
                raise SpecError(
                    f"{machine.name}: binding {c.name}={value!r} does not have type {c.ty}")
        else:
            value = literal_value(c.value, machine)
        mapping[c.name] = value_to_expr(value)

    def sub(e: Expr) -> Expr:
        return substitute(e, mapping)

    events = tuple(
        Event(ev.name, ev.params,
              tuple(sub(g) for g in ev.guard),
              tuple((t, sub(rhs)) for t, rhs in ev.actions))
        for ev in machine.events)
    inst = Machine(
        name=new_name or machine.name,
        header=None,
        sets=machine.sets,
        consts=(),
        vars=tuple(VarDecl(v.name, v.ty, sub(v.init)) for v in machine.vars),
        invariants=tuple(sub(p) for p in machine.invariants),
        events=events)
    problems = well_formed(inst)
    if problems:
        raise SpecError(
            f"instantiation of {machine.name} is ill-formed: {problems[0]}")
    return inst
