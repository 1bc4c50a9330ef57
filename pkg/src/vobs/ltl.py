"""Linear temporal logic over machines: parsing, safety classification,
tableau translation to Büchi automata, and product model checking.

Atoms are either state predicates `{pred}` in the machine's expression
language or event propositions `[event]`.  An event proposition holds at a
position when the transition leaving that position carries the event
(action-based reading).  Deadlock states receive an implicit `$stutter`
self-loop during LTL checking only, so all paths are infinite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Union

from . import parser as machine_parser
from .engine import (
    EngineError, EvalError, Limits, StateSpace, STUTTER, TransitionLabel,
    const_env, eval_expr, explore, state_str,
)
from .lang import Expr, Machine, infer_type, print_expr, substitute, STATIC_BOOL, _TypeMismatch
from .parser import ParseError


# ---------------------------------------------------------------------------
# Formula AST


@dataclass(frozen=True)
class StateAtom:
    pred: Expr


@dataclass(frozen=True)
class EventAtom:
    event: str


@dataclass(frozen=True)
class LTrue:
    pass


@dataclass(frozen=True)
class LFalse:
    pass


@dataclass(frozen=True)
class Not:
    operand: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Next:
    operand: "Formula"


@dataclass(frozen=True)
class Eventually:
    operand: "Formula"


@dataclass(frozen=True)
class Always:
    operand: "Formula"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Release:
    # NNF-internal dual of Until; not part of the surface syntax.
    left: "Formula"
    right: "Formula"


Formula = Union[StateAtom, EventAtom, LTrue, LFalse, Not, And, Or, Implies,
                Next, Eventually, Always, Until, Release]


def print_formula(f: Formula) -> str:
    """Fully parenthesized canonical rendering; equal strings mean equal
    formulas after parsing."""
    if isinstance(f, StateAtom):
        return "{" + print_expr(f.pred) + "}"
    if isinstance(f, EventAtom):
        return f"[{f.event}]"
    if isinstance(f, LTrue):
        return "true"
    if isinstance(f, LFalse):
        return "false"
    if isinstance(f, Not):
        return f"(not {print_formula(f.operand)})"
    if isinstance(f, Next):
        return f"(X {print_formula(f.operand)})"
    if isinstance(f, Eventually):
        return f"(F {print_formula(f.operand)})"
    if isinstance(f, Always):
        return f"(G {print_formula(f.operand)})"
    if isinstance(f, And):
        return f"({print_formula(f.left)} and {print_formula(f.right)})"
    if isinstance(f, Or):
        return f"({print_formula(f.left)} or {print_formula(f.right)})"
    if isinstance(f, Implies):
        return f"({print_formula(f.left)} => {print_formula(f.right)})"
    if isinstance(f, Until):
        return f"({print_formula(f.left)} U {print_formula(f.right)})"
    if isinstance(f, Release):
        return f"({print_formula(f.left)} R {print_formula(f.right)})"
    raise EngineError(f"cannot print {f!r}")


def atoms_of(f: Formula) -> Iterator[Formula]:
    if isinstance(f, (StateAtom, EventAtom)):
        yield f
    elif isinstance(f, (Not, Next, Eventually, Always)):
        yield from atoms_of(f.operand)
    elif isinstance(f, (And, Or, Implies, Until, Release)):
        yield from atoms_of(f.left)
        yield from atoms_of(f.right)


def map_atoms(f: Formula, fn: Callable[[Formula], Formula]) -> Formula:
    if isinstance(f, (StateAtom, EventAtom)):
        return fn(f)
    if isinstance(f, (LTrue, LFalse)):
        return f
    if isinstance(f, Not):
        return Not(map_atoms(f.operand, fn))
    if isinstance(f, Next):
        return Next(map_atoms(f.operand, fn))
    if isinstance(f, Eventually):
        return Eventually(map_atoms(f.operand, fn))
    if isinstance(f, Always):
        return Always(map_atoms(f.operand, fn))
    ctor = type(f)
    return ctor(map_atoms(f.left, fn), map_atoms(f.right, fn))


# ---------------------------------------------------------------------------
# Parsing
#
# Grammar: unary (G F X not) > U > and > or > =>; atoms {pred} and [event].


def _tokenize_ltl(text: str) -> list[tuple[str, str, int, int]]:
    tokens = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line, col = line + 1, 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "{":
            depth = 1
            j = i + 1
            while j < n and depth:
                if text[j] == "{":
                    depth += 1
                elif text[j] == "}":
                    depth -= 1
                j += 1
            if depth:
                raise ParseError(line, col, "unterminated `{` atom")
            tokens.append(("PRED", text[i + 1:j - 1], line, col))
            col += j - i
            i = j
            continue
        if ch == "[":
            j = text.find("]", i)
            if j < 0:
                raise ParseError(line, col, "unterminated `[` atom")
            name = text[i + 1:j].strip()
            if name.startswith("$"):
                raise ParseError(line, col, f"reserved event name {name}")
            if not name.replace("_", "a").isalnum() or name[:1].isdigit():
                raise ParseError(line, col, f"invalid event name {name!r}")
            tokens.append(("EVENT", name, line, col))
            col += j - i + 1
            i = j + 1
            continue
        if ch in "()":
            tokens.append((ch, ch, line, col))
            i += 1
            col += 1
            continue
        if text.startswith("=>", i):
            tokens.append(("=>", "=>", line, col))
            i += 2
            col += 2
            continue
        if ch.isalpha():
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            if word not in ("G", "F", "X", "U", "not", "and", "or"):
                raise ParseError(line, col, f"unexpected word {word!r}")
            tokens.append((word, word, line, col))
            col += j - i
            i = j
            continue
        raise ParseError(line, col, f"unexpected character {ch!r}")
    tokens.append(("EOF", "", line, col))
    return tokens


class _LtlParser:
    def __init__(self, tokens: list[tuple[str, str, int, int]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> str:
        return self.tokens[self.pos][0]

    def advance(self) -> tuple[str, str, int, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str) -> ParseError:
        _, _, line, col = self.tokens[self.pos]
        return ParseError(line, col, message)

    def formula(self) -> Formula:
        left = self.or_f()
        if self.peek() == "=>":
            self.advance()
            return Implies(left, self.formula())
        return left

    def or_f(self) -> Formula:
        left = self.and_f()
        while self.peek() == "or":
            self.advance()
            left = Or(left, self.and_f())
        return left

    def and_f(self) -> Formula:
        left = self.until_f()
        while self.peek() == "and":
            self.advance()
            left = And(left, self.until_f())
        return left

    def until_f(self) -> Formula:
        left = self.unary()
        if self.peek() == "U":
            self.advance()
            return Until(left, self.until_f())
        return left

    def unary(self) -> Formula:
        kind = self.peek()
        if kind == "not":
            self.advance()
            return Not(self.unary())
        if kind == "X":
            self.advance()
            return Next(self.unary())
        if kind == "F":
            self.advance()
            return Eventually(self.unary())
        if kind == "G":
            self.advance()
            return Always(self.unary())
        return self.atom()

    def atom(self) -> Formula:
        kind, text, line, col = self.tokens[self.pos]
        if kind == "PRED":
            self.advance()
            try:
                pred = machine_parser.parse_expr(text)
            except ParseError as e:
                raise ParseError(line, col, f"in `{{...}}` atom: {e.message}")
            return StateAtom(pred)
        if kind == "EVENT":
            self.advance()
            return EventAtom(text)
        if kind == "(":
            self.advance()
            inner = self.formula()
            if self.peek() != ")":
                raise self.error("expected `)`")
            self.advance()
            return inner
        raise self.error(f"expected a formula, found {text or 'end of input'!r}")


def parse_ltl(text: str) -> Formula:
    p = _LtlParser(_tokenize_ltl(text))
    f = p.formula()
    if p.peek() != "EOF":
        raise p.error("trailing input after formula")
    return f


def validate_formula(machine: Machine, formula: Formula) -> list[str]:
    """Type errors of `{pred}` atoms and unknown `[event]` names."""
    errors = []
    ctx = {c.name: c.ty for c in machine.consts}
    ctx.update({v.name: v.ty for v in machine.vars})
    members = machine.member_sets()
    for atom in atoms_of(formula):
        if isinstance(atom, StateAtom):
            try:
                t = infer_type(atom.pred, ctx, members)
                if t is not STATIC_BOOL:
                    errors.append(f"atom {{{print_expr(atom.pred)}}} is not boolean")
            except _TypeMismatch as e:
                errors.append(f"atom {{{print_expr(atom.pred)}}}: {e.message}")
        elif machine.event(atom.event) is None:
            errors.append(f"unknown event [{atom.event}]")
    return errors


# ---------------------------------------------------------------------------
# Negation normal form and the safety fragment


def nnf(f: Formula) -> Formula:
    """Push negations to the atoms; F and G normalize to U and R."""
    if isinstance(f, (StateAtom, EventAtom, LTrue, LFalse)):
        return f
    if isinstance(f, Not):
        return _neg(f.operand)
    if isinstance(f, And):
        return And(nnf(f.left), nnf(f.right))
    if isinstance(f, Or):
        return Or(nnf(f.left), nnf(f.right))
    if isinstance(f, Implies):
        return Or(_neg(f.left), nnf(f.right))
    if isinstance(f, Next):
        return Next(nnf(f.operand))
    if isinstance(f, Eventually):
        return Until(LTrue(), nnf(f.operand))
    if isinstance(f, Always):
        return Release(LFalse(), nnf(f.operand))
    if isinstance(f, Until):
        return Until(nnf(f.left), nnf(f.right))
    if isinstance(f, Release):
        return Release(nnf(f.left), nnf(f.right))
    raise EngineError(f"cannot normalize {f!r}")


def _neg(f: Formula) -> Formula:
    if isinstance(f, (StateAtom, EventAtom)):
        return Not(f)
    if isinstance(f, LTrue):
        return LFalse()
    if isinstance(f, LFalse):
        return LTrue()
    if isinstance(f, Not):
        return nnf(f.operand)
    if isinstance(f, And):
        return Or(_neg(f.left), _neg(f.right))
    if isinstance(f, Or):
        return And(_neg(f.left), _neg(f.right))
    if isinstance(f, Implies):
        return And(nnf(f.left), _neg(f.right))
    if isinstance(f, Next):
        return Next(_neg(f.operand))
    if isinstance(f, Eventually):
        return Release(LFalse(), _neg(f.operand))
    if isinstance(f, Always):
        return Until(LTrue(), _neg(f.operand))
    if isinstance(f, Until):
        return Release(_neg(f.left), _neg(f.right))
    if isinstance(f, Release):
        return Until(_neg(f.left), _neg(f.right))
    raise EngineError(f"cannot negate {f!r}")


def _subformulas(f: Formula) -> Iterator[Formula]:
    yield f
    if isinstance(f, (Not, Next, Eventually, Always)):
        yield from _subformulas(f.operand)
    elif isinstance(f, (And, Or, Implies, Until, Release)):
        yield from _subformulas(f.left)
        yield from _subformulas(f.right)


@dataclass(frozen=True)
class SafetyClass:
    safety: bool
    inheritance_eligible: bool


def classify_safety(formula: Formula) -> SafetyClass:
    """Syntactic safety fragment: the NNF contains no eventuality (U, and F
    which normalizes to U).  Inheritance down a refinement edge additionally
    requires no X and no event atoms, because new events stutter the glued
    state but do advance positions and transition labels."""
    normal = nnf(formula)
    has_until = any(isinstance(g, Until) for g in _subformulas(normal))
    has_next = any(isinstance(g, Next) for g in _subformulas(normal))
    has_event = any(isinstance(a, EventAtom) for a in atoms_of(formula))
    safety = not has_until
    return SafetyClass(safety, safety and not has_next and not has_event)


# ---------------------------------------------------------------------------
# Büchi construction (tableau expand algorithm, generalized acceptance)


@dataclass
class BuchiNode:
    id: int
    obligations: tuple[tuple[Formula, bool], ...]  # atom, required polarity
    successors: tuple[int, ...] = ()


@dataclass
class BuchiAutomaton:
    nodes: list[BuchiNode]
    initial: tuple[int, ...]
    accepting_sets: tuple[frozenset[int], ...]  # generalized; degeneralized
    # on the fly with a counter component during product exploration

    def node(self, node_id: int) -> BuchiNode:
        return self.nodes[node_id - 1]  # ids are 1-based in creation order


class _Raw:
    __slots__ = ("id", "incoming", "old", "next")

    def __init__(self, id: int, incoming: set[int], old: frozenset, next_: frozenset):
        self.id = id
        self.incoming = incoming
        self.old = old
        self.next = next_


def _fkey(f: Formula) -> str:
    return print_formula(f)


def _is_literal(f: Formula) -> bool:
    return isinstance(f, (StateAtom, EventAtom, LTrue, LFalse)) or (
        isinstance(f, Not) and isinstance(f.operand, (StateAtom, EventAtom)))


def to_buchi(formula: Formula) -> BuchiAutomaton:
    """Translate to a generalized Büchi automaton whose nodes carry atom
    obligations; one acceptance set per Until subformula.  The caller negates
    the checked property first."""
    phi = nnf(formula)
    raws: list[_Raw] = []
    counter = [0]

    def expand(new: frozenset, old: frozenset, next_: frozenset,
               incoming: set[int]) -> None:
        if not new:
            for rd in raws:
                if rd.old == old and rd.next == next_:
                    rd.incoming |= incoming
                    return
            counter[0] += 1
            rd = _Raw(counter[0], set(incoming), old, next_)
            raws.append(rd)
            expand(frozenset(next_), frozenset(), frozenset(), {rd.id})
            return
        eta = min(new, key=_fkey)
        rest = new - {eta}
        if _is_literal(eta):
            if isinstance(eta, LFalse) or _neg_literal(eta) in old:
                return  # contradictory node, discarded
            grown = old if isinstance(eta, LTrue) else old | {eta}
            expand(rest, grown, next_, incoming)
        elif isinstance(eta, And):
            expand(rest | ({eta.left, eta.right} - old), old | {eta}, next_, incoming)
        elif isinstance(eta, Next):
            expand(rest, old | {eta}, next_ | {eta.operand}, incoming)
        elif isinstance(eta, Or):
            expand(rest | ({eta.left} - old), old | {eta}, next_, incoming)
            expand(rest | ({eta.right} - old), old | {eta}, next_, incoming)
        elif isinstance(eta, Until):
            expand(rest | ({eta.left} - old), old | {eta}, next_ | {eta}, incoming)
            expand(rest | ({eta.right} - old), old | {eta}, next_, incoming)
        elif isinstance(eta, Release):
            expand(rest | ({eta.right} - old), old | {eta}, next_ | {eta}, incoming)
            expand(rest | ({eta.left, eta.right} - old), old | {eta}, next_, incoming)
        else:
            raise EngineError(f"unexpected formula in tableau: {eta!r}")

    expand(frozenset([phi]), frozenset(), frozenset(), {0})

    nodes = []
    for rd in raws:
        obligations = []
        for g in sorted(rd.old, key=_fkey):
            if isinstance(g, (StateAtom, EventAtom)):
                obligations.append((g, True))
            elif isinstance(g, Not):
                obligations.append((g.operand, False))
        successors = tuple(other.id for other in raws if rd.id in other.incoming)
        nodes.append(BuchiNode(rd.id, tuple(obligations), successors))

    initial = tuple(rd.id for rd in raws if 0 in rd.incoming)
    untils = sorted({g for g in _subformulas(phi) if isinstance(g, Until)}, key=_fkey)
    accepting = tuple(
        frozenset(rd.id for rd in raws if u not in rd.old or u.right in rd.old)
        for u in untils)
    return BuchiAutomaton(nodes, initial, accepting)


def _neg_literal(f: Formula) -> Formula:
    if isinstance(f, Not):
        return f.operand
    if isinstance(f, LTrue):
        return LFalse()
    if isinstance(f, LFalse):
        return LTrue()
    return Not(f)


# ---------------------------------------------------------------------------
# Product construction and emptiness (nested depth-first search)


@dataclass
class Lasso:
    prefix: list[tuple[int, TransitionLabel]]
    cycle: list[tuple[int, TransitionLabel]]


@dataclass
class LtlResult:
    verdict: str  # "pass" | "fail" | "inconclusive"
    lasso: Optional[Lasso] = None
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def stutter_adjacency(space: StateSpace) -> list[list[tuple[TransitionLabel, int]]]:
    """Outgoing edges per state with `$stutter` self-loops on deadlocks."""
    adj: list[list[tuple[TransitionLabel, int]]] = [[] for _ in space.states]
    for src, label, dst in space.transitions:
        adj[src].append((label, dst))
    for d in space.deadlocks:
        adj[d].append((TransitionLabel(STUTTER), d))
    return adj


class _AtomEvaluator:
    def __init__(self, machine: Machine, space: StateSpace):
        self.machine = machine
        self.space = space
        self.consts = const_env(machine)
        self.cache: dict[tuple[int, Expr], bool] = {}

    def state_atom(self, state_idx: int, pred: Expr) -> bool:
        key = (state_idx, pred)
        if key not in self.cache:
            env = {**self.consts, **self.space.states[state_idx]}
            try:
                self.cache[key] = bool(eval_expr(pred, env, self.machine))
            except EvalError as e:
                raise EngineError(
                    f"atom {{{print_expr(pred)}}} failed at state "
                    f"{state_str(self.machine, self.space.states[state_idx])}: {e}")
        return self.cache[key]

    def letter_satisfies(self, state_idx: int, label: TransitionLabel,
                         obligations: tuple[tuple[Formula, bool], ...]) -> bool:
        for atom, wanted in obligations:
            if isinstance(atom, StateAtom):
                got = self.state_atom(state_idx, atom.pred)
            else:
                got = label.event == atom.event
            if got != wanted:
                return False
        return True


def check_ltl(machine: Machine, formula: Formula, limits: Limits = Limits(),
              space: Optional[StateSpace] = None) -> LtlResult:
    """Model-check the formula over all infinite paths of the machine.

    Fail returns a lasso counterexample over the explored state space.  If
    exploration hit a limit the result is inconclusive: deadlocks (and hence
    stutter loops) are unreliable in a truncated space.
    """
    problems = validate_formula(machine, formula)
    if problems:
        raise EngineError(f"formula invalid for {machine.name}: {problems[0]}")
    if space is None:
        space = explore(machine, limits)
    if space.error is not None:
        raise EngineError(f"exploration failed at state {space.error[0]}: {space.error[1]}")
    if space.truncated:
        return LtlResult("inconclusive", reason=f"exploration truncated: {space.limit_hit}")

    automaton = to_buchi(Not(formula))
    adj = stutter_adjacency(space)
    atoms = _AtomEvaluator(machine, space)
    k = len(automaton.accepting_sets)

    def bump(node_id: int, copy: int) -> int:
        if k and node_id in automaton.accepting_sets[copy]:
            return (copy + 1) % k
        return copy

    def is_accepting(node_id: int, copy: int) -> bool:
        if not k:
            return True
        return copy == 0 and node_id in automaton.accepting_sets[0]

    def successors(state: tuple[int, int, int]) -> Iterator[
            tuple[tuple[int, int, int], tuple[int, TransitionLabel]]]:
        s, q, copy = state
        node = automaton.node(q)
        nxt_copy = bump(q, copy)
        for label, s2 in adj[s]:
            if not atoms.letter_satisfies(s, label, node.obligations):
                continue
            for q2 in node.successors:
                yield (s2, q2, nxt_copy), (s, label)

    # Nested DFS: the outer search launches an inner cycle search from every
    # accepting product state in post-order; inner hits on the outer stack
    # close an accepting lasso.
    visited: set[tuple[int, int, int]] = set()
    flagged: set[tuple[int, int, int]] = set()

    for q0 in automaton.initial:
        root = (0, q0, 0)
        if root in visited:
            continue
        path: list[tuple[int, int, int]] = []
        path_edges: list[tuple[int, TransitionLabel]] = []
        on_path: dict[tuple[int, int, int], int] = {}
        stack: list[tuple[tuple[int, int, int], Iterator]] = []

        visited.add(root)
        path.append(root)
        on_path[root] = 0
        stack.append((root, successors(root)))

        while stack:
            state, it = stack[-1]
            advanced = False
            for succ, edge in it:
                if succ not in visited:
                    visited.add(succ)
                    path.append(succ)
                    path_edges.append(edge)
                    on_path[succ] = len(path) - 1
                    stack.append((succ, successors(succ)))
                    advanced = True
                    break
            if advanced:
                continue
            # post-order for `state`
            if is_accepting(state[1], state[2]):
                hit = _inner_search(state, successors, on_path, flagged)
                if hit is not None:
                    inner_edges, target = hit
                    cycle = inner_edges + path_edges[on_path[target]:]
                    return LtlResult("fail", lasso=Lasso(
                        prefix=list(path_edges), cycle=cycle))
            stack.pop()
            on_path.pop(state, None)
            path.pop()
            if path_edges:
                path_edges.pop()
    return LtlResult("pass")


def _inner_search(seed, successors, on_path, flagged):
    """Cycle search: a path from seed back to any state on the outer stack.
    Returns (edge list, reached stack state) or None; `flagged` persists
    across calls to keep the nested search linear."""
    stack = [(seed, successors(seed))]
    edges: list[tuple[int, TransitionLabel]] = []
    flagged.add(seed)
    while stack:
        state, it = stack[-1]
        advanced = False
        for succ, edge in it:
            if succ in on_path:
                edges.append(edge)
                return edges, succ
            if succ not in flagged:
                flagged.add(succ)
                edges.append(edge)
                stack.append((succ, successors(succ)))
                advanced = True
                break
        if advanced:
            continue
        stack.pop()
        if edges:
            edges.pop()
    return None


def format_lasso(machine: Machine, space: StateSpace, lasso: Lasso) -> str:
    lines = ["PREFIX:"]
    for idx, label in lasso.prefix:
        lines.append(f"  {idx} {state_str(machine, space.states[idx])} -> {label}")
    lines.append("CYCLE:")
    for idx, label in lasso.cycle:
        lines.append(f"  {idx} {state_str(machine, space.states[idx])} -> {label}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Brute-force oracle: enumerate lassos, evaluate semantics directly

ORACLE_MAX_STATES = 12


def enumerate_lassos(space: StateSpace, max_total_len: int,
                     cap: int = 1_000_000) -> list[tuple[list[tuple[int, TransitionLabel]], int]]:
    """All lassos from state 0 with prefix+cycle length <= max_total_len over
    the stutter-augmented graph.  Each lasso is (edge list, loop start index):
    edges [k:] form the cycle."""
    adj = stutter_adjacency(space)
    out: list[tuple[list[tuple[int, TransitionLabel]], int]] = []

    path_states = [0]
    path_edges: list[tuple[int, TransitionLabel]] = []

    def extend() -> None:
        if len(out) > cap:
            raise EngineError(f"lasso enumeration exceeds {cap}")
        here = path_states[-1]
        for k, s in enumerate(path_states[:-1]):
            if s == here and path_edges:
                out.append((list(path_edges), k))
        if len(path_edges) >= max_total_len:
            return
        for label, dst in adj[here]:
            path_edges.append((here, label))
            path_states.append(dst)
            extend()
            path_states.pop()
            path_edges.pop()

    extend()
    return out


def eval_on_lasso(machine: Machine, space: StateSpace,
                  edges: list[tuple[int, TransitionLabel]], loop_start: int,
                  formula: Formula) -> bool:
    """Direct LTL semantics on the ultimately periodic word spelled by the
    lasso, with operators unrolled until the walk provably repeats."""
    atoms = _AtomEvaluator(machine, space)
    n = len(edges)

    def nxt(i: int) -> int:
        return i + 1 if i + 1 < n else loop_start

    memo: dict[tuple[Formula, int], bool] = {}

    def ev(f: Formula, i: int) -> bool:
        key = (f, i)
        if key in memo:
            return memo[key]
        result = _ev(f, i)
        memo[key] = result
        return result

    def _ev(f: Formula, i: int) -> bool:
        state_idx, label = edges[i]
        if isinstance(f, StateAtom):
            return atoms.state_atom(state_idx, f.pred)
        if isinstance(f, EventAtom):
            return label.event == f.event
        if isinstance(f, LTrue):
            return True
        if isinstance(f, LFalse):
            return False
        if isinstance(f, Not):
            return not ev(f.operand, i)
        if isinstance(f, And):
            return ev(f.left, i) and ev(f.right, i)
        if isinstance(f, Or):
            return ev(f.left, i) or ev(f.right, i)
        if isinstance(f, Implies):
            return (not ev(f.left, i)) or ev(f.right, i)
        if isinstance(f, Next):
            return ev(f.operand, nxt(i))
        if isinstance(f, Always):
            j, seen = i, set()
            while j not in seen:
                seen.add(j)
                if not ev(f.operand, j):
                    return False
                j = nxt(j)
            return True
        if isinstance(f, Eventually):
            j, seen = i, set()
            while j not in seen:
                seen.add(j)
                if ev(f.operand, j):
                    return True
                j = nxt(j)
            return False
        if isinstance(f, Until):
            j, seen = i, set()
            while j not in seen:
                seen.add(j)
                if ev(f.right, j):
                    return True
                if not ev(f.left, j):
                    return False
                j = nxt(j)
            return False
        if isinstance(f, Release):
            j, seen = i, set()
            while j not in seen:
                seen.add(j)
                if not ev(f.right, j):
                    return False
                if ev(f.left, j):
                    return True
                j = nxt(j)
            return True
        raise EngineError(f"cannot evaluate {f!r}")

    return ev(formula, 0)


def ltl_oracle(space: StateSpace, formula: Formula, max_lasso_len: int,
               lassos: Optional[list] = None) -> LtlResult:
    """Test oracle: enumerate every lasso up to the length bound and evaluate
    the formula on each by direct semantics.  Fail iff some lasso violates it.
    Guarded to small spaces; used to cross-check the automaton route."""
    if len(space.states) > ORACLE_MAX_STATES:
        raise EngineError(
            f"oracle limited to {ORACLE_MAX_STATES} states, got {len(space.states)}")
    machine = space.machine
    if lassos is None:
        lassos = enumerate_lassos(space, max_lasso_len)
    for edges, loop_start in lassos:
        if not eval_on_lasso(machine, space, edges, loop_start, formula):
            return LtlResult("fail", lasso=Lasso(
                prefix=edges[:loop_start], cycle=edges[loop_start:]))
    return LtlResult("pass")


# ---------------------------------------------------------------------------
# Lasso validation (used by tests and evidence formatting)


def lasso_replays(machine: Machine, space: StateSpace, lasso: Lasso) -> bool:
    """Every label enabled at its source ($stutter only on deadlocks), edges
    consecutive, prefix from state 0, cycle closing on its first state."""
    from .engine import enabled, step, state_key

    edges = lasso.prefix + lasso.cycle
    if not lasso.cycle:
        return False
    if edges[0][0] != 0:
        return False
    expected = 0
    for pos, (idx, label) in enumerate(edges):
        if idx != expected:
            return False
        if label.event == STUTTER:
            if idx not in space.deadlocks:
                return False
            succ_idx = idx
        else:
            if label not in enabled(machine, space.states[idx]):
                return False
            succ = step(machine, space.states[idx], label)
            key = state_key(machine, succ)
            succ_idx = None
            for j, st in enumerate(space.states):
                if state_key(machine, st) == key:
                    succ_idx = j
                    break
            if succ_idx is None:
                return False
        expected = succ_idx
    return expected == lasso.cycle[0][0]


def lasso_violates(machine: Machine, space: StateSpace, lasso: Lasso,
                   formula: Formula) -> bool:
    edges = lasso.prefix + lasso.cycle
    return not eval_on_lasso(machine, space, edges, len(lasso.prefix), formula)
