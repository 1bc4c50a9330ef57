"""Nonlinear refinement lattices: gluing, trace translation, simulation.

Edges point concrete -> abstract and carry a total event map (abstract event
or NEW), a functional gluing (every abstract variable computed from the
concrete state), and, for instantiation edges, the constant bindings.  Views
use exactly the same checking machinery as refinements; instantiation edges
are identity maps by construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from .engine import (
    EngineError, EvalError, Limits, State, StateSpace, TransitionLabel,
    const_env, domain_size, domain_values, eval_expr, explore, guard_holds,
    inhabits, initial_state, state_str, step,
)
from .lang import (
    Expr, Machine, Name, VobsError, assignable, canonical_hash, infer_type,
    instantiate, print_expr, static_of, substitute, _TypeMismatch,
)
from .ltl import Formula, StateAtom, classify_safety, map_atoms

NEW = "NEW"  # event-map sentinel: the concrete event is invisible abstractly

EDGE_KINDS = ("refines", "views", "instantiates")


class LatticeError(VobsError):
    pass


@dataclass
class RefinementEdge:
    source: str  # concrete machine
    target: str  # abstract machine
    kind: str
    event_map: dict[str, str] = field(default_factory=dict)
    glue: dict[str, Expr] = field(default_factory=dict)
    bind: dict[str, object] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return f"{self.source}->{self.target}"


@dataclass
class Lattice:
    models: dict[str, Machine]
    edges: list[RefinementEdge]
    order: list[str] = field(default_factory=list)  # declaration order

    def edge(self, source: str, target: str) -> Optional[RefinementEdge]:
        for e in self.edges:
            if e.source == source and e.target == target:
                return e
        return None

    def edges_from(self, source: str) -> list[RefinementEdge]:
        return [e for e in self.edges if e.source == source]

    def edges_to(self, target: str) -> list[RefinementEdge]:
        return [e for e in self.edges if e.target == target]

    def topological(self) -> list[str]:
        """Model names, every abstract model before its refinements; ties in
        declaration order."""
        pending = dict.fromkeys(self.order or self.models)
        done: list[str] = []
        while pending:
            for name in pending:
                deps = [e.target for e in self.edges_from(name)]
                if all(d not in pending for d in deps):
                    done.append(name)
                    del pending[name]
                    break
            else:
                raise LatticeError("cycle in refinement lattice")
        return done


def build_lattice(models: dict[str, Machine],
                  edges: list[RefinementEdge],
                  order: Optional[list[str]] = None) -> Lattice:
    """Complete partial edges with defaults and validate the whole lattice.

    Defaults: the event map is identity on shared event names and NEW
    otherwise; the gluing is identity on shared variable names.  Every
    abstract variable must end up glued.
    """
    lattice = Lattice(models, [], order or list(models))
    seen_pairs: set[tuple[str, str]] = set()
    for edge in edges:
        if edge.kind not in EDGE_KINDS:
            raise LatticeError(f"{edge.name}: unknown edge kind {edge.kind!r}")
        if edge.source not in models:
            raise LatticeError(f"{edge.name}: unknown model {edge.source}")
        if edge.target not in models:
            raise LatticeError(f"{edge.name}: unknown model {edge.target}")
        if (edge.source, edge.target) in seen_pairs:
            raise LatticeError(f"{edge.name}: duplicate edge")
        seen_pairs.add((edge.source, edge.target))
        lattice.edges.append(_complete_edge(edge, models[edge.source],
                                            models[edge.target]))
    lattice.topological()  # raises on cycles
    return lattice


def _complete_edge(edge: RefinementEdge, concrete: Machine,
                   abstract: Machine) -> RefinementEdge:
    # Shared set names must agree exactly, otherwise gluing member values
    # would silently change meaning between the two machines.
    for s in concrete.sets:
        other = abstract.set_decl(s.name)
        if other is not None and other.members != s.members:
            raise LatticeError(
                f"{edge.name}: set {s.name} differs between the two machines")

    event_map: dict[str, str] = {}
    for name in edge.event_map:
        if concrete.event(name) is None:
            raise LatticeError(f"{edge.name}: event_map names unknown event {name}")
    for ev in concrete.events:
        mapped = edge.event_map.get(ev.name)
        if mapped is None:
            mapped = ev.name if abstract.event(ev.name) else NEW
        if mapped != NEW and abstract.event(mapped) is None:
            raise LatticeError(
                f"{edge.name}: event_map target {mapped} is not an event of {abstract.name}")
        event_map[ev.name] = mapped

    ctx = {c.name: c.ty for c in concrete.consts}
    ctx.update({v.name: v.ty for v in concrete.vars})
    members = concrete.member_sets()
    glue: dict[str, Expr] = {}
    for name in edge.glue:
        if abstract.var_decl(name) is None:
            raise LatticeError(f"{edge.name}: glue names unknown abstract variable {name}")
    for av in abstract.vars:
        expr = edge.glue.get(av.name)
        if expr is None:
            if concrete.var_decl(av.name) is not None:
                expr = Name(av.name)
            else:
                raise LatticeError(
                    f"{edge.name}: abstract variable {av.name} is not glued")
        try:
            t = infer_type(expr, ctx, members)
        except _TypeMismatch as e:
            raise LatticeError(f"{edge.name}: glue for {av.name}: {e.message}")
        if not assignable(t, av.ty):
            raise LatticeError(
                f"{edge.name}: glue for {av.name} does not have type {av.ty}")
        glue[av.name] = expr

    if edge.kind == "instantiates":
        for ev in concrete.events:
            if event_map[ev.name] != ev.name:
                raise LatticeError(
                    f"{edge.name}: instantiation edges use the identity event map")
        for av in abstract.vars:
            if glue[av.name] != Name(av.name):
                raise LatticeError(
                    f"{edge.name}: instantiation edges use the identity gluing")
        regenerated = instantiate(abstract, dict(edge.bind), concrete.name)
        if canonical_hash(regenerated) != canonical_hash(concrete):
            raise LatticeError(
                f"{edge.name}: {edge.source} is not {edge.target} instantiated "
                f"with the edge bindings")

    return RefinementEdge(edge.source, edge.target, edge.kind,
                          event_map, glue, dict(edge.bind))


# ---------------------------------------------------------------------------
# Gluing and trace translation


def glue_state(lattice: Lattice, edge: RefinementEdge, state: State) -> State:
    """Abstract state computed from a concrete state (functional gluing)."""
    concrete = lattice.models[edge.source]
    abstract = lattice.models[edge.target]
    env = {**const_env(concrete), **state}
    out: State = {}
    for av in abstract.vars:
        value = eval_expr(edge.glue[av.name], env, concrete)
        if not inhabits(value, av.ty, abstract):
            raise EvalError(
                f"glue for {av.name} evaluates outside {av.ty}")
        out[av.name] = value
    return out


def translate_label(abstract: Machine, concrete: Machine,
                    edge: RefinementEdge, label: TransitionLabel
                    ) -> Optional[tuple[str, dict[str, object]]]:
    """Abstract event name plus the parameter values that carry over, or None
    for NEW-mapped events.  A parameter carries over when the abstract event
    declares one of the same name and type."""
    mapped = edge.event_map[label.event]
    if mapped == NEW:
        return None
    abstract_event = abstract.event(mapped)
    concrete_event = concrete.event(label.event)
    kept: dict[str, object] = {}
    for name, value in label.args:
        cp = next((p for p in concrete_event.params if p.name == name), None)
        ap = next((p for p in abstract_event.params if p.name == name), None)
        if cp is not None and ap is not None and cp.ty == ap.ty:
            kept[name] = value
    return mapped, kept


# ---------------------------------------------------------------------------
# Simulation checking


@dataclass
class SimWitness:
    state_index: int
    state: str
    label: str
    reason: str

    def __str__(self) -> str:
        return f"state {self.state_index} {self.state}, event {self.label}: {self.reason}"


@dataclass
class SimResult:
    verdict: str  # "pass" | "fail" | "inconclusive"
    witness: Optional[SimWitness] = None
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def check_simulation(lattice: Lattice, edge: RefinementEdge,
                     limits: Limits = Limits(),
                     space: Optional[StateSpace] = None) -> SimResult:
    """Trace simulation under the functional gluing.

    Every concrete transition must either map to an enabled abstract event
    whose effect matches the glued successor, or (NEW events) leave the glued
    state unchanged.  Abstract parameters not carried over from the concrete
    label are searched existentially.  The initial states must glue together.
    """
    concrete = lattice.models[edge.source]
    abstract = lattice.models[edge.target]
    if space is None:
        space = explore(concrete, limits)
    if space.error is not None:
        return SimResult("fail", SimWitness(space.error[0],
                         state_str(concrete, space.states[space.error[0]]),
                         "-", f"exploration error: {space.error[1]}"))

    def witness(idx: int, label, reason: str) -> SimResult:
        return SimResult("fail", SimWitness(
            idx, state_str(concrete, space.states[idx]), str(label), reason))

    try:
        if glue_state(lattice, edge, space.states[0]) != initial_state(abstract):
            return witness(0, "(init)", "initial states do not glue together")
    except (EvalError, EngineError) as e:
        return witness(0, "(init)", str(e))

    abstract_consts = const_env(abstract)
    glued: list[Optional[State]] = [None] * len(space.states)

    def glued_at(idx: int) -> State:
        if glued[idx] is None:
            glued[idx] = glue_state(lattice, edge, space.states[idx])
        return glued[idx]

    for src, label, dst in space.transitions:
        try:
            a_src = glued_at(src)
            a_dst = glued_at(dst)
        except EvalError as e:
            return witness(src, label, f"gluing failed: {e}")
        translated = translate_label(abstract, concrete, edge, label)
        if translated is None:
            if a_src != a_dst:
                return witness(src, label,
                               "NEW event changes the glued abstract state")
            continue
        event_name, kept = translated
        abstract_event = abstract.event(event_name)
        free = [p for p in abstract_event.params if p.name not in kept]
        total = 1
        for p in free:
            total *= domain_size(p.ty, abstract)
            if total > limits.binding_cap:
                return witness(src, label,
                               f"abstract parameter search exceeds cap {limits.binding_cap}")
        domains = [domain_values(p.ty, abstract) for p in free]
        matched = False
        for combo in itertools.product(*domains):
            binding = dict(kept)
            binding.update(zip((p.name for p in free), combo))
            args = tuple((p.name, binding[p.name]) for p in abstract_event.params)
            a_label = TransitionLabel(event_name, args)
            env = {**abstract_consts, **a_src, **binding}
            try:
                if not guard_holds(abstract_event, env, abstract):
                    continue
                if step(abstract, a_src, a_label) == a_dst:
                    matched = True
                    break
            except (EvalError, EngineError) as e:
                return witness(src, label, f"abstract evaluation failed: {e}")
        if not matched:
            return witness(src, label,
                           f"no abstract {event_name} transition matches the glued successor")

    if space.truncated:
        return SimResult("inconclusive",
                         reason=f"concrete exploration truncated: {space.limit_hit}")
    return SimResult("pass")


# ---------------------------------------------------------------------------
# LTL inheritance along an edge


@dataclass
class InheritanceDecision:
    applicable: bool
    reason: str
    translated: Optional[Formula] = None


def translate_formula(lattice: Lattice, edge: RefinementEdge,
                      formula: Formula) -> Formula:
    """Rewrite each state atom over the abstract variables into the concrete
    vocabulary by substituting the glue expressions."""
    mapping = dict(edge.glue)

    def rewrite(atom: Formula) -> Formula:
        if isinstance(atom, StateAtom):
            return StateAtom(substitute(atom.pred, mapping))
        return atom

    return map_atoms(formula, rewrite)


def inheritance_check(formula: Formula, lattice: Lattice, edge: RefinementEdge,
                      simulation_discharged: bool) -> InheritanceDecision:
    """Decide whether a safety property discharged on edge.target transfers to
    edge.source without re-checking.  Sound because NEW events preserve the
    glued state and the formula is X-free, event-free safety."""
    cls = classify_safety(formula)
    if not cls.safety:
        return InheritanceDecision(False, "formula is not in the safety fragment")
    if not cls.inheritance_eligible:
        return InheritanceDecision(False, "formula uses X or event atoms")
    if not simulation_discharged:
        return InheritanceDecision(False, "simulation not currently discharged")
    return InheritanceDecision(True, "", translate_formula(lattice, edge, formula))
