"""Shared fixture data for the LTL agreement runs: a fixed formula suite
instantiated per machine, plus per-machine oracle lasso bounds."""

from __future__ import annotations

from pathlib import Path

from vobs.parser import parse_machine
from vobs.project import load_project

CORPUS = Path(__file__).resolve().parent.parent / "corpus"

# %p / %q are state predicates, %a / %b event names, chosen per machine so
# every template type-checks everywhere.
TEMPLATES = [
    "G {%p}",
    "F {%p}",
    "X {%p}",
    "{%p}",
    "not {%p}",
    "G (not {%p})",
    "F (not {%q})",
    "{%p} U {%q}",
    "{%q} U {%p}",
    "G ({%p} => F {%q})",
    "G ({%q} => F {%p})",
    "G F {%p}",
    "F G {%p}",
    "G F {%q}",
    "F G {%q}",
    "X X {%q}",
    "G ({%p} => X {%q})",
    "G ({%p} or {%q})",
    "F ({%p} and {%q})",
    "G ({%q} => ({%q} U {%p}))",
    "({%p} or {%q}) U {%p}",
    "[%a]",
    "X [%b]",
    "G F [%a]",
    "F [%b]",
    "G ([%a] => X {%p})",
    "G ([%a] => F [%b])",
    "not (G {%q})",
    "not (F {%p})",
    "G {%p} or F {%q}",
    "{%p} => X {%p}",
    "F X {%p}",
    "X F {%p}",
    "not ({%p} U {%q})",
    "G (not [%a] or X {%p})",
    "F ([%a] and X [%b])",
]

# atom texts per machine + oracle lasso length bound
ATOMS = {
    "Switch": {"p": "on = true", "q": "on = false",
               "a": "turn_on", "b": "turn_off", "len": 12},
    "Counter": {"p": "c = 3", "q": "c < 2", "a": "inc", "b": "inc", "len": 12},
    "Light0": {"p": "on = true", "q": "on = false",
               "a": "turn_on", "b": "turn_off", "len": 12},
    "Light3": {"p": "level > 1", "q": "level = 0",
               "a": "brighten", "b": "turn_off", "len": 10},
    "PowerView": {"p": "high = true", "q": "high = false",
                  "a": "adjust", "b": "adjust", "len": 8},
}


def formulas_for(machine_name: str) -> list[str]:
    atoms = ATOMS[machine_name]
    out = []
    for t in TEMPLATES:
        text = t
        for key in ("p", "q", "a", "b"):
            text = text.replace(f"%{key}", atoms[key])
        out.append(text)
    return out


def suite_machines() -> dict:
    """Bundled machines that qualify for the oracle (<= 12 states)."""
    lighting = load_project(CORPUS / "lighting")
    out = {
        "Switch": parse_machine((CORPUS / "basic" / "Switch.vob").read_text()),
        "Counter": parse_machine((CORPUS / "basic" / "Counter.vob").read_text()),
        "Light0": lighting.machines["Light0"],
        "Light3": lighting.machines["Light3"],
        "PowerView": lighting.machines["PowerView"],
    }
    return out
