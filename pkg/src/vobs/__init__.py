"""vobs: validation obligations over guarded-event machines.

Parse machines, explore their finite state spaces, model-check temporal
properties, organize models in a nonlinear refinement lattice, and track the
discharge and staleness of every validation obligation as models evolve.
"""

from .engine import Limits, StateSpace, TransitionLabel, coverage, enabled, \
    eval_expr, explore, initial_state, step
from .lang import Machine, canonical_hash, canonical_print, instantiate, well_formed
from .ltl import check_ltl, classify_safety, ltl_oracle, parse_ltl, to_buchi
from .manager import Ledger, VoRecord, check_all, check_vo, discharge_manual, \
    refresh_staleness, status_report
from .parser import parse_machine
from .project import Project, load_project
from .refinement import Lattice, RefinementEdge, build_lattice, check_simulation, \
    glue_state, inheritance_check
from .traces import Trace, parse_trace, replay_trace, translate_trace

__version__ = "0.1.0"
