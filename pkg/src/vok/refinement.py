"""Refinement-chain flattening, forward simulation, abstraction and
instantiation checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .ast import INIT, Event, Machine, free_names
from .errors import Diagnostic, DiagnosticsError, EvalError, VokError
from .evaluator import compile_expr, compile_pred, instantiate_context
from .explorer import DEFAULT_BOUND, MachineRuntime, StateSpace, explore
from .pretty import format_expr
from .values import render

NEW = "NEW"
PASS, FAIL, UNKNOWN, ERROR = "PASS", "FAIL", "UNKNOWN", "ERROR"


# -- flattening ---------------------------------------------------------------

def _merge(first: tuple, second: tuple) -> tuple:
    return tuple(first) + tuple(x for x in second if x not in first)


def flatten(chain: list, warnings: Optional[list] = None) -> Machine:
    """Inline a refinement chain (most abstract first) into one machine.

    ``extends`` events receive the inherited parameters, guards and actions
    and become plain refinements of their parent.  Invariants of every level
    are kept when all the machine variables they mention survive in the
    last machine; the others are reported in ``warnings``.
    """
    if not chain:
        raise VokError("E_BROKEN_CHAIN", "empty refinement chain")
    names = [m.name for m in chain]
    if len(set(names)) != len(names):
        raise VokError("E_EXTENDS_CYCLE", "refinement chain revisits " + " -> ".join(names))
    for upper, lower in zip(chain, chain[1:]):
        if lower.refines != upper.name:
            raise VokError("E_BROKEN_CHAIN", f"{lower.name} does not refine {upper.name}")
    if len(chain) == 1:
        return chain[0]

    resolved: list = [{ev.name: ev for ev in chain[0].events}]
    for level, m in enumerate(chain[1:], start=1):
        above = resolved[level - 1]
        here = {}
        for ev in m.events:
            if ev.kind == "extends":
                parent_name = ev.parent or ev.name
                if parent_name not in above:
                    raise VokError("E_BROKEN_CHAIN", f"event {m.name}.{ev.name} extends unknown event {parent_name}")
                parent = above[parent_name]
                if parent is ev:
                    raise VokError("E_EXTENDS_CYCLE", f"event {ev.name} extends itself")
                ev = Event(ev.name, "refines", parent_name, _merge(parent.params, ev.params),
                           _merge(parent.guards, ev.guards), _merge(parent.actions, ev.actions), ev.pos)
            here[ev.name] = ev
        resolved.append(here)

    last = chain[-1]
    all_vars = set().union(*(m.variables for m in chain))
    dropped = all_vars - set(last.variables)
    invariants: list = []
    for m in chain:
        for inv in m.invariants:
            gone = free_names(inv.pred) & dropped
            if gone:
                if warnings is not None:
                    warnings.append(Diagnostic("warning", "W_INVARIANT_DROPPED",
                                               f"{m.name}: invariant mentions dropped variable(s) {', '.join(sorted(gone))}",
                                               label=inv.label, source=m.name))
                continue
            if all(inv.pred != other.pred or inv.label != other.label for other in invariants):
                invariants.append(inv)
    events = tuple(resolved[-1][ev.name] for ev in last.events)
    return Machine(last.name, chain[0].refines, last.sees, last.variables, tuple(invariants), events)


# -- gluing -------------------------------------------------------------------

@dataclass
class GluingMap:
    """Abstract variable -> expression over the concrete state."""
    glue: dict
    texts: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.texts:
            self.texts = {v: format_expr(e) for v, e in self.glue.items()}

    @classmethod
    def parse(cls, texts: dict) -> "GluingMap":
        from .parser import parse_expression

        return cls({v: parse_expression(t) for v, t in texts.items()}, dict(texts))

    def missing(self, abstract: Machine) -> list:
        return [v for v in abstract.variables if v not in self.glue]

    def compile(self, abstract: Machine) -> Callable:
        miss = self.missing(abstract)
        if miss:
            raise VokError("E_UNGLUED_VARIABLE", "no gluing expression for " + ", ".join(miss))
        fns = [compile_expr(self.glue[v]) for v in abstract.variables]
        return lambda env: tuple(f(env) for f in fns)

    @classmethod
    def identity(cls, m: Machine) -> "GluingMap":
        from .ast import Name

        return cls({v: Name(v) for v in m.variables})


def identity_events(m: Machine) -> dict:
    return {ev.name: ev.name for ev in m.events if ev.name != INIT}


@dataclass
class SimulationReport:
    verdict: str
    obligation: Optional[str] = None
    message: str = ""
    counterexample: list = field(default_factory=list)  # concrete transitions from the initial state
    states: int = 0
    transitions: int = 0
    complete: bool = True
    space: Optional[StateSpace] = field(default=None, repr=False)

    @property
    def depth(self) -> int:
        return len(self.counterexample)

    def to_json(self) -> dict:
        out = {"verdict": self.verdict, "states": self.states, "transitions": self.transitions,
               "complete": self.complete}
        if self.obligation:
            out["obligation"] = self.obligation
            out["message"] = self.message
            out["counterexample"] = [{"event": t.event, "params": {p: render(v) for p, v in t.params}}
                                     for t in self.counterexample]
        elif self.message:
            out["message"] = self.message
        return out


def check_forward_simulation(abstract: Machine, concrete: Machine, glue: GluingMap, events: dict,
                             env: dict, bound: int = DEFAULT_BOUND,
                             space: Optional[StateSpace] = None) -> SimulationReport:
    """Explore ``concrete`` and check that the gluing image of every step is
    a matching abstract step, or a stutter for NEW events.

    ``env`` is the static environment of the concrete instantiation; it must
    also give values to everything the abstract machine sees.
    """
    a_rt = MachineRuntime(abstract, env)
    c_rt = MachineRuntime(concrete, env)
    alpha = glue.compile(abstract)
    gluing = [(inv.label, compile_pred(inv.pred)) for inv in c_rt.gluing_invariants
              if free_names(inv.pred) <= set(env) | set(concrete.variables) | set(abstract.variables)]
    ss = space if space is not None else explore(concrete, env, bound, runtime=c_rt)
    report = SimulationReport(PASS, states=len(ss.states), transitions=len(ss.transitions),
                              complete=ss.complete, space=ss)

    def fail(obligation: str, message: str, path: list) -> SimulationReport:
        report.verdict, report.obligation, report.message = FAIL, obligation, message
        report.counterexample = path
        return report

    images: dict = {}

    def image_of(i: int) -> tuple:
        a = images.get(i)
        if a is None:
            a = images[i] = alpha(c_rt.env_for(ss.states[i]))
        return a

    abstract_steps: dict = {}
    a_init = a_rt.initial_state()
    if image_of(ss.initial) != a_init:
        return fail("init-mismatch", f"glue maps the concrete initial state to {_show(abstract, image_of(ss.initial))}, "
                    f"abstract initial state is {_show(abstract, a_init)}", [])
    checked_abs: set = set()
    for i in range(ss.expanded):
        a = image_of(i)
        if a not in checked_abs:
            checked_abs.add(a)
            bad = a_rt.violated(a)
            if bad:
                return fail("abstract-invariant-violated", f"abstract invariant @{bad[0]} fails at {_show(abstract, a)}",
                            ss.path_to(i))
        if gluing:
            genv = c_rt.env_for(ss.states[i])
            genv.update(zip(abstract.variables, a))
            for label, check in gluing:
                try:
                    ok = check(genv)
                except EvalError:
                    ok = False
                if not ok:
                    return fail("gluing-invariant-violated",
                                f"gluing invariant @{label} does not hold for the glued state {_show(abstract, a)}",
                                ss.path_to(i))
        for t in ss.outgoing(i):
            target = image_of(t.target)
            mapped = events.get(t.event)
            if mapped is None:
                mapped = t.event if a_rt.by_name.get(t.event) else None
            if mapped is None:
                return fail("unmapped-event", f"concrete event {t.event} has no abstract counterpart",
                            ss.path_to(i) + [t])
            if mapped == NEW:
                if target != a:
                    return fail("stutter-violation", f"NEW event {t.event} changes the glued state", ss.path_to(i) + [t])
                continue
            if mapped not in a_rt.by_name:
                return fail("unmapped-event", f"abstract event {mapped} does not exist", ss.path_to(i) + [t])
            key = (a, mapped)
            steps = abstract_steps.get(key)
            if steps is None:
                steps = abstract_steps[key] = a_rt.enabled_event(mapped, a)
            agreeing = [s for s in steps if _agrees(s[1], t.params)]
            if not agreeing:
                return fail("abstract-event-disabled",
                            f"abstract {mapped} is not enabled at {_show(abstract, a)} with {_params(t.params)}",
                            ss.path_to(i) + [t])
            if not any(s[2] == target for s in agreeing):
                return fail("abstract-target-mismatch",
                            f"abstract {mapped} cannot reach {_show(abstract, target)}", ss.path_to(i) + [t])
    if not ss.complete:
        report.verdict = UNKNOWN
        report.message = f"E_INCOMPLETE: exploration stopped at the bound of {len(ss.states)} states"
    return report


def _agrees(abstract_params: tuple, concrete_params: tuple) -> bool:
    conc = dict(concrete_params)
    return all(conc[p] == v for p, v in abstract_params if p in conc)


def _show(m: Machine, values: tuple) -> str:
    return "{" + ", ".join(f"{v}={render(x)}" for v, x in zip(m.variables, values)) + "}"


def _params(params: tuple) -> str:
    return ", ".join(f"{p}={render(v)}" for p, v in params) or "no parameters"


# -- abstraction and instantiation --------------------------------------------

@dataclass
class Finding:
    gate: str
    verdict: str
    code: Optional[str] = None
    message: str = ""
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"gate": self.gate, "verdict": self.verdict}
        if self.code:
            out["code"] = self.code
        if self.message:
            out["message"] = self.message
        out.update(self.detail)
        return out


@dataclass
class CheckReport:
    check: str
    findings: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return worst([f.verdict for f in self.findings]) if self.findings else PASS

    def finding(self, gate: str) -> Finding:
        for f in self.findings:
            if f.gate == gate:
                return f
        raise KeyError(gate)

    def to_json(self) -> dict:
        return {"check": self.check, "verdict": self.verdict, "gates": [f.to_json() for f in self.findings],
                "warnings": [str(w) for w in self.warnings]}


_RANK = {PASS: 0, "SKIPPED": 0, UNKNOWN: 1, FAIL: 2, ERROR: 3}


def worst(verdicts) -> str:
    return max(verdicts, key=lambda v: _RANK[v], default=PASS)


def new_information(md: Machine, base: Machine, abstract_vars: set) -> list:
    """Everything ``md`` declares beyond ``base`` except gluing invariants
    (invariants mentioning abstract variables)."""
    problems = []
    for v in md.variables:
        if v not in base.variables:
            problems.append(f"new variable {v}")
    for c in md.sees:
        if c not in base.sees:
            problems.append(f"new context {c}")
    base_events = {ev.name: ev for ev in base.events}
    for ev in md.events:
        b = base_events.get(ev.name)
        if b is None:
            problems.append(f"new event {ev.name}")
            continue
        for p in ev.params:
            if p not in b.params:
                problems.append(f"event {ev.name}: new parameter {p}")
        base_guards = [g.pred for g in b.guards]
        for g in ev.guards:
            if g.pred not in base_guards:
                problems.append(f"event {ev.name}: new guard @{g.label}")
        base_actions = [(a.var, a.effective_expr()) for a in b.actions]
        for a in ev.actions:
            if (a.var, a.effective_expr()) not in base_actions:
                problems.append(f"event {ev.name}: new action @{a.label}")
    base_invs = [inv.pred for inv in base.invariants]
    for inv in md.invariants:
        if inv.pred not in base_invs and not free_names(inv.pred) & abstract_vars:
            problems.append(f"new invariant @{inv.label}")
    return problems


def _normalized(ss: StateSpace) -> tuple:
    order = sorted(range(len(ss.variables)), key=lambda k: ss.variables[k])
    names = tuple(ss.variables[k] for k in order)
    states = [tuple(s[k] for k in order) for s in ss.states]
    edges = frozenset((states[t.source], t.event, tuple(sorted(t.params)), states[t.target]) for t in ss.transitions)
    return names, frozenset(states), edges, states[ss.initial]


def isomorphic(a: StateSpace, b: StateSpace) -> tuple:
    """Isomorphism under the identity on variable names: ``(ok, reason)``."""
    na, sa, ea, ia = _normalized(a)
    nb, sb, eb, ib = _normalized(b)
    if na != nb:
        return False, f"variables differ: {', '.join(na)} vs {', '.join(nb)}"
    if ia != ib:
        return False, "initial states differ"
    if sa != sb:
        return False, f"state sets differ ({len(sa - sb)} only left, {len(sb - sa)} only right)"
    if ea != eb:
        extra = sorted({e[1] for e in ea ^ eb})
        return False, f"transition relations differ ({len(ea - eb)} only left, {len(eb - ea)} only right; events {', '.join(extra)})"
    return True, ""


def check_abstraction(chain: list, am: Machine, glue: GluingMap, events: dict, env: dict,
                      md: Optional[Machine] = None, bound: int = DEFAULT_BOUND,
                      explorer: Optional[Callable] = None) -> CheckReport:
    """Three gates: MM_md adds nothing but gluing information, MM_md refines
    ``am`` by forward simulation, and MM_md behaves exactly like the chain's
    concrete machine.

    ``md`` defaults to the flattening of ``chain``.  ``explorer`` maps a
    machine to its state space and lets callers share explorations.
    """
    report = CheckReport("abstraction")
    flat = flatten(chain, report.warnings)
    md = md if md is not None else flat
    run = explorer or (lambda m: explore(m, env, bound))

    extra = new_information(md, flat, set(am.variables))
    if extra:
        report.findings.append(Finding("1-no-new-information", FAIL, "E_NEW_INFORMATION", "; ".join(extra)))
    else:
        report.findings.append(Finding("1-no-new-information", PASS))

    try:
        md_space = run(md)
        sim = check_forward_simulation(am, md, glue, events, env, bound, space=md_space)
        report.findings.append(Finding("2-forward-simulation", sim.verdict,
                                       None if sim.verdict == PASS else ("E_INCOMPLETE" if sim.verdict == UNKNOWN else "E_SIMULATION"),
                                       sim.message, {"simulation": sim.to_json()}))
    except VokError as e:
        md_space = None
        report.findings.append(Finding("2-forward-simulation", ERROR, e.code, e.message))

    try:
        flat_space = run(flat)
        md_space = md_space if md_space is not None else run(md)
        if not (flat_space.complete and md_space.complete):
            report.findings.append(Finding("3-behavioural-identity", UNKNOWN, "E_INCOMPLETE",
                                           "exploration hit the bound"))
        else:
            ok, why = isomorphic(md_space, flat_space)
            report.findings.append(Finding("3-behavioural-identity", PASS if ok else FAIL,
                                           None if ok else "E_NOT_ISOMORPHIC", why,
                                           {"states": len(flat_space.states), "transitions": len(flat_space.transitions)}))
    except VokError as e:
        report.findings.append(Finding("3-behavioural-identity", ERROR, e.code, e.message))
    return report


def pure_extension_problems(abstract: Machine, concrete: Machine) -> list:
    problems = []
    if concrete.refines != abstract.name:
        problems.append(f"{concrete.name} does not refine {abstract.name}")
    if tuple(concrete.variables) != tuple(abstract.variables):
        problems.append("variables differ from the abstract machine")
    if concrete.invariants:
        problems.append("instantiation adds invariants")
    conc = {ev.name: ev for ev in concrete.events}
    for ev in abstract.events:
        if ev.name not in conc:
            problems.append(f"event {ev.name} is not carried over")
    for ev in concrete.events:
        if ev.kind != "extends" or (ev.parent or ev.name) != ev.name or not abstract.has_event(ev.name):
            problems.append(f"event {ev.name} does not extend its abstract counterpart")
        elif ev.params or ev.guards or ev.actions:
            problems.append(f"event {ev.name} adds parameters, guards or actions")
    return problems


def check_instantiation(abstract: Machine, concrete: Machine, context_chain: list,
                        scopes: Optional[dict] = None) -> CheckReport:
    report = CheckReport("instantiation")
    try:
        instantiate_context(context_chain, scopes)
        report.findings.append(Finding("1-axioms", PASS))
    except DiagnosticsError as e:
        report.findings.append(Finding("1-axioms", FAIL, e.code, "; ".join(d.message for d in e.diagnostics),
                                       {"labels": [d.label for d in e.diagnostics if d.label]}))
    problems = pure_extension_problems(abstract, concrete)
    if problems:
        report.findings.append(Finding("2-pure-extension", FAIL, "E_EVENT_NOT_PURE_EXTENSION", "; ".join(problems)))
    else:
        report.findings.append(Finding("2-pure-extension", PASS))
    return report
