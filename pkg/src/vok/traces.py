"""Traces: replay against a machine, refinement onto a concrete machine, and
erasure back to the abstract level."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import EvalError, VokError
from .evaluator import compile_pred
from .explorer import DEFAULT_BOUND, MachineRuntime
from .parser import parse_predicate
from .pretty import format_pred
from .values import parse_value, render

NEW = "NEW"
DEFAULT_SKIP_BUDGET = 10


@dataclass(frozen=True)
class Step:
    event: str
    params: tuple = ()  # ((name, value), ...) sorted by name
    skip: bool = False

    @classmethod
    def of(cls, event: str, params=None, skip: bool = False) -> "Step":
        items = params.items() if isinstance(params, dict) else (params or ())
        return cls(event, tuple(sorted(items)), skip)

    @property
    def binding(self) -> dict:
        return dict(self.params)


@dataclass(frozen=True)
class Trace:
    machine: str
    steps: tuple = ()
    postcondition: Optional[object] = None  # Pred over the final state

    @property
    def skips(self) -> int:
        return sum(1 for s in self.steps if s.skip)

    def to_json(self) -> dict:
        steps = []
        for s in self.steps:
            d = {"event": s.event, "params": {p: render(v) for p, v in s.params}}
            if s.skip:
                d["skip"] = True
            steps.append(d)
        out = {"machine": self.machine, "steps": steps}
        if self.postcondition is not None:
            out["postcondition"] = format_pred(self.postcondition)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    @classmethod
    def from_json(cls, data: dict) -> "Trace":
        try:
            steps = tuple(Step.of(s["event"], {p: parse_value(v) for p, v in s.get("params", {}).items()},
                                  bool(s.get("skip", False)))
                          for s in data.get("steps", []))
            post = data.get("postcondition")
            return cls(data.get("machine", ""), steps, parse_predicate(post) if post else None)
        except (KeyError, TypeError, AttributeError) as e:
            raise VokError("E_TRACE_FORMAT", f"malformed trace: {e}") from None


def load_trace(path) -> Trace:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise VokError("E_MISSING_FILE", f"trace file {path} not found") from None
    except json.JSONDecodeError as e:
        raise VokError("E_TRACE_FORMAT", f"{path}: {e.msg} at line {e.lineno}") from None
    return Trace.from_json(data)


@dataclass
class ReplayResult:
    verdict: str
    index: Optional[int] = None  # failing step; len(steps) for the postcondition
    reason: Optional[str] = None  # disabled | ambiguous | invariant-violated | postcondition-failed
    message: str = ""
    states: list = field(default_factory=list)  # visited states, initial first
    variables: tuple = ()

    @property
    def ok(self) -> bool:
        return self.verdict == "PASS"

    def final(self) -> dict:
        return dict(zip(self.variables, self.states[-1])) if self.states else {}

    def to_json(self) -> dict:
        out = {"verdict": self.verdict, "steps_replayed": max(len(self.states) - 1, 0)}
        if self.reason:
            out.update(index=self.index, reason=self.reason, message=self.message)
        return out


def _agrees(given: dict, params: tuple) -> bool:
    have = dict(params)
    return all(p in have and have[p] == v for p, v in given.items())


def replay(t: Trace, rt: MachineRuntime) -> ReplayResult:
    """Execute the trace from the initial state.  Failures are returned, not
    raised."""
    res = ReplayResult("PASS", variables=rt.variables)

    def fail(i, reason, msg):
        res.verdict, res.index, res.reason, res.message = "FAIL", i, reason, msg
        return res

    try:
        state = rt.initial_state()
    except EvalError as e:
        return fail(0, "disabled", f"initialisation failed: {e.message}")
    res.states.append(state)
    for i, step in enumerate(t.steps):
        if step.event not in rt.by_name:
            return fail(i, "disabled", f"{rt.machine.name} has no event {step.event}")
        given = step.binding
        try:
            options = [o for o in rt.enabled_event(step.event, state) if _agrees(given, o[1])]
        except EvalError as e:
            return fail(i, "disabled", f"guard evaluation failed: {e.message}")
        if not options:
            return fail(i, "disabled", f"{step.event}({_show(given)}) is not enabled")
        targets = {o[2] for o in options}
        if len(targets) > 1:
            return fail(i, "ambiguous", f"{step.event}({_show(given)}) matches {len(options)} bindings with different outcomes")
        state = options[0][2]
        res.states.append(state)
        bad = rt.violated(state)
        if bad:
            return fail(i, "invariant-violated", f"invariant @{bad[0]} fails after {step.event}")
    if t.postcondition is not None:
        try:
            ok = compile_pred(t.postcondition)(rt.env_for(state))
        except EvalError as e:
            ok, why = False, e.message
        else:
            why = "postcondition does not hold in the final state"
        if not ok:
            return fail(len(t.steps), "postcondition-failed", why)
    return res


def _show(params: dict) -> str:
    return ", ".join(f"{p}={render(v)}" for p, v in sorted(params.items()))


def refine_trace(abstract: Trace, concrete: MachineRuntime, events: dict,
                 skip_budget: int = DEFAULT_SKIP_BUDGET, bound: int = DEFAULT_BOUND,
                 abstract_rt: Optional[MachineRuntime] = None) -> Trace:
    """Shortest concrete trace whose erasure is ``abstract``.

    Breadth-first over (concrete state, position in the abstract trace,
    consecutive inserted steps).  Steps of events mapped to NEW are inserted
    with ``skip`` set, at most ``skip_budget`` in a row.
    """
    if abstract_rt is not None:
        check = replay(Trace(abstract.machine, abstract.steps), abstract_rt)
        if not check.ok:
            raise VokError("E_NO_REFINED_TRACE", f"abstract trace does not replay: {check.message}", cursor=0)
    goal = len(abstract.steps)
    wanted = [(s.event, s.binding) for s in abstract.steps]
    start = (concrete.initial_state(), 0, 0)
    parents: dict = {start: None}
    queue = deque([start])
    deepest = 0
    while queue:
        node = queue.popleft()
        state, cursor, skips = node
        deepest = max(deepest, cursor)
        if cursor == goal:
            steps = []
            while parents[node] is not None:
                node, step = parents[node]
                steps.append(step)
            return Trace(concrete.machine.name, tuple(reversed(steps)))
        for ev, params, target in concrete.successors(state):
            mapped = events.get(ev, ev)
            if mapped == NEW:
                if skips >= skip_budget:
                    continue
                nxt = (target, cursor, skips + 1)
                step = Step(ev, tuple(sorted(params)), True)
            elif mapped == wanted[cursor][0] and _shared_agree(wanted[cursor][1], params):
                nxt = (target, cursor + 1, 0)
                step = Step(ev, tuple(sorted(params)), False)
            else:
                continue
            if nxt not in parents:
                if len(parents) >= bound:
                    raise VokError("E_NO_REFINED_TRACE", f"search bound of {bound} nodes reached at abstract step {deepest}",
                                   cursor=deepest)
                parents[nxt] = (node, step)
                queue.append(nxt)
    raise VokError("E_NO_REFINED_TRACE",
                   f"no refinement found; deepest abstract step reached is {deepest} of {goal}", cursor=deepest)


def _shared_agree(abstract_params: dict, concrete_params: tuple) -> bool:
    conc = dict(concrete_params)
    return all(conc[p] == v for p, v in abstract_params.items() if p in conc)


def erase(t: Trace, events: dict, abstract=None) -> Trace:
    """Drop skip steps and rename events to their abstract counterparts.

    With ``abstract`` (a Machine) only parameters the abstract event
    declares are kept and the result names that machine.
    """
    steps = []
    for i, s in enumerate(t.steps):
        if s.skip:
            continue
        mapped = events.get(s.event, s.event)
        if mapped == NEW:
            raise VokError("E_MAP_MISMATCH", f"step {i} ({s.event}) maps to NEW but is not marked skip")
        params = s.params
        if abstract is not None:
            declared = set(abstract.event(mapped).params) if abstract.has_event(mapped) else set()
            params = tuple(p for p in params if p[0] in declared)
        steps.append(Step(mapped, params, False))
    return Trace(abstract.name if abstract is not None else t.machine, tuple(steps))
