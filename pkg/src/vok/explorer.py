"""Explicit-state exploration of machines.

A state is a tuple of values in the machine's variable order; two states
are the same state exactly when their canonical renderings agree, which for
our value model is plain tuple equality.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .ast import INIT, Machine, conjuncts, free_names
from .errors import EvalError
from .evaluator import compile_expr, compile_pred, iter_bindings, plan_bindings
from .values import parse_value, render

DEFAULT_BOUND = 10**6


@dataclass(frozen=True, slots=True)
class Transition:
    source: int
    event: str
    params: tuple  # ((name, value), ...) in parameter declaration order
    target: int

    @property
    def binding(self) -> dict:
        return dict(self.params)


class CompiledEvent:
    def __init__(self, machine: Machine, ev, static_names: frozenset):
        self.name = ev.name
        self.event = ev
        self.params = ev.params
        self.plan = plan_bindings(ev.params, [c for g in ev.guards for c in conjuncts(g.pred)], code="E_UNBOUNDED_PARAM")
        index = {v: i for i, v in enumerate(machine.variables)}
        self.updates = []
        for a in ev.actions:
            if a.var not in index:
                raise EvalError("E_UNKNOWN_VARIABLE", f"event {ev.name} assigns unknown variable {a.var}", a.label)
            self.updates.append((index[a.var], compile_expr(a.effective_expr())))


class MachineRuntime:
    """A machine compiled against a fixed static environment (sets and
    constants of its instantiation)."""

    def __init__(self, machine: Machine, static_env: dict):
        self.machine = machine
        self.static = dict(static_env)
        self.variables = tuple(machine.variables)
        known = frozenset(self.static) | frozenset(self.variables)
        # invariants over abstract variables are gluing invariants; refinement checks handle them
        self.invariants = [(inv.label, compile_pred(inv.pred)) for inv in machine.invariants
                           if free_names(inv.pred) <= known]
        self.gluing_invariants = [inv for inv in machine.invariants if not free_names(inv.pred) <= known]
        init = machine.initialisation if machine.has_event(INIT) else None
        if init is None:
            raise EvalError("E_NO_INITIALISATION", f"machine {machine.name} has no INITIALISATION")
        self.init = CompiledEvent(machine, init, frozenset(self.static))
        self.events = [CompiledEvent(machine, ev, frozenset(self.static))
                       for ev in machine.events if ev.name != INIT]
        self.by_name = {ce.name: ce for ce in self.events}

    def env_for(self, state: tuple) -> dict:
        env = dict(self.static)
        env.update(zip(self.variables, state))
        return env

    def state_dict(self, state: tuple) -> dict:
        return dict(zip(self.variables, state))

    def initial_state(self) -> tuple:
        env = dict(self.static)
        values = [None] * len(self.variables)
        assigned = set()
        for i, fn in self.init.updates:
            values[i] = fn(env)
            assigned.add(i)
        missing = [v for i, v in enumerate(self.variables) if i not in assigned]
        if missing:
            raise EvalError("E_UNINITIALISED", f"INITIALISATION does not assign {', '.join(missing)}")
        return tuple(values)

    def fire(self, ce: CompiledEvent, state: tuple, env: dict) -> tuple:
        new = list(state)
        for i, fn in ce.updates:
            new[i] = fn(env)
        return tuple(new)

    def successors(self, state: tuple, events=None) -> Iterator[tuple]:
        """Yield ``(event name, params, target state)`` for every enabled
        event instance, events in declaration order, bindings canonically."""
        env = self.env_for(state)
        for ce in (self.events if events is None else events):
            for local in iter_bindings(ce.plan, env):
                params = tuple((p, local[p]) for p in ce.params)
                yield ce.name, params, self.fire(ce, state, local)

    def enabled_event(self, name: str, state: tuple) -> list:
        return list(self.successors(state, [self.by_name[name]]))

    def violated(self, state: tuple) -> list:
        env = self.env_for(state)
        bad = []
        for label, check in self.invariants:
            try:
                ok = check(env)
            except EvalError:
                ok = False
            if not ok:
                bad.append(label)
        return bad


@dataclass
class StateSpace:
    machine: str
    variables: tuple
    states: list = field(default_factory=list)
    transitions: list = field(default_factory=list)
    initial: int = 0
    complete: bool = False
    violations: list = field(default_factory=list)  # (state id, invariant label)
    deadlocks: list = field(default_factory=list)
    depth: list = field(default_factory=list)
    parent: list = field(default_factory=list)  # index of the BFS tree transition, -1 for the root
    expanded: int = 0  # states [0, expanded) have their full successor sets

    def __post_init__(self):
        self._out: Optional[list] = None
        self._out_n = -1
        self.index = {s: i for i, s in enumerate(self.states)}

    def __len__(self) -> int:
        return len(self.states)

    def values(self, i: int) -> dict:
        return dict(zip(self.variables, self.states[i]))

    def outgoing_indices(self, i: int) -> list:
        if self._out is None or self._out_n != len(self.transitions):
            out: list = [[] for _ in self.states]
            for k, t in enumerate(self.transitions):
                out[t.source].append(k)
            self._out, self._out_n = out, len(self.transitions)
        return self._out[i]

    def outgoing(self, i: int) -> list:
        return [self.transitions[k] for k in self.outgoing_indices(i)]

    def path_to(self, i: int) -> list:
        path = []
        while self.parent[i] >= 0:
            t = self.transitions[self.parent[i]]
            path.append(t)
            i = t.source
        return path[::-1]

    def to_json(self) -> dict:
        return {
            "machine": self.machine,
            "states": [{"id": i, "values": {v: render(x) for v, x in zip(self.variables, s)}}
                       for i, s in enumerate(self.states)],
            "transitions": [{"from": t.source, "event": t.event,
                             "params": {p: render(v) for p, v in t.params}, "to": t.target}
                            for t in self.transitions],
            "initial": self.initial,
            "complete": self.complete,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, data: dict) -> "StateSpace":
        states_json = sorted(data["states"], key=lambda s: s["id"])
        variables = tuple(states_json[0]["values"]) if states_json else ()
        states = [tuple(parse_value(s["values"][v]) for v in variables) for s in states_json]
        transitions = [Transition(t["from"], t["event"],
                                  tuple((p, parse_value(v)) for p, v in t["params"].items()), t["to"])
                       for t in data["transitions"]]
        ss = cls(data.get("machine", ""), variables, states, transitions, data.get("initial", 0),
                 bool(data.get("complete", False)))
        ss.expanded = len(states) if ss.complete else 0
        _rebuild_tree(ss)
        return ss


def _rebuild_tree(ss: StateSpace) -> None:
    ss.depth = [-1] * len(ss.states)
    ss.parent = [-1] * len(ss.states)
    if not ss.states:
        return
    ss.depth[ss.initial] = 0
    queue = deque([ss.initial])
    while queue:
        i = queue.popleft()
        for k in ss.outgoing_indices(i):
            t = ss.transitions[k]
            if ss.depth[t.target] < 0:
                ss.depth[t.target] = ss.depth[i] + 1
                ss.parent[t.target] = k
                queue.append(t.target)


def initial_state(m: Machine, env: dict) -> dict:
    rt = MachineRuntime(m, env)
    return rt.state_dict(rt.initial_state())


def enabled(m: Machine, state: dict, env: dict) -> list:
    """Enabled transitions at a state given as ``{variable: value}``; targets
    are returned as dictionaries as well."""
    rt = MachineRuntime(m, env)
    s = tuple(state[v] for v in rt.variables)
    return [(ev, dict(params), rt.state_dict(t)) for ev, params, t in rt.successors(s)]


def explore(m, env: Optional[dict] = None, bound: int = DEFAULT_BOUND, runtime: Optional[MachineRuntime] = None) -> StateSpace:
    """Breadth-first exploration from the initial state.

    ``complete`` is true iff the frontier was exhausted with at most
    ``bound`` states.  Invariant violations and deadlocks are collected, not
    fatal.
    """
    if bound < 1:
        raise ValueError("bound must be >= 1")
    rt = runtime or MachineRuntime(m, env or {})
    init = rt.initial_state()
    ss = StateSpace(rt.machine.name, rt.variables)
    states, index, transitions = ss.states, ss.index, ss.transitions
    depth, parent = ss.depth, ss.parent
    states.append(init)
    index[init] = 0
    depth.append(0)
    parent.append(-1)
    for label in rt.violated(init):
        ss.violations.append((0, label))
    i = 0
    truncated = False
    while i < len(states):
        state = states[i]
        n_before = len(transitions)
        for name, params, target in rt.successors(state):
            j = index.get(target)
            if j is None:
                if len(states) >= bound:
                    truncated = True
                    continue
                j = len(states)
                states.append(target)
                index[target] = j
                depth.append(depth[i] + 1)
                parent.append(len(transitions))
                for label in rt.violated(target):
                    ss.violations.append((j, label))
            transitions.append(Transition(i, name, params, j))
        if len(transitions) == n_before:
            ss.deadlocks.append(i)
        i += 1
        if truncated:
            break
    ss.expanded = i
    ss.complete = not truncated and i == len(states)
    return ss
