"""Quotient of a state space by the value of an expression, and DOT output.

An edge C1 -E-> C2 is solid when every state of C1 has an E-transition into
C2, and dashed when only some do.  Transitions that keep the value are not
drawn; they are counted per node instead.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import EvalError, VokError
from .evaluator import compile_expr
from .explorer import StateSpace
from .pretty import format_expr
from .values import canonical_sorted, render, sort_key

SOLID, DASHED = "solid", "dashed"


@dataclass(frozen=True)
class Edge:
    source: object
    event: str
    target: object
    style: str

    def to_json(self) -> dict:
        return {"from": render(self.source), "event": self.event, "to": render(self.target), "style": self.style}


@dataclass
class Projection:
    expression: object
    nodes: list = field(default_factory=list)  # canonical order
    edges: list = field(default_factory=list)
    initial: Optional[object] = None
    members: dict = field(default_factory=dict)  # value -> number of states
    self_loops: dict = field(default_factory=dict)  # value -> elided transitions

    def edge(self, source, event: str, target) -> Optional[Edge]:
        for e in self.edges:
            if (e.source, e.event, e.target) == (source, event, target):
                return e
        return None

    def to_json(self) -> dict:
        return {
            "expression": format_expr(self.expression) if self.expression is not None else "",
            "nodes": [render(v) for v in self.nodes],
            "edges": [e.to_json() for e in self.edges],
            "initial": render(self.initial) if self.initial is not None else None,
            "members": {render(v): self.members[v] for v in self.nodes},
            "self_loops": {render(v): self.self_loops.get(v, 0) for v in self.nodes},
        }


def project(ss: StateSpace, e, env: dict) -> Projection:
    """Merge the states of ``ss`` by the value of expression ``e``.

    ``env`` is the static environment (sets and constants) the state space
    was explored under.
    """
    fn = compile_expr(e)
    values = []
    for i, s in enumerate(ss.states):
        local = dict(env)
        local.update(zip(ss.variables, s))
        try:
            values.append(fn(local))
        except EvalError as err:
            raise VokError(err.code, f"projection expression fails in state {i}: {err.message}", state=i) from None
    members: dict = defaultdict(int)
    for v in values:
        members[v] += 1
    crossing: dict = defaultdict(set)  # (from, event, to) -> source states
    loops: dict = defaultdict(int)
    for t in ss.transitions:
        a, b = values[t.source], values[t.target]
        if a == b:
            loops[a] += 1
        else:
            crossing[(a, t.event, b)].add(t.source)
    edges = []
    for (a, ev, b), sources in crossing.items():
        edges.append(Edge(a, ev, b, SOLID if len(sources) == members[a] else DASHED))
    edges.sort(key=lambda x: (sort_key(x.source), x.event, sort_key(x.target)))
    nodes = canonical_sorted(members)
    return Projection(e, nodes, edges, values[ss.initial] if values else None,
                      dict(members), dict(loops))


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def emit_dot(p: Projection, name: str = "projection") -> str:
    ids = {v: f"n{k}" for k, v in enumerate(p.nodes)}
    lines = [f"digraph {_quote(name)} {{"]
    if p.expression is not None:
        lines.append(f"  label={_quote(format_expr(p.expression))};")
    for v in p.nodes:
        extra = ", peripheries=2" if v == p.initial else ""
        lines.append(f"  {ids[v]} [label={_quote(render(v))}{extra}];")
    for e in p.edges:
        style = ", style=dashed" if e.style == DASHED else ""
        lines.append(f"  {ids[e.source]} -> {ids[e.target]} [label={_quote(e.event)}{style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def load_expected(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise VokError("E_MISSING_FILE", f"expected projection {path} not found") from None


def compare_expected(p: Projection, expected: dict) -> list:
    """Differences between a projection and an expectation; empty when they
    match.  An expected edge without ``style`` accepts either style."""
    problems = []
    have_nodes = {render(v) for v in p.nodes}
    want_nodes = set(expected.get("nodes", []))
    if have_nodes != want_nodes:
        problems.append(f"nodes differ: got {sorted(have_nodes)}, expected {sorted(want_nodes)}")
    have = {(render(e.source), e.event, render(e.target)): e.style for e in p.edges}
    want = {(e["from"], e["event"], e["to"]): e.get("style") for e in expected.get("edges", [])}
    for key in sorted(set(have) - set(want)):
        problems.append("unexpected edge {} -{}-> {}".format(*key))
    for key in sorted(set(want) - set(have)):
        problems.append("missing edge {} -{}-> {}".format(*key))
    for key in sorted(set(have) & set(want)):
        if want[key] is not None and want[key] != have[key]:
            problems.append("edge {} -{}-> {} is ".format(*key) + f"{have[key]}, expected {want[key]}")
    return problems
