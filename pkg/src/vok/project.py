"""Project manifests: components, links between machines, VO files.

A project caches what is expensive to recompute (context instances and
explored state spaces) so that tasks sharing a machine share one
exploration.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .ast import INIT, Machine, free_names
from .errors import Diagnostic, DiagnosticsError, ParseError, VokError
from .evaluator import Universe, context_chain, instantiate_context
from .explorer import DEFAULT_BOUND, MachineRuntime, StateSpace, explore
from .parser import parse_context, parse_machine, parse_vo_file
from .refinement import (
    GluingMap, check_abstraction, check_forward_simulation, check_instantiation, flatten,
)

LINK_KINDS = ("refines", "abstracts", "instantiates")
MANIFEST = "project.json"


@dataclass
class Link:
    """``source`` is the more abstract machine, ``target`` the more concrete."""
    kind: str
    source: str
    target: str
    name: str = ""
    glue: Optional[GluingMap] = None
    events: Optional[dict] = None

    def __post_init__(self):
        if not self.name:
            self.name = f"{self.source}->{self.target}"

    def event_map(self, abstract: Machine, concrete: Machine) -> dict:
        """Explicit entries first; otherwise a refining event maps to its
        parent, an event named like an abstract one to that event, and
        anything else is NEW."""
        from .refinement import NEW

        mapping = dict(self.events or {})
        for ev in concrete.events:
            if ev.name == INIT or ev.name in mapping:
                continue
            if ev.kind != "plain" and ev.parent:
                mapping[ev.name] = ev.parent
            elif abstract.has_event(ev.name):
                mapping[ev.name] = ev.name
            else:
                mapping[ev.name] = NEW
        return mapping


@dataclass
class Instance:
    """Static environment of a machine: its context chain, instantiated."""
    contexts: tuple
    universe: Universe
    constants: dict
    via: Optional[str] = None  # machine whose contexts were borrowed, if any

    @property
    def env(self) -> dict:
        env = self.universe.as_env()
        env.update(self.constants)
        return env


@dataclass
class Project:
    root: Path
    machines: dict = field(default_factory=dict)
    contexts: dict = field(default_factory=dict)
    links: list = field(default_factory=list)
    vo_files: list = field(default_factory=list)  # (path, VOFile)
    scopes: dict = field(default_factory=dict)
    sources: dict = field(default_factory=dict)
    bound: int = DEFAULT_BOUND

    def __post_init__(self):
        self._instances: dict = {}
        self._flat: dict = {}
        self._spaces: dict = {}
        self._runtimes: dict = {}
        self.explorations = 0
        self.derived_files: dict = {}  # virtual path -> Trace or expectation dict
        self.derivations: dict = {}  # derived VO -> (parent VO, link name)
        self.superseded: set = set()
        self.context_override: Optional[str] = None

    # -- lookup ---------------------------------------------------------------

    def machine(self, name: str) -> Machine:
        try:
            return self.machines[name]
        except KeyError:
            raise VokError("E_UNRESOLVED", f"unknown machine {name}") from None

    def link(self, name: str) -> Link:
        for ln in self.links:
            if name in (ln.name, f"{ln.source}->{ln.target}"):
                return ln
        raise VokError("E_UNRESOLVED", f"unknown link {name}")

    def links_from(self, machine: str, kind: Optional[str] = None) -> list:
        return [ln for ln in self.links if ln.source == machine and (kind is None or ln.kind == kind)]

    @property
    def tasks(self) -> dict:
        out: dict = {}
        for _, vf in self.vo_files:
            for t in vf.tasks:
                out[t.id] = t
        return out

    @property
    def vos(self) -> dict:
        out: dict = {}
        for _, vf in self.vo_files:
            for vo in vf.vos:
                out[vo.name] = vo
        return out

    # -- structure ------------------------------------------------------------

    def refinement_chain(self, name: str) -> list:
        """Machines from the root of the ``refines`` chain down to ``name``."""
        chain, seen = [], set()
        cur: Optional[str] = name
        while cur is not None:
            if cur in seen:
                raise VokError("E_EXTENDS_CYCLE", f"machine {cur} refines itself")
            seen.add(cur)
            m = self.machine(cur)
            chain.append(m)
            cur = m.refines
        return chain[::-1]

    def flattened(self, name: str) -> Machine:
        if name not in self._flat:
            self._flat[name] = flatten(self.refinement_chain(name))
        return self._flat[name]

    def context_names(self, machine: Machine) -> list:
        """The sees-closure of a machine, root contexts first."""
        out: list = []
        for c in machine.sees:
            for ctx in context_chain(self.contexts, c):
                if ctx.name not in out:
                    out.append(ctx.name)
        return out

    # -- instances ------------------------------------------------------------

    def _instantiate(self, names: list) -> Instance:
        key = tuple(names)
        if key not in self._instances:
            try:
                u, consts = instantiate_context([self.contexts[n] for n in names], self.scopes)
                self._instances[key] = Instance(key, u, consts)
            except DiagnosticsError as e:
                self._instances[key] = e
        got = self._instances[key]
        if isinstance(got, DiagnosticsError):
            raise got
        return got

    def instance(self, name: str) -> Instance:
        """Context instance for a machine.

        A machine whose own contexts cannot be instantiated (deferred sets
        without extent, constants without values) borrows the contexts of
        the nearest linked machine that sees a superset of its contexts.
        """
        m = self.machine(name)
        own = self.context_names(m)
        if self.context_override:
            names = [c.name for c in context_chain(self.contexts, self.context_override)]
            if not set(own) <= set(names):
                raise VokError("E_UNRESOLVED", f"context {self.context_override} does not cover the contexts of {name}")
            return self._instantiate(names)
        try:
            return self._instantiate(own)
        except DiagnosticsError as e:
            if any(d.code not in ("E_NO_EXTENT", "E_UNSOLVED_CONSTANT") for d in e.diagnostics):
                raise
            first_error = e
        seen, queue = {name}, deque([name])
        while queue:
            cur = queue.popleft()
            for ln in self.links:
                if cur not in (ln.source, ln.target):
                    continue
                other = ln.target if ln.source == cur else ln.source
                if other in seen or other not in self.machines:
                    continue
                seen.add(other)
                queue.append(other)
                names = self.context_names(self.machines[other])
                if set(own) <= set(names):
                    try:
                        inst = self._instantiate(names)
                    except DiagnosticsError:
                        continue
                    return Instance(inst.contexts, inst.universe, inst.constants, via=other)
        raise first_error

    def env(self, name: str) -> dict:
        return self.instance(name).env

    def runtime(self, name: str) -> MachineRuntime:
        if name not in self._runtimes:
            self._runtimes[name] = MachineRuntime(self.flattened(name), self.env(name))
        return self._runtimes[name]

    def explore(self, name: str, bound: Optional[int] = None) -> StateSpace:
        """Explore a machine once per bound; later calls return the same object."""
        bound = bound or self.bound
        key = (name, bound, self.context_override)
        if key not in self._spaces:
            rt = self.runtime(name)
            self._spaces[key] = explore(rt.machine, bound=bound, runtime=rt)
            self.explorations += 1
        return self._spaces[key]

    # -- link checks ---------------------------------------------------------------
    def explore_machine(self, m: Machine) -> StateSpace:
        """Explore a machine object, reusing the cache when it is (the
        flattening of) a project machine."""
        if m.name in self.machines and (m is self.machines[m.name] or m == self.flattened(m.name)):
            return self.explore(m.name)
        rt = MachineRuntime(flatten([m]), self.env(m.name if m.name in self.machines else m.refines or m.name))
        return explore(rt.machine, bound=self.bound, runtime=rt)

    def mm_md(self, link: Link) -> Optional[Machine]:
        """The machine written to show that ``link.source`` abstracts the
        chain: the target of a refines link leaving the abstract machine."""
        for ln in self.links:
            if ln.kind == "refines" and ln.source == link.source and ln.target != link.target:
                return self.machine(ln.target)
        return None

    def abstraction_check(self, link_name: str, md: Optional[Machine] = None):
        ln = self.link(link_name)
        if ln.kind != "abstracts":
            raise VokError("E_LINK_KIND", f"link {ln.name} is a {ln.kind} link, not abstracts")
        am, mm = self.machine(ln.source), self.machine(ln.target)
        md = md if md is not None else self.mm_md(ln)
        return check_abstraction(self.refinement_chain(mm.name), self.flattened(am.name), ln.glue,
                                 ln.event_map(am, mm), self.env(mm.name), md=md, bound=self.bound,
                                 explorer=self.explore_machine)

    def instantiation_check(self, link_name: str, concrete: Optional[Machine] = None, contexts: Optional[dict] = None):
        ln = self.link(link_name)
        if ln.kind != "instantiates":
            raise VokError("E_LINK_KIND", f"link {ln.name} is a {ln.kind} link, not instantiates")
        conc = concrete if concrete is not None else self.machine(ln.target)
        table = contexts if contexts is not None else self.contexts
        names = []
        for c in conc.sees:
            for ctx in context_chain(table, c):
                if ctx.name not in names:
                    names.append(ctx.name)
        return check_instantiation(self.machine(ln.source), conc, [table[n] for n in names], self.scopes)

    def refinement_check(self, abstract: str, concrete: str, glue: Optional[GluingMap] = None,
                         events: Optional[dict] = None):
        am, cm = self.flattened(abstract), self.flattened(concrete)
        glue = glue if glue is not None else GluingMap.identity(am)
        events = Link("refines", abstract, concrete, events=events).event_map(am, cm)
        return check_forward_simulation(am, cm, glue, events, self.env(concrete), self.bound,
                                        space=self.explore(concrete))

    # -- checks ---------------------------------------------------------------

    def scope_diagnostics(self) -> list:
        """Free identifiers that resolve to nothing in scope."""
        diags: list = []
        for ctx in self.contexts.values():
            try:
                chain = context_chain(self.contexts, ctx.name)
            except VokError as e:
                diags.append(Diagnostic("error", e.code, e.message, source=ctx.name))
                continue
            known = set()
            for c in chain:
                known |= {s.name for s in c.sets} | set(c.constants)
                for s in c.sets:
                    known |= set(s.elements or ())
            for ax in ctx.axioms:
                _report(diags, free_names(ax.pred) - known, ctx.name, ax)
        for m in self.machines.values():
            try:
                names = self.context_names(m)
            except VokError as e:
                diags.append(Diagnostic("error", e.code, e.message, source=m.name))
                continue
            known = set(m.variables)
            for n in names:
                c = self.contexts[n]
                known |= {s.name for s in c.sets} | set(c.constants)
                for s in c.sets:
                    known |= set(s.elements or ())
            glue_scope = set(known)
            if m.refines and m.refines in self.machines:
                glue_scope |= set(self.machines[m.refines].variables)
            for inv in m.invariants:
                _report(diags, free_names(inv.pred) - glue_scope, m.name, inv)
            for ev in m.events:
                scope = known | set(ev.params)
                for g in ev.guards:
                    _report(diags, free_names(g.pred) - scope, m.name, g)
                for a in ev.actions:
                    if a.var not in m.variables:
                        diags.append(Diagnostic("error", "E_UNBOUND_NAME", f"assignment to undeclared variable {a.var}",
                                                *(a.pos or (0, 0)), a.label, m.name))
                    _report(diags, free_names(a.effective_expr()) - scope, m.name, a)
        for ln in self.links:
            if ln.glue is None:
                continue
            conc = self.machines.get(ln.target)
            if conc is None:
                continue
            scope = set(conc.variables)
            for n in self.context_names(conc):
                c = self.contexts[n]
                scope |= {s.name for s in c.sets} | set(c.constants)
            for v, e in ln.glue.glue.items():
                for miss in sorted(free_names(e) - scope):
                    diags.append(Diagnostic("error", "E_UNBOUND_NAME", f"gluing expression for {v} uses unknown name {miss}",
                                            label=v, source=ln.name))
        return diags


def _report(diags: list, missing: set, source: str, item) -> None:
    for name in sorted(missing):
        diags.append(Diagnostic("error", "E_UNBOUND_NAME", f"unknown identifier {name}",
                                *(item.pos or (0, 0)), item.label, source))


# -- loading ------------------------------------------------------------------

def _read(base: Path, rel: str, diags: list, what: str) -> Optional[str]:
    path = base / rel
    if not path.is_file():
        diags.append(Diagnostic("error", "E_MISSING_FILE", f"{what} file {rel} not found", source=MANIFEST))
        return None
    return path.read_text()


def _read_json(base: Path, rel: str, diags: list, what: str) -> Optional[dict]:
    text = _read(base, rel, diags, what)
    if text is None:
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        diags.append(Diagnostic("error", "E_SYNTAX", f"{rel}: {e.msg}", e.lineno, e.colno, source=rel))
        return None


def parse_manifest(text: str, base_dir=".") -> Project:
    """Load every file a manifest names; all problems are collected into a
    single DiagnosticsError."""
    base = Path(base_dir)
    diags: list = []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DiagnosticsError([Diagnostic("error", "E_SYNTAX", e.msg, e.lineno, e.colno, source=MANIFEST)]) from None
    proj = Project(base, scopes=dict(data.get("scopes", {})))
    for kind, parse, table in (("context", parse_context, proj.contexts), ("machine", parse_machine, proj.machines)):
        for rel in data.get(kind + "s", []):
            src = _read(base, rel, diags, kind)
            if src is None:
                continue
            try:
                comp = parse(src, rel)
            except ParseError as e:
                diags.extend(e.diagnostics)
                continue
            if comp.name in table:
                diags.append(Diagnostic("error", "E_DUP_COMPONENT", f"{kind} {comp.name} declared twice", source=rel))
            table[comp.name] = comp
            proj.sources[comp.name] = rel

    for m in proj.machines.values():
        for c in m.sees:
            if c not in proj.contexts:
                diags.append(Diagnostic("error", "E_UNRESOLVED", f"machine {m.name} sees unknown context {c}", source=proj.sources[m.name]))
        if m.refines and m.refines not in proj.machines:
            diags.append(Diagnostic("error", "E_UNRESOLVED", f"machine {m.name} refines unknown machine {m.refines}", source=proj.sources[m.name]))
    for c in proj.contexts.values():
        if c.extends and c.extends not in proj.contexts:
            diags.append(Diagnostic("error", "E_UNRESOLVED", f"context {c.name} extends unknown context {c.extends}", source=proj.sources[c.name]))

    for k, entry in enumerate(data.get("links", [])):
        where = f"links[{k}]"
        kind = entry.get("kind")
        if kind not in LINK_KINDS:
            diags.append(Diagnostic("error", "E_UNKNOWN_LINK_KIND", f"{where}: unknown link kind {kind!r}", source=MANIFEST))
            continue
        src, dst = entry.get("from"), entry.get("to")
        for end in (src, dst):
            if end not in proj.machines:
                diags.append(Diagnostic("error", "E_UNRESOLVED", f"{where}: unknown machine {end}", source=MANIFEST))
        glue = events = None
        glue_ref = entry.get("glue")
        if glue_ref is not None:
            gdata = glue_ref if isinstance(glue_ref, dict) else _read_json(base, glue_ref, diags, "glue")
            if gdata is not None:
                texts = gdata.get("glue", gdata) if isinstance(gdata, dict) else {}
                try:
                    glue = GluingMap.parse({v: t for v, t in texts.items()
                                            if v not in ("abstract_machine", "concrete_machine", "events")})
                except ParseError as e:
                    diags.extend(e.diagnostics)
                if isinstance(gdata.get("events"), dict):
                    events = dict(gdata["events"])
        elif kind == "abstracts":
            diags.append(Diagnostic("error", "E_GLUE_REQUIRED", f"{where}: abstracts link {src} -> {dst} has no glue", source=MANIFEST))
        ev_ref = entry.get("events")
        if ev_ref is not None:
            edata = ev_ref if isinstance(ev_ref, dict) else _read_json(base, ev_ref, diags, "event map")
            if edata is not None:
                events = dict(edata.get("events", edata))
        proj.links.append(Link(kind, src, dst, entry.get("name", ""), glue, events))

    for rel in data.get("vos", []):
        src = _read(base, rel, diags, "VO")
        if src is None:
            continue
        try:
            vf = parse_vo_file(src, rel)
        except ParseError as e:
            diags.extend(e.diagnostics)
            continue
        for t in vf.tasks:
            if t.machine not in proj.machines:
                diags.append(Diagnostic("error", "E_UNRESOLVED", f"task {t.id} names unknown machine {t.machine}", *(t.pos or (0, 0)), source=rel))
        proj.vo_files.append((rel, vf))

    if any(d.severity == "error" for d in diags):
        raise DiagnosticsError(diags)
    return proj


def load_project(path) -> Project:
    """Load a project from a manifest path or a directory containing one."""
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST
    if not p.is_file():
        raise DiagnosticsError([Diagnostic("error", "E_MISSING_FILE", f"manifest {p} not found")])
    return parse_manifest(p.read_text(), p.parent)

