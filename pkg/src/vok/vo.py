"""Validation obligations: running tasks, composing verdicts, deriving VOs
across links, and reporting."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .ast import Conj, Seq, TaskDecl, TaskRef, VODecl, VOFile, free_names, substitute, task_refs
from .errors import VokError
from .parser import parse_expression
from .pretty import format_expr
from .projection import compare_expected, project
from .refinement import ERROR, FAIL, PASS, UNKNOWN, GluingMap, worst
from .traces import Trace, load_trace, refine_trace, replay

SKIPPED = "SKIPPED"
DEFAULT_MC_OPTIONS = ("INV",)
_EXPECT = re.compile(r"^(.*?)\s+expect\s+(\S+)\s*$")


# -- translation --------------------------------------------------------------

def translate_expression(e, glue: GluingMap, abstract_vars: Optional[Iterable[str]] = None):
    """Replace abstract variables by their gluing expressions.

    ``abstract_vars`` lists the variables that must be glued; any of them
    occurring free in ``e`` without a glue entry is an error.
    """
    required = set(abstract_vars) if abstract_vars is not None else set(glue.glue)
    missing = sorted((free_names(e) & required) - set(glue.glue))
    if missing:
        raise VokError("E_UNGLUED_VARIABLE", "no gluing expression for " + ", ".join(missing), missing=missing)
    return substitute(e, {v: x for v, x in glue.glue.items() if v in required})


def split_sprj_param(param: str) -> tuple:
    m = _EXPECT.match(param)
    return (m.group(1).strip(), m.group(2)) if m else (param.strip(), None)


# -- results ------------------------------------------------------------------

@dataclass
class TaskResult:
    id: str
    type: str
    machine: str
    verdict: str
    detail: str = ""
    artifact: object = None
    input_space: object = None  # the state space an SPRJ task projected

    def to_json(self) -> dict:
        return {"id": self.id, "verdict": self.verdict, "detail": self.detail}


@dataclass
class Node:
    kind: str  # 'task' | '&' | ';'
    verdict: str
    children: list = field(default_factory=list)
    task: Optional[TaskResult] = None

    def tasks(self) -> list:
        if self.task is not None:
            return [self.task]
        return [t for c in self.children for t in c.tasks()]


@dataclass
class VOResult:
    name: str
    requirement: str
    verdict: str
    tree: Node
    derived_from: Optional[tuple] = None
    superseded: bool = False

    @property
    def tasks(self) -> list:
        return self.tree.tasks()

    def task(self, tid: str) -> TaskResult:
        for t in self.tasks:
            if t.id == tid:
                return t
        raise KeyError(tid)

    def to_json(self) -> dict:
        out = {"name": self.name, "requirement": self.requirement, "verdict": self.verdict,
               "tasks": [t.to_json() for t in self.tasks]}
        if self.derived_from:
            out["derivedFrom"] = {"vo": self.derived_from[0], "link": self.derived_from[1]}
        if self.superseded:
            out["superseded"] = True
        return out


# -- running ------------------------------------------------------------------

def read_trace(proj, path: str) -> Trace:
    store = proj.derived_files
    if path in store:
        return store[path]
    return load_trace(Path(proj.root) / path)


def read_json(proj, path: str) -> dict:
    store = proj.derived_files
    if path in store:
        return store[path]
    p = Path(proj.root) / path
    if not p.is_file():
        raise VokError("E_MISSING_FILE", f"{path} not found")
    return json.loads(p.read_text())


def run_task(task: TaskDecl, options: tuple, piped: dict, proj) -> TaskResult:
    """Run one task.  ``piped`` maps machine names to state spaces produced
    earlier in a ``;`` sequence."""
    res = TaskResult(task.id, task.type, task.machine, PASS)
    try:
        if task.type == "TR":
            trace = read_trace(proj, task.param.strip())
            rr = replay(trace, proj.runtime(task.machine))
            res.artifact = rr
            if not rr.ok:
                res.verdict = FAIL
                res.detail = f"step {rr.index}: {rr.reason}: {rr.message}"
            else:
                res.detail = f"{len(trace.steps)} steps replayed" + (", postcondition holds" if trace.postcondition else "")
        elif task.type == "MC":
            opts = tuple(options) or DEFAULT_MC_OPTIONS
            ss = proj.explore(task.machine)
            res.artifact = ss
            notes = [f"{len(ss.states)} states, {len(ss.transitions)} transitions, "
                     + ("complete" if ss.complete else "bound reached")]
            if "INV" in opts and ss.violations:
                sid, label = ss.violations[0]
                res.verdict = FAIL
                notes.append(f"invariant @{label} violated at depth {ss.depth[sid]}")
            if "DLF" in opts and ss.deadlocks:
                res.verdict = FAIL
                notes.append(f"{len(ss.deadlocks)} deadlock states")
            if "FIN" in opts and not ss.complete and res.verdict == PASS:
                res.verdict = UNKNOWN
            res.detail = "; ".join(notes)
        elif task.type == "SPRJ":
            expr_text, expect = split_sprj_param(task.param)
            e = parse_expression(expr_text)
            ss = piped.get(task.machine)
            if ss is None:
                ss = proj.explore(task.machine)
            res.input_space = ss
            prj = project(ss, e, proj.env(task.machine))
            res.artifact = prj
            res.detail = f"{len(prj.nodes)} nodes, {len(prj.edges)} edges"
            if expect:
                problems = compare_expected(prj, read_json(proj, expect))
                if problems:
                    res.verdict = FAIL
                    res.detail += "; " + "; ".join(problems)
                else:
                    res.detail += f"; matches {expect}"
            if not ss.complete:
                # a partial space can still gain nodes, edges or lose solidity
                res.verdict = UNKNOWN
                res.detail += "; state space incomplete"
        else:
            raise VokError("E_UNKNOWN_TASK_TYPE", f"unknown task type {task.type}")
    except (VokError, OSError, ValueError) as e:
        res.verdict = ERROR
        res.detail = getattr(e, "message", None) or str(e)
        code = getattr(e, "code", None)
        if code:
            res.detail = f"{code}: {res.detail}"
    return res


def _skipped(f, tasks: dict) -> Node:
    if isinstance(f, TaskRef):
        t = tasks[f.id]
        return Node("task", SKIPPED, task=TaskResult(t.id, t.type, t.machine, SKIPPED, "not run"))
    kind = "&" if isinstance(f, Conj) else ";"
    return Node(kind, SKIPPED, [_skipped(f.left, tasks), _skipped(f.right, tasks)])


def _evaluate(f, piped: dict, proj, tasks: dict) -> tuple:
    if isinstance(f, TaskRef):
        if f.id not in tasks:
            r = TaskResult(f.id, "?", "?", ERROR, f"E_UNDECLARED_TASK: {f.id}")
            return Node("task", ERROR, task=r), {}
        r = run_task(tasks[f.id], f.options, piped, proj)
        out = {}
        if r.type == "MC" and r.artifact is not None and r.verdict == PASS:
            out[r.machine] = r.artifact
        return Node("task", r.verdict, task=r), out
    if isinstance(f, Seq):
        left, out = _evaluate(f.left, piped, proj, tasks)
        if left.verdict != PASS:
            return Node(";", left.verdict, [left, _skipped(f.right, tasks)]), out
        right, out2 = _evaluate(f.right, {**piped, **out}, proj, tasks)
        return Node(";", right.verdict, [left, right]), {**out, **out2}
    left, out = _evaluate(f.left, piped, proj, tasks)
    right, out2 = _evaluate(f.right, piped, proj, tasks)
    return Node("&", worst([left.verdict, right.verdict]), [left, right]), {**out, **out2}


def evaluate_vo(vo: VODecl, proj) -> VOResult:
    tree, _ = _evaluate(vo.formula, {}, proj, proj.tasks)
    return VOResult(vo.name, vo.requirement, tree.verdict, tree, proj.derivations.get(vo.name), vo.name in proj.superseded)


# -- derivation ---------------------------------------------------------------

def _rename(f, ids: dict):
    if isinstance(f, TaskRef):
        return TaskRef(ids.get(f.id, f.id), f.options)
    return type(f)(_rename(f.left, ids), _rename(f.right, ids))


def _next_index(existing: Iterable[str], base: str) -> int:
    n = 1
    taken = set(existing)
    while f"{base}.{n}" in taken:
        n += 1
    return n


def derive_vo(vo: VODecl, link, proj) -> VODecl:
    """Re-target the tasks of ``vo`` that run on the link's abstract machine
    to its concrete machine, and register the derived VO with the project.

    TR traces are refined, SPRJ expressions translated through the glue
    (their expectations keep nodes and edges but drop edge styles), MC tasks
    are re-targeted unchanged.  Nothing is registered if any step fails.
    """
    tasks = proj.tasks
    abstract, concrete = proj.machine(link.source), proj.machine(link.target)
    n = _next_index(proj.vos, vo.name)
    refs = task_refs(vo.formula)
    if not any(tasks[r.id].machine == abstract.name for r in refs):
        raise VokError("E_LINK_MISMATCH", f"no task of {vo.name} runs on {abstract.name}")
    if link.glue is not None:
        glue, required = link.glue, set(abstract.variables)
    else:
        glue, required = GluingMap({}), set(abstract.variables) - set(concrete.variables)
    events = link.event_map(abstract, concrete)

    new_tasks: list = []
    files: dict = {}
    ids: dict = {}
    for ref in refs:
        t = tasks[ref.id]
        if t.machine != abstract.name or t.id in ids:
            continue
        nid = f"{t.id}.{_next_index(tasks, t.id)}"
        ids[t.id] = nid
        if t.type == "TR":
            trace = read_trace(proj, t.param.strip())
            refined = refine_trace(trace, proj.runtime(concrete.name), events,
                                   abstract_rt=proj.runtime(abstract.name))
            if trace.postcondition is not None:
                refined = Trace(refined.machine, refined.steps,
                                translate_expression(trace.postcondition, glue, required))
            path = f"derived/{nid}.json"
            files[path] = refined
            new_tasks.append(TaskDecl(nid, concrete.name, "TR", path))
        elif t.type == "SPRJ":
            expr_text, expect = split_sprj_param(t.param)
            translated = translate_expression(parse_expression(expr_text), glue, required)
            param = format_expr(translated)
            if expect:
                shape = read_json(proj, expect)
                relaxed = {"nodes": list(shape.get("nodes", [])),
                           "edges": [{k: v for k, v in e.items() if k != "style"} for e in shape.get("edges", [])]}
                path = f"derived/{nid}.expected.json"
                files[path] = relaxed
                param += f" expect {path}"
            new_tasks.append(TaskDecl(nid, concrete.name, "SPRJ", param))
        else:
            new_tasks.append(TaskDecl(nid, concrete.name, t.type, t.param))

    child = VODecl(f"{vo.name}.{n}", _rename(vo.formula, ids), vo.requirement)
    proj.derived_files.update(files)
    proj.derivations[child.name] = (vo.name, link.name)
    proj.superseded.add(vo.name)
    proj.vo_files.append(("<derived>", VOFile((child,), tuple(new_tasks))))
    return child


def derived_vo_text(proj) -> str:
    """VO-file text of every derived VO, with their tasks."""
    from .parser import format_vo_file

    vos, tasks = [], []
    for path, vf in proj.vo_files:
        if path == "<derived>":
            vos.extend(vf.vos)
            tasks.extend(vf.tasks)
    return format_vo_file(VOFile(tuple(vos), tuple(tasks))) if vos else ""


# -- reporting ----------------------------------------------------------------

@dataclass
class Report:
    results: list
    coverage: dict

    @property
    def verdict(self) -> str:
        return worst([r.verdict for r in self.results])

    def exit_code(self) -> int:
        v = self.verdict
        return 2 if v == ERROR else (1 if v in (FAIL, UNKNOWN) else 0)

    def to_json(self) -> dict:
        return {"vos": [r.to_json() for r in self.results], "coverage": self.coverage}

    def text(self) -> str:
        if not self.results:
            return "no validation obligations\n"
        width = max(len(r.name) for r in self.results)
        lines = []
        for r in self.results:
            extra = []
            if r.derived_from:
                extra.append(f"derived from {r.derived_from[0]} via {r.derived_from[1]}")
            if r.superseded:
                extra.append("superseded")
            req = f" [{r.requirement}]" if r.requirement else ""
            lines.append(f"{r.name.ljust(width)}  {r.verdict:<7}{req}" + (f"  ({'; '.join(extra)})" if extra else ""))
            for t in r.tasks:
                lines.append(f"  {t.id:<10} {t.verdict:<7} {t.detail}")
        lines.append("coverage:")
        for m, ids in self.coverage.items():
            lines.append(f"  {m}: {', '.join(ids) if ids else '-'}")
        return "\n".join(lines) + "\n"


def vo_report(proj, names: Optional[Iterable[str]] = None) -> Report:
    vos = proj.vos
    wanted = list(names) if names else list(vos)
    for n in wanted:
        if n not in vos:
            raise VokError("E_UNRESOLVED", f"unknown VO {n}")
    results = [evaluate_vo(vos[n], proj) for n in wanted]
    coverage = {m: [] for m in proj.machines}
    for t in proj.tasks.values():
        coverage.setdefault(t.machine, []).append(t.id)
    return Report(results, coverage)

