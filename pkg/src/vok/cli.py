"""Command-line entry point: ``vok <subcommand> ...``.

Exit codes: 0 success or all PASS, 1 a check failed (FAIL or UNKNOWN),
2 usage or internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional

from .ast import TaskDecl
from .errors import DiagnosticsError, VokError
from .explorer import DEFAULT_BOUND, StateSpace
from .parser import parse_expression
from .pretty import format_machine
from .project import Link, load_project
from .projection import compare_expected, emit_dot, load_expected, project
from .refinement import FAIL, PASS, UNKNOWN, GluingMap, flatten
from .traces import DEFAULT_SKIP_BUDGET, load_trace, refine_trace, replay
from .vo import derive_vo, derived_vo_text, run_task, vo_report

OK, FAILED, USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE)


def _common(top: bool) -> argparse.ArgumentParser:
    # subcommands repeat the options without defaults so a value given
    # before the subcommand is not overwritten
    def d(value):
        return value if top else argparse.SUPPRESS

    c = argparse.ArgumentParser(add_help=False)
    c.add_argument("--project", default=d(os.environ.get("VOK_PROJECT", ".")),
                   help="manifest or directory containing project.json (default: $VOK_PROJECT or .)")
    c.add_argument("--bound", type=int, default=d(DEFAULT_BOUND), help="state bound for exploration")
    c.add_argument("--format", choices=("text", "json"), default=d("text"))
    c.add_argument("--context", default=d(None), help="instantiate machines with this context instead of resolving one")
    return c


def build_parser() -> argparse.ArgumentParser:
    common = _common(top=False)
    p = _Parser(prog="vok", description="Validation obligations over Event-B style models.", parents=[_common(top=True)])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("check", parents=[common], help="parse, scope-check and instantiate the whole project")

    s = sub.add_parser("explore", parents=[common], help="explore a machine breadth-first")
    s.add_argument("machine")
    s.add_argument("--out", help="write the state space as JSON")

    s = sub.add_parser("mc", parents=[common], help="model check a machine")
    s.add_argument("machine")
    s.add_argument("--fin", action="store_true", help="require a complete exploration")
    s.add_argument("--inv", action="store_true", help="fail on invariant violations (default)")
    s.add_argument("--dlf", action="store_true", help="fail on deadlocks")

    s = sub.add_parser("replay", parents=[common], help="replay a trace")
    s.add_argument("machine")
    s.add_argument("trace")

    s = sub.add_parser("trace-refine", parents=[common], help="refine an abstract trace onto a concrete machine")
    s.add_argument("abstract")
    s.add_argument("concrete")
    s.add_argument("trace")
    s.add_argument("--skip-budget", type=int, default=DEFAULT_SKIP_BUDGET)
    s.add_argument("--out", help="write the refined trace here")

    s = sub.add_parser("flatten", parents=[common], help="flatten a refinement chain, most abstract first")
    s.add_argument("machines", nargs="+")
    s.add_argument("--out")

    s = sub.add_parser("refine-check", parents=[common], help="check forward simulation between two machines")
    s.add_argument("abstract")
    s.add_argument("concrete")
    s.add_argument("--glue", help="gluing map JSON (identity when omitted)")
    s.add_argument("--events", help="event map JSON (overrides the glue file's)")

    s = sub.add_parser("abstraction-check", parents=[common], help="check an abstracts link")
    s.add_argument("link")

    s = sub.add_parser("instantiation-check", parents=[common], help="check an instantiates link")
    s.add_argument("link")

    s = sub.add_parser("project", parents=[common], help="project a state space onto an expression")
    s.add_argument("machine")
    s.add_argument("--expr", required=True)
    s.add_argument("--from", dest="from_", help="state space JSON from `vok explore --out`")
    s.add_argument("--dot", help="write the projection as DOT")
    s.add_argument("--expect", help="expected projection JSON to compare with")

    s = sub.add_parser("vo", parents=[common], help="validation obligations")
    vsub = s.add_subparsers(dest="vo_command", required=True, parser_class=_Parser)
    r = vsub.add_parser("run", parents=[common], help="evaluate VOs (all when none named)")
    r.add_argument("names", nargs="*")
    d = vsub.add_parser("derive", parents=[common], help="derive a VO across a link")
    d.add_argument("name")
    d.add_argument("link")
    d.add_argument("--out", help="directory for the derived VO file and its artifacts")
    vsub.add_parser("report", parents=[common], help="evaluate every VO and print the status table")
    return p


def _emit(args, payload: dict, text: str) -> None:
    if args.format == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _load(args):
    proj = load_project(args.project)
    proj.bound = args.bound
    if args.context:
        if args.context not in proj.contexts:
            raise VokError("E_UNRESOLVED", f"unknown context {args.context}")
        proj.context_override = args.context
    return proj


def _code(verdict: str) -> int:
    return OK if verdict == PASS else (FAILED if verdict in (FAIL, UNKNOWN) else USAGE)


def cmd_check(args) -> int:
    try:
        proj = _load(args)
    except DiagnosticsError as e:
        _emit(args, {"ok": False, "diagnostics": [str(d) for d in e.diagnostics]},
              "\n".join(str(d) for d in e.diagnostics))
        return FAILED
    diags = proj.scope_diagnostics()
    notes = []
    for name in proj.machines:
        try:
            inst = proj.instance(name)
            notes.append(f"{name}: instantiated with {inst.contexts[-1]}" + (f" (via {inst.via})" if inst.via else ""))
        except DiagnosticsError as e:
            diags.extend(e.diagnostics)
    ok = not any(d.severity == "error" for d in diags)
    summary = (f"{len(proj.machines)} machines, {len(proj.contexts)} contexts, {len(proj.links)} links, "
               f"{sum(len(vf.vos) for _, vf in proj.vo_files)} VOs")
    lines = [str(d) for d in diags] + notes + [("ok: " if ok else "failed: ") + summary]
    _emit(args, {"ok": ok, "diagnostics": [str(d) for d in diags], "summary": summary}, "\n".join(lines))
    return OK if ok else FAILED


def _space_line(ss: StateSpace) -> str:
    return (f"{len(ss.states)} states, {len(ss.transitions)} transitions, "
            + ("complete" if ss.complete else "incomplete")
            + f", {len(ss.violations)} invariant violations, {len(ss.deadlocks)} deadlocks")


def cmd_explore(args) -> int:
    proj = _load(args)
    ss = proj.explore(args.machine)
    if args.out:
        Path(args.out).write_text(ss.dumps() + "\n")
    _emit(args, {"machine": args.machine, "states": len(ss.states), "transitions": len(ss.transitions),
                 "complete": ss.complete, "violations": len(ss.violations), "deadlocks": len(ss.deadlocks)},
          _space_line(ss))
    return OK


def cmd_mc(args) -> int:
    proj = _load(args)
    proj.machine(args.machine)
    opts = tuple(o for o, on in (("FIN", args.fin), ("INV", args.inv), ("DLF", args.dlf)) if on)
    res = run_task(TaskDecl("MC", args.machine, "MC"), opts, {}, proj)
    _emit(args, {"machine": args.machine, "verdict": res.verdict, "detail": res.detail},
          f"{res.verdict}: {res.detail}")
    return _code(res.verdict)


def cmd_replay(args) -> int:
    proj = _load(args)
    rr = replay(load_trace(args.trace), proj.runtime(args.machine))
    text = f"{rr.verdict}: {len(rr.states) - 1} steps replayed"
    if not rr.ok:
        text = f"{rr.verdict}: step {rr.index}: {rr.reason}: {rr.message}"
    _emit(args, rr.to_json(), text)
    return _code(rr.verdict)


def _link_between(proj, abstract: str, concrete: str) -> Link:
    for ln in proj.links:
        if ln.source == abstract and ln.target == concrete:
            return ln
    return Link("refines", abstract, concrete)


def cmd_trace_refine(args) -> int:
    proj = _load(args)
    ln = _link_between(proj, args.abstract, args.concrete)
    events = ln.event_map(proj.machine(args.abstract), proj.machine(args.concrete))
    refined = refine_trace(load_trace(args.trace), proj.runtime(args.concrete), events,
                           skip_budget=args.skip_budget, bound=args.bound,
                           abstract_rt=proj.runtime(args.abstract))
    if args.out:
        Path(args.out).write_text(refined.dumps())
    lines = [f"{len(refined.steps)} steps, {refined.skips} inserted"]
    lines += [("  skip " if s.skip else "       ") + s.event + "(" +
              ", ".join(f"{p}={v}" for p, v in refined.to_json()["steps"][k]["params"].items()) + ")"
              for k, s in enumerate(refined.steps)]
    _emit(args, refined.to_json(), "\n".join(lines))
    return OK


def cmd_flatten(args) -> int:
    proj = _load(args)
    warnings: list = []
    m = flatten([proj.machine(n) for n in args.machines], warnings)
    text = format_machine(m)
    for w in warnings:
        print(str(w), file=sys.stderr)
    if args.out:
        Path(args.out).write_text(text)
        return OK
    sys.stdout.write(text)
    return OK


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise VokError("E_MISSING_FILE", f"{path} not found") from None


def cmd_refine_check(args) -> int:
    proj = _load(args)
    glue = events = None
    if args.glue:
        data = _read_json(args.glue)
        glue = GluingMap.parse(data.get("glue", {}))
        events = data.get("events")
    if args.events:
        events = _read_json(args.events)
    rep = proj.refinement_check(args.abstract, args.concrete, glue, events)
    text = f"{rep.verdict}: {rep.states} states, {rep.transitions} transitions checked"
    if rep.obligation:
        path = " ; ".join(f"{t.event}({', '.join(f'{p}={v}' for p, v in rep.to_json()['counterexample'][k]['params'].items())})"
                          for k, t in enumerate(rep.counterexample))
        text += f"\n{rep.obligation}: {rep.message}\ncounterexample (depth {rep.depth}): {path or '<initial state>'}"
    elif rep.message:
        text += f"\n{rep.message}"
    _emit(args, rep.to_json(), text)
    return _code(rep.verdict)


def _gate_text(rep) -> str:
    lines = [f"{rep.check}: {rep.verdict}"]
    for f in rep.findings:
        lines.append(f"  {f.gate}: {f.verdict}" + (f" {f.code}" if f.code else "") + (f" - {f.message}" if f.message else ""))
    lines += [f"  warning: {w}" for w in rep.warnings]
    return "\n".join(lines)


def cmd_abstraction_check(args) -> int:
    proj = _load(args)
    rep = proj.abstraction_check(args.link)
    _emit(args, rep.to_json(), _gate_text(rep))
    return _code(rep.verdict)


def cmd_instantiation_check(args) -> int:
    proj = _load(args)
    rep = proj.instantiation_check(args.link)
    _emit(args, rep.to_json(), _gate_text(rep))
    return _code(rep.verdict)


def cmd_project(args) -> int:
    proj = _load(args)
    e = parse_expression(args.expr)
    if args.from_:
        ss = StateSpace.from_json(_read_json(args.from_))
    else:
        ss = proj.explore(args.machine)
    prj = project(ss, e, proj.env(args.machine))
    dot = emit_dot(prj)
    if args.dot:
        Path(args.dot).write_text(dot)
    verdict = PASS
    lines = [f"{len(prj.nodes)} nodes, {len(prj.edges)} edges"]
    lines += [f"  {e.to_json()['from']} -{e.event}-> {e.to_json()['to']} ({e.style})" for e in prj.edges]
    payload = prj.to_json()
    if args.expect:
        problems = compare_expected(prj, load_expected(args.expect))
        verdict = FAIL if problems else PASS
        lines += problems or ["matches " + args.expect]
        payload["verdict"] = verdict
    if not args.dot and args.format == "text":
        lines.append(dot.rstrip("\n"))
    _emit(args, payload, "\n".join(lines))
    return _code(verdict)


def cmd_vo(args) -> int:
    proj = _load(args)
    if args.vo_command == "derive":
        if args.name not in proj.vos:
            raise VokError("E_UNRESOLVED", f"unknown VO {args.name}")
        child = derive_vo(proj.vos[args.name], proj.link(args.link), proj)
        text = derived_vo_text(proj)
        if args.out:
            out = Path(args.out)
            (out / "derived").mkdir(parents=True, exist_ok=True)
            (out / f"{child.name}.vo").write_text(text)
            for path, art in proj.derived_files.items():
                body = art.dumps() if hasattr(art, "dumps") else json.dumps(art, indent=2) + "\n"
                (out / path).write_text(body)
        _emit(args, {"derived": child.name, "from": args.name, "link": args.link, "vo_file": text}, text)
        return OK
    names = args.names if args.vo_command == "run" else None
    rep = vo_report(proj, names)
    _emit(args, rep.to_json(), rep.text())
    return rep.exit_code()


COMMANDS = {
    "check": cmd_check, "explore": cmd_explore, "mc": cmd_mc, "replay": cmd_replay,
    "trace-refine": cmd_trace_refine, "flatten": cmd_flatten, "refine-check": cmd_refine_check,
    "abstraction-check": cmd_abstraction_check, "instantiation-check": cmd_instantiation_check,
    "project": cmd_project, "vo": cmd_vo,
}


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args)
    except DiagnosticsError as e:
        for d in e.diagnostics:
            print(str(d), file=sys.stderr)
        return USAGE
    except VokError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
