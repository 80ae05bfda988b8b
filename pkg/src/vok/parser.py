"""Recursive-descent parser for the ASCII machine/context language and VO files.

Formula syntax follows classical B's ASCII operators; see README for the
grammar summary.  Parse failures raise :class:`~vok.errors.ParseError` carrying
positioned diagnostics.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Optional

from .ast import (
    ARROWS, Action, Apply, BinExpr, BoolLit, Compare, Conj, Context, Equiv,
    Event, Image, Imp, IntLit, Labeled, Logic, MC_OPTIONS, Machine, Name, Not,
    Partition, PredConst, Quant, SET_OPS, Seq, SetComp, SetDecl, SetEnum,
    TASK_TYPES, TaskDecl, TaskRef, UnExpr, VODecl, VOFile, pattern_names,
    task_refs,
)
from .errors import Diagnostic, ParseError

KEYWORDS = frozenset("""
    machine context refines sees extends variables invariants events event any
    where when then begin end sets constants axioms or not dom ran POW
    partition TRUE FALSE btrue bfalse
""".split())

_OPERATORS = [
    ":=", "<=>", "=>", "|->", "<<|", "|>>", "<->", "-->", "+->", ">+>", ">->",
    "/<:", "<<:", "<:", "/:", "/=", "<=", ">=", "<|", "|>", "<+", "\\/", "/\\",
    "**", "\\", "~", "(", ")", "[", "]", "{", "}", ",", "|", ".", ":", "=",
    "<", ">", "&", "!", "#", "-",
]

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<comment>//[^\n]*|/\*.*?\*/)"
    r"|(?P<label>@[A-Za-z0-9_.']+)"
    r"|(?P<int>\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_']*)"
    r"|(?P<op>" + "|".join(re.escape(o) for o in _OPERATORS) + r")",
    re.S,
)


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # 'ident', 'kw', 'int', 'label', 'op', 'eof'
    text: str
    line: int
    col: int


class _Fail(Exception):
    def __init__(self, tok: Token, message: str, code: str = "E_SYNTAX"):
        super().__init__(message)
        self.tok = tok
        self.message = message
        self.code = code


def tokenize(text: str) -> list:
    toks = []
    pos, line, line_start = 0, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            col = pos - line_start + 1
            raise ParseError([Diagnostic("error", "E_SYNTAX", f"unexpected character {text[pos]!r}", line, col)])
        kind = m.lastgroup
        s = m.group()
        if kind not in ("ws", "comment"):
            if kind == "ident" and s in KEYWORDS:
                kind = "kw"
            toks.append(Token(kind, s, line, pos - line_start + 1))
        nl = s.count("\n")
        if nl:
            line += nl
            line_start = pos + s.rindex("\n") + 1
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1))
    return toks


_CMP = (":", "/:", "<:", "/<:", "<<:", "=", "/=", "<", "<=", ">", ">=")
_SETLEVEL = SET_OPS + ("|->",)


class Parser:
    def __init__(self, text: str, source: Optional[str] = None):
        self.text = text
        self.source = source
        self.toks = tokenize(text)
        self.i = 0
        self.furthest: Optional[_Fail] = None
        self.diagnostics: list = []

    # -- token helpers --------------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.text in texts

    def accept(self, *texts: str) -> Optional[Token]:
        if self.at(*texts):
            t = self.tok
            self.i += 1
            return t
        return None

    def fail(self, message: str, code: str = "E_SYNTAX", tok: Optional[Token] = None):
        f = _Fail(tok or self.tok, message, code)
        if self.furthest is None or _later(f.tok, self.furthest.tok):
            self.furthest = f
        raise f

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            self.fail(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return t

    def ident(self) -> str:
        t = self.tok
        if t.kind != "ident":
            self.fail(f"expected identifier, found {t.text or 'end of input'!r}")
        self.i += 1
        return t.text

    def label(self) -> tuple:
        t = self.tok
        if t.kind != "label":
            self.fail(f"expected label, found {t.text or 'end of input'!r}")
        self.i += 1
        return t.text[1:], (t.line, t.col)

    def attempt(self, fn: Callable):
        save = self.i
        try:
            return fn()
        except _Fail:
            self.i = save
            return None

    def error(self, code: str, message: str, tok: Token, label: Optional[str] = None):
        self.diagnostics.append(Diagnostic("error", code, message, tok.line, tok.col, label, self.source))

    def run(self, fn: Callable):
        try:
            result = fn()
            if self.tok.kind != "eof":
                self.fail(f"unexpected {self.tok.text!r}")
        except _Fail as f:
            best = self.furthest if self.furthest and _later(self.furthest.tok, f.tok) else f
            self.diagnostics.insert(0, Diagnostic("error", best.code, best.message, best.tok.line, best.tok.col, None, self.source))
            raise ParseError(self.diagnostics) from None
        if any(d.severity == "error" for d in self.diagnostics):
            raise ParseError(self.diagnostics)
        return result

    # -- predicates -----------------------------------------------------------
    def pred(self):
        left = self.imp()
        if self.accept("<=>"):
            return Equiv(left, self.imp())
        return left

    def imp(self):
        left = self.disj()
        if self.accept("=>"):
            return Imp(left, self.imp())
        return left

    def disj(self):
        args = [self.conj()]
        while self.accept("or"):
            args.append(self.conj())
        return args[0] if len(args) == 1 else Logic("or", tuple(args))

    def conj(self):
        args = [self.unary_pred()]
        while self.accept("&"):
            args.append(self.unary_pred())
        return args[0] if len(args) == 1 else Logic("&", tuple(args))

    def unary_pred(self):
        if self.accept("not"):
            return Not(self.unary_pred())
        return self.atomic_pred()

    def atomic_pred(self):
        if self.at("!", "#"):
            kind = self.tok.text
            self.i += 1
            names = [self.ident()]
            while self.accept(","):
                names.append(self.ident())
            self.expect(".")
            return Quant(kind, tuple(names), self.pred())
        if self.accept("btrue"):
            return PredConst(True)
        if self.accept("bfalse"):
            return PredConst(False)
        if self.accept("partition"):
            self.expect("(")
            s = self.expr()
            parts = []
            while self.accept(","):
                parts.append(self.expr())
            self.expect(")")
            return Partition(s, tuple(parts))
        if self.at("("):
            cmp = self.attempt(self.comparison)
            if cmp is not None:
                return cmp
            self.expect("(")
            p = self.pred()
            self.expect(")")
            return p
        return self.comparison()

    def comparison(self):
        left = self.expr()
        t = self.tok
        if t.kind == "op" and t.text in _CMP:
            self.i += 1
            return Compare(t.text, left, self.expr())
        self.fail(f"expected a comparison operator, found {t.text or 'end of input'!r}")

    # -- expressions ----------------------------------------------------------
    def expr(self):
        left = self.setlevel()
        while self.tok.kind == "op" and self.tok.text in ARROWS:
            op = self.tok.text
            self.i += 1
            left = BinExpr(op, left, self.setlevel())
        return left

    def setlevel(self):
        left = self.product()
        while self.tok.kind == "op" and self.tok.text in _SETLEVEL:
            op = self.tok.text
            self.i += 1
            left = BinExpr(op, left, self.product())
        return left

    def product(self):
        left = self.unary_expr()
        while self.accept("**"):
            left = BinExpr("**", left, self.unary_expr())
        return left

    def unary_expr(self):
        if self.at("-"):
            self.i += 1
            t = self.tok
            if t.kind != "int":
                self.fail("unary minus applies to integer literals only")
            self.i += 1
            return self.postfix(IntLit(-int(t.text)))
        return self.postfix(self.primary())

    def postfix(self, e):
        while True:
            if self.accept("~"):
                e = UnExpr("~", e)
            elif self.accept("["):
                arg = self.expr()
                self.expect("]")
                e = Image(e, arg)
            elif self.at("("):
                self.i += 1
                args = [self.expr()]
                while self.accept(","):
                    args.append(self.expr())
                self.expect(")")
                arg = args[0]
                for a in args[1:]:
                    arg = BinExpr("|->", arg, a)
                e = Apply(e, arg)
            else:
                return e

    def primary(self):
        t = self.tok
        if t.kind == "ident":
            self.i += 1
            return Name(t.text)
        if t.kind == "int":
            self.i += 1
            return IntLit(int(t.text))
        if self.accept("TRUE"):
            return BoolLit(True)
        if self.accept("FALSE"):
            return BoolLit(False)
        if t.kind == "kw" and t.text in ("dom", "ran", "POW"):
            self.i += 1
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return UnExpr(t.text, arg)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.accept("{"):
            if self.accept("}"):
                return SetEnum(())
            comp = self.attempt(self.comprehension)
            if comp is not None:
                return comp
            items = [self.expr()]
            while self.accept(","):
                items.append(self.expr())
            self.expect("}")
            return SetEnum(tuple(items))
        self.fail(f"expected an expression, found {t.text or 'end of input'!r}")

    def comprehension(self):
        pattern = self.comp_pattern()
        while self.at(",", "|->"):
            self.i += 1
            pattern = BinExpr("|->", pattern, self.comp_pattern())
        self.expect("|")
        p = self.pred()
        self.expect("}")
        return SetComp(pattern, p)

    def comp_pattern(self):
        if self.accept("("):
            inner = self.comp_pattern()
            while self.accept("|->"):
                inner = BinExpr("|->", inner, self.comp_pattern())
            self.expect(")")
            return inner
        return Name(self.ident())

    # -- components -----------------------------------------------------------
    def labeled_preds(self, seen: dict, kind: str) -> list:
        out = []
        while self.tok.kind == "label":
            ltok = self.tok
            lbl, pos = self.label()
            p = self.pred()
            if lbl in seen:
                self.error("E_DUP_LABEL", f"duplicate {kind} label @{lbl}", ltok, lbl)
            seen[lbl] = True
            out.append(Labeled(lbl, p, pos))
        return out

    def action(self, seen: dict) -> Action:
        ltok = self.tok
        lbl, pos = self.label()
        var = self.ident()
        index = None
        if self.accept("("):
            index = self.expr()
            self.expect(")")
        self.expect(":=")
        e = self.expr()
        if lbl in seen:
            self.error("E_DUP_LABEL", f"duplicate action label @{lbl}", ltok, lbl)
        seen[lbl] = True
        return Action(lbl, var, e, index, pos)

    def event(self) -> Event:
        start = self.expect("event")
        name = self.ident()
        kind, parent = "plain", None
        if self.at("extends", "refines"):
            kind = self.tok.text
            self.i += 1
            parent = self.ident()
        params: list = []
        if self.accept("any"):
            while self.tok.kind == "ident":
                params.append(self.ident())
        seen: dict = {}
        guards: list = []
        if self.accept("where", "when"):
            guards = self.labeled_preds(seen, "guard")
        actions = []
        if self.accept("then", "begin"):
            while self.tok.kind == "label":
                actions.append(self.action(seen))
        self.expect("end")
        return Event(name, kind, parent, tuple(params), tuple(guards), tuple(actions), (start.line, start.col))

    def machine(self) -> Machine:
        self.expect("machine")
        name = self.ident()
        refines = None
        if self.accept("refines"):
            refines = self.ident()
        sees = []
        if self.accept("sees"):
            sees.append(self.ident())
            while self.tok.kind == "ident":
                sees.append(self.ident())
        variables = []
        if self.accept("variables"):
            while self.tok.kind == "ident":
                t = self.tok
                v = self.ident()
                if v in variables:
                    self.error("E_DUP_VARIABLE", f"duplicate variable {v}", t)
                variables.append(v)
        invariants = []
        if self.accept("invariants"):
            invariants = self.labeled_preds({}, "invariant")
        events = []
        names: set = set()
        if self.accept("events"):
            while self.at("event"):
                t = self.tok
                ev = self.event()
                if ev.name in names:
                    self.error("E_DUP_EVENT", f"duplicate event {ev.name}", t)
                names.add(ev.name)
                events.append(ev)
        self.expect("end")
        return Machine(name, refines, tuple(sees), tuple(variables), tuple(invariants), tuple(events))

    def context(self) -> Context:
        self.expect("context")
        name = self.ident()
        extends = None
        if self.accept("extends"):
            extends = self.ident()
        sets = []
        if self.accept("sets"):
            while self.tok.kind == "ident":
                s = self.ident()
                elems = None
                if self.accept("="):
                    self.expect("{")
                    elems = [self.ident()]
                    while self.accept(","):
                        elems.append(self.ident())
                    self.expect("}")
                    elems = tuple(elems)
                sets.append(SetDecl(s, elems))
        constants: list = []
        if self.accept("constants"):
            while self.tok.kind == "ident":
                t = self.tok
                c = self.ident()
                if c in constants:
                    self.error("E_DUP_CONSTANT", f"duplicate constant {c}", t)
                constants.append(c)
        axioms = []
        if self.accept("axioms"):
            axioms = self.labeled_preds({}, "axiom")
        self.expect("end")
        return Context(name, extends, tuple(sets), tuple(constants), tuple(axioms))


def _later(a: Token, b: Token) -> bool:
    return (a.line, a.col) > (b.line, b.col)


def parse_machine(text: str, source: Optional[str] = None) -> Machine:
    p = Parser(text, source)
    return p.run(p.machine)


def parse_context(text: str, source: Optional[str] = None) -> Context:
    p = Parser(text, source)
    return p.run(p.context)


def parse_component(text: str, source: Optional[str] = None):
    p = Parser(text, source)
    if p.at("machine"):
        return p.run(p.machine)
    return p.run(p.context)


def parse_expression(text: str):
    p = Parser(text)
    return p.run(p.expr)


def parse_predicate(text: str):
    p = Parser(text)
    return p.run(p.pred)


# -- VO files -------------------------------------------------------------------

_TASK_LINE = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*/\s*([A-Za-z_]\w*)\s*/\s*([A-Za-z_]\w*)\s*(?::\s*(.*?))?\s*$")
_VO_LINE = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*(?:\[([^\]]*)\])?\s*:\s*(.*?)\s*$")
_VO_TOKEN = re.compile(r"\s*(?:([A-Za-z_][\w.]*)|([()&;,]))")


def parse_vo_formula(text: str, line: int = 1, col0: int = 1, source: Optional[str] = None):
    """``seq := conj (';' conj)*``, ``conj := atom ('&' atom)*``."""
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _VO_TOKEN.match(text, pos)
        if m is None:
            raise ParseError([Diagnostic("error", "E_SYNTAX", f"unexpected character {text[pos:].lstrip()[:1]!r} in VO formula", line, col0 + pos, None, source)])
        toks.append((m.group(1) or m.group(2), bool(m.group(1)), col0 + m.start(m.lastindex)))
        pos = m.end()
    toks.append(("", False, col0 + len(text)))
    i = 0

    def err(code, msg, c):
        raise ParseError([Diagnostic("error", code, msg, line, c, None, source)])

    def peek():
        return toks[i]

    def seq():
        nonlocal i
        left = conj()
        while peek()[0] == ";" and not peek()[1]:
            i += 1
            if peek()[0] in ("", ";", "&", ")"):
                err("E_DANGLING_OPERATOR", "';' without right operand", toks[i - 1][2])
            left = Seq(left, conj())
        return left

    def conj():
        nonlocal i
        left = atom()
        while peek()[0] == "&" and not peek()[1]:
            i += 1
            if peek()[0] in ("", ";", "&", ")"):
                err("E_DANGLING_OPERATOR", "'&' without right operand", toks[i - 1][2])
            left = Conj(left, atom())
        return left

    def atom():
        nonlocal i
        t, is_id, c = peek()
        if t == "(" and not is_id:
            i += 1
            f = seq()
            if peek()[0] != ")":
                err("E_SYNTAX", "expected ')'", peek()[2])
            i += 1
            return f
        if is_id:
            i += 1
            opts: list = []
            if peek()[0] == "(" and not peek()[1]:
                i += 1
                while True:
                    o, oid, oc = peek()
                    if not oid:
                        err("E_SYNTAX", "expected task option", oc)
                    opts.append(o)
                    i += 1
                    if peek()[0] == ",":
                        i += 1
                        continue
                    if peek()[0] != ")":
                        err("E_SYNTAX", "expected ')' after options", peek()[2])
                    i += 1
                    break
            return TaskRef(t, tuple(opts))
        if t in (";", "&"):
            err("E_DANGLING_OPERATOR", f"{t!r} without left operand", c)
        err("E_SYNTAX", f"expected task reference, found {t or 'end of line'!r}", c)

    f = seq()
    if peek()[0] != "":
        t, _, c = peek()
        err("E_DANGLING_OPERATOR" if t in (";", "&") else "E_SYNTAX", f"unexpected {t!r}", c)
    return f


def parse_vo_file(text: str, source: Optional[str] = None, known_tasks: Optional[dict] = None) -> VOFile:
    """Parse VO declarations (``VO3 [REQ3]: MC(FIN);(SPRJ1 & SPRJ2)``) and
    task declarations (``SPRJ1/train_routes/SPRJ: rs(R1)``)."""
    diags: list = []
    vos: list = []
    tasks: dict = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s or s.startswith("#") or s.startswith("//"):
            continue
        m = _TASK_LINE.match(raw)
        if m:
            tid, machine, ttype, param = m.group(1), m.group(2), m.group(3), m.group(4) or ""
            if ttype not in TASK_TYPES:
                diags.append(Diagnostic("error", "E_UNKNOWN_TASK_TYPE", f"unknown task type {ttype!r}", ln, m.start(3) + 1, tid, source))
                continue
            if tid in tasks:
                diags.append(Diagnostic("error", "E_DUP_TASK", f"duplicate task {tid}", ln, m.start(1) + 1, tid, source))
                continue
            tasks[tid] = TaskDecl(tid, machine, ttype, param, (ln, m.start(1) + 1))
            continue
        m = _VO_LINE.match(raw)
        if not m:
            diags.append(Diagnostic("error", "E_SYNTAX", "neither a VO nor a task declaration", ln, 1, None, source))
            continue
        try:
            formula = parse_vo_formula(m.group(3), ln, m.start(3) + 1, source)
        except ParseError as e:
            diags.extend(e.diagnostics)
            continue
        vos.append(VODecl(m.group(1), formula, (m.group(2) or "").strip(), (ln, m.start(1) + 1)))
    if any(v.name in {w.name for w in vos[:k]} for k, v in enumerate(vos)):
        for k, v in enumerate(vos):
            if v.name in {w.name for w in vos[:k]}:
                diags.append(Diagnostic("error", "E_DUP_VO", f"duplicate VO {v.name}", v.pos[0], v.pos[1], v.name, source))
    declared = dict(known_tasks or {})
    declared.update(tasks)
    for vo in vos:
        for ref in task_refs(vo.formula):
            decl = declared.get(ref.id)
            if decl is None:
                diags.append(Diagnostic("error", "E_UNDECLARED_TASK", f"VO {vo.name} references undeclared task {ref.id}", vo.pos[0], vo.pos[1], vo.name, source))
                continue
            for o in ref.options:
                if decl.type != "MC" or o not in MC_OPTIONS:
                    diags.append(Diagnostic("error", "E_UNKNOWN_OPTION", f"option {o} not valid for {decl.type} task {ref.id}", vo.pos[0], vo.pos[1], vo.name, source))
    if diags:
        raise ParseError(diags)
    return VOFile(tuple(vos), tuple(tasks.values()))


def format_vo_formula(f, parent: str = "") -> str:
    if isinstance(f, TaskRef):
        return f.id + (f"({', '.join(f.options)})" if f.options else "")
    if isinstance(f, Conj):
        s = f"{format_vo_formula(f.left, '&')} & {format_vo_formula(f.right, '&r')}"
        return f"({s})" if parent in ("&r",) else s
    s = f"{format_vo_formula(f.left, ';')} ; {format_vo_formula(f.right, ';r')}"
    return f"({s})" if parent in ("&", "&r", ";r") else s


def format_vo_file(vf: VOFile) -> str:
    lines = []
    for vo in vf.vos:
        req = f" [{vo.requirement}]" if vo.requirement else ""
        lines.append(f"{vo.name}{req}: {format_vo_formula(vo.formula)}")
    for t in vf.tasks:
        lines.append(f"{t.id}/{t.machine}/{t.type}" + (f": {t.param}" if t.param else ""))
    return "\n".join(lines) + "\n"

