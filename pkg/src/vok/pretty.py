"""Pretty-printing of formulas and components (ASCII, optionally Unicode).

The ASCII output re-parses to a structurally equal AST.
"""

from __future__ import annotations

from .ast import (
    ARROWS, Action, Apply, BinExpr, BoolLit, Compare, Context, Equiv, Event,
    Image, Imp, IntLit, Logic, Machine, Name, Not, Partition, PredConst, Quant,
    SetComp, SetEnum, UnExpr,
)

UNICODE = {
    ":": "∈", "/:": "∉", "<:": "⊆", "/<:": "⊈", "<<:": "⊂", "/=": "≠",
    "<=": "≤", ">=": "≥", "&": "∧", "or": "∨", "not": "¬", "=>": "⇒",
    "<=>": "⇔", "!": "∀", "#": "∃", "\\/": "∪", "/\\": "∩", "\\": "∖",
    "**": "×", "|->": "↦", "<|": "◁", "|>": "▷", "<<|": "⩤", "|>>": "⩥",
    "<->": "↔", "-->": "→", "+->": "⇸", ">+>": "⤔", ">->": "↣",
    "POW": "ℙ", ":=": "≔",
}

# expression binding strength; higher binds tighter
_ARROW, _SET, _PROD, _POSTFIX, _ATOM = 1, 2, 3, 5, 6


def _elevel(e) -> int:
    if isinstance(e, BinExpr):
        if e.op in ARROWS:
            return _ARROW
        if e.op == "**":
            return _PROD
        return _SET
    if isinstance(e, IntLit) and e.value < 0:
        return 4
    if isinstance(e, (Apply, Image)) or (isinstance(e, UnExpr) and e.op == "~"):
        return _POSTFIX
    return _ATOM


class Printer:
    def __init__(self, unicode: bool = False):
        self.unicode = unicode

    def op(self, o: str) -> str:
        return UNICODE.get(o, o) if self.unicode else o

    def expr(self, e) -> str:
        if isinstance(e, Name):
            return e.id
        if isinstance(e, IntLit):
            return str(e.value)
        if isinstance(e, BoolLit):
            return "TRUE" if e.value else "FALSE"
        if isinstance(e, SetEnum):
            if not e.items and self.unicode:
                return "∅"
            return "{" + ", ".join(self.expr(x) for x in e.items) + "}"
        if isinstance(e, SetComp):
            return "{" + self.expr(e.pattern) + " | " + self.pred(e.pred) + "}"
        if isinstance(e, BinExpr):
            lvl = _elevel(e)
            left = self.expr(e.left)
            if _elevel(e.left) < lvl:
                left = f"({left})"
            right = self.expr(e.right)
            if _elevel(e.right) <= lvl:
                right = f"({right})"
            return f"{left} {self.op(e.op)} {right}"
        if isinstance(e, UnExpr):
            if e.op == "~":
                return self._postfix_base(e.arg) + "~"
            return f"{self.op(e.op)}({self.expr(e.arg)})"
        if isinstance(e, Apply):
            return f"{self._postfix_base(e.fn)}({self.expr(e.arg)})"
        if isinstance(e, Image):
            return f"{self._postfix_base(e.rel)}[{self.expr(e.arg)}]"
        raise TypeError(f"not an expression: {e!r}")

    def _postfix_base(self, e) -> str:
        s = self.expr(e)
        return s if _elevel(e) >= _POSTFIX else f"({s})"

    # predicate levels: equiv 1, imp 2, or 3, and 4, not 5, atomic 6, quant 0
    def _plevel(self, p) -> int:
        if isinstance(p, Equiv):
            return 1
        if isinstance(p, Imp):
            return 2
        if isinstance(p, Logic):
            return 3 if p.op == "or" else 4
        if isinstance(p, Not):
            return 5
        if isinstance(p, Quant):
            return 0
        return 6

    def _child(self, p, parent_level: int, strict: bool = True) -> str:
        s = self.pred(p)
        lvl = self._plevel(p)
        if lvl < parent_level or (strict and lvl == parent_level):
            return f"({s})"
        return s

    def pred(self, p) -> str:
        if isinstance(p, Compare):
            return f"{self.expr(p.left)} {self.op(p.op)} {self.expr(p.right)}"
        if isinstance(p, Logic):
            sep = f" {self.op(p.op)} "
            return sep.join(self._child(a, self._plevel(p)) for a in p.args)
        if isinstance(p, Imp):
            return f"{self._child(p.left, 2)} {self.op('=>')} {self._child(p.right, 2)}"
        if isinstance(p, Equiv):
            return f"{self._child(p.left, 1)} {self.op('<=>')} {self._child(p.right, 1)}"
        if isinstance(p, Not):
            return f"{self.op('not')} " + self._child(p.arg, 5, strict=False)
        if isinstance(p, Quant):
            dot = "·" if self.unicode else "."
            return f"{self.op(p.kind)}{','.join(p.names)}{dot}({self.pred(p.body)})"
        if isinstance(p, Partition):
            return "partition(" + ", ".join(self.expr(x) for x in (p.set,) + p.parts) + ")"
        if isinstance(p, PredConst):
            return ("⊤" if p.value else "⊥") if self.unicode else ("btrue" if p.value else "bfalse")
        raise TypeError(f"not a predicate: {p!r}")

    def action(self, a: Action) -> str:
        target = a.var if a.index is None else f"{a.var}({self.expr(a.index)})"
        return f"@{a.label} {target} {self.op(':=')} {self.expr(a.expr)}"

    def event(self, ev: Event, indent: str = "  ") -> str:
        head = f"{indent}event {ev.name}"
        if ev.kind != "plain":
            head += f" {ev.kind} {ev.parent}"
        lines = [head]
        if ev.params:
            lines.append(f"{indent}  any " + " ".join(ev.params))
        if ev.guards:
            lines.append(f"{indent}  where")
            lines += [f"{indent}    @{g.label} {self.pred(g.pred)}" for g in ev.guards]
        if ev.actions:
            lines.append(f"{indent}  then")
            lines += [f"{indent}    {self.action(a)}" for a in ev.actions]
        lines.append(f"{indent}end")
        return "\n".join(lines)

    def machine(self, m: Machine) -> str:
        head = f"machine {m.name}"
        if m.refines:
            head += f" refines {m.refines}"
        if m.sees:
            head += " sees " + " ".join(m.sees)
        lines = [head]
        if m.variables:
            lines.append("variables " + " ".join(m.variables))
        if m.invariants:
            lines.append("invariants")
            lines += [f"  @{i.label} {self.pred(i.pred)}" for i in m.invariants]
        if m.events:
            lines.append("events")
            lines += [self.event(ev) for ev in m.events]
        lines.append("end")
        return "\n".join(lines) + "\n"

    def context(self, c: Context) -> str:
        head = f"context {c.name}"
        if c.extends:
            head += f" extends {c.extends}"
        lines = [head]
        if c.sets:
            parts = []
            for s in c.sets:
                parts.append(s.name if s.elements is None else f"{s.name} = {{{', '.join(s.elements)}}}")
            lines.append("sets " + " ".join(parts))
        if c.constants:
            lines.append("constants " + " ".join(c.constants))
        if c.axioms:
            lines.append("axioms")
            lines += [f"  @{a.label} {self.pred(a.pred)}" for a in c.axioms]
        lines.append("end")
        return "\n".join(lines) + "\n"


_ascii = Printer()


def format_expr(e, unicode: bool = False) -> str:
    return Printer(unicode).expr(e) if unicode else _ascii.expr(e)


def format_pred(p, unicode: bool = False) -> str:
    return Printer(unicode).pred(p) if unicode else _ascii.pred(p)


def format_formula(f, unicode: bool = False) -> str:
    try:
        return format_expr(f, unicode)
    except TypeError:
        return format_pred(f, unicode)


def format_machine(m: Machine, unicode: bool = False) -> str:
    return Printer(unicode).machine(m)


def format_context(c: Context, unicode: bool = False) -> str:
    return Printer(unicode).context(c)


def format_component(c, unicode: bool = False) -> str:
    return format_machine(c, unicode) if isinstance(c, Machine) else format_context(c, unicode)
