"""Abstract syntax for machines, contexts and their formulas."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .values import FALSE, TRUE, Value


# -- expressions --------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Name:
    id: str


@dataclass(frozen=True, slots=True)
class IntLit:
    value: int


@dataclass(frozen=True, slots=True)
class BoolLit:
    value: bool


@dataclass(frozen=True, slots=True)
class SetEnum:
    items: tuple


@dataclass(frozen=True, slots=True)
class SetComp:
    """``{pattern | pred}``; pattern is a name or a maplet tree of names."""
    pattern: "Expr"
    pred: "Pred"


@dataclass(frozen=True, slots=True)
class BinExpr:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True, slots=True)
class UnExpr:
    op: str  # '~', 'dom', 'ran', 'POW'
    arg: "Expr"


@dataclass(frozen=True, slots=True)
class Apply:
    fn: "Expr"
    arg: "Expr"


@dataclass(frozen=True, slots=True)
class Image:
    rel: "Expr"
    arg: "Expr"


Expr = Union[Name, IntLit, BoolLit, SetEnum, SetComp, BinExpr, UnExpr, Apply, Image]

SET_OPS = ("\\/", "/\\", "\\", "<|", "|>", "<<|", "|>>", "<+")
ARROWS = ("<->", "-->", "+->", ">+>", ">->")
BIN_OPS = SET_OPS + ARROWS + ("**", "|->")


# -- predicates ---------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Compare:
    op: str  # ':', '/:', '<:', '/<:', '<<:', '=', '/=', '<', '<=', '>', '>='
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Logic:
    op: str  # '&' or 'or'
    args: tuple


@dataclass(frozen=True, slots=True)
class Imp:
    left: "Pred"
    right: "Pred"


@dataclass(frozen=True, slots=True)
class Equiv:
    left: "Pred"
    right: "Pred"


@dataclass(frozen=True, slots=True)
class Not:
    arg: "Pred"


@dataclass(frozen=True, slots=True)
class Quant:
    kind: str  # '!' or '#'
    names: tuple
    body: "Pred"


@dataclass(frozen=True, slots=True)
class Partition:
    set: Expr
    parts: tuple


@dataclass(frozen=True, slots=True)
class PredConst:
    value: bool


Pred = Union[Compare, Logic, Imp, Equiv, Not, Quant, Partition, PredConst]
Formula = Union[Expr, Pred]

COMPARE_OPS = (":", "/:", "<:", "/<:", "<<:", "=", "/=", "<", "<=", ">", ">=")


def conjuncts(p: Pred) -> tuple:
    if isinstance(p, Logic) and p.op == "&":
        out: list = []
        for a in p.args:
            out.extend(conjuncts(a))
        return tuple(out)
    return (p,)


def pattern_names(pattern: Expr) -> tuple:
    if isinstance(pattern, Name):
        return (pattern.id,)
    if isinstance(pattern, BinExpr) and pattern.op == "|->":
        return pattern_names(pattern.left) + pattern_names(pattern.right)
    raise ValueError("comprehension pattern must be a name or a maplet of names")


def free_names(f: Formula) -> frozenset:
    """Identifiers occurring free in an expression or predicate."""
    if isinstance(f, Name):
        return frozenset((f.id,))
    if isinstance(f, (IntLit, BoolLit, PredConst)):
        return frozenset()
    if isinstance(f, SetEnum):
        return frozenset().union(*(free_names(x) for x in f.items))
    if isinstance(f, SetComp):
        return (free_names(f.pattern) | free_names(f.pred)) - set(pattern_names(f.pattern))
    if isinstance(f, (BinExpr, Compare, Imp, Equiv)):
        return free_names(f.left) | free_names(f.right)
    if isinstance(f, UnExpr):
        return free_names(f.arg)
    if isinstance(f, Not):
        return free_names(f.arg)
    if isinstance(f, Apply):
        return free_names(f.fn) | free_names(f.arg)
    if isinstance(f, Image):
        return free_names(f.rel) | free_names(f.arg)
    if isinstance(f, Logic):
        return frozenset().union(*(free_names(x) for x in f.args))
    if isinstance(f, Quant):
        return free_names(f.body) - set(f.names)
    if isinstance(f, Partition):
        return free_names(f.set).union(*(free_names(x) for x in f.parts))
    raise TypeError(f"not a formula: {f!r}")


def literal_value(e: Expr) -> Value:
    """Convert a literal expression (as produced by rendering) to a value."""
    if isinstance(e, Name):
        return e.id
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, BoolLit):
        return TRUE if e.value else FALSE
    if isinstance(e, BinExpr) and e.op == "|->":
        return (literal_value(e.left), literal_value(e.right))
    if isinstance(e, SetEnum):
        return frozenset(literal_value(x) for x in e.items)
    raise ValueError(f"not a literal value: {e!r}")


def value_expr(v: Value) -> Expr:
    """Literal expression denoting a value (atoms become names)."""
    if isinstance(v, str):
        return Name(v)
    if isinstance(v, tuple):
        return BinExpr("|->", value_expr(v[0]), value_expr(v[1]))
    if isinstance(v, frozenset):
        from .values import canonical_sorted

        return SetEnum(tuple(value_expr(x) for x in canonical_sorted(v)))
    if isinstance(v, int) and not isinstance(v, bool):
        return IntLit(v)
    return BoolLit(v.value)


# -- components ---------------------------------------------------------------

Pos = Optional[tuple]


@dataclass(frozen=True)
class Labeled:
    label: str
    pred: Pred
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Action:
    """``var := expr`` or, with an index, ``var(index) := expr``."""
    label: str
    var: str
    expr: Expr
    index: Optional[Expr] = None
    pos: Pos = field(default=None, compare=False, repr=False)

    def effective_expr(self) -> Expr:
        if self.index is None:
            return self.expr
        update = SetEnum((BinExpr("|->", self.index, self.expr),))
        return BinExpr("<+", Name(self.var), update)


@dataclass(frozen=True)
class Event:
    name: str
    kind: str = "plain"  # 'plain' | 'extends' | 'refines'
    parent: Optional[str] = None
    params: tuple = ()
    guards: tuple = ()
    actions: tuple = ()
    pos: Pos = field(default=None, compare=False, repr=False)

    @property
    def is_init(self) -> bool:
        return self.name == INIT


INIT = "INITIALISATION"


@dataclass(frozen=True)
class Machine:
    name: str
    refines: Optional[str] = None
    sees: tuple = ()
    variables: tuple = ()
    invariants: tuple = ()
    events: tuple = ()

    def event(self, name: str) -> Event:
        for ev in self.events:
            if ev.name == name:
                return ev
        raise KeyError(name)

    def has_event(self, name: str) -> bool:
        return any(ev.name == name for ev in self.events)

    @property
    def initialisation(self) -> Event:
        return self.event(INIT)

    def with_(self, **changes) -> "Machine":
        return replace(self, **changes)


@dataclass(frozen=True)
class SetDecl:
    name: str
    elements: Optional[tuple] = None  # enumerated set when given


@dataclass(frozen=True)
class Context:
    name: str
    extends: Optional[str] = None
    sets: tuple = ()
    constants: tuple = ()
    axioms: tuple = ()

    def with_(self, **changes) -> "Context":
        return replace(self, **changes)


# -- validation obligations ---------------------------------------------------

TASK_TYPES = ("TR", "MC", "SPRJ")
MC_OPTIONS = ("FIN", "INV", "DLF")


@dataclass(frozen=True)
class TaskRef:
    id: str
    options: tuple = ()


@dataclass(frozen=True)
class Conj:
    left: "VOFormula"
    right: "VOFormula"


@dataclass(frozen=True)
class Seq:
    left: "VOFormula"
    right: "VOFormula"


VOFormula = Union[TaskRef, Conj, Seq]


def task_refs(f: VOFormula) -> list:
    if isinstance(f, TaskRef):
        return [f]
    return task_refs(f.left) + task_refs(f.right)


@dataclass(frozen=True)
class TaskDecl:
    id: str
    machine: str
    type: str
    param: str = ""
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class VODecl:
    name: str
    formula: VOFormula
    requirement: str = ""
    pos: Pos = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class VOFile:
    vos: tuple = ()
    tasks: tuple = ()


def _fresh(base: str, avoid: set) -> str:
    k = 1
    while f"{base}_{k}" in avoid:
        k += 1
    return f"{base}_{k}"


def _rebind(names: tuple, bodies: tuple, mapping: dict):
    """Drop shadowed entries and rename binders that would capture a free
    name of a replacement.  Returns (names, bodies, mapping)."""
    inner = {k: v for k, v in mapping.items() if k not in names}
    incoming = frozenset().union(*(free_names(v) for v in inner.values())) if inner else frozenset()
    clash = [n for n in names if n in incoming]
    if clash:
        avoid = set(incoming) | set(names)
        for b in bodies:
            avoid |= free_names(b)
        renaming = {}
        for n in clash:
            new = _fresh(n, avoid)
            avoid.add(new)
            renaming[n] = Name(new)
        bodies = tuple(substitute(b, renaming) for b in bodies)
        names = tuple(renaming[n].id if n in renaming else n for n in names)
    return names, bodies, inner


def substitute(f: Formula, mapping: dict) -> Formula:
    """Replace free names by expressions without capturing any variable."""
    if not mapping:
        return f
    if isinstance(f, Name):
        return mapping.get(f.id, f)
    if isinstance(f, (IntLit, BoolLit, PredConst)):
        return f
    if isinstance(f, SetEnum):
        return SetEnum(tuple(substitute(x, mapping) for x in f.items))
    if isinstance(f, BinExpr):
        return BinExpr(f.op, substitute(f.left, mapping), substitute(f.right, mapping))
    if isinstance(f, Compare):
        return Compare(f.op, substitute(f.left, mapping), substitute(f.right, mapping))
    if isinstance(f, Imp):
        return Imp(substitute(f.left, mapping), substitute(f.right, mapping))
    if isinstance(f, Equiv):
        return Equiv(substitute(f.left, mapping), substitute(f.right, mapping))
    if isinstance(f, UnExpr):
        return UnExpr(f.op, substitute(f.arg, mapping))
    if isinstance(f, Not):
        return Not(substitute(f.arg, mapping))
    if isinstance(f, Apply):
        return Apply(substitute(f.fn, mapping), substitute(f.arg, mapping))
    if isinstance(f, Image):
        return Image(substitute(f.rel, mapping), substitute(f.arg, mapping))
    if isinstance(f, Logic):
        return Logic(f.op, tuple(substitute(a, mapping) for a in f.args))
    if isinstance(f, Partition):
        return Partition(substitute(f.set, mapping), tuple(substitute(x, mapping) for x in f.parts))
    if isinstance(f, Quant):
        names, (body,), inner = _rebind(f.names, (f.body,), mapping)
        return Quant(f.kind, names, substitute(body, inner))
    if isinstance(f, SetComp):
        names, (pattern, pred), inner = _rebind(pattern_names(f.pattern), (f.pattern, f.pred), mapping)
        return SetComp(pattern, substitute(pred, inner))
    raise TypeError(f"not a formula: {f!r}")
