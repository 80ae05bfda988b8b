"""Set-theoretic evaluation over finite universes.

Formulas are compiled once into closures over an environment ``dict``
(name -> value); deferred sets live in the same dict as their extents.
Quantified names get their domains from the first conjunct of the form
``x : E``, ``x <: E`` or ``x = E`` (a disjunction of such memberships also
works); everything else becomes a filter checked as soon as its names are
bound.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Optional

from .ast import (
    ARROWS, Apply, BinExpr, BoolLit, Compare, Context, Equiv, Image, Imp,
    IntLit, Logic, Name, Not, Partition, PredConst, Quant, SetComp, SetEnum,
    UnExpr, conjuncts, free_names, pattern_names,
)
from .errors import Diagnostic, DiagnosticsError, EvalError
from .values import FALSE, TRUE, Bool, render, sort_key

ENUM_LIMIT = 10**6
POW_LIMIT = 16

Env = dict


@dataclass
class Universe:
    """Extents of the carrier sets (set name -> atoms in canonical order)."""
    sets: dict = field(default_factory=dict)

    def as_env(self) -> dict:
        return {name: frozenset(elems) for name, elems in self.sets.items()}


# -- value operations ---------------------------------------------------------

def _type_error(what: str, v) -> EvalError:
    return EvalError("E_TYPE", f"{what} expected, got {render(v) if _renderable(v) else repr(v)}")


def _renderable(v) -> bool:
    try:
        render(v)
        return True
    except TypeError:
        return False


def _set(v):
    if type(v) is not frozenset:
        raise _type_error("set", v)
    return v


def _rel(v):
    if type(v) is not frozenset:
        raise _type_error("relation", v)
    for p in v:
        if type(p) is not tuple:
            raise _type_error("relation", v)
    return v


_AMBIGUOUS = object()


@lru_cache(maxsize=2048)
def _fn_table(f: frozenset) -> dict:
    table: dict = {}
    for p in f:
        if type(p) is tuple:
            table[p[0]] = _AMBIGUOUS if p[0] in table else p[1]
    return table


def apply_fn(f, x):
    if type(f) is not frozenset:
        raise _type_error("function", f)
    res = _fn_table(f).get(x) if len(f) > 4 else None
    if res is None:
        hits = [p[1] for p in f if type(p) is tuple and p[0] == x]
        if len(hits) == 1:
            return hits[0]
        if not hits:
            raise EvalError("E_APPLY_UNDEFINED", f"{render(x)} not in domain of function")
        raise EvalError("E_APPLY_AMBIGUOUS", f"relation is not functional at {render(x)}")
    if res is _AMBIGUOUS:
        raise EvalError("E_APPLY_AMBIGUOUS", f"relation is not functional at {render(x)}")
    return res


def image(r, s):
    _set(s)
    return frozenset(p[1] for p in _rel(r) if p[0] in s)


def inverse(r):
    return frozenset((p[1], p[0]) for p in _rel(r))


def dom(r):
    return frozenset(p[0] for p in _rel(r))


def ran(r):
    return frozenset(p[1] for p in _rel(r))


def product(a, b):
    _set(a), _set(b)
    if len(a) * len(b) > ENUM_LIMIT:
        raise EvalError("E_ENUM_LIMIT", f"cartesian product of {len(a)}x{len(b)} elements exceeds {ENUM_LIMIT}")
    return frozenset((x, y) for x in a for y in b)


def override(r, s):
    ds = dom(s)
    return frozenset(p for p in _rel(r) if p[0] not in ds) | s


def powerset(s) -> Iterator[frozenset]:
    _set(s)
    if len(s) > POW_LIMIT:
        raise EvalError("E_POW_LIMIT", f"powerset base of {len(s)} elements exceeds {POW_LIMIT}")
    elems = canonical_tuple(s)
    for k in range(len(elems) + 1):
        for c in itertools.combinations(elems, k):
            yield frozenset(c)


@lru_cache(maxsize=4096)
def canonical_tuple(s: frozenset) -> tuple:
    return tuple(sorted(s, key=sort_key))


def is_function(r) -> bool:
    seen = set()
    for p in r:
        if p[0] in seen:
            return False
        seen.add(p[0])
    return True


def is_injective(r) -> bool:
    return len({p[1] for p in r}) == len(r)


_BINOPS: dict = {
    "\\/": lambda a, b: _set(a) | _set(b),
    "/\\": lambda a, b: _set(a) & _set(b),
    "\\": lambda a, b: _set(a) - _set(b),
    "**": product,
    "|->": lambda a, b: (a, b),
    "<|": lambda s, r: frozenset(p for p in _rel(r) if p[0] in _set(s)),
    "|>": lambda r, s: frozenset(p for p in _rel(r) if p[1] in _set(s)),
    "<<|": lambda s, r: frozenset(p for p in _rel(r) if p[0] not in _set(s)),
    "|>>": lambda r, s: frozenset(p for p in _rel(r) if p[1] not in _set(s)),
    "<+": override,
}


def _arrow_ok(op: str, r, a) -> bool:
    """Structural property check for ``r`` as an element of ``A op B``
    (pairwise membership is checked separately)."""
    if op == "<->":
        return True
    if not is_function(r):
        return False
    if op in ("-->", ">->") and dom(r) != a:
        return False
    if op in (">+>", ">->") and not is_injective(r):
        return False
    return True


def arrow_space(op: str, a, b) -> Iterator[frozenset]:
    """Enumerate ``A op B`` (bounded)."""
    a, b = canonical_tuple(_set(a)), canonical_tuple(_set(b))
    if op == "<->":
        yield from powerset(frozenset((x, y) for x in a for y in b))
        return
    total = op in ("-->", ">->")
    choices = [tuple((x, y) for y in b) + (() if total else (None,)) for x in a]
    count = 1
    for c in choices:
        count *= len(c)
    if count > ENUM_LIMIT:
        raise EvalError("E_ENUM_LIMIT", f"function space {op} has {count} candidates (limit {ENUM_LIMIT})")
    for combo in itertools.product(*choices):
        f = frozenset(p for p in combo if p is not None)
        if op in (">+>", ">->") and not is_injective(f):
            continue
        yield f


# -- compilation --------------------------------------------------------------

_compiled: dict = {}


def _cached(node, builder):
    key = (id(node), builder)
    hit = _compiled.get(key)
    if hit is not None and hit[0] is node:
        return hit[1]
    if len(_compiled) > 200_000:
        _compiled.clear()
    fn = builder(node)
    _compiled[key] = (node, fn)
    return fn


def compile_expr(e) -> Callable:
    return _cached(e, _build_expr)


def compile_pred(p) -> Callable:
    return _cached(p, _build_pred)


def _build_expr(e) -> Callable:
    if isinstance(e, Name):
        name = e.id

        def lookup(env):
            try:
                return env[name]
            except KeyError:
                raise EvalError("E_UNBOUND_NAME", f"unbound identifier {name}") from None
        return lookup
    if isinstance(e, IntLit):
        v = e.value
        return lambda env: v
    if isinstance(e, BoolLit):
        v = TRUE if e.value else FALSE
        return lambda env: v
    if isinstance(e, SetEnum):
        items = [compile_expr(x) for x in e.items]
        if not items:
            empty = frozenset()
            return lambda env: empty
        if len(items) == 1:
            only = items[0]
            return lambda env: frozenset((only(env),))
        return lambda env: frozenset([f(env) for f in items])
    if isinstance(e, SetComp):
        return _build_comprehension(e)
    if isinstance(e, BinExpr):
        left, right = compile_expr(e.left), compile_expr(e.right)
        if e.op in ARROWS:
            op = e.op

            def space(env):
                out = frozenset(arrow_space(op, left(env), right(env)))
                return out
            return space
        if e.op == "<+" and isinstance(e.right, SetEnum) and len(e.right.items) == 1 \
                and isinstance(e.right.items[0], BinExpr) and e.right.items[0].op == "|->":
            # point update f <+ {k |-> v}, the shape of indexed assignments
            key, val = compile_expr(e.right.items[0].left), compile_expr(e.right.items[0].right)

            def point_update(env):
                r, k = _rel(left(env)), key(env)
                return frozenset([p for p in r if p[0] != k] + [(k, val(env))])
            return point_update
        fn = _BINOPS[e.op]
        return lambda env: fn(left(env), right(env))
    if isinstance(e, UnExpr):
        arg = compile_expr(e.arg)
        if e.op == "~":
            return lambda env: inverse(arg(env))
        if e.op == "dom":
            return lambda env: dom(arg(env))
        if e.op == "ran":
            return lambda env: ran(arg(env))
        if e.op == "POW":
            return lambda env: frozenset(powerset(arg(env)))
        raise ValueError(e.op)
    if isinstance(e, Apply):
        fn, arg = compile_expr(e.fn), compile_expr(e.arg)
        return lambda env: apply_fn(fn(env), arg(env))
    if isinstance(e, Image):
        rel, arg = compile_expr(e.rel), compile_expr(e.arg)
        return lambda env: image(rel(env), arg(env))
    raise TypeError(f"not an expression: {e!r}")


def compile_member(e) -> Callable:
    """Closure ``(env, x) -> bool`` deciding ``x : e`` without building ``e``
    when ``e`` is a relation/function space, powerset or product."""
    return _cached(e, _build_member)


def _build_member(e) -> Callable:
    if isinstance(e, BinExpr) and e.op in ARROWS:
        op = e.op
        in_a, in_b = compile_member(e.left), compile_member(e.right)
        need_dom = op in ("-->", ">->")
        a_val = compile_expr(e.left) if need_dom else None

        def member_arrow(env, x):
            if type(x) is not frozenset:
                return False
            for p in x:
                if type(p) is not tuple or not in_a(env, p[0]) or not in_b(env, p[1]):
                    return False
            return _arrow_ok(op, x, a_val(env) if need_dom else None)
        return member_arrow
    if isinstance(e, UnExpr) and e.op == "POW":
        inner = compile_member(e.arg)

        def member_pow(env, x):
            return type(x) is frozenset and all(inner(env, y) for y in x)
        return member_pow
    if isinstance(e, BinExpr) and e.op == "**":
        in_a, in_b = compile_member(e.left), compile_member(e.right)
        return lambda env, x: type(x) is tuple and in_a(env, x[0]) and in_b(env, x[1])
    if isinstance(e, BinExpr) and e.op in ("\\/", "/\\", "\\"):
        in_a, in_b = compile_member(e.left), compile_member(e.right)
        if e.op == "\\/":
            return lambda env, x: in_a(env, x) or in_b(env, x)
        if e.op == "/\\":
            return lambda env, x: in_a(env, x) and in_b(env, x)
        return lambda env, x: in_a(env, x) and not in_b(env, x)
    s = compile_expr(e)

    def member(env, x):
        v = s(env)
        if type(v) is not frozenset:
            raise _type_error("set", v)
        return x in v
    return member


def compile_domain(e) -> Callable:
    """Closure ``env -> tuple`` enumerating the elements of ``e`` canonically."""
    return _cached(e, _build_domain)


def _build_domain(e) -> Callable:
    if isinstance(e, BinExpr) and e.op in ARROWS:
        op = e.op
        a, b = compile_expr(e.left), compile_expr(e.right)
        return lambda env: tuple(arrow_space(op, a(env), b(env)))
    if isinstance(e, UnExpr) and e.op == "POW":
        arg = compile_expr(e.arg)
        return lambda env: tuple(powerset(arg(env)))
    s = compile_expr(e)

    def dom_(env):
        v = s(env)
        if type(v) is not frozenset:
            raise _type_error("set", v)
        return canonical_tuple(v)
    return dom_


# -- binding plans ------------------------------------------------------------

@dataclass
class BindingPlan:
    """Order in which bound names get their domains, with filters interleaved."""
    names: tuple
    steps: list  # ('bind', name, domain_fn) | ('check', pred_fn, pred)
    domain_conjuncts: list


def _domain_of(c, pending: set, bound_so_far: set):
    """If conjunct ``c`` fixes the domain of a pending name, return
    (name, domain-closure); domain expressions may only use names bound earlier."""
    if isinstance(c, Compare) and isinstance(c.left, Name) and c.left.id in pending:
        v = c.left.id
        if free_names(c.right) & (pending - bound_so_far):
            return None
        if c.op == ":":
            return v, compile_domain(c.right)
        if c.op == "<:":
            base = compile_expr(c.right)
            return v, lambda env: tuple(powerset(base(env)))
        if c.op == "=":
            val = compile_expr(c.right)
            return v, lambda env: (val(env),)
    if isinstance(c, Logic) and c.op == "or":
        found = [_domain_of(a, pending, bound_so_far) for a in c.args]
        if all(f is not None for f in found) and len({f[0] for f in found}) == 1 \
                and all(isinstance(a, Compare) and a.op in (":", "=") for a in c.args):
            doms = [f[1] for f in found]
            return found[0][0], lambda env: canonical_tuple(frozenset().union(*(d(env) for d in doms)))
    return None


def plan_bindings(names: Iterable[str], conjs: Iterable, code: str = "E_UNBOUNDED_QUANTIFIER") -> BindingPlan:
    names = tuple(names)
    conjs = list(conjs)
    pending = set(names)
    used = [False] * len(conjs)
    order: list = []
    bound: set = set()
    while pending - bound:
        for i, c in enumerate(conjs):
            if used[i]:
                continue
            d = _domain_of(c, pending - bound, set())
            if d is not None:
                used[i] = True
                order.append((d[0], d[1], i))
                bound.add(d[0])
                break
        else:
            missing = sorted(pending - bound)
            raise EvalError(code, f"no domain-defining conjunct for {', '.join(missing)}")
    steps: list = []
    placed = [used[i] for i in range(len(conjs))]
    have: set = set()

    def place_checks():
        for i, c in enumerate(conjs):
            if not placed[i] and not (free_names(c) & (pending - have)):
                placed[i] = True
                steps.append(("check", compile_pred(c), c))

    place_checks()
    for name, dom_fn, _ in order:
        steps.append(("bind", name, dom_fn))
        have.add(name)
        place_checks()
    return BindingPlan(names, steps, [conjs[i] for _, _, i in order])


def iter_bindings(plan: BindingPlan, env: dict) -> Iterator[dict]:
    """Yield environments (one shared, mutated dict) for every binding that
    satisfies all conjuncts of the plan.  Copy the dict to keep it."""
    local = dict(env)
    steps = plan.steps
    n = len(steps)
    binds = [k for k, st in enumerate(steps) if st[0] == "bind"]
    if len(binds) == 1:
        # one parameter: a flat loop, no recursion
        b = binds[0]
        pre = [st[1] for st in steps[:b]]
        post = [st[1] for st in steps[b + 1:]]
        name, dom_fn = steps[b][1], steps[b][2]
        for check in pre:
            if not check(local):
                return
        for v in dom_fn(local):
            local[name] = v
            for check in post:
                if not check(local):
                    break
            else:
                yield local
        return

    def rec(k):
        while k < n and steps[k][0] == "check":
            if not steps[k][1](local):
                return
            k += 1
        if k == n:
            yield local
            return
        _, name, dom_fn = steps[k]
        for v in dom_fn(local):
            local[name] = v
            yield from rec(k + 1)
        local.pop(name, None)

    yield from rec(0)


def _quant_plan(p: Quant):
    """Binding plan plus the predicate each binding must satisfy (``None`` for
    existentials, where the plan's filters are the whole body)."""
    body = p.body
    if p.kind == "!":
        if isinstance(body, Imp):
            return plan_bindings(p.names, conjuncts(body.left)), body.right
        conjs = list(conjuncts(body))
        plan = plan_bindings(p.names, conjs)
        rest = [c for c in conjs if not any(c is d for d in plan.domain_conjuncts)]
        plan = plan_bindings(p.names, plan.domain_conjuncts)
        if not rest:
            return plan, PredConst(True)
        return plan, rest[0] if len(rest) == 1 else Logic("&", tuple(rest))
    if isinstance(body, Not) and isinstance(body.arg, Imp):
        return plan_bindings(p.names, list(conjuncts(body.arg.left)) + [Not(body.arg.right)]), None
    return plan_bindings(p.names, conjuncts(body)), None


def _build_quant(p: Quant) -> Callable:
    plan, req = _quant_plan(p)
    if p.kind == "!":
        check = compile_pred(req)

        def forall(env):
            for local in iter_bindings(plan, env):
                if not check(local):
                    return False
            return True
        return forall

    def exists(env):
        for _ in iter_bindings(plan, env):
            return True
        return False
    return exists


def _build_comprehension(e: SetComp) -> Callable:
    names = pattern_names(e.pattern)
    plan = plan_bindings(names, conjuncts(e.pred))
    pat = compile_expr(e.pattern)

    def comp(env):
        out = set()
        for local in iter_bindings(plan, env):
            out.add(pat(local))
            if len(out) > ENUM_LIMIT:
                raise EvalError("E_ENUM_LIMIT", f"comprehension exceeds {ENUM_LIMIT} elements")
        return frozenset(out)
    return comp


def _build_pred(p) -> Callable:
    if isinstance(p, Compare):
        op = p.op
        if op in (":", "/:"):
            x, member = compile_expr(p.left), compile_member(p.right)
            if op == ":":
                return lambda env: member(env, x(env))
            return lambda env: not member(env, x(env))
        if op in ("<:", "/<:", "<<:"):
            x, member = compile_expr(p.left), compile_member(p.right)
            if isinstance(p.right, BinExpr) and p.right.op in ARROWS or isinstance(p.right, UnExpr) and p.right.op == "POW":
                def subset(env):
                    return all(member(env, y) for y in _set(x(env)))
            else:
                s = compile_expr(p.right)

                def subset(env):
                    return _set(x(env)) <= _set(s(env))
            if op == "<:":
                return subset
            if op == "/<:":
                return lambda env: not subset(env)
            s2 = compile_expr(p.right)
            return lambda env: subset(env) and x(env) != s2(env)
        left, right = compile_expr(p.left), compile_expr(p.right)
        if op == "=":
            return lambda env: left(env) == right(env)
        if op == "/=":
            return lambda env: left(env) != right(env)

        def arith(env, cmp=op):
            a, b = left(env), right(env)
            if type(a) is not int or type(b) is not int:
                raise _type_error("integer", a if type(a) is not int else b)
            return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[cmp]
        return arith
    if isinstance(p, Logic):
        args = [compile_pred(a) for a in p.args]
        if p.op == "&":
            return lambda env: all(a(env) for a in args)
        return lambda env: any(a(env) for a in args)
    if isinstance(p, Imp):
        a, b = compile_pred(p.left), compile_pred(p.right)
        return lambda env: (not a(env)) or b(env)
    if isinstance(p, Equiv):
        a, b = compile_pred(p.left), compile_pred(p.right)
        return lambda env: a(env) == b(env)
    if isinstance(p, Not):
        a = compile_pred(p.arg)
        return lambda env: not a(env)
    if isinstance(p, Quant):
        return _build_quant(p)
    if isinstance(p, Partition):
        s = compile_expr(p.set)
        parts = [compile_expr(x) for x in p.parts]

        def partition(env):
            whole = _set(s(env))
            seen: set = set()
            for f in parts:
                part = _set(f(env))
                if seen & part:
                    return False
                seen |= part
            return seen == whole
        return partition
    if isinstance(p, PredConst):
        v = p.value
        return lambda env: v
    raise TypeError(f"not a predicate: {p!r}")


# -- public API ---------------------------------------------------------------

def make_env(env: Optional[dict] = None, u: Optional[Universe] = None) -> dict:
    merged = u.as_env() if u is not None else {}
    if env:
        merged.update(env)
    return merged


def eval(e, env: Optional[dict] = None, u: Optional[Universe] = None):  # noqa: A001
    return compile_expr(e)(make_env(env, u))


def eval_pred(p, env: Optional[dict] = None, u: Optional[Universe] = None) -> bool:
    return bool(compile_pred(p)(make_env(env, u)))


def find_counterexample(p, env: dict) -> Optional[dict]:
    """For a false universally quantified predicate, the first binding (in
    canonical order) that violates it.  For a false inclusion ``A <: B``,
    the elements of A outside B."""
    if isinstance(p, Compare) and p.op == "<:":
        return {"outside": _set(compile_expr(p.left)(env)) - _set(compile_expr(p.right)(env))}
    if not isinstance(p, Quant) or p.kind != "!":
        return None
    plan, req = _quant_plan(p)
    check = compile_pred(req)
    for local in iter_bindings(plan, env):
        if not check(local):
            return {n: local[n] for n in p.names}
    return None


# -- context instantiation ----------------------------------------------------

def _defining_equation(ax, constants: set):
    p = ax.pred
    if isinstance(p, Compare) and p.op == "=" and isinstance(p.left, Name) and p.left.id in constants:
        return p.left.id, p.right
    return None


def _enumerated_names(f, out: set, bound: frozenset = frozenset()) -> None:
    """Bare identifiers used as elements of set literals (through maplets)."""
    if isinstance(f, SetEnum):
        for item in f.items:
            _maplet_leaves(item, out, bound)
            _enumerated_names(item, out, bound)
        return
    if isinstance(f, SetComp):
        _enumerated_names(f.pred, out, bound | set(pattern_names(f.pattern)))
        return
    if isinstance(f, Quant):
        _enumerated_names(f.body, out, bound | set(f.names))
        return
    for child in _children(f):
        _enumerated_names(child, out, bound)


def _maplet_leaves(e, out: set, bound: frozenset) -> None:
    if isinstance(e, Name):
        if e.id not in bound:
            out.add(e.id)
    elif isinstance(e, BinExpr) and e.op == "|->":
        _maplet_leaves(e.left, out, bound)
        _maplet_leaves(e.right, out, bound)


def _children(f) -> tuple:
    if isinstance(f, (BinExpr, Compare, Imp, Equiv)):
        return (f.left, f.right)
    if isinstance(f, (UnExpr, Not)):
        return (f.arg,)
    if isinstance(f, Apply):
        return (f.fn, f.arg)
    if isinstance(f, Image):
        return (f.rel, f.arg)
    if isinstance(f, Logic):
        return f.args
    if isinstance(f, Partition):
        return (f.set,) + f.parts
    return ()


def instantiate_context(chain: list, scopes: Optional[dict] = None, source: Optional[str] = None):
    """Give every deferred set an extent and every constant a value, then
    check all axioms.  ``chain`` lists contexts from the root to the most
    derived one.  Returns ``(Universe, env)``; raises DiagnosticsError."""
    scopes = dict(scopes or {})
    diags: list = []
    sets: dict = {}
    deferred: list = []
    constants: list = []
    axioms: list = []
    env: dict = {}
    for ctx in chain:
        for sd in ctx.sets:
            if sd.elements is not None:
                sets[sd.name] = tuple(sd.elements)
                for el in sd.elements:
                    env[el] = el
            else:
                deferred.append(sd.name)
        constants.extend(ctx.constants)
        axioms.extend(ax for ax in ctx.axioms)
    const_set = set(constants)
    solved: dict = {}

    # partitions of a deferred set into singletons of constants fix both
    for ax in axioms:
        p = ax.pred
        if isinstance(p, Partition) and isinstance(p.set, Name) and p.set.id in deferred and p.set.id not in sets:
            elems: list = []
            ok = True
            for part in p.parts:
                if isinstance(part, SetEnum) and all(isinstance(x, Name) and x.id in const_set for x in part.items):
                    elems.extend(x.id for x in part.items)
                else:
                    ok = False
            if ok:
                sets[p.set.id] = tuple(elems)
                for el in elems:
                    solved[el] = el

    equations: dict = {}
    for ax in axioms:
        d = _defining_equation(ax, const_set)
        if d is not None and d[0] not in equations:
            equations[d[0]] = d[1]

    # constants without an equation that appear as literal set elements are atoms
    enumerated: set = set()
    for ax in axioms:
        _enumerated_names(ax.pred, enumerated)
    for c in constants:
        if c not in solved and c not in equations and c in enumerated:
            solved[c] = c

    for s in deferred:
        if s in sets:
            continue
        if s in scopes:
            sets[s] = tuple(f"{s}{i}" for i in range(1, int(scopes[s]) + 1))
        else:
            diags.append(Diagnostic("error", "E_NO_EXTENT", f"deferred set {s} has neither a partition axiom nor a scope", source=source, label=s))
    if diags:
        raise DiagnosticsError(diags)

    u = Universe({k: canonical_tuple(frozenset(v)) for k, v in sets.items()})
    env.update(u.as_env())
    env.update(solved)
    progress = True
    while progress:
        progress = False
        for c, e in equations.items():
            if c in env:
                continue
            if free_names(e) <= set(env):
                try:
                    env[c] = eval(e, env)
                except EvalError as err:
                    diags.append(Diagnostic("error", err.code, f"evaluating definition of {c}: {err.message}", source=source, label=c))
                    env[c] = None
                progress = True
    for c in constants:
        if c not in env:
            diags.append(Diagnostic("error", "E_UNSOLVED_CONSTANT", f"constant {c} has no defining equation", source=source, label=c))
    if diags:
        raise DiagnosticsError(diags)

    for ax in axioms:
        try:
            ok = eval_pred(ax.pred, env)
        except EvalError as err:
            diags.append(Diagnostic("error", err.code, err.message, *(ax.pos or (0, 0)), ax.label, source))
            continue
        if not ok:
            witness = None
            try:
                witness = find_counterexample(ax.pred, env)
            except EvalError:
                pass
            msg = f"axiom @{ax.label} does not hold"
            if witness:
                msg += " (counterexample " + ", ".join(f"{k}={render(v)}" for k, v in witness.items()) + ")"
            diags.append(Diagnostic("error", "E_AXIOM_FAILED", msg, *(ax.pos or (0, 0)), ax.label, source))
    if diags:
        raise DiagnosticsError(diags)
    return u, {k: v for k, v in env.items() if k not in u.sets}


def context_chain(contexts: dict, name: str) -> list:
    """Resolve ``extends`` links, root first."""
    chain: list = []
    seen: set = set()
    cur: Optional[str] = name
    while cur is not None:
        if cur in seen:
            raise EvalError("E_EXTENDS_CYCLE", f"context {cur} extends itself")
        seen.add(cur)
        if cur not in contexts:
            raise EvalError("E_UNRESOLVED", f"unknown context {cur}")
        ctx: Context = contexts[cur]
        chain.append(ctx)
        cur = ctx.extends
    return chain[::-1]
