import itertools

import pytest
from hypothesis import given, settings, strategies as st

from vok.ast import (
    Apply, BinExpr, Compare, Image, Imp, Logic, Name, Not, Quant, SetComp, SetEnum, UnExpr,
)
from vok.errors import DiagnosticsError, EvalError
from vok.evaluator import Universe, context_chain, eval, eval_pred, instantiate_context
from vok.parser import parse_context, parse_expression, parse_predicate
from vok.values import setv

from conftest import CORPUS, LISTINGS


def E(text):
    return parse_expression(text)


def P(text):
    return parse_predicate(text)


@pytest.fixture(scope="module")
def bee(proj):
    return proj.env("train_1_routes_beebook")


def test_nxt_row(bee):
    assert eval(E("nxt(R2)"), bee) == {("L", "A"), ("A", "B"), ("B", "D"), ("D", "E"), ("E", "F"), ("F", "G")}


def test_fst(bee):
    assert eval(E("fst(R1)"), bee) == "L"


def test_rtbl_image_of_r8(bee):
    # blocks named in the R8 row of nxt, collected by hand
    assert eval(E("rtbl~[{R8}]"), bee) == set("NJKDBAL")


def test_dom_empty():
    assert eval(E("dom({})"), {}) == frozenset()


def test_axm10_holds(bee, proj):
    ax = next(a for a in proj.contexts["train_ctx0"].axioms if a.label == "axm10")
    assert eval_pred(ax.pred, bee)


def _acyclic_brute_force(rel):
    """No non-empty S with S <: rel[S], by trying every subset of ran(rel)."""
    rng = sorted({b for _, b in rel})
    for k in range(1, len(rng) + 1):
        for sub in itertools.combinations(rng, k):
            s = set(sub)
            if s <= {b for a, b in rel if a in s}:
                return False
    return True


def test_axm10_agrees_with_brute_force(bee):
    rows = dict(bee["nxt"])
    assert len(rows) == 10
    for r in sorted(rows):
        assert _acyclic_brute_force(rows[r])


def test_partition_of_status():
    env = {"RoutesStatus": setv("free", "reserved", "formed"), "free": "free", "reserved": "reserved", "formed": "formed"}
    assert eval_pred(P("partition(RoutesStatus, {free}, {reserved}, {formed})"), env)
    assert not eval_pred(P("partition(RoutesStatus, {free}, {reserved})"), env)
    assert not eval_pred(P("partition(RoutesStatus, {free}, {free, reserved}, {formed})"), env)


def test_empty_witness_domain():
    assert eval_pred(P("#x.(x : {} & x = x)"), {}) is False


def test_apply_errors():
    env = {"f": setv(("a", "b"), ("a", "c"))}
    with pytest.raises(EvalError) as ei:
        eval(E("f(a)"), dict(env, a="a"))
    assert ei.value.code == "E_APPLY_AMBIGUOUS"
    with pytest.raises(EvalError) as ei:
        eval(E("f(z)"), dict(env, z="z"))
    assert ei.value.code == "E_APPLY_UNDEFINED"


def test_unbounded_quantifier():
    with pytest.raises(EvalError) as ei:
        eval_pred(P("!x.(x /= x)"), {})
    assert ei.value.code == "E_UNBOUNDED_QUANTIFIER"


def test_pow_limit():
    big = frozenset(f"a{i}" for i in range(17))
    with pytest.raises(EvalError) as ei:
        eval_pred(P("!S.(S <: B => S = S)"), {"B": big})
    assert ei.value.code == "E_POW_LIMIT"


def test_enum_limit():
    big = frozenset(range(1001))
    with pytest.raises(EvalError) as ei:
        eval(E("A ** A ** A"), {"A": big})
    assert ei.value.code == "E_ENUM_LIMIT"


def test_function_spaces():
    env = {"A": setv("a", "b"), "B": setv(1, 2)}
    assert len(eval(E("A --> B"), env)) == 4
    assert len(eval(E("A +-> B"), env)) == 9
    assert len(eval(E("A >+> B"), env)) == 7
    assert len(eval(E("A <-> B"), env)) == 16
    assert eval_pred(P("{a |-> 1} : A +-> B"), dict(env, a="a"))
    assert not eval_pred(P("{a |-> 1} : A --> B"), dict(env, a="a"))


def test_instantiate_beebook_chain(proj):
    chain = context_chain(proj.contexts, "train_ctx0_beebook")
    u, consts = instantiate_context(chain)
    assert len(u.sets["BLOCKS"]) == 14 and len(u.sets["ROUTES"]) == 10
    assert ("A", "R8") in consts["rtbl"]


def test_deleted_maplet_breaks_an_axiom(proj):
    text = (CORPUS / "train_ctx0_beebook.ctx").read_text().replace(", F |-> G},\n    R3", "},\n    R3")
    table = dict(proj.contexts)
    table["train_ctx0_beebook"] = parse_context(text)
    with pytest.raises(DiagnosticsError) as ei:
        instantiate_context(context_chain(table, "train_ctx0_beebook"))
    d = ei.value.diagnostics[0]
    assert d.code == "E_AXIOM_FAILED"
    assert d.label in {"axm8", "axm9"}
    assert "R2" in d.message  # the witness names the broken route


def test_scoped_listing_context_leaves_constants_unsolved():
    chain = [parse_context((LISTINGS / "train_ctx0.ctx").read_text())]
    with pytest.raises(DiagnosticsError) as ei:
        instantiate_context(chain, {"ROUTES": 2, "BLOCKS": 3})
    assert {d.code for d in ei.value.diagnostics} == {"E_UNSOLVED_CONSTANT"}


def test_no_extent():
    with pytest.raises(DiagnosticsError) as ei:
        instantiate_context([parse_context("context c sets S end")])
    assert ei.value.diagnostics[0].code == "E_NO_EXTENT"


def test_scope_gives_synthetic_atoms():
    u, _ = instantiate_context([parse_context("context c sets S end")], {"S": 3})
    assert len(u.sets["S"]) == 3


# -- brute-force oracle ---------------------------------------------------------
#
# A deliberately naive interpreter over the same syntax tree: Python sets,
# explicit loops, no sharing with the evaluator's code.

class OracleError(Exception):
    pass


def _o_set(v):
    if not isinstance(v, frozenset):
        raise OracleError("set expected")
    return v


def _o_rel(v):
    s = _o_set(v)
    for x in s:
        if not (isinstance(x, tuple) and len(x) == 2):
            raise OracleError("relation expected")
    return s


def oracle(e, env):
    if isinstance(e, Name):
        return env[e.id]
    if isinstance(e, SetEnum):
        return frozenset(oracle(x, env) for x in e.items)
    if isinstance(e, UnExpr):
        v = oracle(e.arg, env)
        if e.op == "dom":
            return frozenset(a for a, _ in _o_rel(v))
        if e.op == "ran":
            return frozenset(b for _, b in _o_rel(v))
        if e.op == "~":
            return frozenset((b, a) for a, b in _o_rel(v))
    if isinstance(e, Apply):
        f, x = _o_rel(oracle(e.fn, env)), oracle(e.arg, env)
        hits = [b for a, b in f if a == x]
        if len(hits) != 1:
            raise OracleError("apply")
        return hits[0]
    if isinstance(e, Image):
        r, s = _o_rel(oracle(e.rel, env)), _o_set(oracle(e.arg, env))
        return frozenset(b for a, b in r if a in s)
    if isinstance(e, SetComp):
        x = e.pattern.id
        out = set()
        dom_ = _o_set(oracle(e.pred.args[0].right, env))
        for v in dom_:
            local = dict(env)
            local[x] = v
            if opred(e.pred, local):
                out.add(v)
        return frozenset(out)
    if isinstance(e, BinExpr):
        a, b = oracle(e.left, env), oracle(e.right, env)
        op = e.op
        if op == "|->":
            return (a, b)
        if op == "\\/":
            return _o_set(a) | _o_set(b)
        if op == "/\\":
            return _o_set(a) & _o_set(b)
        if op == "\\":
            return _o_set(a) - _o_set(b)
        if op == "**":
            return frozenset((x, y) for x in _o_set(a) for y in _o_set(b))
        if op == "<|":
            return frozenset(p for p in _o_rel(b) if p[0] in _o_set(a))
        if op == "<<|":
            return frozenset(p for p in _o_rel(b) if p[0] not in _o_set(a))
        if op == "|>":
            return frozenset(p for p in _o_rel(a) if p[1] in _o_set(b))
        if op == "|>>":
            return frozenset(p for p in _o_rel(a) if p[1] not in _o_set(b))
        if op == "<+":
            left, right = _o_rel(a), _o_rel(b)
            keys = {p[0] for p in right}
            return frozenset([p for p in left if p[0] not in keys] + list(right))
    raise AssertionError(f"oracle cannot evaluate {e!r}")


def opred(p, env):
    if isinstance(p, Compare):
        a, b = oracle(p.left, env), oracle(p.right, env)
        if p.op == ":":
            return a in _o_set(b)
        if p.op == "/:":
            return a not in _o_set(b)
        if p.op == "<:":
            return _o_set(a) <= _o_set(b)
        if p.op == "=":
            return a == b
        if p.op == "/=":
            return a != b
    if isinstance(p, Logic):
        vals = [opred(x, env) for x in p.args]
        return all(vals) if p.op == "&" else any(vals)
    if isinstance(p, Not):
        return not opred(p.arg, env)
    if isinstance(p, Quant):
        (x,) = p.names
        body = p.body
        guard = body.left if p.kind == "!" else body
        first = guard.args[0] if isinstance(guard, Logic) else guard
        vals = []
        for v in _o_set(oracle(first.right, env)):
            local = dict(env)
            local[x] = v
            vals.append(opred(body, local))
        return all(vals) if p.kind == "!" else any(vals)
    if isinstance(p, Imp):
        return (not opred(p.left, env)) or opred(p.right, env)
    raise AssertionError(f"oracle cannot decide {p!r}")


ATOMS = ["a1", "a2", "a3", "a4", "a5"]
atoms = st.sampled_from(ATOMS)


@st.composite
def environments(draw):
    env = {a: a for a in ATOMS}
    env["S"] = frozenset(draw(st.sets(atoms, max_size=5)))
    env["T"] = frozenset(draw(st.sets(atoms, max_size=5)))
    pairs = st.tuples(atoms, atoms)
    env["f"] = frozenset(draw(st.sets(pairs, max_size=6)))
    env["g"] = frozenset(draw(st.sets(pairs, max_size=6)))
    return env


def _typed(depth):
    """(set_strategy, rel_strategy, atom_strategy) of expressions with at
    most ``depth`` levels of nesting."""
    atom_leaf = atoms.map(Name)
    set_leaf = st.one_of(st.sampled_from(["S", "T"]).map(Name), st.lists(atom_leaf, max_size=3).map(lambda xs: SetEnum(tuple(xs))))
    rel_leaf = st.one_of(st.sampled_from(["f", "g"]).map(Name),
                         st.tuples(atom_leaf, atom_leaf).map(lambda t: SetEnum((BinExpr("|->", *t),))))
    if depth == 0:
        return set_leaf, rel_leaf, atom_leaf
    s, r, a = _typed(depth - 1)
    sets = st.one_of(
        set_leaf,
        st.tuples(st.sampled_from(["\\/", "/\\", "\\"]), s, s).map(lambda t: BinExpr(*t)),
        st.tuples(st.sampled_from(["dom", "ran"]), r).map(lambda t: UnExpr(*t)),
        st.tuples(r, s).map(lambda t: Image(*t)),
        st.tuples(s, s).map(lambda t: SetComp(Name("x"), Logic("&", (Compare(":", Name("x"), t[0]), Compare("/:", Name("x"), t[1]))))),
        st.lists(a, min_size=1, max_size=2).map(lambda xs: SetEnum(tuple(xs))),
    )
    rels = st.one_of(
        rel_leaf,
        st.tuples(st.sampled_from(["\\/", "/\\", "\\", "<+"]), r, r).map(lambda t: BinExpr(*t)),
        st.tuples(st.sampled_from(["<|", "<<|"]), s, r).map(lambda t: BinExpr(*t)),
        st.tuples(st.sampled_from(["|>", "|>>"]), r, s).map(lambda t: BinExpr(*t)),
        r.map(lambda x: UnExpr("~", x)),
        st.tuples(s, s).map(lambda t: BinExpr("**", *t)),
    )
    atoms_ = st.one_of(atom_leaf, st.tuples(r, a).map(lambda t: Apply(*t)))
    return sets, rels, atoms_


SETS4, RELS4, ATOMS4 = _typed(4)
EXPRS = st.one_of(SETS4, RELS4, ATOMS4)


def _both(e, env):
    try:
        want = ("ok", oracle(e, env))
    except OracleError:
        want = ("err",)
    try:
        got = ("ok", eval(e, env))
    except EvalError as err:
        assert err.code in ("E_APPLY_UNDEFINED", "E_APPLY_AMBIGUOUS", "E_TYPE"), err.code
        got = ("err",)
    return got, want


@settings(max_examples=500, deadline=None, derandomize=True)
@given(EXPRS, environments())
def test_evaluator_matches_oracle(e, env):
    got, want = _both(e, env)
    assert got == want


BODIES = st.one_of(
    st.tuples(st.sampled_from([":", "/:"]), SETS4).map(lambda t: Compare(t[0], Name("x"), t[1])),
    SETS4.map(lambda s: Compare("<:", SetEnum((Name("x"),)), s)),
    st.tuples(RELS4, SETS4).map(lambda t: Compare("<:", Image(t[0], SetEnum((Name("x"),))), t[1])),
)


@settings(max_examples=200, deadline=None, derandomize=True)
@given(SETS4, BODIES, environments())
def test_quantifier_duality(dom_, body, env):
    x = Name("x")
    forall = Quant("!", ("x",), Imp(Compare(":", x, dom_), body))
    exists = Quant("#", ("x",), Logic("&", (Compare(":", x, dom_), Not(body))))
    lhs = _outcome(lambda: eval_pred(Not(forall), env))
    assert lhs == _outcome(lambda: eval_pred(exists, env))
    try:
        want = opred(exists, env)
    except OracleError:
        assert lhs[0] == "err"
        return
    assert lhs == ("ok", want)


def _outcome(thunk):
    try:
        return ("ok", thunk())
    except EvalError as e:
        return ("err", e.code)


@settings(max_examples=100, deadline=None)
@given(EXPRS, environments(), st.randoms())
def test_env_order_is_irrelevant(e, env, rnd):
    keys = list(env)
    rnd.shuffle(keys)
    shuffled = {k: env[k] for k in keys}
    a, _ = _both(e, env)
    b, _ = _both(e, shuffled)
    assert a == b


def test_universe_merges_into_env():
    u = Universe({"S": ("a", "b")})
    assert eval(E("S \\/ {c}"), {"c": "c"}, u) == setv("a", "b", "c")
