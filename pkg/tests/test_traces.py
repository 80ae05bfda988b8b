import json
import random

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from vok.errors import VokError
from vok.explorer import MachineRuntime
from vok.parser import parse_machine, parse_predicate
from vok.traces import NEW, Step, Trace, erase, load_trace, refine_trace, replay

from conftest import CORPUS

TRACES = CORPUS / "traces"


@pytest.fixture(scope="module")
def abstract_rt(proj):
    return proj.runtime("train_routes")


@pytest.fixture(scope="module")
def concrete_rt(proj):
    return proj.runtime("train_1_routes")


@pytest.fixture(scope="module")
def event_map(proj):
    ln = proj.link("abstraction")
    return ln.event_map(proj.machine("train_routes"), proj.machine("train_1_routes"))


def test_replay_abstract_trace(abstract_rt):
    res = replay(load_trace(TRACES / "r2_abstract.json"), abstract_rt)
    assert res.ok
    assert len(res.states) == 4
    assert res.final() == replay(Trace("train_routes"), abstract_rt).final()


def test_replay_swapped_trace_fails_at_second_step(abstract_rt):
    res = replay(load_trace(TRACES / "r2_swapped.json"), abstract_rt)
    assert res.verdict == "FAIL"
    assert (res.index, res.reason) == (1, "disabled")
    assert "route_freeing" in res.message


def test_empty_trace_checks_postcondition_on_initial_state(concrete_rt):
    assert replay(Trace("train_1_routes", (), parse_predicate("frm = {}")), concrete_rt).ok
    res = replay(Trace("train_1_routes", (), parse_predicate("R1 : frm")), concrete_rt)
    assert (res.verdict, res.index, res.reason) == ("FAIL", 0, "postcondition-failed")


def test_unknown_event_is_disabled(abstract_rt):
    res = replay(Trace("train_routes", (Step.of("teleport"),)), abstract_rt)
    assert (res.index, res.reason) == (0, "disabled")


def test_trace_json_round_trip():
    data = json.loads((TRACES / "vo2_trace1.json").read_text())
    t = Trace.from_json(data)
    assert Trace.from_json(json.loads(t.dumps())) == t
    assert t.postcondition is not None


def test_malformed_trace(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"steps": [{"params": {}}]}')
    with pytest.raises(VokError) as ei:
        load_trace(p)
    assert ei.value.code == "E_TRACE_FORMAT"


def test_refine_r2(abstract_rt, concrete_rt, event_map, proj):
    abstract = load_trace(TRACES / "r2_abstract.json")
    refined = refine_trace(abstract, concrete_rt, event_map, abstract_rt=abstract_rt)
    assert len(refined.steps) == 10
    assert refined.skips == 7
    skipped = [s for s in refined.steps if s.skip]
    assert {s.event for s in skipped} == {"block_release"}
    assert sorted(s.binding["b"] for s in skipped) == list("ABDEFGL")
    assert replay(refined, concrete_rt).ok
    assert erase(refined, event_map, proj.machine("train_routes")) == abstract


def test_refine_rejects_an_infeasible_abstract_trace(abstract_rt, concrete_rt, event_map):
    with pytest.raises(VokError) as ei:
        refine_trace(load_trace(TRACES / "r2_swapped.json"), concrete_rt, event_map, abstract_rt=abstract_rt)
    assert ei.value.code == "E_NO_REFINED_TRACE"


def test_skip_budget_too_small(concrete_rt, event_map):
    with pytest.raises(VokError) as ei:
        refine_trace(load_trace(TRACES / "r2_abstract.json"), concrete_rt, event_map, skip_budget=6)
    assert ei.value.code == "E_NO_REFINED_TRACE"
    assert "2 of 3" in ei.value.message


def test_identity_refinement_is_the_trace_itself(concrete_rt):
    t = load_trace(TRACES / "vo2_trace1.json")
    t = Trace("train_1_routes", t.steps)
    ident = {ev: ev for ev in concrete_rt.by_name}
    assert refine_trace(t, concrete_rt, ident).steps == t.steps


def test_erase_requires_skip_marks(event_map):
    t = Trace("train_1_routes", (Step.of("block_release", {"r": "R2", "b": "A"}),))
    with pytest.raises(VokError) as ei:
        erase(t, event_map)
    assert ei.value.code == "E_MAP_MISMATCH"


def test_erase_keeps_only_abstract_parameters(proj):
    am = proj.machine("train_routes")
    t = Trace("x", (Step.of("route_reservation", {"r": "R1", "extra": 1}),))
    assert erase(t, {}, am).steps == (Step.of("route_reservation", {"r": "R1"}),)


_SPLIT_ABS = """machine a variables n events
  event INITIALISATION then @i n := 0 end
  event go any k where @g k : {1} & n = 0 then @a n := k end end"""

_SPLIT_CONC = """machine c refines a variables n m events
  event INITIALISATION then @i n := 0 @j m := 0 end
  event prep any j where @g j : {1} & m = 0 then @a m := j end
  event go_slow any k where @g k : {1} & n = 0 & m = 1 then @a n := k end
  event go_fast any k where @g k : {1} & n = 0 & m = 0 then @a n := k end end"""


def test_split_event_takes_the_shortest_variant():
    a = parse_machine(_SPLIT_ABS)
    c = parse_machine(_SPLIT_CONC)
    events = {"prep": NEW, "go_slow": "go", "go_fast": "go"}
    rt = MachineRuntime(c, {})
    t = Trace("a", (Step.of("go", {"k": 1}),))
    refined = refine_trace(t, rt, events, abstract_rt=MachineRuntime(a, {}))
    assert [s.event for s in refined.steps] == ["go_fast"]
    slow_only = {"prep": NEW, "go_slow": "go", "go_fast": "other"}
    refined = refine_trace(t, rt, slow_only)
    assert [(s.event, s.skip) for s in refined.steps] == [("prep", True), ("go_slow", False)]


# -- independent oracle for the shortest refinement ---------------------------

def _oracle_shortest(abstract, rt, events, max_extra):
    """Iterative deepening without a skip budget; memoises failed nodes."""
    wanted = [(s.event, s.binding) for s in abstract.steps]
    goal = len(wanted)

    def fits(ev, params, cursor):
        if events.get(ev, ev) != wanted[cursor][0]:
            return False
        have = dict(params)
        return all(have[p] == v for p, v in wanted[cursor][1].items() if p in have)

    for limit in range(goal, goal + max_extra + 1):
        dead = set()

        def dfs(state, cursor, left):
            if cursor == goal:
                return True
            if left < goal - cursor or (state, cursor, left) in dead:
                return False
            for ev, params, target in rt.successors(state):
                if events.get(ev, ev) == NEW:
                    ok = dfs(target, cursor, left - 1)
                elif fits(ev, params, cursor):
                    ok = dfs(target, cursor + 1, left - 1)
                else:
                    continue
                if ok:
                    return True
            dead.add((state, cursor, left))
            return False

        if dfs(rt.initial_state(), 0, limit):
            return limit
    return None


def test_r2_refinement_is_minimal(concrete_rt, event_map):
    abstract = load_trace(TRACES / "r2_abstract.json")
    assert _oracle_shortest(abstract, concrete_rt, event_map, 12) == 10


def _abstract_walk(rt, seed, length):
    rng = random.Random(seed)
    state, steps = rt.initial_state(), []
    for _ in range(length):
        options = list(rt.successors(state))
        ev, params, state = rng.choice(options)
        steps.append(Step(ev, tuple(sorted(params))))
    return Trace("train_routes", tuple(steps))


@settings(max_examples=25, deadline=None, derandomize=True,
          suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_random_abstract_traces(abstract_rt, concrete_rt, event_map, proj, seed, length):
    abstract = _abstract_walk(abstract_rt, seed, length)
    expected = _oracle_shortest(abstract, concrete_rt, event_map, 16)
    try:
        refined = refine_trace(abstract, concrete_rt, event_map, abstract_rt=abstract_rt)
    except VokError as e:
        assert e.code == "E_NO_REFINED_TRACE"
        assert expected is None
        return
    assert len(refined.steps) == expected
    assert replay(refined, concrete_rt).ok
    assert erase(refined, event_map, proj.machine("train_routes")) == abstract
