"""Denotational evaluation on event DAGs and the adequacy checker."""

import json
from fractions import Fraction as F

import pytest

from fieldcalc.ast import Apply, Builtin, mkfield, num
from fieldcalc.denot import (
    CoherenceError,
    DagError,
    DenotError,
    Event,
    EventDAG,
    Violation,
    build_dag_from_scenario,
    check_adequacy,
    check_restriction,
    cluster,
    dag_from_json,
    dag_to_json,
    denot_eval,
    denot_program,
    latest_event,
    nbr_devices,
    prev_event,
    restrict_evolution,
    shift,
    validate_dag,
)
from fieldcalc.device import FuelExhausted
from fieldcalc.network import PathSeg, Scenario
from fieldcalc.parser import parse_expr, parse_program

from helpers import FOCUS, example_dag, line_scenario, static_scenario


def chain_dag(n, device=1):
    """n events of one device, each aware of the previous."""
    evs = [Event(i, device, F(i)) for i in range(n)]
    return EventDAG(evs, [(i - 1, i) for i in range(1, n)])


def ev_of(g, i):
    return g.by_id[i]


# ---------------------------------------------------------------------------
# DAG structure

def test_example_dag_is_valid():
    assert validate_dag(example_dag()) == []


def test_cycle_is_reported():
    g = EventDAG([Event(1, 1, F(0)), Event(2, 2, F(1))], [(1, 2), (2, 1)])
    kinds = {v.kind for v in validate_dag(g)}
    assert "cycle" in kinds


def test_duplicate_device_is_reported():
    g = EventDAG(
        [Event(1, 3, F(0)), Event(2, 3, F(1)), Event(3, 1, F(2))],
        [(1, 3), (2, 3)],
    )
    v = [v for v in validate_dag(g) if v.kind == "duplicate-device"]
    assert v and v[0].events[-1] == 3


def test_double_consumption_is_reported():
    g = EventDAG(
        [Event(1, 1, F(0)), Event(2, 1, F(1)), Event(3, 1, F(2))],
        [(1, 2), (1, 3)],
    )
    v = [v for v in validate_dag(g) if v.kind == "double-consumption"]
    assert v == [Violation("double-consumption", (1, 2, 3))]


def test_focus_event_awareness():
    g = example_dag()
    E = frozenset(g.events)
    focus = ev_of(g, FOCUS)
    assert nbr_devices(g, E, focus) == frozenset({2, 3, 4})
    assert latest_event(g, E, focus, 3) is focus
    assert latest_event(g, E, focus, 2) is ev_of(g, 7)
    assert latest_event(g, E, focus, 1) is None


def test_awareness_respects_restriction():
    g = example_dag()
    only3 = frozenset(e for e in g.events if e.device == 3)
    focus = ev_of(g, FOCUS)
    assert nbr_devices(g, only3, focus) == frozenset({3})
    assert latest_event(g, only3, focus, 2) is None


def test_prev_event_and_reboot():
    g = example_dag()
    assert prev_event(g, ev_of(g, 11)) is ev_of(g, 10)
    assert prev_event(g, ev_of(g, 5)) is None
    # device 2's post-reboot firing has no same-device predecessor
    assert prev_event(g, ev_of(g, 7)) is None
    assert prev_event(g, ev_of(g, 8)) is ev_of(g, 7)


def test_shift_on_a_chain():
    g = chain_dag(3)
    E = frozenset(g.events)
    phi = {ev_of(g, i): num(10 + i) for i in range(3)}
    phi0 = {ev_of(g, i): num(0) for i in range(3)}
    out = shift(g, E, phi, phi0)
    assert [out[ev_of(g, i)] for i in range(3)] == [num(0), num(10), num(11)]


def test_dag_json_round_trip():
    g = example_dag()
    j = json.loads(json.dumps(dag_to_json(g)))
    g2 = dag_from_json(j)
    assert g2.neigh == g.neigh
    assert g2.events == g.events


def test_dag_rejects_bad_references():
    with pytest.raises(DagError):
        EventDAG([Event(1, 1, F(0))], [(1, 99)])
    with pytest.raises(DagError):
        EventDAG([Event(1, 1, F(0)), Event(1, 2, F(1))], [])


# ---------------------------------------------------------------------------
# evaluation rules

def test_values_denote_constant_evolutions():
    g = chain_dag(3)
    E = frozenset(g.events)
    assert denot_eval(g, E, {}, parse_expr("7")) == {e: num(7) for e in E}


def test_uid_is_the_device_of_each_event():
    g = example_dag()
    E = frozenset(g.events)
    out = denot_eval(g, E, {}, parse_expr("uid()"))
    assert all(out[e] == num(e.device) for e in E)


def test_nbr_uid_at_focus_event():
    g = example_dag()
    out = denot_eval(g, frozenset(g.events), {}, parse_expr("nbr{uid()}"))
    assert out[ev_of(g, FOCUS)] == mkfield({2: num(2), 3: num(3), 4: num(4)})


def test_field_results_are_aligned():
    g = example_dag()
    E = frozenset(g.events)
    out = denot_eval(g, E, {}, parse_expr("nbr{uid()}"))
    for e in E:
        assert frozenset(out[e].domain()) == nbr_devices(g, E, e)


def test_rep_counter_counts_predecessors():
    g = example_dag()
    E = frozenset(g.events)
    out = denot_eval(g, E, {}, parse_expr("rep(0){(x) => x + 1}"))
    for e in E:
        n, p = 1, prev_event(g, e)
        while p is not None:
            n, p = n + 1, prev_event(g, p)
        assert out[e] == num(n), f"event {e.id}"


def test_variable_restriction_shrinks_fields():
    g = example_dag()
    E = frozenset(g.events)
    phi = denot_eval(g, E, {}, parse_expr("nbr{uid()}"))
    only23 = frozenset(e for e in E if e.device in (2, 3))
    from fieldcalc.ast import Var

    out = denot_eval(g, only23, {"x": phi}, Var("x"))
    for e in only23:
        assert frozenset(out[e].domain()) == nbr_devices(g, only23, e)


def test_field_literal_mirrors_the_restriction_rule():
    g = chain_dag(2, device=4)
    E = frozenset(g.events)
    lit = mkfield({4: num(1), 9: num(9)})
    out = denot_eval(g, E, {}, lit)
    assert all(v == mkfield({4: num(1)}) for v in out.values())


def test_apply_lambda_over_whole_dag():
    g = example_dag()
    E = frozenset(g.events)
    a = denot_eval(g, E, {}, parse_expr("((x) => nbr{x})(uid())"))
    b = denot_eval(g, E, {}, parse_expr("nbr{uid()}"))
    assert a == b


def test_lambda_tags_substitute_free_variables():
    g = example_dag()
    E = frozenset(g.events)
    e = parse_expr("((x) => (y) => x)(uid())")
    out = denot_eval(g, E, {}, e)
    focus = ev_of(g, FOCUS)
    assert out[focus] == parse_expr("(y) => 3")


def test_cluster_builtin_and_lambda():
    g = example_dag()
    E = frozenset(g.events)
    focus = ev_of(g, FOCUS)
    assert cluster(g, E, Builtin("+"), {}, focus) == E
    assert cluster(g, E, parse_expr("(x) => x"), {}, focus) == E
    branch = parse_expr("mux(uid() = 2, (x) => x, (y) => y)")
    c = cluster(g, E, branch, {}, focus)
    assert c == frozenset(e for e in E if e.device != 2)
    c2 = cluster(g, E, branch, {}, ev_of(g, 7))
    assert c2 == frozenset(e for e in E if e.device == 2)
    assert c | c2 == E


def test_branching_restricts_nbr_domains():
    # devices that took the other branch disappear from nbr fields
    g = example_dag()
    E = frozenset(g.events)
    e = parse_expr("mux(uid() = 2, (x) => nbr{x}, (y) => nbr{y})(uid())")
    out = denot_eval(g, E, {}, e)
    focus = ev_of(g, FOCUS)
    assert out[focus] == mkfield({3: num(3), 4: num(4)})
    red = ev_of(g, 7)
    assert out[red] == mkfield({2: num(2)})


def test_defined_function_recursion_budget():
    g = chain_dag(1)
    prog = parse_program("def f(x) { f(x) } f(0)")
    with pytest.raises(FuelExhausted):
        denot_program(g, prog, fuel=500)


def test_unbound_variable_is_an_error():
    g = chain_dag(1)
    from fieldcalc.ast import Var

    with pytest.raises(DenotError, match="unbound"):
        denot_eval(g, frozenset(g.events), {}, Var("x"))


def test_rep_on_source_invariant():
    g = example_dag()
    E = frozenset(g.events)
    srcs = [e for e in E if not g.senders(e)]
    assert srcs  # the earliest firing has no incoming edges
    for src, body in [
        ("rep(0){(x) => x + 1}", "((x) => x + 1)(0)"),
        ("rep(uid()){(x) => min-hood(nbr{x})}", "((x) => min-hood(nbr{x}))(uid())"),
    ]:
        lhs = denot_eval(g, E, {}, parse_expr(src))
        rhs = denot_eval(g, E, {}, parse_expr(body))
        for e in srcs:
            assert lhs[e] == rhs[e]


def test_rep_locality_for_pure_local_expressions():
    g = example_dag()
    E = frozenset(g.events)
    e = parse_expr("rep(1){(x) => x * 2}")
    out = denot_eval(g, E, {}, e)
    for dev in (1, 2, 3, 4):
        sub = frozenset(ev for ev in E if ev.device == dev)
        local = denot_eval(g, sub, {}, e)
        for ev in sub:
            assert out[ev] == local[ev]


# ---------------------------------------------------------------------------
# scenario-induced DAGs

def test_induced_dag_matches_decay_window():
    sc = static_scenario({1: (0, 0), 2: (1, 0)}, radius=5, decay=10,
                         fires=[(0, 1), (10, 2), (21, 1)])
    g = build_dag_from_scenario(sc)
    edges = g.neigh
    assert (0, 1) in edges  # t'=0 is exactly at the decay boundary of t=10
    assert (1, 2) not in edges  # 21 - 10 = 11 > decay
    assert validate_dag(g) == []


def test_induced_dag_uses_positions_at_send_time():
    sc = Scenario(
        devices=(1, 2), radius=2, decay=F(100),
        paths={
            1: (PathSeg(F(0), F(20), ((0.0, 0.0),)),),
            2: (PathSeg(F(0), F(20), ((0.0, 0.0), (10.0, 0.0))),),
        },
        fires=((F(1), 2), (F(2), 1), (F(18), 2), (F(19), 1)),
    )
    g = build_dag_from_scenario(sc)
    # device 2 was at x=0.5 when it fired at t=1: within radius
    assert (0, 1) in g.neigh
    # at t=18 device 2 sits at x=9: out of range of device 1
    assert (2, 3) not in g.neigh


def test_induced_dag_requires_receiver_continuously_on():
    sc = Scenario(
        devices=(1,), radius=1, decay=F(100),
        paths={1: (PathSeg(F(0), F(2), ((0.0, 0.0),)),
                   PathSeg(F(4), F(9), ((0.0, 0.0),)),)},
        fires=((F(1), 1), (F(5), 1), (F(6), 1)),
    )
    g = build_dag_from_scenario(sc)
    assert (0, 1) not in g.neigh  # reboot severs the self-link
    assert (1, 2) in g.neigh
    assert prev_event(g, g.by_id[1]) is None


def test_induced_dag_keeps_only_last_qualifying_firing():
    sc = static_scenario({1: (0, 0), 2: (1, 0)}, radius=5, decay=100,
                         fires=[(0, 1), (1, 1), (2, 2)])
    g = build_dag_from_scenario(sc)
    assert (1, 2) in g.neigh
    assert (0, 2) not in g.neigh


# ---------------------------------------------------------------------------
# adequacy

def test_adequacy_rep_counter():
    sc = static_scenario({1: (0, 0)}, radius=1, decay=100,
                         fires=[(t, 1) for t in range(5)])
    prog = parse_program("rep(0){(x) => x + 1}")
    report = check_adequacy(sc, prog)
    assert report.ok
    assert len(report.verdicts) == 5
    assert [v.denotational for v in report.verdicts] == [num(k) for k in range(1, 6)]


def test_adequacy_min_hood_gossip():
    sc = static_scenario(
        {1: (0, 0), 2: (1, 0), 3: (0, 1)}, radius=2, decay=100,
        fires=[(0, 1), (1, 2), (2, 3), (3, 2)],
        sensors={d: {"sns-num": num(d)} for d in (1, 2, 3)},
    )
    prog = parse_program("min-hood(nbr{sns-num()})")
    report = check_adequacy(sc, prog)
    assert report.ok
    assert len(report.verdicts) == 4


def test_adequacy_with_functions_and_fields():
    sc = static_scenario(
        {1: (0, 0), 2: (1, 0)}, radius=2, decay=100,
        fires=[(0, 1), (1, 2), (2, 1), (3, 2)],
        sensors={
            1: {"sns-fun": parse_expr("() => min-hood(nbr{uid()})")},
            2: {"sns-fun": parse_expr("() => 0")},
        },
    )
    prog = parse_program("Pair(pick-hood(nbr{sns-fun()})(), nbr{uid()})")
    report = check_adequacy(sc, prog)
    assert report.ok


def test_adequacy_across_a_reboot():
    sc = Scenario(
        devices=(1, 2), radius=2, decay=F(100),
        paths={
            1: (PathSeg(F(0), F(20), ((0.0, 0.0),)),),
            2: (PathSeg(F(0), F(3), ((1.0, 0.0),)),
                PathSeg(F(6), F(20), ((1.0, 0.0),)),),
        },
        fires=((F(1), 1), (F(2), 2), (F(4), 1), (F(7), 2), (F(8), 1)),
    )
    prog = parse_program("rep(0){(x) => min-hood(nbr{x}) + 1}")
    report = check_adequacy(sc, prog)
    assert report.ok


def test_adequacy_report_json():
    sc = static_scenario({1: (0, 0)}, radius=1, decay=10, fires=[(0, 1)])
    prog = parse_program("1 + 2")
    j = check_adequacy(sc, prog).to_json()
    assert j["ok"] is True
    assert j["first_counterexample"] is None
    assert j["events"][0]["denotational"] == {"num": 3.0}


def test_nbr_range_adequacy():
    sc = static_scenario({1: (0, 0), 2: (3, 4)}, radius=10, decay=100,
                         fires=[(0, 1), (1, 2), (2, 1)])
    prog = parse_program("min-hood+(nbr-range())")
    report = check_adequacy(sc, prog)
    assert report.ok
    assert report.verdicts[-1].denotational == num(5)


# ---------------------------------------------------------------------------
# restriction

def test_restriction_outside_perturbation_is_invisible():
    g = example_dag()
    E = frozenset(g.events)
    e0 = parse_expr("mux(uid() = 2, (x) => 0, (x) => min-hood(nbr{x}))")
    args = [parse_expr("uid()")]
    args2 = [parse_expr("mux(uid() = 2, 100, uid())")]  # differs only on device 2
    report = check_restriction(g, E, e0, args, args2, {})
    assert report.ok
    by_agreement = {c.args_agree for c in report.clusters}
    assert by_agreement == {True, False}
    for c in report.clusters:
        if c.args_agree:
            assert c.results_agree


def test_restriction_congruence_for_builtins():
    g = example_dag()
    E = frozenset(g.events)
    report = check_restriction(
        g, E, Builtin("+"),
        [parse_expr("1"), parse_expr("2")],
        [parse_expr("1"), parse_expr("1 + 1")],
        {},
    )
    assert report.ok
    assert all(c.args_agree and c.results_agree for c in report.clusters)
