"""Big-step device evaluation: golden trees, alignment, well-formedness."""

import json

import pytest

from fieldcalc.ast import Builtin, Data, Lambda, boolean, mkfield, num
from fieldcalc.builtins import SensorState
from fieldcalc.device import (
    EvalContext,
    FuelExhausted,
    MalformedEnv,
    ValueTree,
    align_fun,
    align_i,
    apply_function,
    eval_expr,
    evaluate_main,
    leaf,
    subtree_fun,
    subtree_i,
    tree_from_json,
    tree_to_json,
    value_from_json,
    value_to_json,
    value_to_text,
    well_formed,
)
from fieldcalc.parser import parse_expr, parse_program


def ev(src, device=1, env=None, sensors=None, fuel=10**6, rng=None):
    prog = parse_program(src)
    return evaluate_main(prog, device, env or {}, sensors, fuel, rng)


def senses(**kv):
    return SensorState(local={k.replace("_", "-"): v for k, v in kv.items()})


# ---------------------------------------------------------------------------
# projections

def test_subtree_i_in_range_and_out():
    t = ValueTree(num(3), (leaf(num(1)), leaf(num(2)), leaf(Builtin("+"))))
    assert subtree_i(t, 1) == leaf(num(1))
    assert subtree_i(t, 3) == leaf(Builtin("+"))
    assert subtree_i(t, 0) is None
    assert subtree_i(t, 4) is None
    assert subtree_i(leaf(num(0)), 1) is None


def test_subtree_fun_requires_matching_penultimate_root():
    l0 = parse_expr("() => 0")
    l1 = parse_expr("() => 1")
    t = ValueTree(num(0), (leaf(l0), leaf(num(0))))
    assert subtree_fun(t, l0) == leaf(num(0))
    assert subtree_fun(t, l1) is None
    assert subtree_fun(leaf(num(0)), l0) is None


def test_align_drops_devices_with_absent_subtree():
    deep = ValueTree(num(9), (leaf(num(7)),))
    env = {1: deep, 2: leaf(num(5))}
    assert align_i(env, 1) == {1: leaf(num(7))}
    assert align_i(env, 2) == {}


def test_align_fun_keeps_only_same_function():
    l0 = parse_expr("() => 0")
    l1 = parse_expr("() => 1")
    env = {
        1: ValueTree(num(0), (leaf(l0), leaf(num(0)))),
        2: ValueTree(num(1), (leaf(l1), leaf(num(1)))),
        3: leaf(num(2)),
    }
    assert align_fun(env, l1) == {2: leaf(num(1))}


# ---------------------------------------------------------------------------
# base rules

def test_values_evaluate_to_leaves():
    assert ev("42") == leaf(num(42))
    assert ev("True") == leaf(boolean(True))
    assert ev("Pair(1, Cons(2, Null))") == leaf(parse_expr("Pair(1, Cons(2, Null))"))
    lam = ev("(x) => x + 1")
    assert lam == leaf(parse_expr("(x) => x + 1"))


def test_lambda_body_is_not_evaluated():
    # would raise if evaluated: unbound sensor
    t = ev("(x) => sns-num()")
    assert not t.children


def test_field_literal_restricts_to_env_domain_plus_self():
    phi = mkfield({1: num(10), 2: num(20), 3: num(30)})
    ctx = EvalContext(device=1)
    t = eval_expr(ctx, {2: leaf(num(0))}, phi)
    assert t == leaf(mkfield({1: num(10), 2: num(20)}))


def test_constructor_with_unevaluated_arguments():
    t = ev("Pair(uid(), 3)", device=7)
    assert t.root == parse_expr("Pair(7, 3)")
    assert t.children == (ValueTree(num(7), (leaf(Builtin("uid")),)), leaf(num(3)))


def test_builtin_application_tree_shape():
    t = ev("1 + 2")
    assert t == ValueTree(num(3), (leaf(num(1)), leaf(num(2)), leaf(Builtin("+"))))


def test_defined_function_application_tree_shape():
    t = ev("def double(x) { x + x } double(5)")
    fn = t.children[1].root
    assert fn == parse_expr("double", defs=["double"])
    assert t.root == num(10)
    assert len(t.children) == 3  # arg, function, body


def test_unbound_variable_is_a_runtime_error():
    from fieldcalc.ast import Var
    from fieldcalc.builtins import EvalError

    with pytest.raises(EvalError, match="unbound"):
        eval_expr(EvalContext(device=1), {}, Var("x"))


def test_applying_a_non_function_fails():
    from fieldcalc.builtins import EvalError

    with pytest.raises(EvalError, match="not a function"):
        ev("3(4)")


# ---------------------------------------------------------------------------
# rep counter walkthrough

def test_rep_counter_first_fire_golden_tree():
    inner = ValueTree(num(1), (leaf(num(0)), leaf(num(1)), leaf(Builtin("+"))))
    t = ev("rep(0){(x) => +(x, 1)}", device=0)
    assert t == ValueTree(num(1), (leaf(num(0)), inner))


def test_rep_counter_successive_roots():
    prog = parse_program("rep(0){(x) => +(x, 1)}")
    env = {}
    roots = []
    for _ in range(5):
        t = evaluate_main(prog, 0, env)
        roots.append(t.root)
        env = {0: t}
    assert roots == [num(k) for k in range(1, 6)]


def test_rep_reads_neighbour_state_only_through_own_tree():
    # a device with no stored tree starts from the initial value even if
    # neighbours are ahead
    prog = parse_program("rep(0){(x) => +(x, 1)}")
    t_b = evaluate_main(prog, 1, {})
    t_b = evaluate_main(prog, 1, {1: t_b})  # root 2
    t_a = evaluate_main(prog, 0, {1: t_b})
    assert t_a.root == num(1)


def test_rep_with_malformed_own_tree():
    prog = parse_program("rep(0){(x) => +(x, 1)}")
    with pytest.raises(MalformedEnv):
        evaluate_main(prog, 0, {0: leaf(num(9))})


# ---------------------------------------------------------------------------
# gossip-of-minimum walkthrough: three devices running
# min-hood(nbr{sns-num()}) with sns-num readings 1, 2, 3

GOSSIP = "min-hood(nbr{sns-num()})"


def gossip_first_fire(d):
    return ev(GOSSIP, device=d, sensors=senses(sns_num=num(d)))


def test_gossip_first_fire_golden_tree():
    sns = ValueTree(num(1), (leaf(Builtin("sns-num")),))
    nbr = ValueTree(mkfield({1: num(1)}), (sns,))
    assert gossip_first_fire(1) == ValueTree(num(1), (nbr, leaf(Builtin("min-hood"))))


def test_gossip_second_fire_sees_all_neighbours():
    env = {d: gossip_first_fire(d) for d in (1, 2, 3)}
    t = ev(GOSSIP, device=2, env=env, sensors=senses(sns_num=num(2)))
    assert t.root == num(1)
    assert t.children[0].root == mkfield({1: num(1), 2: num(2), 3: num(3)})


def test_gossip_field_domain_tracks_env():
    env = {3: gossip_first_fire(3)}
    t = ev(GOSSIP, device=1, env=env, sensors=senses(sns_num=num(1)))
    assert t.children[0].root == mkfield({1: num(1), 3: num(3)})


# ---------------------------------------------------------------------------
# function-gossip walkthrough: pick-hood(nbr{sns-fun()})() where device 1
# senses ()=>min-hood(nbr{sns-num()}) and devices 2, 3 sense ()=>0

FUNGOSSIP = "pick-hood(nbr{sns-fun()})()"
L_MIN = "() => min-hood(nbr{sns-num()})"
L_ZERO = "() => 0"


def fungossip_sensors(d):
    fun = parse_expr(L_MIN if d == 1 else L_ZERO)
    return senses(sns_fun=fun, sns_num=num({1: 3, 2: 1, 3: 2}[d]))


def fungossip_first_fire(d):
    return ev(FUNGOSSIP, device=d, sensors=fungossip_sensors(d))


def test_fungossip_first_fire_shapes():
    t1 = fungossip_first_fire(1)
    assert t1.root == num(3)  # own min-hood over just itself
    assert len(t1.children) == 2  # function tree + body tree
    assert t1.children[0].root == parse_expr(L_MIN)
    t2 = fungossip_first_fire(2)
    assert t2.root == num(0)
    assert t2.children[0].root == parse_expr(L_ZERO)


def test_fungossip_second_fire_aligns_on_selected_function():
    env = {d: fungossip_first_fire(d) for d in (1, 2, 3)}
    t = ev(FUNGOSSIP, device=2, env=env, sensors=fungossip_sensors(2))
    # pick-hood takes the function shared by the least device id, which.
    # is device 1's min-hood lambda; only device 1 aligns with its body
    assert t.children[0].root == parse_expr(L_MIN)
    body = t.children[1]
    assert body.children[0].root == mkfield({1: num(3), 2: num(1)})
    assert t.root == num(1)


def test_fungossip_nonselected_device_keeps_its_own_branch():
    env = {d: fungossip_first_fire(d) for d in (2, 3)}
    t = ev(FUNGOSSIP, device=3, env=env, sensors=fungossip_sensors(3))
    assert t.children[0].root == parse_expr(L_ZERO)
    assert t.root == num(0)


# ---------------------------------------------------------------------------
# nbr and alignment details

def test_nbr_of_local_expression():
    t = ev("nbr{uid()}", device=4)
    assert t.root == mkfield({4: num(4)})
    assert t.children == (ValueTree(num(4), (leaf(Builtin("uid")),)),)


def test_nested_nbr_alignment():
    prog = parse_program("min-hood(nbr{uid()}) + min-hood+(nbr{uid()} *[f,l] 10)")
    ta = evaluate_main(prog, 1, {})
    tb = evaluate_main(prog, 2, {1: ta})
    # second summand only sees device 1 (min-hood+ excludes self)
    assert tb.root == num(1 + 10)


def test_builtin_sees_full_env_domain():
    # the field handed to min-hood must cover every neighbour in the env
    prog = parse_program(GOSSIP)
    env = {d: gossip_first_fire(d) for d in (1, 2, 3)}
    t = evaluate_main(prog, 1, env, senses(sns_num=num(1)))
    assert set(t.children[0].root.domain()) == {1, 2, 3}


def test_field_literal_is_restricted_before_builtins_see_it():
    # a stray entry for an unknown device is dropped by the restriction
    # rule, so the builtin's domain precondition is maintained
    phi = mkfield({1: num(1), 9: num(9)})
    ctx = EvalContext(device=1)
    from fieldcalc.ast import Apply

    t = eval_expr(ctx, {}, Apply(Builtin("min-hood"), (phi,)))
    assert t.root == num(1)
    assert t.children[0].root == mkfield({1: num(1)})


def test_apply_function_runs_against_empty_env():
    ctx = EvalContext(device=1)
    f = parse_expr("(x) => x + 1")
    assert apply_function(ctx, f, [num(41)]) == num(42)


def test_map_hood_uses_device_call():
    prog = parse_program("map-hood((x) => x + 1, nbr{uid()})")
    ta = evaluate_main(prog, 1, {})
    tb = evaluate_main(prog, 2, {1: ta})
    assert tb.root == mkfield({1: num(2), 2: num(3)})


def test_def_functions_align_by_name():
    src = "def f() { rep(0){(x) => x + 1} } f()"
    prog = parse_program(src)
    ta = evaluate_main(prog, 1, {})
    ta2 = evaluate_main(prog, 1, {1: ta})
    assert ta2.root == num(2)


def test_substituted_captures_split_alignment():
    # function equality covers substituted captures, so a lambda that
    # closed over uid() aligns with nobody else: a field built in its
    # body keeps the evaluating device only
    src = "((y) => ((x) => +[f,l](nbr{0}, y))(0))(uid())"
    ta = ev(src, device=1)
    tb = ev(src, device=2, env={1: ta})
    assert tb.root == mkfield({2: num(2)})


def test_fuel_exhaustion():
    with pytest.raises(FuelExhausted):
        ev("def loop() { loop() } loop()", fuel=200)


# ---------------------------------------------------------------------------
# well-formedness

WF_CASES = [
    "1 + 2",
    "rep(0){(x) => x + 1}",
    "((x) => x * x)(4)",
    "min-hood(nbr{sns-num()})",
    "Pair(uid(), 3)",
    "if (1 < 2) {3} else {4}",
]


@pytest.mark.parametrize("src", WF_CASES)
def test_produced_trees_are_well_formed(src):
    prog = parse_program(src)
    defs = {d.name: d for d in prog.defs}
    t = evaluate_main(prog, 1, {}, senses(sns_num=num(5)))
    assert well_formed(prog.main, t, defs)


def test_truncated_tree_is_not_well_formed():
    prog = parse_program("1 + 2")
    t = evaluate_main(prog, 1, {})
    bad = ValueTree(t.root, t.children[:2])
    assert not well_formed(prog.main, bad, {})


def test_wrong_shape_is_not_well_formed():
    prog = parse_program("rep(0){(x) => x + 1}")
    assert not well_formed(prog.main, leaf(num(1)), {})


def test_apply_tree_shape_depends_on_function_kind():
    prog = parse_program("((x) => x)(7)")
    t = evaluate_main(prog, 1, {})
    assert well_formed(prog.main, t, {})
    # dropping the body child leaves a builtin-shaped tree with a lambda root
    assert not well_formed(prog.main, ValueTree(t.root, t.children[:2]), {})


# ---------------------------------------------------------------------------
# serialization

ROUND_TRIP_VALUES = [
    "42",
    "-0.5",
    "True",
    "Null",
    "Pair(1, Cons(True, Null))",
    "(x) => x + 1",
    "() => min-hood(nbr{sns-num()})",
    "(min-hood+)",
]


@pytest.mark.parametrize("src", ROUND_TRIP_VALUES)
def test_value_json_round_trip(src):
    v = parse_expr(src)
    j = json.loads(json.dumps(value_to_json(v)))
    assert value_from_json(j) == v


def test_special_numbers_round_trip():
    for src in ("infinity", "-infinity", "NaN"):
        v = parse_expr(src)
        assert value_from_json(value_to_json(v)) == v


def test_field_value_round_trip():
    v = mkfield({1: num(1), 3: parse_expr("Pair(1, 2)")})
    assert value_from_json(value_to_json(v)) == v


def test_def_name_round_trip_needs_defs():
    from fieldcalc.ast import DefName
    from fieldcalc.parser import ParseError

    v = DefName("f")
    j = value_to_json(v)
    assert value_from_json(j, defs=["f"]) == v
    with pytest.raises(ParseError):
        value_from_json(j)


def test_tree_json_round_trip():
    t = ev(GOSSIP, device=1, sensors=senses(sns_num=num(1)))
    j = json.loads(json.dumps(tree_to_json(t)))
    assert tree_from_json(j) == t


def test_value_to_text():
    assert value_to_text(num(3)) == "3"
    assert value_to_text(num(float("inf"))) == "infinity"
    assert value_to_text(boolean(True)) == "True"
    out = value_to_text(mkfield({1: num(2)}))
    assert json.loads(out) == {"field": [[1, {"num": 2.0}]]}
