"""Per-device big-step evaluation producing value-trees.

A firing evaluates the program's main expression against the value-tree
environment collecting the most recent trees received from neighbours
(self included). The result is a value-tree mirroring the expression
structure; neighbours evaluate their own subexpressions against the
matching subtrees, which is what aligns nbr/rep state across devices.

Every rule charges one unit of fuel, so non-terminating recursion
surfaces as FuelExhausted instead of hanging the simulator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Optional

from .ast import (
    Apply,
    Builtin,
    Data,
    Def,
    DefName,
    Expr,
    FieldVal,
    Lambda,
    Nbr,
    Program,
    Rep,
    Var,
    is_value,
    mkfield,
    substitute,
)
from .builtins import TABLE, EvalError, OpContext, SensorState


class FuelExhausted(EvalError):
    pass


class MalformedEnv(EvalError):
    """A stored tree's shape contradicts the expression being evaluated."""


DEFAULT_FUEL = 10**6


# ---------------------------------------------------------------------------
# value-trees

@dataclass(frozen=True)
class ValueTree:
    root: Expr  # a runtime value
    children: tuple = ()

    def __repr__(self):
        if not self.children:
            return f"«{self.root!r}»"
        return f"«{self.root!r}»({', '.join(repr(c) for c in self.children)})"


def leaf(v: Expr) -> ValueTree:
    return ValueTree(v)


def subtree_i(t: ValueTree, i: int) -> Optional[ValueTree]:
    """i-th child, 1-based; None when absent."""
    if 1 <= i <= len(t.children):
        return t.children[i - 1]
    return None


def subtree_fun(t: ValueTree, f: Expr) -> Optional[ValueTree]:
    """Last child, provided the second-to-last child's root equals the
    function value f; None otherwise."""
    if len(t.children) >= 2 and t.children[-2].root == f:
        return t.children[-1]
    return None


# value-tree environments are plain dicts DeviceId -> ValueTree

def align_i(env: dict, i: int) -> dict:
    out = {}
    for d, t in env.items():
        sub = subtree_i(t, i)
        if sub is not None:
            out[d] = sub
    return out


def align_fun(env: dict, f: Expr) -> dict:
    out = {}
    for d, t in env.items():
        sub = subtree_fun(t, f)
        if sub is not None:
            out[d] = sub
    return out


def env_roots(env: dict) -> dict:
    return {d: t.root for d, t in env.items()}


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class EvalContext:
    device: int
    sensors: SensorState = dc_field(default_factory=SensorState)
    defs: dict = dc_field(default_factory=dict)  # name -> Def
    fuel: int = DEFAULT_FUEL
    rng: object = None

    def tick(self):
        if self.fuel <= 0:
            raise FuelExhausted(f"evaluation fuel exhausted at device {self.device}")
        self.fuel -= 1


def _fun_parts(ctx: EvalContext, f: Expr):
    if isinstance(f, Lambda):
        return f.params, f.body
    if isinstance(f, DefName):
        d = ctx.defs.get(f.name)
        if d is None:
            raise MalformedEnv(f"unknown function name {f.name!r}")
        return d.params, d.body
    raise EvalError(f"not a function value: {f!r}")


def eval_expr(ctx: EvalContext, env: dict, e: Expr) -> ValueTree:
    ctx.tick()
    match e:
        case FieldVal():
            allowed = set(env) | {ctx.device}
            return leaf(mkfield([(d, v) for d, v in e.entries if d in allowed]))
        case Data(args=args) if not is_value(e):
            # constructor over unevaluated arguments: evaluate each against
            # its aligned environment, collect a tree per argument
            kids = tuple(
                eval_expr(ctx, align_i(env, i), a) for i, a in enumerate(args, 1)
            )
            return ValueTree(Data(e.ctor, tuple(k.root for k in kids)), kids)
        case _ if is_value(e):
            return leaf(e)
        case Var(name=n):
            raise EvalError(f"unbound variable {n!r} at runtime")
        case Apply(fn=fe, args=args):
            kids = [eval_expr(ctx, align_i(env, i), a) for i, a in enumerate(args, 1)]
            ft = eval_expr(ctx, align_i(env, len(args) + 1), fe)
            f = ft.root
            if isinstance(f, Builtin):
                opctx = OpContext(
                    device=ctx.device,
                    env_domain=frozenset(env),
                    sensors=ctx.sensors,
                    call=lambda g, vs: apply_function(ctx, g, vs),
                    rng=ctx.rng,
                )
                v = TABLE.eval(f.name, opctx, [k.root for k in kids])
                return ValueTree(v, (*kids, ft))
            params, body = _fun_parts(ctx, f)
            if len(params) != len(kids):
                raise EvalError(
                    f"function {f!r} takes {len(params)} argument(s), got {len(kids)}"
                )
            inst = substitute(body, dict(zip(params, (k.root for k in kids))))
            bt = eval_expr(ctx, align_fun(env, f), inst)
            return ValueTree(bt.root, (*kids, ft, bt))
        case Nbr(body=b):
            nbr_env = align_i(env, 1)
            bt = eval_expr(ctx, nbr_env, b)
            phi = env_roots(nbr_env)
            phi[ctx.device] = bt.root
            return ValueTree(mkfield(phi), (bt,))
        case Rep(init=e1, var=x, body=e2):
            t1 = eval_expr(ctx, align_i(env, 1), e1)
            prev_env = align_i(env, 2)
            if ctx.device in env:
                if ctx.device not in prev_env:
                    raise MalformedEnv(
                        f"device {ctx.device} has no stored rep state in its own tree"
                    )
                l0 = prev_env[ctx.device].root
            else:
                l0 = t1.root
            t2 = eval_expr(ctx, prev_env, substitute(e2, {x: l0}))
            return ValueTree(t2.root, (t1, t2))
    raise EvalError(f"cannot evaluate {e!r}")


def apply_function(ctx: EvalContext, f: Expr, args) -> Expr:
    """Apply a function value to argument values w.r.t. the empty
    environment (the map-hood/fold-hood convention)."""
    t = eval_expr(ctx, {}, Apply(f, tuple(args)))
    return t.root


def evaluate_main(program: Program, device: int, env: dict,
                  sensors: SensorState = None, fuel: int = DEFAULT_FUEL,
                  rng=None) -> ValueTree:
    ctx = EvalContext(
        device=device,
        sensors=sensors or SensorState(),
        defs={d.name: d for d in program.defs},
        fuel=fuel,
        rng=rng,
    )
    return eval_expr(ctx, env, program.main)


# ---------------------------------------------------------------------------
# well-formedness of stored trees (shape check per rule)

def well_formed(e: Expr, t: ValueTree, defs: dict) -> bool:
    match e:
        case _ if is_value(e) or isinstance(e, (Var, FieldVal, Lambda)):
            # a lambda with free variables is still a leaf: evaluation
            # substitutes values for them and stores the closed function
            return not t.children
        case Data(args=args):
            return len(t.children) == len(args) and all(
                well_formed(a, k, defs) for a, k in zip(args, t.children)
            )
        case Nbr(body=b):
            return len(t.children) == 1 and well_formed(b, t.children[0], defs)
        case Rep(body=e2):
            return (
                len(t.children) == 2
                and well_formed(e2, t.children[1], defs)
            )
        case Apply(fn=fe, args=args):
            n = len(args)
            if len(t.children) == n + 1:
                return (
                    isinstance(t.children[n].root, Builtin)
                    and all(well_formed(a, k, defs) for a, k in zip(args, t.children))
                    and well_formed(fe, t.children[n], defs)
                )
            if len(t.children) == n + 2:
                f = t.children[n].root
                if not isinstance(f, (Lambda, DefName)):
                    return False
                if isinstance(f, Lambda):
                    body = f.body
                elif f.name in defs:
                    body = defs[f.name].body
                else:
                    return False
                return (
                    all(well_formed(a, k, defs) for a, k in zip(args, t.children))
                    and well_formed(fe, t.children[n], defs)
                    and well_formed(body, t.children[n + 1], defs)
                )
            return False
    return False


# ---------------------------------------------------------------------------
# serialization: values and trees as canonical JSON

def value_to_json(v: Expr):
    from .parser import pretty

    match v:
        case Data(ctor=c, args=args):
            if isinstance(c, float):
                if c != c:
                    return {"num": "nan"}
                if c == float("inf"):
                    return {"num": "inf"}
                if c == float("-inf"):
                    return {"num": "-inf"}
                return {"num": c}
            if c == "True" or c == "False":
                return {"bool": c == "True"}
            return {"data": c, "args": [value_to_json(a) for a in args]}
        case FieldVal(entries=ent):
            return {"field": [[d, value_to_json(x)] for d, x in ent]}
        case Lambda() | Builtin() | DefName():
            return {"fun": pretty(v)}
    raise ValueError(f"not a serializable value: {v!r}")


def value_from_json(j, defs=()) -> Expr:
    from .ast import boolean, num
    from .parser import parse_expr

    if "num" in j:
        x = j["num"]
        if x == "nan":
            return num(float("nan"))
        if x == "inf":
            return num(float("inf"))
        if x == "-inf":
            return num(float("-inf"))
        return num(float(x))
    if "bool" in j:
        return boolean(bool(j["bool"]))
    if "data" in j:
        return Data(j["data"], tuple(value_from_json(a, defs) for a in j["args"]))
    if "field" in j:
        return mkfield([(int(d), value_from_json(x, defs)) for d, x in j["field"]])
    if "fun" in j:
        return parse_expr(j["fun"], defs=defs)
    raise ValueError(f"not a value record: {j!r}")


def tree_to_json(t: ValueTree):
    out = {"root": value_to_json(t.root)}
    if t.children:
        out["children"] = [tree_to_json(c) for c in t.children]
    return out


def tree_from_json(j, defs=()) -> ValueTree:
    return ValueTree(
        value_from_json(j["root"], defs),
        tuple(tree_from_json(c, defs) for c in j.get("children", ())),
    )


def value_to_text(v: Expr) -> str:
    """Compact single-token rendering for traces and CSV cells."""
    from .parser import show_num

    match v:
        case Data(ctor=c, args=()) if isinstance(c, float):
            return show_num(c)
        case Data(ctor=c, args=()):
            return c
        case _:
            return json.dumps(value_to_json(v), separators=(",", ":"), sort_keys=True)
