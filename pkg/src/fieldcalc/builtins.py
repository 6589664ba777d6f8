"""Built-in operators: type schemes, operational semantics, decoration.

The table makes three families of names available:

  - constructors (True, False, numerals, Pair, Null, Cons) handled by
    the typer and evaluator directly, with schemes looked up here;
  - pure operators and the *-hood aggregators;
  - sensors (sns-*, nbr-range, uid), whose results come from the
    SensorState threaded through OpContext.

Decorated names like +[f,f] or mux[f,f,l] are derived mechanically:
arguments flagged f and the result are promoted to neighbouring-field
types, remaining type variables are re-sorted to local return types,
and evaluation applies the base operator pointwise over the domain,
broadcasting the l-flagged arguments. The derived schemes coincide with
the listed ones for +[f,f], Pair[f,f], Pair[l,f], <[f,l], mux[f,f,l].

Every field-valued argument of any builtin must have domain equal to
the current environment's devices plus self; this is the side condition
that makes domain alignment errors (mixing fields from differently
aligned subcomputations) detectable at the point of combination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

from .ast import (
    INF,
    Builtin,
    Data,
    DefName,
    Expr,
    FieldVal,
    Lambda,
    as_bool,
    boolean,
    is_num,
    mkfield,
    num,
)
from .typer import Arrow, FieldT, Scheme, Sort, TVar, parse_scheme


class EvalError(Exception):
    """Semantic failure during evaluation (the stuck states of the calculus)."""


class DomainError(EvalError):
    pass


class ArityError(EvalError):
    pass


class SensorError(EvalError):
    pass


# ---------------------------------------------------------------------------
# value equality and ordering

def value_equal(a: Expr, b: Expr) -> bool:
    """The builtin `=`: IEEE on numbers (NaN is not equal to itself),
    structural on data, syntactic identity on functions, pointwise on
    neighbouring fields."""
    if isinstance(a, Data) and isinstance(b, Data):
        if isinstance(a.ctor, float) or isinstance(b.ctor, float):
            return (
                isinstance(a.ctor, float)
                and isinstance(b.ctor, float)
                and a.ctor == b.ctor  # IEEE: NaN != NaN
            )
        if a.ctor != b.ctor or len(a.args) != len(b.args):
            return False
        return all(value_equal(x, y) for x, y in zip(a.args, b.args))
    if isinstance(a, FieldVal) and isinstance(b, FieldVal):
        if a.domain() != b.domain():
            return False
        bm = b.mapping()
        return all(value_equal(v, bm[d]) for d, v in a.entries)
    if isinstance(a, (Lambda, Builtin, DefName)) and isinstance(b, (Lambda, Builtin, DefName)):
        return a == b  # syntactic identity, spans ignored
    return False


_CTOR_RANK = {"False": 0, "True": 1, "Null": 0, "Cons": 1}


def cmp_values(a: Expr, b: Expr) -> int:
    """Total order used by min-hood and friends. Numbers order as usual
    with NaN greatest (so NaN markers lose against real values), booleans
    as False < True, structured data lexicographically. Functions have no
    ordering."""
    if isinstance(a, (Lambda, Builtin, DefName)) or isinstance(b, (Lambda, Builtin, DefName)):
        raise EvalError("values of function type cannot be ordered")
    if isinstance(a, FieldVal) or isinstance(b, FieldVal):
        raise EvalError("neighbouring field values cannot be ordered")
    an, bn = is_num(a), is_num(b)
    if an != bn:
        return -1 if an else 1  # ill-typed mix; keep it deterministic
    if an:
        x, y = a.ctor, b.ctor
        xn, yn = math.isnan(x), math.isnan(y)
        if xn or yn:
            return 0 if xn and yn else (1 if xn else -1)
        return 0 if x == y else (-1 if x < y else 1)
    ka = (_CTOR_RANK.get(a.ctor, 0), a.ctor)
    kb = (_CTOR_RANK.get(b.ctor, 0), b.ctor)
    if ka != kb:
        return -1 if ka < kb else 1
    for x, y in zip(a.args, b.args):
        c = cmp_values(x, y)
        if c:
            return c
    la, lb = len(a.args), len(b.args)
    return 0 if la == lb else (-1 if la < lb else 1)


def _min_value(values):
    best = None
    for v in values:
        if best is None or cmp_values(v, best) < 0:
            best = v
    return best


# ---------------------------------------------------------------------------
# evaluation context

@dataclass(frozen=True)
class SensorState:
    """Per-device sensor readings for one firing instant.

    local maps sensor name to a local value; nbr maps relational sensor
    name to a per-neighbour map (nbr-range distances, in particular).
    """

    local: dict = dc_field(default_factory=dict)
    nbr: dict = dc_field(default_factory=dict)


@dataclass
class OpContext:
    device: int
    env_domain: frozenset
    sensors: SensorState
    call: Optional[Callable] = None  # apply a function value w.r.t. empty env
    rng: object = None  # random.Random for seeded pick-hood, else least-id

    @property
    def domain(self) -> frozenset:
        return self.env_domain | {self.device}


def _need_num(v: Expr, who: str) -> float:
    if not is_num(v):
        raise EvalError(f"{who} expects numbers, got {v!r}")
    return v.ctor


def _need_field(v: Expr, who: str) -> FieldVal:
    if not isinstance(v, FieldVal):
        raise EvalError(f"{who} expects a neighbouring field value, got {v!r}")
    return v


def _need_fun(v: Expr, who: str) -> Expr:
    if not isinstance(v, (Lambda, Builtin, DefName)):
        raise EvalError(f"{who} expects a function value, got {v!r}")
    return v


# ---------------------------------------------------------------------------
# operator implementations

def op_add(ctx, args):
    return num(_need_num(args[0], "+") + _need_num(args[1], "+"))


def op_sub(ctx, args):
    return num(_need_num(args[0], "-") - _need_num(args[1], "-"))


def op_mul(ctx, args):
    return num(_need_num(args[0], "*") * _need_num(args[1], "*"))


def op_and(ctx, args):
    return boolean(as_bool(args[0]) and as_bool(args[1]))


def op_eq(ctx, args):
    return boolean(value_equal(args[0], args[1]))


def op_lt(ctx, args):
    a, b = args
    if is_num(a) and is_num(b):
        return boolean(a.ctor < b.ctor)  # IEEE: NaN comparisons are false
    return boolean(cmp_values(a, b) < 0)


def op_mux(ctx, args):
    return args[1] if as_bool(args[0]) else args[2]


def op_fst(ctx, args):
    v = args[0]
    if isinstance(v, Data) and v.ctor == "Pair":
        return v.args[0]
    raise EvalError(f"fst expects a pair, got {v!r}")


def op_snd(ctx, args):
    v = args[0]
    if isinstance(v, Data) and v.ctor == "Pair":
        return v.args[1]
    raise EvalError(f"snd expects a pair, got {v!r}")


def op_head(ctx, args):
    v = args[0]
    if isinstance(v, Data) and v.ctor == "Cons":
        return v.args[0]
    raise EvalError("head of an empty or non-list value")


def op_tail(ctx, args):
    v = args[0]
    if isinstance(v, Data) and v.ctor == "Cons":
        return v.args[1]
    raise EvalError("tail of an empty or non-list value")


def op_min_hood(ctx, args):
    phi = _need_field(args[0], "min-hood")
    return _min_value(v for _, v in phi.entries)


def op_min_hood_plus(ctx, args):
    phi = _need_field(args[0], "min-hood+")
    rest = [v for d, v in phi.entries if d != ctx.device]
    if not rest:
        # isolated device: neutral element of min over num
        return num(INF)
    return _min_value(rest)


def op_sum_hood_plus(ctx, args):
    phi = _need_field(args[0], "sum-hood+")
    total = 0.0
    for d, v in phi.entries:
        if d != ctx.device:
            total += _need_num(v, "sum-hood+")
    return num(total)


def op_pick_hood(ctx, args):
    phi = _need_field(args[0], "pick-hood")
    if not phi.entries:
        raise EvalError("pick-hood on an empty field")
    if ctx.rng is not None:
        return ctx.rng.choice([v for _, v in phi.entries])
    return phi.entries[0][1]  # entries sorted by device id; least id wins


def op_map_hood(ctx, args):
    f = _need_fun(args[0], "map-hood")
    fields = [_need_field(a, "map-hood") for a in args[1:]]
    if ctx.call is None:
        raise EvalError("map-hood needs a function applier")
    out = []
    for d in sorted(ctx.domain):
        out.append((d, ctx.call(f, [phi.get(d) for phi in fields])))
    return mkfield(out)


def op_fold_hood(ctx, args):
    f = _need_fun(args[0], "fold-hood")
    phi = _need_field(args[1], "fold-hood")
    if ctx.call is None:
        raise EvalError("fold-hood needs a function applier")
    vals = [v for _, v in phi.entries]  # ascending device id
    acc = vals[0]
    for v in vals[1:]:
        acc = ctx.call(f, [acc, v])
    return acc


def op_uid(ctx, args):
    return num(ctx.device)


def op_nbr_range(ctx, args):
    ranges = ctx.sensors.nbr.get("nbr-range")
    if ranges is None:
        raise SensorError(f"nbr-range not available at device {ctx.device}")
    out = []
    for d in sorted(ctx.domain):
        if d not in ranges:
            raise SensorError(f"nbr-range has no reading for neighbour {d} at device {ctx.device}")
        out.append((d, num(ranges[d])))
    return mkfield(out)


def _make_sns(name: str):
    def op(ctx, args):
        try:
            return ctx.sensors.local[name]
        except KeyError:
            raise SensorError(f"sensor {name} not available at device {ctx.device}") from None

    return op


def _ctor_op(name: str):
    def op(ctx, args):
        return Data(name, tuple(args))

    return op


# ---------------------------------------------------------------------------
# the table

@dataclass(frozen=True)
class BuiltinEntry:
    name: str
    scheme: Scheme
    op: Callable
    pure: bool


_DECORATABLE = {"+", "-", "*", "and", "<", "=", "mux", "fst", "snd", "head", "tail", "Pair", "Cons"}


def _map_hood_scheme(n: int) -> Scheme:
    args = ", ".join(f"s{i}" for i in range(1, n + 1))
    fields = ", ".join(f"field(s{i})" for i in range(1, n + 1))
    return parse_scheme(f"forall {args}, s0. (({args}) -> s0, {fields}) -> field(s0)")


MAP_HOOD_MAX_ARITY = 4


class BuiltinTable:
    def __init__(self):
        self._entries: dict = {}
        self._ctor_entries: dict = {}
        self._decorated: dict = {}

    def add(self, name: str, scheme_text: str, op: Callable, pure: bool = True):
        self._entries[name] = BuiltinEntry(name, parse_scheme(scheme_text), op, pure)

    def add_ctor(self, name: str, scheme_text: str):
        self._ctor_entries[name] = BuiltinEntry(name, parse_scheme(scheme_text), _ctor_op(name), True)

    def base_names(self):
        return set(self._entries)

    def entry(self, name: str) -> Optional[BuiltinEntry]:
        if name in self._entries:
            return self._entries[name]
        if "[" in name:
            if name not in self._decorated:
                self._decorated[name] = self._derive_decorated(name)
            return self._decorated[name]
        return None

    def is_builtin_name(self, name: str, arity: Optional[int] = None) -> bool:
        if name == "map-hood":
            return arity is None or 2 <= arity <= MAP_HOOD_MAX_ARITY + 1
        return self.entry(name) is not None

    def scheme(self, name: str, arity: Optional[int] = None) -> Optional[Scheme]:
        if name == "map-hood":
            n = 1 if arity is None else arity - 1
            if not 1 <= n <= MAP_HOOD_MAX_ARITY:
                return None
            return _map_hood_scheme(n)
        e = self.entry(name)
        return e.scheme if e else None

    def _derive_decorated(self, name: str) -> Optional[BuiltinEntry]:
        base_name, _, deco = name.partition("[")
        if not deco.endswith("]"):
            return None
        flags = deco[:-1].split(",")
        if not all(f in ("f", "l") for f in flags) or "f" not in flags:
            return None
        if base_name not in _DECORATABLE:
            return None
        base = self._entries.get(base_name) or self._ctor_entries.get(base_name)
        if base is None:
            return None
        body = base.scheme.body
        if not isinstance(body, Arrow) or len(body.args) != len(flags):
            return None
        if any(isinstance(t, FieldT) for t in (*body.args, body.res)):
            return None
        new_args = tuple(
            FieldT(t) if flag == "f" else t for t, flag in zip(body.args, flags)
        )
        scheme = Scheme(
            tuple((vid, Sort.S) for vid, _ in base.scheme.qvars),
            Arrow(new_args, FieldT(body.res)),
        )
        base_op = base.op

        def op(ctx, args, _flags=tuple(flags), _op=base_op):
            out = []
            for d in sorted(ctx.domain):
                point_args = [
                    a.get(d) if flag == "f" else a for a, flag in zip(args, _flags)
                ]
                out.append((d, _op(ctx, point_args)))
            return mkfield(out)

        return BuiltinEntry(name, scheme, op, base.pure)

    def eval(self, name: str, ctx: OpContext, args) -> Expr:
        e = self.entry(name)
        if e is None:
            raise EvalError(f"unknown builtin {name!r}")
        if name == "map-hood":
            if not 2 <= len(args) <= MAP_HOOD_MAX_ARITY + 1:
                raise ArityError(
                    f"map-hood takes 2 to {MAP_HOOD_MAX_ARITY + 1} arguments, got {len(args)}"
                )
        else:
            want = len(e.scheme.body.args) if isinstance(e.scheme.body, Arrow) else 0
            if len(args) != want:
                raise ArityError(f"{name} takes {want} argument(s), got {len(args)}")
        expected = ctx.domain
        for a in args:
            if isinstance(a, FieldVal) and a.domain() != expected:
                raise DomainError(
                    f"field argument of {name} has domain {sorted(a.domain())}, "
                    f"expected {sorted(expected)} at device {ctx.device}"
                )
        result = e.op(ctx, list(args))
        if isinstance(result, FieldVal):
            assert result.domain() == expected, f"{name} produced a misaligned field"
        return result

    def is_pure(self, name: str) -> bool:
        if name == "map-hood":
            return True
        e = self.entry(name)
        return bool(e and e.pure)


def _build_table() -> BuiltinTable:
    t = BuiltinTable()
    t.add_ctor("True", "() -> bool")
    t.add_ctor("False", "() -> bool")
    t.add_ctor("Null", "forall s1. () -> list(s1)")
    t.add_ctor("Pair", "forall s1, s2. (s1, s2) -> pair(s1, s2)")
    t.add_ctor("Cons", "forall s1. (s1, list(s1)) -> list(s1)")

    t.add("fst", "forall s1, s2. (pair(s1, s2)) -> s1", op_fst)
    t.add("snd", "forall s1, s2. (pair(s1, s2)) -> s2", op_snd)
    t.add("head", "forall s1. (list(s1)) -> s1", op_head)
    t.add("tail", "forall s1. (list(s1)) -> list(s1)", op_tail)
    t.add("min-hood", "forall s1. (field(s1)) -> s1", op_min_hood)
    t.add("min-hood+", "forall s1. (field(s1)) -> s1", op_min_hood_plus)
    t.add("sum-hood+", "(field(num)) -> num", op_sum_hood_plus)
    t.add("pick-hood", "forall s1. (field(s1)) -> s1", op_pick_hood)
    t.add("map-hood", "forall s1, s0. ((s1) -> s0, field(s1)) -> field(s0)", op_map_hood)
    t.add("fold-hood", "forall s1. ((s1, s1) -> s1, field(s1)) -> s1", op_fold_hood)
    t.add("mux", "forall s1. (bool, s1, s1) -> s1", op_mux)
    t.add("and", "(bool, bool) -> bool", op_and)
    t.add("*", "(num, num) -> num", op_mul)
    t.add("-", "(num, num) -> num", op_sub)
    t.add("+", "(num, num) -> num", op_add)
    t.add("=", "forall t1. (t1, t1) -> bool", op_eq)
    t.add("<", "forall s1. (s1, s1) -> bool", op_lt)

    t.add("uid", "() -> num", op_uid, pure=False)
    t.add("nbr-range", "() -> field(num)", op_nbr_range, pure=False)
    for name, ty in [
        ("sns-range", "() -> num"),
        ("sns-injection-point", "() -> bool"),
        ("sns-injected-fun", "() -> (() -> num)"),
        ("sns-injected-function", "() -> (() -> num)"),
        ("sns-num", "() -> num"),
        ("sns-fun", "() -> (() -> num)"),
        ("sns-patron", "() -> bool"),
    ]:
        t.add(name, ty, _make_sns(name), pure=False)
    return t


TABLE = _build_table()


def ctor_scheme(ctor, arity: int) -> Optional[Scheme]:
    """Scheme of a data constructor, or None if unknown/wrong arity."""
    if isinstance(ctor, float):
        return parse_scheme("() -> num") if arity == 0 else None
    e = TABLE._ctor_entries.get(ctor)
    if e is None:
        return None
    want = len(e.scheme.body.args)
    return e.scheme if arity == want else None


def builtin_eval(name, device, env_domain, sensors, args, call=None, rng=None):
    """Flat-argument wrapper over the table (used by tests and the
    denotational side, which lifts it pointwise per event)."""
    ctx = OpContext(device=device, env_domain=frozenset(env_domain), sensors=sensors, call=call, rng=rng)
    return TABLE.eval(name, ctx, args)
