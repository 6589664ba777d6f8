"""Expression and value syntax for the higher-order field calculus.

Expressions and values share one tree representation: values are the closed
expressions built from constructors, builtin names, function names and closed
lambdas, plus neighbouring-field literals (which can only arise at runtime).
All nodes are frozen, hashable, and compare structurally ignoring source spans,
so alignment keys and map keys can use nodes directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

DeviceId = int

# numeric constructors are canonicalised floats: -0.0 folds into 0.0 and all
# NaNs are the one positive quiet NaN, so structural equality can be a real
# equivalence relation with a consistent hash
NAN = float("nan")
INF = float("inf")


def canon_num(x: float) -> float:
    x = float(x)
    if math.isnan(x):
        return NAN
    if x == 0.0:
        return 0.0
    return x


def num_eq(a: float, b: float) -> bool:
    """Structural equality on numeric constructors (NaN equals itself)."""
    if math.isnan(a) or math.isnan(b):
        return math.isnan(a) and math.isnan(b)
    return a == b


def num_key(a: float):
    return "nan" if math.isnan(a) else a


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int = 0
    end_col: int = 0


def _span_field():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Builtin:
    """A builtin operator name, possibly decorated (e.g. '+[f,f]')."""

    name: str
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class DefName:
    """Reference to a declared function; a value by itself."""

    name: str
    span: Optional[Span] = _span_field()


@dataclass(frozen=True, eq=False)
class Data:
    """Constructor expression c(e1, ..., en).

    ctor is a string ('True', 'Pair', ...) or a float for numerals. A Data
    node is a value exactly when all arguments are local values.
    """

    ctor: Union[str, float]
    args: tuple = ()
    span: Optional[Span] = _span_field()

    def __post_init__(self):
        if isinstance(self.ctor, (int, float)) and not isinstance(self.ctor, bool):
            object.__setattr__(self, "ctor", canon_num(self.ctor))

    def __eq__(self, other):
        if not isinstance(other, Data):
            return NotImplemented
        if isinstance(self.ctor, float) != isinstance(other.ctor, float):
            return False
        if isinstance(self.ctor, float):
            if not num_eq(self.ctor, other.ctor):
                return False
        elif self.ctor != other.ctor:
            return False
        return self.args == other.args

    def __hash__(self):
        c = num_key(self.ctor) if isinstance(self.ctor, float) else self.ctor
        return hash((Data, c, self.args))


@dataclass(frozen=True)
class Lambda:
    params: tuple
    body: "Expr"
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Apply:
    fn: "Expr"
    args: tuple
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Rep:
    init: "Expr"
    var: str
    body: "Expr"
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Nbr:
    body: "Expr"
    span: Optional[Span] = _span_field()


@dataclass(frozen=True, eq=False)
class FieldVal:
    """Neighbouring field value phi: a finite map from device ids to local
    values. Runtime-only; the parser rejects it in source programs."""

    entries: tuple  # ((DeviceId, LocalValue), ...) sorted by device id
    span: Optional[Span] = _span_field()

    def __post_init__(self):
        ent = tuple(sorted(self.entries, key=lambda kv: kv[0]))
        object.__setattr__(self, "entries", ent)

    def mapping(self) -> dict:
        return dict(self.entries)

    def domain(self) -> frozenset:
        return frozenset(d for d, _ in self.entries)

    def get(self, d: DeviceId):
        for dd, v in self.entries:
            if dd == d:
                return v
        raise KeyError(d)

    def __eq__(self, other):
        if not isinstance(other, FieldVal):
            return NotImplemented
        return self.entries == other.entries

    def __hash__(self):
        return hash((FieldVal, self.entries))


Expr = Union[Var, Builtin, DefName, Data, Lambda, Apply, Rep, Nbr, FieldVal]


@dataclass(frozen=True)
class Def:
    name: str
    params: tuple
    body: Expr
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Program:
    defs: tuple
    main: Expr

    def decl(self, name: str) -> Def:
        for d in self.defs:
            if d.name == name:
                return d
        raise KeyError(name)

    def decls(self) -> dict:
        return {d.name: d for d in self.defs}


# ---------------------------------------------------------------------------
# constructors and small helpers

TRUE = Data("True")
FALSE = Data("False")
NULL = Data("Null")


def num(x: float) -> Data:
    return Data(canon_num(x))


def boolean(b: bool) -> Data:
    return TRUE if b else FALSE


def is_num(v) -> bool:
    return isinstance(v, Data) and isinstance(v.ctor, float)


def is_bool(v) -> bool:
    return isinstance(v, Data) and v.ctor in ("True", "False")


def as_bool(v) -> bool:
    if not is_bool(v):
        raise ValueError(f"not a boolean value: {v!r}")
    return v.ctor == "True"


def mkfield(mapping) -> FieldVal:
    return FieldVal(tuple(mapping.items()) if isinstance(mapping, dict) else tuple(mapping))


# ---------------------------------------------------------------------------
# value predicates

def is_local_value(e: Expr) -> bool:
    """ell ::= b | d | closed lambda | c(ell...)"""
    match e:
        case Builtin() | DefName():
            return True
        case Lambda():
            return not free_vars(e)
        case Data(args=args):
            return all(is_local_value(a) for a in args)
        case _:
            return False


def is_value(e: Expr) -> bool:
    """v ::= ell | phi"""
    if isinstance(e, FieldVal):
        return all(is_local_value(v) for _, v in e.entries)
    return is_local_value(e)


def is_function_value(e: Expr) -> bool:
    match e:
        case Builtin() | DefName():
            return True
        case Lambda():
            return not free_vars(e)
        case _:
            return False


# ---------------------------------------------------------------------------
# free variables and substitution

def free_vars(e: Expr) -> frozenset:
    match e:
        case Var(name=n):
            return frozenset([n])
        case Builtin() | DefName() | FieldVal():
            return frozenset()
        case Data(args=args):
            return frozenset().union(*(free_vars(a) for a in args)) if args else frozenset()
        case Lambda(params=ps, body=b):
            return free_vars(b) - frozenset(ps)
        case Apply(fn=f, args=args):
            out = free_vars(f)
            for a in args:
                out |= free_vars(a)
            return out
        case Rep(init=i, var=x, body=b):
            return free_vars(i) | (free_vars(b) - frozenset([x]))
        case Nbr(body=b):
            return free_vars(b)
    raise TypeError(f"not an expression: {e!r}")


def substitute(e: Expr, subst: dict) -> Expr:
    """Substitute closed values for variables.

    Only closed values are ever substituted (call-by-value), so no capture
    avoidance is needed beyond respecting binders.
    """
    if not subst:
        return e
    match e:
        case Var(name=n):
            return subst.get(n, e)
        case Builtin() | DefName() | FieldVal():
            return e
        case Data(ctor=c, args=args):
            if not args:
                return e
            return Data(c, tuple(substitute(a, subst) for a in args), span=e.span)
        case Lambda(params=ps, body=b):
            inner = {k: v for k, v in subst.items() if k not in ps}
            if not inner:
                return e
            return Lambda(ps, substitute(b, inner), span=e.span)
        case Apply(fn=f, args=args):
            return Apply(substitute(f, subst), tuple(substitute(a, subst) for a in args), span=e.span)
        case Rep(init=i, var=x, body=b):
            inner = {k: v for k, v in subst.items() if k != x}
            return Rep(substitute(i, subst), x, substitute(b, inner), span=e.span)
        case Nbr(body=b):
            return Nbr(substitute(b, subst), span=e.span)
    raise TypeError(f"not an expression: {e!r}")


def syntactic_equal(a: Expr, b: Expr) -> bool:
    """Structural identity, the function-equality of the calculus.

    Two function values are the same function iff they are the same syntax
    tree (no alpha conversion). Spans are ignored by construction.
    """
    return a == b


def subexpressions(e: Expr) -> Iterator[Expr]:
    yield e
    match e:
        case Data(args=args) | Apply(args=args):
            if isinstance(e, Apply):
                yield from subexpressions(e.fn)
            for a in args:
                yield from subexpressions(a)
        case Lambda(body=b) | Nbr(body=b):
            yield from subexpressions(b)
        case Rep(init=i, body=b):
            yield from subexpressions(i)
            yield from subexpressions(b)
        case _:
            pass


def uses_builtin(e: Expr, names) -> bool:
    names = set(names)
    return any(isinstance(s, Builtin) and s.name in names for s in subexpressions(e))


# ---------------------------------------------------------------------------
# if-sugar

def desugar_if(guard: Expr, then: Expr, els: Expr, span: Optional[Span] = None) -> Apply:
    """if(e0){e1}else{e2} becomes
    mux(e0, ()=>snd(Pair(True,e1)), ()=>snd(Pair(False,e2)))().

    The True/False tags make the two thunks distinct function values, so the
    branches never align with each other across devices.
    """
    def thunk(tag: Data, branch: Expr) -> Lambda:
        return Lambda((), Apply(Builtin("snd"), (Data("Pair", (tag, branch)),)))

    call = Apply(Builtin("mux"), (guard, thunk(TRUE, then), thunk(FALSE, els)), span=span)
    return Apply(call, (), span=span)
