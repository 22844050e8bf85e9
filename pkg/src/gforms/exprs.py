"""Expression trees for chart coefficients: parsing, evaluation, differentiation.

Grammar (whitespace ignored)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' INTEGER)?
    atom   := NUMBER | 'pi' | 'x'INDEX | '(' expr ')'
            | ('sin' | 'cos' | 'exp' | 'sqrt') '(' expr ')'
            | 'atan2' '(' expr ',' expr ')'
            | 'bump' '(' NUMBER ';' NUMBER (',' NUMBER)* (';' expr (',' expr)*)? ')'

``bump(r; c1,...,ck; u1,...,uk)`` is ``exp(1 - r^2/(r^2 - |u-c|^2))`` inside
the open ball of radius ``r`` about ``c`` and 0 elsewhere.  Without the
argument group the arguments default to ``x1..xk``.

Trees are immutable and may share subtrees; evaluation and differentiation
memoize on node identity so shared subtrees are visited once.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .value_space import ValueSpace, from_real_parts


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EvalError(ArithmeticError):
    pass


# Points closer to the sphere than this (relative to r^2) count as outside;
# there the bump and all its derivatives underflow to exactly zero anyway.
_BALL_MARGIN = 1e-12


class Expr:
    __slots__ = ()
    prec = 5

    def children(self) -> tuple["Expr", ...]:
        return ()

    def __str__(self):
        return _fmt(self)

    def __repr__(self):
        return f"Expr({_fmt(self)!r})"

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __neg__(self):
        return neg(self)

    def __pow__(self, n: int):
        return power(self, n)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = float(value)


class Var(Expr):
    __slots__ = ("index",)

    def __init__(self, index: int):
        if index < 1:
            raise ValueError("variable indices start at 1")
        self.index = index


class Add(Expr):
    __slots__ = ("a", "b")
    prec = 1

    def __init__(self, a, b):
        self.a, self.b = a, b

    def children(self):
        return (self.a, self.b)


class Sub(Add):
    __slots__ = ()


class Mul(Expr):
    __slots__ = ("a", "b")
    prec = 2

    def __init__(self, a, b):
        self.a, self.b = a, b

    def children(self):
        return (self.a, self.b)


class Div(Mul):
    __slots__ = ()


class Neg(Expr):
    __slots__ = ("a",)
    prec = 3

    def __init__(self, a):
        self.a = a

    def children(self):
        return (self.a,)


class Pow(Expr):
    __slots__ = ("a", "n")
    prec = 4

    def __init__(self, a, n: int):
        if n < 0 or int(n) != n:
            raise ValueError("exponents must be nonnegative integers")
        self.a, self.n = a, int(n)

    def children(self):
        return (self.a,)


FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}


class Func(Expr):
    __slots__ = ("name", "a")

    def __init__(self, name: str, a):
        if name not in FUNCTIONS:
            raise ValueError(f"unknown function {name!r}")
        self.name, self.a = name, a

    def children(self):
        return (self.a,)


class Atan2(Expr):
    __slots__ = ("y", "x")

    def __init__(self, y, x):
        self.y, self.x = y, x

    def children(self):
        return (self.y, self.x)


class Bump(Expr):
    __slots__ = ("radius", "center", "args")

    def __init__(self, radius: float, center: Sequence[float], args: Sequence[Expr]):
        if radius <= 0:
            raise ValueError("bump radius must be positive")
        if len(center) != len(args) or not center:
            raise ValueError("bump needs one argument per center coordinate")
        self.radius = float(radius)
        self.center = tuple(float(c) for c in center)
        self.args = tuple(args)

    def children(self):
        return self.args


class Masked(Expr):
    """``body`` inside the open ball of a bump, 0 outside.

    Only produced by differentiating bumps; bodies are products of the bump
    with rational factors that blow up on the sphere.
    """

    __slots__ = ("radius", "center", "args", "body")

    def __init__(self, radius, center, args, body):
        self.radius = float(radius)
        self.center = tuple(center)
        self.args = tuple(args)
        self.body = body

    def children(self):
        return self.args + (self.body,)


ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float, np.floating, np.integer)):
        return Const(float(v))
    raise TypeError(f"cannot convert {type(v).__name__} to Expr")


def is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# -- smart constructors (constant folding only) -------------------------------


def add(a: Expr, b: Expr) -> Expr:
    if is_const(a, 0.0):
        return b
    if is_const(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if isinstance(b, Neg):
        return sub(a, b.a)
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if is_const(b, 0.0):
        return a
    if is_const(a, 0.0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if isinstance(b, Neg):
        return add(a, b.a)
    return Sub(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def mul(a: Expr, b: Expr) -> Expr:
    if is_const(a, 0.0) or is_const(b, 0.0):
        return ZERO
    if is_const(a, 1.0):
        return b
    if is_const(b, 1.0):
        return a
    if is_const(a, -1.0):
        return neg(b)
    if is_const(b, -1.0):
        return neg(a)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if isinstance(a, Neg):
        return neg(mul(a.a, b))
    if isinstance(b, Neg):
        return neg(mul(a, b.a))
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if is_const(b, 0.0):
        raise EvalError(f"division by constant zero in '{_fmt(a)} / 0'")
    if is_const(a, 0.0):
        return ZERO
    if is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value / b.value)
    return Div(a, b)


def power(a: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return a
    if isinstance(a, Const):
        return Const(a.value**n)
    return Pow(a, n)


def func(name: str, a: Expr) -> Expr:
    if isinstance(a, Const):
        with np.errstate(invalid="raise"):
            try:
                return Const(float(FUNCTIONS[name](a.value)))
            except FloatingPointError:
                raise EvalError(f"{name}({a.value}) is undefined") from None
    return Func(name, a)


def atan2(y: Expr, x: Expr) -> Expr:
    if isinstance(y, Const) and isinstance(x, Const):
        return Const(math.atan2(y.value, x.value))
    return Atan2(y, x)


def sum_exprs(terms: Sequence[Expr]) -> Expr:
    """Balanced sum, keeping tree depth logarithmic in the number of terms."""
    terms = [t for t in terms if not is_const(t, 0.0)]
    if not terms:
        return ZERO
    while len(terms) > 1:
        nxt = [add(terms[i], terms[i + 1]) for i in range(0, len(terms) - 1, 2)]
        if len(terms) % 2:
            nxt.append(terms[-1])
        terms = nxt
    return terms[0]


def linear_combination(coeffs: Sequence[float], exprs: Sequence[Expr]) -> Expr:
    return sum_exprs([mul(Const(c), e) for c, e in zip(coeffs, exprs) if c != 0.0])


def variables(n: int) -> list[Expr]:
    return [Var(i + 1) for i in range(n)]


# -- parsing -------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),;]))"
)


class _Parser:
    def __init__(self, text: str, arity: int):
        self.text = text
        self.arity = arity
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.tokens.append(("end", "", len(text)))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op: str):
        kind, val, off = self.take()
        if kind != "op" or val != op:
            shown = val if kind != "end" else "end of input"
            raise ExprSyntaxError(f"expected {op!r}, found {shown!r}", off)

    def at_op(self, *ops):
        kind, val, _ = self.peek()
        return kind == "op" and val in ops

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {val!r}", off)
        return e

    def expr(self):
        e = self.term()
        while self.at_op("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.at_op("*", "/"):
            op, off = self.take()[1:]
            rhs = self.unary()
            if op == "*":
                e = mul(e, rhs)
            else:
                if is_const(rhs, 0.0):
                    raise ExprSyntaxError("division by literal zero", off)
                e = div(e, rhs)
        return e

    def unary(self):
        if self.at_op("-"):
            self.take()
            return neg(self.unary())
        if self.at_op("+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.at_op("^"):
            self.take()
            kind, val, off = self.take()
            if kind != "num" or not val.isdigit():
                raise ExprSyntaxError("exponent must be a nonnegative integer literal", off)
            return power(base, int(val))
        return base

    def signed_number(self) -> float:
        sign = 1.0
        while self.at_op("-", "+"):
            if self.take()[1] == "-":
                sign = -sign
        kind, val, off = self.take()
        if kind == "name" and val == "pi":
            return sign * math.pi
        if kind != "num":
            raise ExprSyntaxError(f"expected a number, found {val!r}", off)
        return sign * float(val)

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if val == "pi":
                return Const(math.pi)
            m = re.fullmatch(r"x(\d+)", val)
            if m:
                idx = int(m.group(1))
                if idx < 1 or idx > self.arity:
                    raise ExprSyntaxError(
                        f"variable {val} out of range for arity {self.arity}", off
                    )
                return Var(idx)
            if val in FUNCTIONS:
                self.expect("(")
                a = self.expr()
                self.expect(")")
                return func(val, a)
            if val == "atan2":
                self.expect("(")
                y = self.expr()
                self.expect(",")
                x = self.expr()
                self.expect(")")
                return atan2(y, x)
            if val == "bump":
                return self.bump(off)
            raise ExprSyntaxError(f"unknown identifier {val!r}", off)
        shown = val if kind != "end" else "end of input"
        raise ExprSyntaxError(f"unexpected {shown!r}", off)

    def bump(self, off):
        self.expect("(")
        radius = self.signed_number()
        if radius <= 0:
            raise ExprSyntaxError("bump radius must be positive", off)
        self.expect(";")
        center = [self.signed_number()]
        while self.at_op(","):
            self.take()
            center.append(self.signed_number())
        if self.at_op(";"):
            self.take()
            args = [self.expr()]
            while self.at_op(","):
                self.take()
                args.append(self.expr())
        else:
            if len(center) > self.arity:
                raise ExprSyntaxError(
                    f"bump center has {len(center)} coordinates but arity is {self.arity}", off
                )
            args = variables(len(center))
        self.expect(")")
        if len(args) != len(center):
            raise ExprSyntaxError("bump needs as many arguments as center coordinates", off)
        return Bump(radius, center, args)


def parse(text: str, arity: int) -> Expr:
    """Parse ``text`` into an expression in the variables ``x1..x{arity}``."""
    return _Parser(text, arity).parse()


# -- printing ------------------------------------------------------------------


def _num(v: float) -> str:
    if v == math.pi:
        return "pi"
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _fmt(e: Expr) -> str:
    if isinstance(e, Const):
        return _num(e.value) if e.value >= 0 else f"({_num(e.value)})"
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, (Add, Mul)):
        if isinstance(e, Sub):
            op = "-"
        elif isinstance(e, Div):
            op = "/"
        elif isinstance(e, Add):
            op = "+"
        else:
            op = "*"
        left = _wrap(e.a, e.prec, strict=False)
        right = _wrap(e.b, e.prec, strict=isinstance(e, (Sub, Div)))
        return f"{left} {op} {right}" if isinstance(e, Add) else f"{left}{op}{right}"
    if isinstance(e, Neg):
        return f"-{_wrap(e.a, e.prec, strict=False)}"
    if isinstance(e, Pow):
        return f"{_wrap(e.a, e.prec, strict=True)}^{e.n}"
    if isinstance(e, Func):
        return f"{e.name}({_fmt(e.a)})"
    if isinstance(e, Atan2):
        return f"atan2({_fmt(e.y)}, {_fmt(e.x)})"
    if isinstance(e, (Bump, Masked)):
        c = ",".join(_num(v) for v in e.center)
        a = ",".join(_fmt(x) for x in e.args)
        if isinstance(e, Bump):
            return f"bump({_num(e.radius)}; {c}; {a})"
        return f"masked({_num(e.radius)}; {c}; {a}; {_fmt(e.body)})"
    raise TypeError(type(e).__name__)


def _wrap(e: Expr, prec: int, strict: bool) -> str:
    s = _fmt(e)
    if e.prec < prec or (strict and e.prec == prec):
        return f"({s})"
    return s


# -- evaluation ----------------------------------------------------------------


class _Evaluator:
    def __init__(self, X: np.ndarray, strict: bool):
        self.X = X
        self.n = X.shape[1]
        self.strict = strict
        self.memo: dict[int, np.ndarray | float] = {}

    def __call__(self, e: Expr):
        key = id(e)
        if key in self.memo:
            return self.memo[key]
        val = self._eval(e)
        self.memo[key] = val
        return val

    def _eval(self, e: Expr):
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Var):
            if e.index > self.X.shape[0]:
                raise EvalError(f"variable x{e.index} but point has {self.X.shape[0]} coordinates")
            return self.X[e.index - 1]
        if isinstance(e, Div):
            den = self(e.b)
            if self.strict and np.any(np.asarray(den) == 0):
                raise EvalError(f"division by zero in subexpression '{_fmt(e)}'")
            return self(e.a) / den
        if isinstance(e, Sub):
            return self(e.a) - self(e.b)
        if isinstance(e, Add):
            return self(e.a) + self(e.b)
        if isinstance(e, Mul):
            return self(e.a) * self(e.b)
        if isinstance(e, Neg):
            return -self(e.a)
        if isinstance(e, Pow):
            return self(e.a) ** e.n
        if isinstance(e, Func):
            a = self(e.a)
            if e.name == "sqrt" and self.strict and np.any(np.asarray(a) < 0):
                raise EvalError(f"square root of a negative number in '{_fmt(e)}'")
            return FUNCTIONS[e.name](a)
        if isinstance(e, Atan2):
            return np.arctan2(self(e.y), self(e.x))
        if isinstance(e, (Bump, Masked)):
            return self._ball(e)
        raise TypeError(type(e).__name__)

    def _ball(self, e):
        args = [np.broadcast_to(self(a), (self.n,)) for a in e.args]
        d2 = sum((a - c) ** 2 for a, c in zip(args, e.center))
        r2 = e.radius**2
        inside = d2 < r2 * (1.0 - _BALL_MARGIN)
        out = np.zeros(self.n)
        if not np.any(inside):
            return out
        if isinstance(e, Bump):
            out[inside] = np.exp(1.0 - r2 / (r2 - d2[inside]))
        else:
            sub_eval = _Evaluator(self.X[:, inside], self.strict)
            out[inside] = np.broadcast_to(sub_eval(e.body), (sub_eval.n,))
        return out


def _as_points(point) -> tuple[np.ndarray, bool]:
    X = np.asarray(point, dtype=np.float64)
    if X.ndim == 1:
        return X.reshape(-1, 1), True
    if X.ndim != 2:
        raise ValueError("points must be an (N,) vector or an (N, n) array")
    return X, False


def evaluate(e: Expr, point, strict: bool = True):
    """Evaluate at one point (shape ``(N,)``) or many (shape ``(N, n)``).

    With ``strict=False`` division by zero and negative square roots yield
    ``inf``/``nan`` instead of raising.
    """
    X, single = _as_points(point)
    if strict:
        val = _Evaluator(X, True)(e)
    else:
        with np.errstate(all="ignore"):
            val = _Evaluator(X, False)(e)
    val = np.broadcast_to(np.asarray(val, dtype=np.float64), (X.shape[1],))
    return float(val[0]) if single else np.array(val)


def evaluate_many(exprs: Sequence[Expr], point, strict: bool = True) -> np.ndarray:
    """Evaluate several expressions sharing one memo; returns shape ``(len, n)``."""
    X, single = _as_points(point)
    ev = _Evaluator(X, strict)
    with np.errstate(all="ignore") if not strict else _nullctx():
        rows = [np.broadcast_to(np.asarray(ev(e), dtype=np.float64), (X.shape[1],)) for e in exprs]
    out = np.array(rows).reshape(len(exprs), X.shape[1])
    return out[:, 0] if single else out


class _nullctx:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


# -- differentiation and substitution -------------------------------------------


def _transform(e: Expr, leaf: Callable[[Expr], Expr | None], memo: dict) -> Expr:
    key = id(e)
    if key in memo:
        return memo[key]
    out = leaf(e)
    if out is None:
        if isinstance(e, (Const, Var)):
            out = e
        elif isinstance(e, Sub):
            out = sub(_transform(e.a, leaf, memo), _transform(e.b, leaf, memo))
        elif isinstance(e, Add):
            out = add(_transform(e.a, leaf, memo), _transform(e.b, leaf, memo))
        elif isinstance(e, Div):
            out = div(_transform(e.a, leaf, memo), _transform(e.b, leaf, memo))
        elif isinstance(e, Mul):
            out = mul(_transform(e.a, leaf, memo), _transform(e.b, leaf, memo))
        elif isinstance(e, Neg):
            out = neg(_transform(e.a, leaf, memo))
        elif isinstance(e, Pow):
            out = power(_transform(e.a, leaf, memo), e.n)
        elif isinstance(e, Func):
            out = func(e.name, _transform(e.a, leaf, memo))
        elif isinstance(e, Atan2):
            out = atan2(_transform(e.y, leaf, memo), _transform(e.x, leaf, memo))
        elif isinstance(e, Bump):
            out = Bump(e.radius, e.center, [_transform(a, leaf, memo) for a in e.args])
        elif isinstance(e, Masked):
            out = Masked(
                e.radius,
                e.center,
                [_transform(a, leaf, memo) for a in e.args],
                _transform(e.body, leaf, memo),
            )
        else:
            raise TypeError(type(e).__name__)
    memo[key] = out
    return out


def substitute(e: Expr, args: Sequence[Expr]) -> Expr:
    """Replace ``x_i`` by ``args[i-1]`` (composition ``e o args``)."""
    args = [as_expr(a) for a in args]

    def leaf(node):
        if isinstance(node, Var):
            if node.index > len(args):
                raise EvalError(f"x{node.index} has no substitute ({len(args)} given)")
            return args[node.index - 1]
        return None

    return _transform(e, leaf, {})


class _Differentiator:
    def __init__(self, i: int):
        self.i = i
        self.memo: dict[int, Expr] = {}

    def __call__(self, e: Expr) -> Expr:
        key = id(e)
        if key not in self.memo:
            self.memo[key] = self._d(e)
        return self.memo[key]

    def _d(self, e: Expr) -> Expr:
        d = self
        if isinstance(e, Const):
            return ZERO
        if isinstance(e, Var):
            return ONE if e.index == self.i else ZERO
        if isinstance(e, Sub):
            return sub(d(e.a), d(e.b))
        if isinstance(e, Add):
            return add(d(e.a), d(e.b))
        if isinstance(e, Div):
            da, db = d(e.a), d(e.b)
            if is_const(db, 0.0):
                return div(da, e.b)
            return div(sub(mul(da, e.b), mul(e.a, db)), power(e.b, 2))
        if isinstance(e, Mul):
            return add(mul(d(e.a), e.b), mul(e.a, d(e.b)))
        if isinstance(e, Neg):
            return neg(d(e.a))
        if isinstance(e, Pow):
            da = d(e.a)
            if is_const(da, 0.0):
                return ZERO
            return mul(mul(Const(e.n), power(e.a, e.n - 1)), da)
        if isinstance(e, Func):
            da = d(e.a)
            if is_const(da, 0.0):
                return ZERO
            if e.name == "sin":
                return mul(func("cos", e.a), da)
            if e.name == "cos":
                return neg(mul(func("sin", e.a), da))
            if e.name == "exp":
                return mul(e, da)
            return div(da, mul(Const(2.0), e))
        if isinstance(e, Atan2):
            dy, dx = d(e.y), d(e.x)
            if is_const(dy, 0.0) and is_const(dx, 0.0):
                return ZERO
            num = sub(mul(e.x, dy), mul(e.y, dx))
            return div(num, add(power(e.x, 2), power(e.y, 2)))
        if isinstance(e, Bump):
            dargs = [d(a) for a in e.args]
            if all(is_const(da, 0.0) for da in dargs):
                return ZERO
            shifted = [sub(a, Const(c)) for a, c in zip(e.args, e.center)]
            r2 = Const(e.radius**2)
            gap = sub(r2, sum_exprs([power(s, 2) for s in shifted]))
            inner = sum_exprs([mul(s, da) for s, da in zip(shifted, dargs)])
            factor = div(mul(Const(-2.0 * e.radius**2), inner), power(gap, 2))
            return Masked(e.radius, e.center, e.args, mul(e, factor))
        if isinstance(e, Masked):
            db = d(e.body)
            if is_const(db, 0.0):
                return ZERO
            return Masked(e.radius, e.center, e.args, db)
        raise TypeError(type(e).__name__)


def diff(e: Expr, i: int) -> Expr:
    """Symbolic partial derivative with respect to ``x_i``."""
    if i < 1:
        raise ValueError("variable indices start at 1")
    return _Differentiator(i)(e)


def gradient(e: Expr, n: int) -> list[Expr]:
    return [diff(e, i + 1) for i in range(n)]


def fd_gradient(e: Expr, point, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient; a test oracle for :func:`diff`."""
    if h <= 0:
        raise ValueError("step must be positive")
    p = np.asarray(point, dtype=np.float64)
    n = p.shape[0]
    shifts = np.eye(n) * h
    X = np.concatenate([(p[:, None] + shifts), (p[:, None] - shifts)], axis=1)
    vals = evaluate(e, X)
    return (vals[:n] - vals[n:]) / (2.0 * h)


def max_variable(e: Expr) -> int:
    seen: set[int] = set()
    best = 0
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Var):
            best = max(best, node.index)
        stack.extend(node.children())
    return best


def is_polynomial(e: Expr) -> bool:
    seen: set[int] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if not isinstance(node, (Const, Var, Add, Mul, Neg, Pow)) or isinstance(node, Div):
            return False
        stack.extend(node.children())
    return True


def node_count(e: Expr) -> int:
    """Number of distinct nodes in the DAG."""
    seen: set[int] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) not in seen:
            seen.add(id(node))
            stack.extend(node.children())
    return len(seen)


# -- vector-valued coefficients --------------------------------------------------

Box = tuple[tuple[float, float], ...]


def flatten_value(v, space) -> list:
    """Accept ``[e1, e2]`` (real) or ``[[re, im], ...]`` / ``["re"]`` (complex)."""
    if isinstance(v, (str, Expr)):
        v = [v]
    v = list(v)
    if not space.is_complex:
        return v
    flat = []
    for x in v:
        if isinstance(x, (list, tuple)):
            flat.extend(x)
        else:
            flat.extend([x, ZERO])
    return flat


@dataclass(frozen=True, eq=False)
class CoefficientFn:
    """A ``space``-valued coefficient in ``arity`` chart coordinates.

    ``parts`` are real expressions for the components of the underlying real
    space: one per component for real spaces, interleaved (re, im) pairs for
    complex ones.  ``support``, when present, is a box in chart coordinates
    outside of which every part vanishes.
    """

    space: ValueSpace
    parts: tuple[Expr, ...]
    arity: int
    support: Box | None = None

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(as_expr(p) for p in self.parts))
        if len(self.parts) != self.space.real_dim:
            raise ValueError(
                f"{len(self.parts)} real parts for {self.space.scalar} space "
                f"{self.space.name} of dim {self.space.dim}"
            )
        for p in self.parts:
            if max_variable(p) > self.arity:
                raise ValueError(f"coefficient part '{p}' uses more than {self.arity} variables")

    @classmethod
    def zero(cls, space: ValueSpace, arity: int) -> "CoefficientFn":
        return cls(space, (ZERO,) * space.real_dim, arity)

    @classmethod
    def scalar(cls, e: Expr, arity: int, space: ValueSpace | None = None) -> "CoefficientFn":
        from .value_space import scalar_space

        space = space or scalar_space()
        parts = (e,) if not space.is_complex else (e, ZERO)
        return cls(space, parts, arity)

    @property
    def is_zero(self) -> bool:
        return all(is_const(p, 0.0) for p in self.parts)

    def evaluate_parts(self, X, strict: bool = True) -> np.ndarray:
        return evaluate_many(self.parts, X, strict)

    def evaluate(self, X, strict: bool = True) -> np.ndarray:
        """Values in ``space`` coordinates, shape ``(dim,)`` or ``(dim, n)``."""
        return from_real_parts(self.evaluate_parts(X, strict), self.space.is_complex)

    def map_parts(self, fn: Callable[[Expr], Expr], arity: int | None = None) -> "CoefficientFn":
        return CoefficientFn(self.space, tuple(fn(p) for p in self.parts), arity or self.arity, self.support)

    def with_parts(self, space: ValueSpace, parts, support=None) -> "CoefficientFn":
        return CoefficientFn(space, tuple(parts), self.arity, support)

    def check_support(self, rng: np.random.Generator, samples: int = 200, scale: float = 2.0) -> float:
        """Max |part| at random points outside the declared support box."""
        if self.support is None:
            return 0.0
        lo = np.array([a for a, _ in self.support])
        hi = np.array([b for _, b in self.support])
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        X = mid[:, None] + scale * half[:, None] * rng.uniform(-1, 1, (self.arity, samples))
        outside = np.any((X < lo[:, None]) | (X > hi[:, None]), axis=0)
        if not np.any(outside):
            return 0.0
        vals = self.evaluate_parts(X[:, outside], strict=False)
        return float(np.nanmax(np.abs(vals))) if vals.size else 0.0


def combine_parts(matrix: np.ndarray, parts: Sequence[Expr]) -> list[Expr]:
    """Symbolic ``matrix @ parts`` for a real matrix."""
    return [linear_combination(row, parts) for row in np.asarray(matrix, dtype=np.float64)]


def kron_parts(f: CoefficientFn, g: CoefficientFn) -> list[Expr]:
    """Real parts of the pointwise tensor product ``f(x) (x) g(x)``."""
    if f.space.scalar != g.space.scalar:
        raise ValueError("tensor product of coefficients over different scalar fields")
    if not f.space.is_complex:
        return [mul(a, b) for a in f.parts for b in g.parts]
    out = []
    for k in range(f.space.dim):
        a, b = f.parts[2 * k], f.parts[2 * k + 1]
        for m in range(g.space.dim):
            c, d = g.parts[2 * m], g.parts[2 * m + 1]
            out.append(sub(mul(a, c), mul(b, d)))
            out.append(add(mul(a, d), mul(b, c)))
    return out
