"""One-variable real expressions: parsing, evaluation and exact derivatives.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | 'r' | 'pi' | NAME '(' expr (',' expr)* ')' | '(' expr ')'

The only variable is ``r``.  Evaluation is vectorised over numpy arrays and
raises :class:`ExprDomainError` instead of returning non-finite values.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "Expr", "Num", "Var", "Const", "Neg", "BinOp", "Call",
    "ExprSyntaxError", "UnknownIdentifierError", "ExprDomainError",
    "parse", "evaluate", "differentiate", "to_text",
    "Field", "ScalarField", "TabulatedField", "CallableField", "as_field",
]

VARIABLE = "r"
CONSTANTS = {"pi": math.pi}
# name -> arity
FUNCTIONS = {
    "sin": 1, "cos": 1, "tan": 1, "sinh": 1, "cosh": 1, "tanh": 1,
    "exp": 1, "log": 1, "sqrt": 1, "abs": 1, "sign": 1, "pow": 2,
}


# ---------------------------------------------------------------------------
# errors

class ExprSyntaxError(ConfigError):
    """Parse failure at a byte offset of the source text."""

    def __init__(self, message: str, source: str, offset: int, expected=()):
        self.source = source
        self.offset = offset
        self.expected = frozenset(expected)
        detail = message
        if self.expected:
            detail += " (expected one of: " + ", ".join(sorted(self.expected)) + ")"
        super().__init__(f"{detail} at offset {offset}")

    def caret(self) -> str:
        """Two-line diagnostic: the source and a caret under the offset."""
        # offsets are in bytes; columns are in characters
        col = len(self.source.encode()[: self.offset].decode(errors="ignore"))
        return f"{self.source}\n{' ' * col}^"


class UnknownIdentifierError(ExprSyntaxError):
    pass


class ExprDomainError(DomainError):
    """Evaluation left the real domain; carries the offending subexpression."""

    def __init__(self, message: str, subexpr: "Expr"):
        self.subexpr = subexpr
        super().__init__(f"{message} in '{to_text(subexpr)}'")


# ---------------------------------------------------------------------------
# syntax tree

class Expr:
    __slots__ = ()

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str = VARIABLE


@dataclass(frozen=True)
class Const(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple


# ---------------------------------------------------------------------------
# tokenizer and parser

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # 'num' | 'name' | 'op' | 'end'
    text: str
    offset: int


def _tokenize(src: str) -> list[_Tok]:
    raw = src.encode()
    toks = []
    pos = 0
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.lastgroup is None:
            off = len(src[:pos].encode())
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", src, off,
                                  {"number", "identifier", "operator"})
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), len(src[:start].encode())))
        pos = m.end()
    toks.append(_Tok("end", "", len(raw)))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _fail(self, expected) -> None:
        t = self.tok
        what = "end of input" if t.kind == "end" else repr(t.text)
        raise ExprSyntaxError(f"unexpected {what}", self.src, t.offset, expected)

    def _accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def _expect(self, text: str) -> None:
        if not self._accept(text):
            self._fail({text})

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            self._fail({"+", "-", "*", "/", "^", "end of input"})
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self._accept("-"):
            return Neg(self.unary())
        if self._accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self._accept("^"):
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(float(t.text))
        if t.kind == "name":
            self.i += 1
            if t.text == VARIABLE:
                return Var()
            if t.text in CONSTANTS:
                return Const(t.text)
            if t.text in FUNCTIONS:
                self._expect("(")
                args = [self.expr()]
                while self._accept(","):
                    args.append(self.expr())
                self._expect(")")
                if len(args) != FUNCTIONS[t.text]:
                    raise ExprSyntaxError(
                        f"{t.text}() takes {FUNCTIONS[t.text]} argument(s), got {len(args)}",
                        self.src, t.offset)
                return Call(t.text, tuple(args))
            raise UnknownIdentifierError(f"unknown identifier {t.text!r}", self.src,
                                         t.offset, {VARIABLE, *CONSTANTS, *FUNCTIONS})
        if self._accept("("):
            e = self.expr()
            self._expect(")")
            return e
        self._fail({"number", VARIABLE, "function", "(", "-"})


def parse(src: str) -> Expr:
    """Parse expression text into an :class:`Expr` tree."""
    if not src or not src.strip():
        raise ExprSyntaxError("empty expression", src or "", 0, {"expression"})
    return _Parser(src).parse()


# ---------------------------------------------------------------------------
# printing

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL}.get(e.op, _PREC_POW)
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Num) and e.value < 0:
        return _PREC_NEG
    return _PREC_ATOM


def to_text(e: Expr) -> str:
    """Render ``e`` so that ``parse(to_text(e))`` rebuilds the same tree."""

    def wrap(sub: Expr, min_prec: int) -> str:
        s = to_text(sub)
        return f"({s})" if _prec(sub) < min_prec else s

    if isinstance(e, Num):
        v = float(e.value)
        s = str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
        return f"({s})" if v < 0 else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Const):
        return e.name
    if isinstance(e, Neg):
        return "-" + wrap(e.arg, _PREC_NEG)
    if isinstance(e, Call):
        return f"{e.name}(" + ", ".join(to_text(a) for a in e.args) + ")"
    if isinstance(e, BinOp):
        if e.op == "^":
            return wrap(e.left, _PREC_ATOM) + "^" + wrap(e.right, _PREC_NEG)
        p = _prec(e)
        return f"{wrap(e.left, p)}{e.op}{wrap(e.right, p + 1)}"
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# evaluation

def _check(values, node: Expr, bad, message: str):
    if np.any(bad):
        raise ExprDomainError(message, node)
    return values


def _is_integer_valued(x) -> np.ndarray:
    return np.equal(np.floor(x), x)


def _eval(e: Expr, r: np.ndarray) -> np.ndarray:
    if isinstance(e, Num):
        return np.full(r.shape, e.value)
    if isinstance(e, Var):
        return r
    if isinstance(e, Const):
        return np.full(r.shape, CONSTANTS[e.name])
    if isinstance(e, Neg):
        return -_eval(e.arg, r)
    if isinstance(e, BinOp):
        a = _eval(e.left, r)
        b = _eval(e.right, r)
        if e.op == "+":
            out = a + b
        elif e.op == "-":
            out = a - b
        elif e.op == "*":
            out = a * b
        elif e.op == "/":
            _check(None, e, b == 0, "division by zero")
            out = a / b
        else:
            out = _power(a, b, e)
        return _check(out, e, ~np.isfinite(out), "non-finite result")
    if isinstance(e, Call):
        args = [_eval(a, r) for a in e.args]
        x = args[0]
        name = e.name
        if name == "log":
            _check(None, e, x <= 0, "log of non-positive value")
            out = np.log(x)
        elif name == "sqrt":
            _check(None, e, x < 0, "sqrt of negative value")
            out = np.sqrt(x)
        elif name == "pow":
            out = _power(x, args[1], e)
        elif name == "abs":
            out = np.abs(x)
        elif name == "sign":
            out = np.sign(x)
        elif name == "tan":
            out = np.tan(x)
        else:
            out = getattr(np, name)(x)
        return _check(out, e, ~np.isfinite(out), "non-finite result")
    raise TypeError(f"not an expression node: {e!r}")


def _power(a, b, node):
    _check(None, node, (a < 0) & ~_is_integer_valued(b),
           "negative base with non-integer exponent")
    _check(None, node, (a == 0) & (b < 0), "zero raised to a negative power")
    return np.power(a, b)


def evaluate(e: Expr, r):
    """Evaluate at a scalar or array ``r``; scalars give a Python float."""
    arr = np.asarray(r, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval(e, np.atleast_1d(arr))
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


# ---------------------------------------------------------------------------
# differentiation with light simplification

def _has_var(e: Expr) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, Neg):
        return _has_var(e.arg)
    if isinstance(e, BinOp):
        return _has_var(e.left) or _has_var(e.right)
    if isinstance(e, Call):
        return any(_has_var(a) for a in e.args)
    return False


def _fold(e: Expr) -> Expr:
    """Replace a variable-free node by its value when that value is finite."""
    if isinstance(e, (Num, Var, Const)) or _has_var(e):
        return e
    try:
        v = evaluate(e, 0.0)
    except DomainError:
        return e
    return Num(v) if math.isfinite(v) else e


def _is(e: Expr, value: float) -> bool:
    return isinstance(e, Num) and e.value == value


def _neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    return _fold(BinOp("+", a, b))


def _sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _neg(b)
    return _fold(BinOp("-", a, b))


def _mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0) or _is(b, 0):
        return Num(0.0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    return _fold(BinOp("*", a, b))


def _div(a: Expr, b: Expr) -> Expr:
    if _is(a, 0):
        return Num(0.0)
    if _is(b, 1):
        return a
    return _fold(BinOp("/", a, b))


def _pow(a: Expr, b: Expr) -> Expr:
    if _is(b, 1):
        return a
    if _is(b, 0):
        return Num(1.0)
    return _fold(BinOp("^", a, b))


def _call(name: str, *args: Expr) -> Expr:
    return _fold(Call(name, tuple(args)))


def _d_power(base: Expr, expo: Expr) -> Expr:
    db = differentiate(base)
    if not _has_var(expo):
        return _mul(_mul(expo, _pow(base, _sub(expo, Num(1.0)))), db)
    de = differentiate(expo)
    if not _has_var(base):
        return _mul(_mul(_pow(base, expo), _call("log", base)), de)
    return _mul(_pow(base, expo),
                _add(_mul(de, _call("log", base)), _div(_mul(expo, db), base)))


def differentiate(e: Expr) -> Expr:
    """Exact d/dr of ``e``.  ``abs`` differentiates to ``sign`` (valid off 0)."""
    if isinstance(e, Var):
        return Num(1.0)
    if isinstance(e, (Num, Const)):
        return Num(0.0)
    if isinstance(e, Neg):
        return _neg(differentiate(e.arg))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        if e.op == "+":
            return _add(differentiate(a), differentiate(b))
        if e.op == "-":
            return _sub(differentiate(a), differentiate(b))
        if e.op == "*":
            return _add(_mul(differentiate(a), b), _mul(a, differentiate(b)))
        if e.op == "/":
            num = _sub(_mul(differentiate(a), b), _mul(a, differentiate(b)))
            return _div(num, _pow(b, Num(2.0)))
        return _d_power(a, b)
    if isinstance(e, Call):
        if e.name == "pow":
            return _d_power(*e.args)
        u = e.args[0]
        du = differentiate(u)
        if _is(du, 0):
            return Num(0.0)
        outer = {
            "sin": lambda: _call("cos", u),
            "cos": lambda: _neg(_call("sin", u)),
            "tan": lambda: _div(Num(1.0), _pow(_call("cos", u), Num(2.0))),
            "sinh": lambda: _call("cosh", u),
            "cosh": lambda: _call("sinh", u),
            "tanh": lambda: _sub(Num(1.0), _pow(_call("tanh", u), Num(2.0))),
            "exp": lambda: _call("exp", u),
            "log": lambda: _div(Num(1.0), u),
            "sqrt": lambda: _div(Num(1.0), _mul(Num(2.0), _call("sqrt", u))),
            "abs": lambda: _call("sign", u),
            "sign": lambda: Num(0.0),
        }[e.name]()
        return _mul(outer, du)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# fields: the objects that carry f, phi, kappa and h through the package

class Field:
    """A real function of the radial coordinate with a derivative."""

    text = "<field>"

    def __call__(self, r):
        raise NotImplementedError

    def derivative(self) -> "Field":
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.text!r})"


class ScalarField(Field):
    """Expression-backed field with an exact symbolic derivative."""

    def __init__(self, expr: Expr, text: str | None = None):
        self.expr = expr
        self.text = text if text is not None else to_text(expr)

    @classmethod
    def parse(cls, src: str) -> "ScalarField":
        return cls(parse(src), src.strip())

    def __call__(self, r):
        return evaluate(self.expr, r)

    @cached_property
    def _derivative(self) -> "ScalarField":
        return ScalarField(differentiate(self.expr))

    def derivative(self) -> "ScalarField":
        return self._derivative

    @property
    def is_constant(self) -> bool:
        return not _has_var(self.expr)

    @property
    def is_zero(self) -> bool:
        return isinstance(self.expr, Num) and self.expr.value == 0


class TabulatedField(Field):
    """Monotone cubic (PCHIP) interpolant of sampled values on ``[r[0], r[-1]]``."""

    def __init__(self, r, values, text: str = "<table>", _spline=None):
        from scipy.interpolate import PchipInterpolator

        self.r = np.asarray(r, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.r.ndim != 1 or self.r.size < 2 or np.any(np.diff(self.r) <= 0):
            raise DomainError("table abscissae must be strictly increasing, at least 2 nodes")
        self.text = text
        self._spline = _spline if _spline is not None else PchipInterpolator(self.r, self.values)

    def __call__(self, r):
        arr = np.asarray(r, dtype=float)
        span = self.r[-1] - self.r[0]
        slack = 1e-12 * max(span, 1.0)
        if np.any(arr < self.r[0] - slack) or np.any(arr > self.r[-1] + slack):
            raise DomainError(f"{self.text}: r outside table range [{self.r[0]}, {self.r[-1]}]")
        out = self._spline(np.clip(arr, self.r[0], self.r[-1]))
        return float(out) if arr.ndim == 0 else out

    def derivative(self) -> "TabulatedField":
        d = self._spline.derivative()
        return TabulatedField(self.r, d(self.r), text=f"d/dr {self.text}", _spline=d)


class CallableField(Field):
    """Wrap a vectorised Python callable as a field."""

    def __init__(self, func: Callable, text: str = "<callable>", derivative: Callable | None = None):
        self.func = func
        self.text = text
        self._deriv = derivative

    def __call__(self, r):
        arr = np.asarray(r, dtype=float)
        out = np.asarray(self.func(arr), dtype=float)
        return float(out) if arr.ndim == 0 else np.broadcast_to(out, arr.shape).copy()

    def derivative(self) -> Field:
        if self._deriv is not None:
            return CallableField(self._deriv, text=f"d/dr {self.text}")
        func = self.func
        step = 1e-6

        def central(r):
            r = np.asarray(r, dtype=float)
            return (np.asarray(func(r + step)) - np.asarray(func(r - step))) / (2 * step)

        return CallableField(central, text=f"d/dr {self.text}")


def as_field(value) -> Field:
    """Coerce text, numbers or fields into a :class:`Field`."""
    if isinstance(value, Field):
        return value
    if isinstance(value, str):
        return ScalarField.parse(value)
    if isinstance(value, (int, float)):
        return ScalarField(Num(float(value)), repr(float(value)))
    if callable(value):
        return CallableField(value)
    raise TypeError(f"cannot interpret {value!r} as a field")
