"""Small expression language for drift fields.

Expressions are built over state variables ``x1 .. xn``, numeric constants,
``+ - * /``, integer powers ``^`` and the unary functions ``sin``, ``cos``,
``exp`` and ``tanh``. Every node is immutable and can be evaluated on scalars
or on numpy arrays (one array per state variable), differentiated exactly and
printed back to text that parses to an equivalent tree.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Func",
    "ParseError",
    "EvaluationError",
    "parse",
    "differentiate",
    "to_text",
]

FUNCTIONS = ("sin", "cos", "exp", "tanh")


class ParseError(ValueError):
    """Raised for malformed expression text; ``position`` is a 0-based offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvaluationError(ArithmeticError):
    pass


class Expr:
    """Base class of all expression nodes."""

    precedence = 100

    def evaluate(self, x):
        """Evaluate at ``x``, a sequence whose k-th entry is the value of x_{k+1}.

        Entries may be floats or equally shaped arrays.
        """
        raise NotImplementedError

    def max_index(self) -> int:
        return 0

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def evaluate(self, x):
        return self.value

    def max_index(self):
        return 0


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 1-based

    def evaluate(self, x):
        return x[self.index - 1]

    def max_index(self):
        return self.index


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr
    precedence = 3

    def evaluate(self, x):
        return -self.arg.evaluate(x)

    def max_index(self):
        return self.arg.max_index()


@dataclass(frozen=True)
class _Binary(Expr):
    left: Expr
    right: Expr

    def max_index(self):
        return max(self.left.max_index(), self.right.max_index())


class Add(_Binary):
    precedence = 1
    symbol = "+"

    def evaluate(self, x):
        return self.left.evaluate(x) + self.right.evaluate(x)


class Sub(_Binary):
    precedence = 1
    symbol = "-"

    def evaluate(self, x):
        return self.left.evaluate(x) - self.right.evaluate(x)


class Mul(_Binary):
    precedence = 2
    symbol = "*"

    def evaluate(self, x):
        return self.left.evaluate(x) * self.right.evaluate(x)


class Div(_Binary):
    precedence = 2
    symbol = "/"

    def evaluate(self, x):
        den = self.right.evaluate(x)
        if np.any(np.asarray(den) == 0):
            raise EvaluationError(f"division by zero in {to_text(self)}")
        return self.left.evaluate(x) / den


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int
    precedence = 4

    def __post_init__(self):
        if not isinstance(self.exponent, int) or isinstance(self.exponent, bool):
            raise TypeError("exponent must be an int")

    def evaluate(self, x):
        b = self.base.evaluate(x)
        if self.exponent < 0:
            if np.any(np.asarray(b) == 0):
                raise EvaluationError(f"zero raised to a negative power in {to_text(self)}")
            return 1.0 / b ** (-self.exponent)
        return b**self.exponent

    def max_index(self):
        return self.base.max_index()


_NUMPY_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh}


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unsupported function {self.name!r}")

    def evaluate(self, x):
        return _NUMPY_FUNCS[self.name](self.arg.evaluate(x))

    def max_index(self):
        return self.arg.max_index()


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source):
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source, n):
        self.source = source
        self.n = n
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value or kind == "end":
            raise ParseError(f"expected {value!r}, found {text or 'end of input'!r}", pos)

    def parse(self):
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            sign = 1
            kind, text, pos = self.peek()
            if kind == "op" and text in ("-", "+"):
                self.take()
                sign = -1 if text == "-" else 1
            kind, text, pos = self.take()
            if kind != "num" or not re.fullmatch(r"\d+", text):
                raise ParseError("exponent must be an integer literal", pos)
            return Pow(base, sign * int(text))
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(text, arg)
            m = re.fullmatch(r"x([1-9]\d*)", text)
            if m is None:
                raise ParseError(f"unknown name {text!r}", pos)
            k = int(m.group(1))
            if k > self.n:
                raise ParseError(f"unknown variable {text!r} for dimension {self.n}", pos)
            return Var(k)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ParseError(f"unexpected {text or 'end of input'!r}", pos)


def parse(source: str, n: int) -> Expr:
    """Parse ``source`` into an expression over ``x1 .. xn``."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    if not source or not source.strip():
        raise ParseError("empty expression", 0)
    return _Parser(source, n).parse()


# ---------------------------------------------------------------- printing


def _fmt_const(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_text(e: Expr) -> str:
    """Canonical text form; reparses to an expression with identical values."""
    if isinstance(e, Const):
        s = _fmt_const(e.value)
        return f"({s})" if e.value < 0 else s
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        if e.arg.precedence <= Neg.precedence and not isinstance(e.arg, (Const, Var, Func)):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Func):
        return f"{e.name}({to_text(e.arg)})"
    if isinstance(e, Pow):
        base = to_text(e.base)
        if not isinstance(e.base, (Var, Func)):
            base = f"({base})"
        return f"{base}^{e.exponent}"
    if isinstance(e, _Binary):
        left = to_text(e.left)
        right = to_text(e.right)
        if e.left.precedence < e.precedence:
            left = f"({left})"
        # operators associate left, so an equal-precedence right operand keeps its parens
        if e.right.precedence <= e.precedence:
            right = f"({right})"
        return f"{left} {e.symbol} {right}"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------- simplifying constructors

ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


def _add(a, b):
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    return Add(a, b)


def _sub(a, b):
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    return Sub(a, b)


def _neg(a):
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    return Mul(a, b)


def _div(a, b):
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Div(a, b)


def _pow(a, k):
    if k == 0:
        return ONE
    if k == 1:
        return a
    return Pow(a, k)


def differentiate(e: Expr, k: int) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``x_k``."""
    if k < 1:
        raise ValueError("variable index must be >= 1")
    return _d(e, k)


def _d(e, k):
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == k else ZERO
    if isinstance(e, Neg):
        return _neg(_d(e.arg, k))
    if isinstance(e, Add):
        return _add(_d(e.left, k), _d(e.right, k))
    if isinstance(e, Sub):
        return _sub(_d(e.left, k), _d(e.right, k))
    if isinstance(e, Mul):
        return _add(_mul(_d(e.left, k), e.right), _mul(e.left, _d(e.right, k)))
    if isinstance(e, Div):
        num = _sub(_mul(_d(e.left, k), e.right), _mul(e.left, _d(e.right, k)))
        return _div(num, _pow(e.right, 2))
    if isinstance(e, Pow):
        db = _d(e.base, k)
        if _is_const(db, 0.0):
            return ZERO
        return _mul(_mul(Const(float(e.exponent)), _pow(e.base, e.exponent - 1)), db)
    if isinstance(e, Func):
        da = _d(e.arg, k)
        if _is_const(da, 0.0):
            return ZERO
        if e.name == "sin":
            outer = Func("cos", e.arg)
        elif e.name == "cos":
            outer = _neg(Func("sin", e.arg))
        elif e.name == "exp":
            outer = e
        else:  # tanh
            outer = _sub(ONE, _pow(e, 2))
        return _mul(outer, da)
    raise TypeError(f"not an expression: {e!r}")

