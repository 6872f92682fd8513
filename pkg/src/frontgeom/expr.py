"""Closed-form scalar expressions in chart coordinates.

The expression language covers exactly the operations the jet layer can
differentiate: constants, variables, + - * /, rational powers, sqrt, sin,
cos, exp, log.  Expressions are immutable trees; `substitute` rewrites
variables by other expressions (used for chart transitions), and `evaluate`
runs the same tree on plain numpy arrays or on jets.

Grammar (infix, ^ is right-associative, usual precedence):

    expr    := term (('+'|'-') term)*
    term    := unary (('*'|'/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | 'pi' | variable | function '(' expr ')' | '(' expr ')'

Functions: sqrt, sin, cos, exp, log.  Exponents must evaluate to constants.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .errors import ParseError
from .jets import Jet

__all__ = [
    "Expr", "Const", "Var", "Add", "Sub", "Mul", "Div", "Neg", "Pow", "Call",
    "parse", "substitute", "evaluate", "jet_eval", "jet_eval_many",
    "serialize", "expr_vars",
]

_FUNCTIONS = ("sqrt", "sin", "cos", "exp", "log")


_FIELDS_CACHE: dict = {}


def _fields(cls) -> tuple:
    """All data slots of a node class, walking the MRO (a subclass such as
    Add stores its operands on a base class)."""
    t = _FIELDS_CACHE.get(cls)
    if t is None:
        t = tuple(
            s
            for c in cls.__mro__
            for s in getattr(c, "__slots__", ())
            if s != "_hash"
        )
        _FIELDS_CACHE[cls] = t
    return t


class Expr:
    """Base class; all nodes are immutable and compare structurally."""

    __slots__ = ("_hash",)

    def __eq__(self, other):
        if self is other:
            return True
        if type(self) is not type(other):
            return NotImplemented
        return all(
            getattr(self, s) == getattr(other, s) for s in _fields(type(self))
        )

    def __hash__(self):
        # Cached: structural hashing is O(tree) and evaluation memoisation
        # hashes every node many times.
        try:
            return self._hash
        except AttributeError:
            h = hash(
                (type(self).__name__,)
                + tuple(getattr(self, s) for s in _fields(type(self)))
            )
            object.__setattr__(self, "_hash", h)
            return h

    def __repr__(self):
        return serialize(self)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        object.__setattr__(self, "value", float(value))


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)


class _Binary(Expr):
    __slots__ = ("left", "right")

    def __init__(self, left: Expr, right: Expr):
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)


class Add(_Binary):
    __slots__ = ()


class Sub(_Binary):
    __slots__ = ()


class Mul(_Binary):
    __slots__ = ()


class Div(_Binary):
    __slots__ = ()


class Neg(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        object.__setattr__(self, "arg", arg)


class Pow(Expr):
    """base ^ exponent with a constant (possibly non-integer) exponent."""

    __slots__ = ("base", "exponent")

    def __init__(self, base: Expr, exponent: float):
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exponent", float(exponent))


class Call(Expr):
    __slots__ = ("fn", "arg")

    def __init__(self, fn: str, arg: Expr):
        if fn not in _FUNCTIONS:
            raise ValueError(f"unknown function {fn!r}")
        object.__setattr__(self, "fn", fn)
        object.__setattr__(self, "arg", arg)


# ---------------------------------------------------------------------------
# evaluation

def _fn_apply(fn: str, x):
    if isinstance(x, Jet):
        return getattr(x, fn)()
    return getattr(np, fn)(x)


_MISSING = object()


def evaluate(expr: Expr, env: dict, memo: dict | None = None):
    """Evaluate on whatever the env holds: floats, numpy arrays, or Jets.

    `memo` caches results per structurally-distinct subtree, so repeated
    subexpressions (a shared bump factor, a common chart denominator) are
    evaluated once; pass the same dict across several expressions evaluated
    in the same environment to share work between them.
    """
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Var):
        try:
            return env[expr.name]
        except KeyError:
            raise KeyError(f"unbound variable {expr.name!r}") from None
    if memo is not None:
        out = memo.get(expr, _MISSING)
        if out is not _MISSING:
            return out
    if isinstance(expr, Add):
        out = evaluate(expr.left, env, memo) + evaluate(expr.right, env, memo)
    elif isinstance(expr, Sub):
        out = evaluate(expr.left, env, memo) - evaluate(expr.right, env, memo)
    elif isinstance(expr, Mul):
        out = evaluate(expr.left, env, memo) * evaluate(expr.right, env, memo)
    elif isinstance(expr, Div):
        out = evaluate(expr.left, env, memo) / evaluate(expr.right, env, memo)
    elif isinstance(expr, Neg):
        out = -evaluate(expr.arg, env, memo)
    elif isinstance(expr, Pow):
        out = evaluate(expr.base, env, memo) ** expr.exponent
    elif isinstance(expr, Call):
        out = _fn_apply(expr.fn, evaluate(expr.arg, env, memo))
    else:
        raise TypeError(f"not an Expr node: {expr!r}")
    if memo is not None:
        memo[expr] = out
    return out


def _jet_env(base, order, variables):
    if len(base) != len(variables):
        raise ValueError("base point arity does not match variables")
    env = {}
    seeds = (Jet.seed_u, Jet.seed_v)
    for k, name in enumerate(variables):
        env[name] = seeds[k](np.asarray(base[k], dtype=float), order)
    return env


def _as_jet(out, base, order):
    if isinstance(out, Jet):
        return out
    shape = np.broadcast(*[np.asarray(b) for b in base]).shape
    return Jet.constant(np.broadcast_to(np.asarray(out, dtype=float), shape).copy(), order)


def jet_eval(expr: Expr, base, order: int, variables=("u", "v")) -> Jet:
    """Jet of the expression at `base` (tuple of scalars or arrays)."""
    from .jets import check_overflow

    env = _jet_env(base, order, variables)
    out = _as_jet(evaluate(expr, env, {}), base, order)
    return check_overflow(out)


def jet_eval_many(exprs, base, order: int, variables=("u", "v")) -> list:
    """Jets of several expressions at the same base, sharing subtree work.

    The components of a map usually repeat subexpressions (a common
    conformal factor, a shared denominator); one memo across the batch
    evaluates each distinct subtree once.
    """
    from .jets import check_overflow

    env = _jet_env(base, order, variables)
    memo: dict = {}
    return [
        check_overflow(_as_jet(evaluate(e, env, memo), base, order)) for e in exprs
    ]


def substitute(expr: Expr, mapping: dict) -> Expr:
    """Replace variables by expressions, rebuilding the tree."""
    if isinstance(expr, Const):
        return expr
    if isinstance(expr, Var):
        return mapping.get(expr.name, expr)
    if isinstance(expr, (Add, Sub, Mul, Div)):
        return type(expr)(substitute(expr.left, mapping), substitute(expr.right, mapping))
    if isinstance(expr, Neg):
        return Neg(substitute(expr.arg, mapping))
    if isinstance(expr, Pow):
        return Pow(substitute(expr.base, mapping), expr.exponent)
    if isinstance(expr, Call):
        return Call(expr.fn, substitute(expr.arg, mapping))
    raise TypeError(f"not an Expr node: {expr!r}")


def expr_vars(expr: Expr) -> set:
    if isinstance(expr, Var):
        return {expr.name}
    if isinstance(expr, (Add, Sub, Mul, Div)):
        return expr_vars(expr.left) | expr_vars(expr.right)
    if isinstance(expr, Neg):
        return expr_vars(expr.arg)
    if isinstance(expr, Pow):
        return expr_vars(expr.base)
    if isinstance(expr, Call):
        return expr_vars(expr.arg)
    return set()


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
      | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
      | (?P<op>[-+*/^()])
      | (?P<ws>[ \t\r\n]+)
      | (?P<bad>.)""",
    re.VERBOSE,
)


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind, self.text, self.line, self.col = kind, text, line, col


def _tokenize(text: str):
    tokens = []
    line, col = 1, 1
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        tok = m.group()
        if kind == "bad":
            raise ParseError(f"unexpected character {tok!r}", line, col)
        if kind != "ws":
            tokens.append(_Token(kind, tok, line, col))
        newlines = tok.count("\n")
        if newlines:
            line += newlines
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
    tokens.append(_Token("end", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens, variables):
        self.tokens = tokens
        self.pos = 0
        self.variables = set(variables)

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def expect(self, text):
        t = self.peek()
        if t.kind == "op" and t.text == text:
            return self.take()
        shown = t.text or "end of input"
        raise ParseError(f"expected {text!r}, found {shown!r}", t.line, t.col)

    def parse_expr(self):
        node = self.parse_term()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text in "+-":
                self.take()
                rhs = self.parse_term()
                node = Add(node, rhs) if t.text == "+" else Sub(node, rhs)
            else:
                return node

    def parse_term(self):
        node = self.parse_unary()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text in "*/":
                self.take()
                rhs = self.parse_unary()
                node = Mul(node, rhs) if t.text == "*" else Div(node, rhs)
            else:
                return node

    def parse_unary(self):
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.take()
            inner = self.parse_unary()
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Neg(inner)
        if t.kind == "op" and t.text == "+":
            self.take()
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        t = self.peek()
        if t.kind == "op" and t.text == "^":
            self.take()
            etok = self.peek()
            exponent = self.parse_unary()
            value = _const_value(exponent)
            if value is None:
                raise ParseError("exponent must be a constant", etok.line, etok.col)
            return Pow(base, value)
        return base

    def parse_atom(self):
        t = self.take()
        if t.kind == "num":
            return Const(float(t.text))
        if t.kind == "name":
            if t.text == "pi":
                return Const(math.pi)
            if t.text in _FUNCTIONS:
                self.expect("(")
                arg = self.parse_expr()
                self.expect(")")
                return Call(t.text, arg)
            if t.text in self.variables:
                return Var(t.text)
            raise ParseError(f"unknown name {t.text!r}", t.line, t.col)
        if t.kind == "op" and t.text == "(":
            node = self.parse_expr()
            self.expect(")")
            return node
        shown = t.text or "end of input"
        raise ParseError(f"unexpected {shown!r}", t.line, t.col)


def _const_value(expr: Expr):
    """Fold an expression made only of constants; None if variables appear."""
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Neg):
        v = _const_value(expr.arg)
        return None if v is None else -v
    if isinstance(expr, (Add, Sub, Mul, Div)):
        a, b = _const_value(expr.left), _const_value(expr.right)
        if a is None or b is None:
            return None
        return {Add: a + b, Sub: a - b, Mul: a * b, Div: a / b}[type(expr)]
    if isinstance(expr, Pow):
        v = _const_value(expr.base)
        return None if v is None else v**expr.exponent
    return None


def parse(text: str, variables=("u", "v")) -> Expr:
    """Parse an expression; raises ParseError with line/column on failure."""
    tokens = _tokenize(text)
    p = _Parser(tokens, variables)
    node = p.parse_expr()
    t = p.peek()
    if t.kind != "end":
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col)
    return node


# ---------------------------------------------------------------------------
# serialization (parse(serialize(e)) is structurally equal to e)

def _prec(expr: Expr) -> int:
    if isinstance(expr, (Add, Sub)):
        return 1
    if isinstance(expr, (Mul, Div)):
        return 2
    if isinstance(expr, Neg):
        return 3
    if isinstance(expr, Pow):
        return 4
    return 5


def _fmt_float(x: float) -> str:
    if x == math.pi:
        return "pi"
    return repr(x)


def serialize(expr: Expr) -> str:
    def wrap(child, minimum):
        s = serialize(child)
        return f"({s})" if _prec(child) < minimum else s

    if isinstance(expr, Const):
        if expr.value < 0:
            return f"(-{_fmt_float(-expr.value)})"
        return _fmt_float(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Add):
        return f"{wrap(expr.left, 1)} + {wrap(expr.right, 2)}"
    if isinstance(expr, Sub):
        return f"{wrap(expr.left, 1)} - {wrap(expr.right, 2)}"
    if isinstance(expr, Mul):
        return f"{wrap(expr.left, 2)}*{wrap(expr.right, 3)}"
    if isinstance(expr, Div):
        return f"{wrap(expr.left, 2)}/{wrap(expr.right, 5)}"
    if isinstance(expr, Neg):
        return f"-{wrap(expr.arg, 3)}"
    if isinstance(expr, Pow):
        e = expr.exponent
        etxt = _fmt_float(e) if e >= 0 else f"(-{_fmt_float(-e)})"
        return f"{wrap(expr.base, 5)}^{etxt}"
    if isinstance(expr, Call):
        return f"{expr.fn}({serialize(expr.arg)})"
    raise TypeError(f"not an Expr node: {expr!r}")
