"""Recursive-descent parser and evaluator for closed-form expressions in ``x``.

Grammar (highest precedence first)::

    atom    := number | 'x' | 'pi' | 'e' | func '(' expr ')' | '(' expr ')'
    power   := atom ['^' unary]            # right associative
    unary   := '-' unary | '+' unary | power
    term    := unary (('*' | '/') unary)*
    expr    := term (('+' | '-') term)*

Functions: ``exp``, ``log``, ``sin``, ``cos``, ``sqrt``.

Expressions evaluate vectorised over numpy arrays. Domain violations raise
:class:`ExpressionDomainError`; no NaN or infinity ever leaks out.  Every
expression can also be lowered to a flat postfix program that the jitted
kernels in :mod:`ergopt._kernels` interpret.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ExpressionError",
    "ExpressionSyntaxError",
    "ExpressionDomainError",
    "Expression",
    "parse_expression",
    "OP_CONST",
    "OP_X",
]


class ExpressionError(ValueError):
    """Base class for expression failures."""


class ExpressionSyntaxError(ExpressionError):
    """Malformed source text.

    Attributes
    ----------
    offset : int
        Byte offset (UTF-8) of the offending token.
    expected : tuple of str
        Tokens that would have been accepted there.
    """

    def __init__(self, message: str, offset: int, expected: tuple[str, ...] = ()):
        self.offset = offset
        self.expected = tuple(expected)
        detail = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at byte offset {offset}{detail}")


class ExpressionDomainError(ExpressionError):
    """Evaluation left the real domain (log of non-positive, division by zero, ...)."""


# postfix opcodes shared with the jitted interpreter
OP_CONST, OP_X, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW, OP_NEG = range(8)
OP_EXP, OP_LOG, OP_SIN, OP_COS, OP_SQRT = range(8, 13)

_BINARY = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV, "^": OP_POW}
_FUNCS = {"exp": OP_EXP, "log": OP_LOG, "sin": OP_SIN, "cos": OP_COS, "sqrt": OP_SQRT}
_CONSTS = {"pi": math.pi, "e": math.e}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Unary:
    operand: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    offset: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            raise ExpressionSyntaxError(
                f"unexpected character {src[pos]!r}",
                len(src[:pos].encode()),
                ("number", "identifier", "operator"),
            )
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), len(src[:start].encode())))
        pos = m.end()
    toks.append(_Tok("end", "", len(src.encode())))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> None:
        if self.tok.text != text or self.tok.kind != "op":
            raise ExpressionSyntaxError(
                f"unexpected {self.tok.text or 'end of input'!r}", self.tok.offset, (text,)
            )
        self.take()

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            raise ExpressionSyntaxError(
                f"unexpected {self.tok.text!r}", self.tok.offset, ("operator", "end of input")
            )
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.take().text
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.take().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.take()
            return Unary(self.unary())
        if self.tok.kind == "op" and self.tok.text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.take()
            return Binary("^", base, self.unary())
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.take()
            return Num(float(t.text))
        if t.kind == "name":
            self.take()
            if t.text == "x":
                return Var()
            if t.text in _CONSTS:
                return Num(_CONSTS[t.text])
            if t.text in _FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(t.text, arg)
            raise ExpressionSyntaxError(
                f"unknown identifier {t.text!r}",
                t.offset,
                ("x", "pi", "e") + tuple(sorted(_FUNCS)),
            )
        if t.kind == "op" and t.text == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionSyntaxError(
            f"unexpected {t.text or 'end of input'!r}",
            t.offset,
            ("number", "x", "function", "(", "-"),
        )


def _check(values: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise ExpressionDomainError(f"{what} produced a non-finite value")
    return values


def _eval(node, x: np.ndarray) -> np.ndarray:
    if isinstance(node, Num):
        return np.full_like(x, node.value)
    if isinstance(node, Var):
        return x
    if isinstance(node, Unary):
        return -_eval(node.operand, x)
    if isinstance(node, Binary):
        a = _eval(node.left, x)
        b = _eval(node.right, x)
        with np.errstate(all="ignore"):
            if node.op == "+":
                return _check(a + b, "'+'")
            if node.op == "-":
                return _check(a - b, "'-'")
            if node.op == "*":
                return _check(a * b, "'*'")
            if node.op == "/":
                if np.any(b == 0.0):
                    raise ExpressionDomainError("division by zero")
                return _check(a / b, "'/'")
            return _check(np.power(a, b), "'^'")
    if isinstance(node, Call):
        a = _eval(node.arg, x)
        if node.func == "log":
            if np.any(a <= 0.0):
                raise ExpressionDomainError("log of a non-positive value")
            return np.log(a)
        if node.func == "sqrt":
            if np.any(a < 0.0):
                raise ExpressionDomainError("sqrt of a negative value")
            return np.sqrt(a)
        if node.func == "exp":
            with np.errstate(over="ignore"):
                return _check(np.exp(a), "exp")
        return np.sin(a) if node.func == "sin" else np.cos(a)
    raise TypeError(f"unknown node {node!r}")


def _postfix(node, code: list, consts: list) -> None:
    if isinstance(node, Num):
        code.append((OP_CONST, len(consts)))
        consts.append(node.value)
    elif isinstance(node, Var):
        code.append((OP_X, 0))
    elif isinstance(node, Unary):
        _postfix(node.operand, code, consts)
        code.append((OP_NEG, 0))
    elif isinstance(node, Binary):
        _postfix(node.left, code, consts)
        _postfix(node.right, code, consts)
        code.append((_BINARY[node.op], 0))
    else:
        _postfix(node.arg, code, consts)
        code.append((_FUNCS[node.func], 0))


class Expression:
    """A parsed expression in the single variable ``x``.

    Parameters
    ----------
    source : str
        Source text.

    Examples
    --------
    >>> Expression("x^2 - 2*x + 1")(1.0)
    0.0
    """

    def __init__(self, source: str):
        self.source = source
        self.ast = _Parser(source).parse()
        code: list = []
        consts: list = []
        _postfix(self.ast, code, consts)
        self.code = np.asarray(code, dtype=np.int64).reshape(-1, 2)
        self.consts = np.asarray(consts if consts else [0.0], dtype=np.float64)

    def __call__(self, x):
        arr = np.asarray(x, dtype=np.float64)
        out = _eval(self.ast, np.atleast_1d(arr).astype(np.float64, copy=False))
        out = np.broadcast_to(out, np.atleast_1d(arr).shape).astype(np.float64)
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def __repr__(self) -> str:
        return f"Expression({self.source!r})"

    @property
    def is_constant(self) -> bool:
        return not any(op == OP_X for op, _ in self.code)


def parse_expression(src: str) -> Expression:
    """Parse ``src`` into an :class:`Expression` (raises on malformed input)."""
    return Expression(src)
