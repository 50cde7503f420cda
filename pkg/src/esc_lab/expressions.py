"""Recursive-descent parser for polynomial-style cost expressions.

Grammar (positions in error messages are 1-based character offsets):

    expr   = term { ("+" | "-") term }
    term   = unary { ("*" | "/") unary }
    unary  = "-" unary | power
    power  = atom [ "^" unary ]          # right-associative, binds tightest
    atom   = NUMBER | IDENT | "(" expr ")"

Identifiers are ``theta1`` .. ``thetaN``; numbers are decimal literals with an
optional exponent. The compiled evaluator works componentwise on numpy arrays
of shape (..., n).
"""

from __future__ import annotations

import re

import numpy as np

__all__ = ["ExpressionError", "compile_expression"]

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


class ExpressionError(ValueError):
    """Parse failure; ``position`` is the 1-based offset of the offending character."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            bad_at = len(text) - len(stripped)
            raise ExpressionError(f"unexpected character {text[bad_at]!r}", bad_at + 1)
        if m.lastgroup == "num":
            tokens.append(("num", float(m.group("num")), m.start("num") + 1))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group("ident"), m.start("ident") + 1))
        else:
            tokens.append(("op", m.group("op"), m.start("op") + 1))
        pos = m.end()
    tokens.append(("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n = n

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, value, pos = self.peek()
        if kind != "op" or value != op:
            raise ExpressionError(f"expected {op!r}", pos)
        self.advance()

    def parse(self):
        node = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected {value!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                rhs = self.term()
                node = (("add" if value == "+" else "sub"), node, rhs)
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                rhs = self.unary()
                node = (("mul" if value == "*" else "div"), node, rhs)
            else:
                return node

    def unary(self):
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return ("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            return ("pow", base, self.unary())
        return base

    def atom(self):
        kind, value, pos = self.advance()
        if kind == "num":
            return ("const", value)
        if kind == "ident":
            m = re.fullmatch(r"theta(\d+)", value)
            if m is None:
                raise ExpressionError(f"unknown identifier {value!r}", pos)
            index = int(m.group(1))
            if not 1 <= index <= self.n:
                raise ExpressionError(
                    f"variable {value!r} out of range for dimension {self.n}", pos
                )
            return ("var", index - 1)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExpressionError("expected a number, variable, or '('", pos)


def _evaluate(node, x: np.ndarray):
    op = node[0]
    if op == "const":
        return node[1]
    if op == "var":
        return x[..., node[1]]
    if op == "neg":
        return -_evaluate(node[1], x)
    a = _evaluate(node[1], x)
    b = _evaluate(node[2], x)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    return np.power(a, b)


def compile_expression(text: str, n: int):
    """Parse ``text`` and return a callable mapping arrays (..., n) -> (...)."""
    if n < 1:
        raise ValueError("dimension must be at least 1")
    tree = _Parser(text, n).parse()

    def evaluate(x: np.ndarray):
        x = np.asarray(x, dtype=float)
        return np.asarray(_evaluate(tree, x), dtype=float)

    return evaluate
