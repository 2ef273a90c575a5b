"""Coefficient fields given as small arithmetic expressions.

Grammar (whitespace is ignored)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := number | ident | func '(' args ')' | '(' expr ')' | '-' factor

Identifiers are ``x``, ``y`` and ``r`` (``r`` is the Euclidean norm of the
point; on radial grids ``x`` is the radius as well). Functions are ``sin``,
``cos``, ``exp``, ``abs``, ``sqrt`` (one argument) and ``min``, ``max`` (two).
Evaluation works on scalars and on numpy arrays alike.
"""

from __future__ import annotations

import re
from typing import Callable

import numpy as np

from .errors import ConfigurationError, ExpressionError

__all__ = ["CoefficientField", "parse_coefficient", "as_coefficient"]

_UNARY = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs, "sqrt": np.sqrt}
_BINARY = {"min": np.minimum, "max": np.maximum}
_IDENTS = ("x", "y", "r")

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value or kind == "end":
            what = "end of input" if kind == "end" else repr(val)
            raise ExpressionError(f"expected {value!r}, found {what}", pos)

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected {val!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = ("+" if op == "+" else "-", node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            node = (op, node, rhs)
        return node

    def factor(self):
        kind, val, pos = self.take()
        if kind == "num":
            return ("num", float(val))
        if kind == "op" and val == "-":
            return ("neg", self.factor())
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if val in _IDENTS:
                return ("var", val)
            if val in _UNARY or val in _BINARY:
                self.expect("(")
                args = [self.expr()]
                if val in _BINARY:
                    self.expect(",")
                    args.append(self.expr())
                self.expect(")")
                return ("call", val, *args)
            raise ExpressionError(f"unknown identifier {val!r}", pos)
        what = "end of input" if kind == "end" else repr(val)
        raise ExpressionError(f"unexpected {what}", pos)


def _compile(node) -> Callable[[dict], object]:
    tag = node[0]
    if tag == "num":
        value = node[1]
        return lambda env: value
    if tag == "var":
        name = node[1]
        return lambda env: env[name]
    if tag == "neg":
        inner = _compile(node[1])
        return lambda env: -inner(env)
    if tag == "call":
        args = [_compile(a) for a in node[2:]]
        if node[1] in _UNARY:
            fn = _UNARY[node[1]]
            return lambda env: fn(args[0](env))
        fn = _BINARY[node[1]]
        return lambda env: fn(args[0](env), args[1](env))
    lhs, rhs = _compile(node[1]), _compile(node[2])
    if tag == "+":
        return lambda env: lhs(env) + rhs(env)
    if tag == "-":
        return lambda env: lhs(env) - rhs(env)
    if tag == "*":
        return lambda env: lhs(env) * rhs(env)

    def divide(env):
        den = rhs(env)
        if np.any(np.asarray(den) == 0):
            raise ZeroDivisionError("division by zero in coefficient expression")
        return lhs(env) / den

    return divide


def _is_constant(node) -> bool:
    if node[0] == "num":
        return True
    if node[0] == "var":
        return False
    return all(_is_constant(c) for c in node[1:] if isinstance(c, tuple))


class CoefficientField:
    """A scalar field on the domain, evaluable pointwise or on whole grids."""

    def __init__(self, fn: Callable[[dict], object], text: str, constant: bool = False):
        self._fn = fn
        self.text = text
        self.is_constant = constant

    def __repr__(self):
        return f"CoefficientField({self.text!r})"

    @classmethod
    def constant(cls, value: float) -> "CoefficientField":
        value = float(value)
        return cls(lambda env: value, repr(value), constant=True)

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray], name: str = "<callable>"):
        """Wrap ``fn(points) -> values`` where ``points`` has shape (m, d)."""
        return cls(lambda env: fn(env["_points"]), name)

    @staticmethod
    def _env(points: np.ndarray) -> dict:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x = pts[:, 0]
        y = pts[:, 1] if pts.shape[1] > 1 else np.zeros_like(x)
        return {"x": x, "y": y, "r": np.sqrt(np.einsum("ij,ij->i", pts, pts)), "_points": pts}

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values at an (m, d) array of points, as a float array of length m."""
        env = self._env(points)
        out = np.asarray(self._fn(env), dtype=float)
        return np.broadcast_to(out, env["x"].shape).astype(float, copy=True)

    def __call__(self, point) -> float:
        return float(self.evaluate(np.atleast_1d(np.asarray(point, dtype=float))[None, :])[0])


def parse_coefficient(text: str) -> CoefficientField:
    """Parse ``text`` into a :class:`CoefficientField`."""
    if not isinstance(text, str):
        raise ConfigurationError(f"coefficient expression must be a string, got {type(text).__name__}")
    tree = _Parser(text).parse()
    return CoefficientField(_compile(tree), text, constant=_is_constant(tree))


def as_coefficient(value) -> CoefficientField:
    """Coerce a string, number, callable or field into a :class:`CoefficientField`."""
    if isinstance(value, CoefficientField):
        return value
    if isinstance(value, str):
        return parse_coefficient(value)
    if isinstance(value, (int, float, np.floating, np.integer)):
        return CoefficientField.constant(value)
    if callable(value):
        return CoefficientField.from_callable(value)
    raise ConfigurationError(f"cannot interpret {value!r} as a coefficient")
