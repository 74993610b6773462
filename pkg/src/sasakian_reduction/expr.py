"""A small arithmetic expression language for user-supplied metrics and fields.

Grammar (``^`` is right-associative and binds tighter than unary minus)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Functions: ``sin cos tan exp log sqrt pow``.  Constants: ``pi e``.  Any other
name must be one of the declared coordinates.  Expressions compile to
JAX-traceable callables of the coordinate vector.
"""

from __future__ import annotations

import json
import math
import re
from typing import Callable, Sequence

import jax.numpy as jnp
from jax import lax

from .errors import ExpressionError

FUNCTIONS = {
    "sin": (1, jnp.sin),
    "cos": (1, jnp.cos),
    "tan": (1, jnp.tan),
    "exp": (1, jnp.exp),
    "log": (1, jnp.log),
    "sqrt": (1, jnp.sqrt),
    "pow": (2, jnp.power),
}
CONSTANTS = {"pi": math.pi, "e": math.e}

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\S))")


def tokenize(text: str) -> list:
    tokens, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        num, name, op = m.groups()
        start = m.start(m.lastindex)
        if num is not None:
            tokens.append(("num", float(num), start))
        elif name is not None:
            tokens.append(("name", name, start))
        else:
            if op not in "+-*/^(),":
                raise ExpressionError(f"unexpected character {op!r} at position {start} in {text!r}")
            tokens.append(("op", op, start))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0
        self.variables = list(variables)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        return ExpressionError(f"{msg} at position {tok[2]} in {self.text!r}")

    def expect(self, op):
        tok = self.take()
        if tok[:2] != ("op", op):
            raise self.error(f"expected {op!r}", tok)

    def parse(self):
        if self.peek()[0] == "end":
            raise self.error("empty expression")
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error("unexpected trailing input")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return ("neg", self.unary())
        if self.peek()[:2] == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        tok = self.take()
        kind, val, _ = tok
        if kind == "num":
            return ("num", val)
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                if val not in FUNCTIONS:
                    raise self.error(f"unknown function {val!r}", tok)
                self.take()
                args = [self.expr()]
                while self.peek()[:2] == ("op", ","):
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[val][0]
                if len(args) != arity:
                    raise self.error(f"{val} takes {arity} argument(s), got {len(args)}", tok)
                return ("call", val, tuple(args))
            if val in self.variables:
                return ("var", self.variables.index(val))
            if val in CONSTANTS:
                return ("num", CONSTANTS[val])
            raise self.error(f"unknown name {val!r}", tok)
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        raise self.error("expected a number, name or '('", tok)


def parse(text: str, variables: Sequence[str]):
    """Parse ``text`` into a nested-tuple syntax tree."""
    if not isinstance(text, str):
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            return ("num", float(text))
        raise ExpressionError(f"expression must be a string or number, got {type(text).__name__}")
    return _Parser(text, variables).parse()


def _integer_exponent(node):
    """The exponent as an int when it is a (possibly negated) integer literal."""
    sign = 1
    while node[0] == "neg":
        node, sign = node[1], -sign
    if node[0] == "num" and float(node[1]).is_integer():
        return sign * int(node[1])
    return None


def evaluate(node, x):
    tag = node[0]
    if tag == "^":
        k = _integer_exponent(node[2])
        if k is not None:
            # integer_pow keeps derivatives finite at 0 (d/dx x^0 = 0, not 0 * inf)
            return lax.integer_pow(evaluate(node[1], x), k)
    if tag == "num":
        return node[1] + 0.0 * x[0]
    if tag == "var":
        return x[node[1]]
    if tag == "neg":
        return -evaluate(node[1], x)
    if tag == "call":
        fn = FUNCTIONS[node[1]][1]
        return fn(*(evaluate(a, x) for a in node[2]))
    a, b = evaluate(node[1], x), evaluate(node[2], x)
    if tag == "+":
        return a + b
    if tag == "-":
        return a - b
    if tag == "*":
        return a * b
    if tag == "/":
        return a / b
    return a**b


class Compiled:
    """Array of parsed expressions evaluated on a coordinate vector.

    Instances compare and hash by source text, so they can serve as the static
    function of a :class:`jax.tree_util.Partial`.
    """

    def __init__(self, sources, variables: Sequence[str]):
        self.sources = sources
        self.variables = tuple(variables)
        self.shape, flat = _flatten(sources)
        self.trees = [parse(s, variables) for s in flat]

    def __call__(self, x):
        vals = jnp.stack([evaluate(t, x) for t in self.trees])
        return vals.reshape(self.shape)

    def _key(self):
        return json.dumps(self.sources, sort_keys=True), self.variables

    def __eq__(self, other):
        return isinstance(other, Compiled) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return f"Compiled({self.sources!r})"


def _flatten(obj):
    if isinstance(obj, (list, tuple)):
        if not obj:
            raise ExpressionError("empty expression list")
        parts = [_flatten(o) for o in obj]
        shapes = {p[0] for p in parts}
        if len(shapes) != 1:
            raise ExpressionError("ragged expression array")
        return (len(obj),) + parts[0][0], [s for p in parts for s in p[1]]
    return (), [obj]


def compile_array(sources, variables: Sequence[str]) -> Callable:
    """Compile a (nested) list of expressions into ``x -> jnp.ndarray``."""
    return Compiled(sources, variables)
