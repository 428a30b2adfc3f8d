"""A small arithmetic expression language over named coordinates: parser,
printer, and forward-mode differentiation.

Grammar (loosest to tightest): additive +/-, multiplicative */, unary minus,
exponentiation ^ with an integer-literal exponent, then atoms (numbers,
variables, calls to exp/sin/cos/sqrt, parenthesized expressions). All error
messages carry a 0-based byte offset into the source text.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "ExprDomainError",
    "ExprAst",
    "Var",
    "Const",
    "Unary",
    "Binary",
    "Pow",
    "parse",
    "unparse",
    "evaluate",
    "eval_grad",
]

FUNCTIONS = ("exp", "sin", "cos", "sqrt")


class ExprError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.message = message
        self.offset = offset


class ExprSyntaxError(ExprError):
    """Malformed source text."""


class ExprDomainError(ExprError):
    """Evaluation left the domain (division by zero, sqrt of a negative, ...)."""


@dataclass(frozen=True)
class Node:
    offset: int


@dataclass(frozen=True)
class Var(Node):
    index: int
    name: str


@dataclass(frozen=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Unary(Node):
    op: str  # "neg" | "exp" | "sin" | "cos" | "sqrt"
    child: Node


@dataclass(frozen=True)
class Binary(Node):
    op: str  # "+" | "-" | "*" | "/"
    left: Node
    right: Node


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: int


@dataclass(frozen=True)
class ExprAst:
    root: Node
    free_var_count: int
    var_names: tuple
    source: str


_NUM_RE = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT_RE = re.compile(r"\d+")


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        m = _NUM_RE.match(text, i)
        if m:
            tokens.append(("num", m.group(0), i))
            i = m.end()
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            tokens.append(("ident", m.group(0), i))
            i = m.end()
            continue
        if ch in "+-*/^()":
            tokens.append((ch, ch, i))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens, var_names):
        self.tokens = tokens
        self.pos = 0
        self.var_index = {name: i for i, name in enumerate(var_names)}

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind, what):
        tok = self.take()
        if tok[0] != kind:
            raise ExprSyntaxError(f"expected {what}", tok[2])
        return tok

    def additive(self):
        node = self.multiplicative()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            node = Binary(node.offset, op, node, self.multiplicative())
        return node

    def multiplicative(self):
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            node = Binary(node.offset, op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "-":
            _, _, off = self.take()
            return Unary(off, "neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        while self.peek()[0] == "^":
            self.take()
            base = Pow(base.offset, base, self.exponent_literal())
        return base

    def exponent_literal(self):
        negative = False
        if self.peek()[0] == "-":
            self.take()
            negative = True
        tok = self.take()
        if tok[0] != "num" or not _INT_RE.fullmatch(tok[1]):
            raise ExprSyntaxError("exponent must be an integer literal", tok[2])
        value = int(tok[1])
        return -value if negative else value

    def atom(self):
        tok = self.take()
        kind, text, off = tok
        if kind == "num":
            return Const(off, float(text))
        if kind == "ident":
            if self.peek()[0] == "(":
                if text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {text!r}", off)
                self.take()
                arg = self.additive()
                self.expect(")", "')'")
                return Unary(off, text, arg)
            if text not in self.var_index:
                raise ExprSyntaxError(f"unknown identifier {text!r}", off)
            return Var(off, self.var_index[text], text)
        if kind == "(":
            node = self.additive()
            self.expect(")", "')'")
            return node
        raise ExprSyntaxError("expected an expression", off)


def parse(text, var_names):
    """Parse source text over the given variable names into an ExprAst."""
    names = tuple(var_names)
    if not names:
        raise ValueError("var_names must be nonempty")
    if len(set(names)) != len(names):
        raise ValueError("var_names must be distinct")
    for name in names:
        if not _IDENT_RE.fullmatch(name) or name in FUNCTIONS:
            raise ValueError(f"bad variable name {name!r}")
    parser = _Parser(_tokenize(text), names)
    root = parser.additive()
    tok = parser.peek()
    if tok[0] != "end":
        raise ExprSyntaxError("unexpected trailing input", tok[2])
    return ExprAst(root, len(names), names, text)


_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(node):
    if isinstance(node, Binary):
        return _PREC_ADD if node.op in "+-" else _PREC_MUL
    if isinstance(node, Unary):
        return _PREC_UNARY if node.op == "neg" else _PREC_ATOM
    if isinstance(node, Pow):
        return _PREC_POW
    return _PREC_ATOM


def _wrap(node, min_prec):
    s = _unparse_node(node)
    return f"({s})" if _prec(node) < min_prec else s


def _unparse_node(node):
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Pow):
        return f"{_wrap(node.base, _PREC_ATOM)}^{node.exponent}"
    if isinstance(node, Unary):
        if node.op == "neg":
            return "-" + _wrap(node.child, _PREC_UNARY)
        return f"{node.op}({_unparse_node(node.child)})"
    if isinstance(node, Binary):
        op_prec = _prec(node)
        # The right operand is printed one level tighter so the printed text
        # reassociates to the same tree (a - (b - c) keeps its parentheses).
        left = _wrap(node.left, op_prec)
        right = _wrap(node.right, op_prec + 1)
        return f"{left} {node.op} {right}"
    raise TypeError(f"unknown node {node!r}")


def unparse(ast):
    """Render an ExprAst back to source text; parsing the result reproduces
    the same tree up to token offsets."""
    return _unparse_node(ast.root)


def _check_finite(value, node):
    if not math.isfinite(value):
        raise ExprDomainError("non-finite value", node.offset)
    return value


def _eval(node, x, d):
    """One forward pass; d selects the seeded variable (None: value only).
    Returns (value, derivative)."""
    if isinstance(node, Var):
        return x[node.index], 1.0 if node.index == d else 0.0
    if isinstance(node, Const):
        return node.value, 0.0
    if isinstance(node, Binary):
        va, da = _eval(node.left, x, d)
        vb, db = _eval(node.right, x, d)
        if node.op == "+":
            return _check_finite(va + vb, node), da + db
        if node.op == "-":
            return _check_finite(va - vb, node), da - db
        if node.op == "*":
            return _check_finite(va * vb, node), da * vb + va * db
        if vb == 0.0:
            raise ExprDomainError("division by zero", node.offset)
        return _check_finite(va / vb, node), (da * vb - va * db) / (vb * vb)
    if isinstance(node, Unary):
        v, dv = _eval(node.child, x, d)
        if node.op == "neg":
            return -v, -dv
        if node.op == "exp":
            try:
                ev = math.exp(v)
            except OverflowError:
                raise ExprDomainError("non-finite value", node.offset) from None
            return ev, ev * dv
        if node.op == "sin":
            return math.sin(v), math.cos(v) * dv
        if node.op == "cos":
            return math.cos(v), -math.sin(v) * dv
        if v < 0.0:
            raise ExprDomainError("sqrt of a negative value", node.offset)
        sv = math.sqrt(v)
        if sv == 0.0:
            if dv == 0.0:
                return 0.0, 0.0
            raise ExprDomainError("sqrt derivative at zero", node.offset)
        return sv, dv / (2.0 * sv)
    if isinstance(node, Pow):
        v, dv = _eval(node.base, x, d)
        e = node.exponent
        if e == 0:
            return 1.0, 0.0
        if v == 0.0 and e < 0:
            raise ExprDomainError("zero raised to a negative power", node.offset)
        # Expand by repeated multiplication; negative exponents invert once.
        mag = abs(e)
        acc, dacc = v, dv
        for _ in range(mag - 1):
            acc, dacc = acc * v, dacc * v + acc * dv
        acc = _check_finite(acc, node)
        if e > 0:
            return acc, dacc
        inv = 1.0 / acc
        return _check_finite(inv, node), -dacc * inv * inv
    raise TypeError(f"unknown node {node!r}")


def evaluate(ast, point):
    """Value of the expression at an ambient point."""
    x = np.asarray(point, dtype=float)
    if x.shape != (ast.free_var_count,):
        raise ValueError("point dimension does not match the variable count")
    return float(_eval(ast.root, x, None)[0])


def eval_grad(ast, point):
    """Value and ambient (Euclidean) gradient at a point, by one forward-mode
    pass per variable."""
    x = np.asarray(point, dtype=float)
    if x.shape != (ast.free_var_count,):
        raise ValueError("point dimension does not match the variable count")
    grad = np.empty(ast.free_var_count)
    value = 0.0
    for i in range(ast.free_var_count):
        value, grad[i] = _eval(ast.root, x, i)
    return value, grad
