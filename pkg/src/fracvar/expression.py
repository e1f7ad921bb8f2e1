"""Arithmetic expressions for Lagrangians, constraint integrands and holonomic maps.

Grammar (``^`` binds tightest and is right-associative)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Unary minus sits below ``^``, so ``-2^2`` is ``-(2^2)``. Evaluation works on
scalars or numpy arrays and raises :class:`EvaluationError` instead of
producing non-finite values.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .fracops import PoleError, gamma

__all__ = [
    "ParseError",
    "EvaluationError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "parse",
    "to_source",
    "VARIABLES",
    "FUNCTIONS",
]

VARIABLES = frozenset({"t", "x", "d", "x1", "x2", "d1", "d2", "d3"})
CONSTANTS = {"pi": math.pi}


class ParseError(ValueError):
    """Malformed expression; ``pos`` is the 0-based character offset."""

    def __init__(self, message: str, pos: int, source: str = ""):
        self.pos = pos
        self.source = source
        super().__init__(f"{message} at position {pos}")


class EvaluationError(ArithmeticError):
    """Expression evaluated outside its domain."""


def _check(ok, name: str):
    if not np.all(ok):
        raise EvaluationError(f"{name}: argument outside domain")


def _ln(v):
    _check(np.asarray(v) > 0, "ln")
    return np.log(v)


def _sqrt(v):
    _check(np.asarray(v) >= 0, "sqrt")
    return np.sqrt(v)


def _gammafn(v):
    try:
        return gamma(v)
    except PoleError as exc:
        raise EvaluationError(str(exc)) from None


FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "ln": _ln,
    "sqrt": _sqrt,
    "abs": np.abs,
    "gammafn": _gammafn,
}


# --- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float

    def evaluate(self, env):
        return self.value


@dataclass(frozen=True)
class Var:
    name: str

    def evaluate(self, env):
        if self.name in CONSTANTS:
            return CONSTANTS[self.name]
        try:
            return env[self.name]
        except KeyError:
            raise EvaluationError(f"variable {self.name!r} is not bound") from None


@dataclass(frozen=True)
class Neg:
    operand: object

    def evaluate(self, env):
        return -self.operand.evaluate(env)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object

    def evaluate(self, env):
        lhs = self.left.evaluate(env)
        rhs = self.right.evaluate(env)
        if self.op == "+":
            return lhs + rhs
        if self.op == "-":
            return lhs - rhs
        if self.op == "*":
            return lhs * rhs
        if self.op == "/":
            _check(np.asarray(rhs) != 0, "division")
            return lhs / rhs
        # '^': negative bases only with integral exponents
        base = np.asarray(lhs, dtype=float)
        expo = np.asarray(rhs, dtype=float)
        _check((base > 0) | (expo == np.round(expo)) | ((base == 0) & (expo > 0)), "power")
        with np.errstate(over="ignore"):
            out = np.power(base, expo)
        _check(np.isfinite(out), "power")
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class Call:
    func: str
    arg: object

    def evaluate(self, env):
        return FUNCTIONS[self.func](self.arg.evaluate(env))


def evaluate(node, env):
    """Evaluate ``node`` with variables bound by ``env`` (scalars or arrays)."""
    with np.errstate(all="ignore"):
        out = node.evaluate(env)
    _check(np.isfinite(out), "result")
    return out


def free_variables(node) -> set[str]:
    if isinstance(node, Var):
        return set() if node.name in CONSTANTS else {node.name}
    if isinstance(node, Neg):
        return free_variables(node.operand)
    if isinstance(node, BinOp):
        return free_variables(node.left) | free_variables(node.right)
    if isinstance(node, Call):
        return free_variables(node.arg)
    return set()


# --- printing ----------------------------------------------------------------


def to_source(node) -> str:
    """Fully parenthesised source text; ``parse(to_source(e))`` rebuilds ``e``."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


# --- parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None:
            bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise ParseError(f"unexpected character {source[bad]!r}", bad, source)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, variables):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ParseError(message, tok[2], self.source)

    def expect(self, text):
        tok = self.peek()
        if tok[1] != text or tok[0] == "end":
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            raise self.error(f"expected {text!r}, found {found}")
        return self.advance()

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Neg(self.unary())
        if self.peek()[0] == "op" and self.peek()[1] == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            # right operand re-enters unary, which makes ^ right-associative
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        tok = self.peek()
        kind, text, _ = tok
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "name":
            self.advance()
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in FUNCTIONS:
                    raise self.error(f"unknown function {text!r}", tok)
                self.advance()
                arg = self.expr()
                if self.peek()[1] == ",":
                    raise self.error(f"{text} takes exactly one argument")
                self.expect(")")
                return Call(text, arg)
            if text in FUNCTIONS:
                raise self.error(f"function {text!r} needs an argument", tok)
            if text not in CONSTANTS and text not in self.variables:
                raise self.error(f"unknown identifier {text!r}", tok)
            return Var(text)
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected token {text!r}")


def parse(source: str, variables=VARIABLES):
    """Parse ``source`` into an expression tree.

    ``variables`` restricts the identifiers accepted besides ``pi`` and the
    function names.
    """
    if not source or not source.strip():
        raise ParseError("empty expression", 0, source or "")
    return _Parser(source, frozenset(variables)).parse()
