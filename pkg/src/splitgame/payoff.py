"""Running-cost expressions: parsing, evaluation, and bound estimation.

The running cost l(x, t, u, v) arrives as text over the variables x1..xN, t,
u1..ud, v1..vd with the operators + - * / ^ and the functions abs, exp, min,
max, pow. The grammar is deliberately minimal (no conditionals), so every
expression is continuous wherever it is defined; division is the only partial
operation and is guarded at evaluation time.

Precedence, tightest first: unary minus, ^ (right-associative), * /, + -.
Unary minus binding above ^ means -x1^2 parses as (-x1)^2. pow(a, b) is the
prefix spelling of a^b.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "PayoffExpr",
    "ParseError",
    "EvaluationError",
    "LipschitzEstimate",
    "parse",
    "evaluate",
    "evaluate_broadcast",
    "lipschitz_bound",
]


class ParseError(ValueError):
    """Expression text rejected; carries the character offset of the fault."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class EvaluationError(ArithmeticError):
    """Expression hit a partial operation (division by zero, non-finite result)."""


# --- AST ---------------------------------------------------------------

@dataclass(frozen=True)
class _Num:
    value: float


@dataclass(frozen=True)
class _Var:
    kind: str  # "x", "u", "v" or "t"
    index: int  # 0-based; 0 for t


@dataclass(frozen=True)
class _Neg:
    operand: "_Node"


@dataclass(frozen=True)
class _BinOp:
    op: str  # one of + - * / ^
    left: "_Node"
    right: "_Node"


@dataclass(frozen=True)
class _Call:
    name: str
    args: tuple


_Node = Union[_Num, _Var, _Neg, _BinOp, _Call]

_FUNCTIONS = {"abs": 1, "exp": 1, "min": 2, "max": 2, "pow": 2}

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
)

_VAR_RE = re.compile(r"^([xuv])([1-9]\d*)$")


@dataclass(frozen=True)
class _Token:
    kind: str  # "num", "name", "op", "end"
    text: str
    position: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ParseError(f"syntax error: unexpected character {text[pos]!r}", pos)
        kind = match.lastgroup
        tokens.append(_Token(kind, match.group(), pos))
        pos = match.end()
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, symbol: str) -> None:
        tok = self.peek()
        if tok.kind != "op" or tok.text != symbol:
            raise ParseError(f"syntax error: expected {symbol!r}", tok.position)
        self.advance()

    def parse(self) -> _Node:
        node = self.parse_sum()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"syntax error: unexpected {tok.text!r}", tok.position)
        return node

    def parse_sum(self) -> _Node:
        node = self.parse_product()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in ("+", "-"):
                self.advance()
                node = _BinOp(tok.text, node, self.parse_product())
            else:
                return node

    def parse_product(self) -> _Node:
        node = self.parse_power()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in ("*", "/"):
                self.advance()
                node = _BinOp(tok.text, node, self.parse_power())
            else:
                return node

    def parse_power(self) -> _Node:
        node = self.parse_unary()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.advance()
            return _BinOp("^", node, self.parse_power())
        return node

    def parse_unary(self) -> _Node:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return _Neg(self.parse_unary())
        return self.parse_atom()

    def parse_atom(self) -> _Node:
        tok = self.advance()
        if tok.kind == "num":
            return _Num(float(tok.text))
        if tok.kind == "name":
            if self.peek().kind == "op" and self.peek().text == "(":
                return self.parse_call(tok)
            if tok.text == "t":
                return _Var("t", 0)
            var = _VAR_RE.match(tok.text)
            if var is None:
                raise ParseError(f"unknown identifier {tok.text!r}", tok.position)
            return _Var(var.group(1), int(var.group(2)) - 1)
        if tok.kind == "op" and tok.text == "(":
            node = self.parse_sum()
            self.expect_op(")")
            return node
        what = repr(tok.text) if tok.kind != "end" else "end of input"
        raise ParseError(f"syntax error: unexpected {what}", tok.position)

    def parse_call(self, name_tok: _Token) -> _Node:
        name = name_tok.text
        if name not in _FUNCTIONS:
            raise ParseError(f"unknown identifier {name!r}", name_tok.position)
        self.expect_op("(")
        args = [self.parse_sum()]
        while self.peek().kind == "op" and self.peek().text == ",":
            self.advance()
            args.append(self.parse_sum())
        self.expect_op(")")
        arity = _FUNCTIONS[name]
        if len(args) != arity:
            raise ParseError(
                f"{name} expects {arity} argument{'s' if arity != 1 else ''},"
                f" got {len(args)}",
                name_tok.position,
            )
        return _Call(name, tuple(args))


# --- public expression type --------------------------------------------

@dataclass(frozen=True)
class PayoffExpr:
    """A parsed running-cost expression.

    Wraps the AST together with the highest variable index of each family that
    actually occurs (0 when the family is absent), so dimension checks against
    a concrete game are cheap.
    """

    root: _Node
    max_x: int
    max_u: int
    max_v: int
    uses_t: bool

    def to_text(self) -> str:
        """Canonical text form; reparsing it reproduces this AST exactly."""
        return _print(self.root, 0)

    def check_dimensions(self, n_x: int, n_u: int, n_v: int) -> None:
        """Raise ValueError when the expression references missing components."""
        for used, have, family in ((self.max_x, n_x, "x"), (self.max_u, n_u, "u"),
                                   (self.max_v, n_v, "v")):
            if used > have:
                raise ValueError(
                    f"payoff references {family}{used} but {family} has"
                    f" dimension {have}"
                )

    def __str__(self) -> str:
        return self.to_text()


def _scan_vars(node: _Node, seen: dict) -> None:
    if isinstance(node, _Var):
        if node.kind == "t":
            seen["t"] = True
        else:
            seen[node.kind] = max(seen[node.kind], node.index + 1)
    elif isinstance(node, _Neg):
        _scan_vars(node.operand, seen)
    elif isinstance(node, _BinOp):
        _scan_vars(node.left, seen)
        _scan_vars(node.right, seen)
    elif isinstance(node, _Call):
        for arg in node.args:
            _scan_vars(arg, seen)


def parse(text: str) -> PayoffExpr:
    """Parse expression text into a PayoffExpr.

    Raises ParseError (with character offset) on syntax errors, unknown
    identifiers, and function arity mismatches.
    """
    root = _Parser(text).parse()
    seen = {"x": 0, "u": 0, "v": 0, "t": False}
    _scan_vars(root, seen)
    return PayoffExpr(root, seen["x"], seen["u"], seen["v"], seen["t"])


# --- canonical printing ------------------------------------------------

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}
_NEG_PRECEDENCE = 4
_ATOM_PRECEDENCE = 5


def _node_precedence(node: _Node) -> int:
    if isinstance(node, _BinOp):
        return _PRECEDENCE[node.op]
    if isinstance(node, _Neg):
        return _NEG_PRECEDENCE
    return _ATOM_PRECEDENCE


def _print(node: _Node, parent_prec: int) -> str:
    if isinstance(node, _Num):
        return repr(node.value)
    if isinstance(node, _Var):
        return "t" if node.kind == "t" else f"{node.kind}{node.index + 1}"
    if isinstance(node, _Neg):
        inner = _print(node.operand, _NEG_PRECEDENCE)
        text = f"-{inner}"
        return f"({text})" if _NEG_PRECEDENCE < parent_prec else text
    if isinstance(node, _Call):
        args = ", ".join(_print(a, 0) for a in node.args)
        return f"{node.name}({args})"
    prec = _PRECEDENCE[node.op]
    if node.op == "^":
        # right-associative: parenthesize a left child of equal precedence
        left = _print(node.left, prec + 1)
        right = _print(node.right, prec)
        text = f"{left}^{right}"
    else:
        # left-associative: parenthesize a right child of equal precedence so
        # the printed grouping (hence float evaluation order) is preserved
        left = _print(node.left, prec)
        right = _print(node.right, prec + 1)
        text = f"{left} {node.op} {right}"
    return f"({text})" if prec < parent_prec else text


# --- evaluation --------------------------------------------------------

def _eval(node: _Node, xs, t, us, vs):
    if isinstance(node, _Num):
        return node.value
    if isinstance(node, _Var):
        if node.kind == "t":
            return t
        pool = xs if node.kind == "x" else us if node.kind == "u" else vs
        if node.index >= len(pool):
            raise EvaluationError(
                f"expression references {node.kind}{node.index + 1} beyond the"
                f" provided dimension {len(pool)}"
            )
        return pool[node.index]
    if isinstance(node, _Neg):
        return -_eval(node.operand, xs, t, us, vs)
    if isinstance(node, _BinOp):
        a = _eval(node.left, xs, t, us, vs)
        b = _eval(node.right, xs, t, us, vs)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if np.any(np.asarray(b) == 0.0):
                raise EvaluationError("division by zero")
            return a / b
        return np.power(a, b)
    a = _eval(node.args[0], xs, t, us, vs)
    if node.name == "abs":
        return np.abs(a)
    if node.name == "exp":
        return np.exp(a)
    b = _eval(node.args[1], xs, t, us, vs)
    if node.name == "min":
        return np.minimum(a, b)
    if node.name == "max":
        return np.maximum(a, b)
    return np.power(a, b)


def evaluate(e: PayoffExpr, x, t: float, u, v) -> float:
    """Evaluate l(x, t, u, v) at scalar points.

    Args:
        e: parsed expression.
        x: type point (sequence of coordinates).
        t: time.
        u, v: control points (sequences of coordinates).

    Returns:
        The scalar value. Raises EvaluationError on division by zero or a
        non-finite result (e.g. 0^negative or exp overflow).
    """
    xs = np.asarray(x, dtype=np.float64).ravel()
    us = np.asarray(u, dtype=np.float64).ravel()
    vs = np.asarray(v, dtype=np.float64).ravel()
    with np.errstate(all="ignore"):
        val = _eval(e.root, xs, float(t), us, vs)
    val = float(val)
    if not np.isfinite(val):
        raise EvaluationError("expression produced a non-finite value")
    return val


def evaluate_broadcast(e: PayoffExpr, xs, t, us, vs) -> np.ndarray:
    """Evaluate over numpy-broadcastable component arrays.

    xs, us, vs are sequences of arrays (one per coordinate); t is a scalar or
    array. All arguments must broadcast against each other. Used to build
    payoff tensors in one pass.
    """
    with np.errstate(all="ignore"):
        val = _eval(e.root, xs, t, us, vs)
    val = np.asarray(val, dtype=np.float64)
    if not np.all(np.isfinite(val)):
        raise EvaluationError("expression produced a non-finite value")
    return val


# --- bound estimation --------------------------------------------------

@dataclass(frozen=True)
class LipschitzEstimate:
    """Sampled bound estimates for a payoff expression.

    These are finite-difference estimates over a fixed grid - lower bounds of
    the true constants - used to scale test tolerances, not certificates.
    """

    sup_bound: float
    lip_x: float
    lip_t: float


def lipschitz_bound(e: PayoffExpr, x_bounds, t_bounds, controls_u, controls_v,
                    axis_points: int = 33) -> LipschitzEstimate:
    """Estimate sup |l| and Lipschitz constants in x and t by sampling.

    Args:
        e: parsed expression.
        x_bounds: (N, 2) array of per-coordinate [low, high] bounds for x.
        t_bounds: (low, high) bounds for t.
        controls_u: (nu, du) array of pure actions for the first player.
        controls_v: (nv, dv) array of pure actions for the second player.
        axis_points: samples per axis (>= 33 keeps endpoints and midpoints on a
            fixed layout; degenerate axes collapse to a single sample).

    Returns:
        LipschitzEstimate with the max |value| and the max finite-difference
        ratios along each x coordinate and along t.
    """
    x_bounds = np.atleast_2d(np.asarray(x_bounds, dtype=np.float64))
    controls_u = np.atleast_2d(np.asarray(controls_u, dtype=np.float64))
    controls_v = np.atleast_2d(np.asarray(controls_v, dtype=np.float64))
    t_lo, t_hi = float(t_bounds[0]), float(t_bounds[1])

    axes = []
    steps = []
    for lo, hi in x_bounds:
        if hi > lo:
            axes.append(np.linspace(lo, hi, axis_points))
            steps.append((hi - lo) / (axis_points - 1))
        else:
            axes.append(np.array([lo]))
            steps.append(0.0)
    if t_hi > t_lo:
        t_axis = np.linspace(t_lo, t_hi, axis_points)
        t_step = (t_hi - t_lo) / (axis_points - 1)
    else:
        t_axis = np.array([t_lo])
        t_step = 0.0

    mesh = np.meshgrid(*axes, t_axis, indexing="ij")
    x_mesh = mesh[:-1]
    t_mesh = mesh[-1]
    n_x = len(axes)

    sup = 0.0
    lip_x = 0.0
    lip_t = 0.0
    for a in range(controls_u.shape[0]):
        for b in range(controls_v.shape[0]):
            vals = evaluate_broadcast(e, x_mesh, t_mesh,
                                      controls_u[a], controls_v[b])
            vals = np.broadcast_to(vals, t_mesh.shape)
            sup = max(sup, float(np.max(np.abs(vals))))
            for d in range(n_x):
                if steps[d] > 0.0:
                    diffs = np.abs(np.diff(vals, axis=d))
                    lip_x = max(lip_x, float(np.max(diffs)) / steps[d])
            if t_step > 0.0:
                diffs = np.abs(np.diff(vals, axis=n_x))
                lip_t = max(lip_t, float(np.max(diffs)) / t_step)
    return LipschitzEstimate(sup, lip_x, lip_t)
