"""
Expression mini-language used by scenario files for hard-constraint factors,
edge and crack-face tractions and body forces.

Grammar (lowest to highest precedence)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | "+" unary | power
    power  := atom ("^" unary)?          # right associative
    atom   := number | "x1" | "x2" | "pi" | name "(" expr ("," expr)* ")"
            | "(" expr ")"

Evaluation returns the value together with its exact spatial gradient and
works on scalars as well as on numpy arrays of coordinates.
"""

from __future__ import annotations

import math
import re
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, Field

from dedem import Point
from dedem.errors import ExpressionEvaluationError, ExpressionSyntaxError

FUNCTION_ARITY = {
    "sin": 1,
    "cos": 1,
    "tanh": 1,
    "abs": 1,
    "sqrt": 1,
    "relu": 1,
    "sgn": 1,
    "min": 2,
    "max": 2,
}

NAMED_CONSTANTS = {"pi": math.pi}


class Constant(BaseModel, frozen=True):
    kind: Literal["constant"] = "constant"
    value: float


class Variable(BaseModel, frozen=True):
    kind: Literal["variable"] = "variable"
    name: Literal["x1", "x2"]


class Negate(BaseModel, frozen=True):
    kind: Literal["neg"] = "neg"
    operand: ExpressionAst


class BinaryOp(BaseModel, frozen=True):
    kind: Literal["binary"] = "binary"
    op: Literal["+", "-", "*", "/", "^"]
    left: ExpressionAst
    right: ExpressionAst


class Call(BaseModel, frozen=True):
    kind: Literal["call"] = "call"
    func: Literal["sin", "cos", "tanh", "abs", "sqrt", "relu", "sgn", "min", "max"]
    args: tuple[ExpressionAst, ...]


ExpressionAst = Annotated[
    Union[Constant, Variable, Negate, BinaryOp, Call], Field(discriminator="kind")
]

for _model in (Negate, BinaryOp, Call):
    _model.model_rebuild()


def to_text(node: ExpressionAst) -> str:
    """Print `node` so that `parse_expression(to_text(node)) == node`."""
    match node:
        case Constant(value=value):
            return repr(float(value))
        case Variable(name=name):
            return name
        case Negate(operand=operand):
            return f"(-{to_text(operand)})"
        case BinaryOp(op=op, left=left, right=right):
            return f"({to_text(left)} {op} {to_text(right)})"
        case Call(func=func, args=args):
            return f"{func}({', '.join(to_text(arg) for arg in args)})"
    raise TypeError(f"not an expression node: {node!r}")


TOKEN_PATTERN = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


class Token(BaseModel, frozen=True):
    kind: Literal["number", "name", "op", "end"]
    text: str
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    position = 0
    stripped_end = len(text.rstrip())
    while position < stripped_end:
        match = TOKEN_PATTERN.match(text, position)
        if not match or match.end() == position:
            column = position + len(text[position:]) - len(text[position:].lstrip()) + 1
            raise ExpressionSyntaxError(
                f"unexpected character {text[column - 1]!r} at column {column}"
            )
        kind = match.lastgroup
        assert kind is not None
        tokens.append(
            Token(kind=kind, text=match.group(kind), column=match.start(kind) + 1)
        )
        position = match.end()
    tokens.append(Token(kind="end", text="", column=len(text) + 1))
    return tokens


class _Parser:
    """Recursive descent over the token list."""

    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.position = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.position]

    def advance(self) -> Token:
        token = self.current
        self.position += 1
        return token

    def expect(self, text: str) -> Token:
        if self.current.text != text:
            found = self.current.text or "end of input"
            if text == ")":
                raise ExpressionSyntaxError(
                    f"unbalanced parentheses: expected ')' at column "
                    f"{self.current.column}, found {found!r}"
                )
            raise ExpressionSyntaxError(
                f"expected {text!r} at column {self.current.column}, found {found!r}"
            )
        return self.advance()

    def parse(self) -> ExpressionAst:
        if self.current.kind == "end":
            raise ExpressionSyntaxError("empty expression")
        node = self.expr()
        if self.current.kind != "end":
            if self.current.text == ")":
                raise ExpressionSyntaxError(
                    f"unbalanced parentheses: unexpected ')' at column "
                    f"{self.current.column}"
                )
            raise ExpressionSyntaxError(
                f"unexpected {self.current.text!r} at column {self.current.column}"
            )
        return node

    def expr(self) -> ExpressionAst:
        node = self.term()
        while self.current.text in ("+", "-"):
            op = self.advance().text
            node = BinaryOp(op=op, left=node, right=self.term())
        return node

    def term(self) -> ExpressionAst:
        node = self.unary()
        while self.current.text in ("*", "/"):
            op = self.advance().text
            node = BinaryOp(op=op, left=node, right=self.unary())
        return node

    def unary(self) -> ExpressionAst:
        if self.current.text == "-":
            self.advance()
            return Negate(operand=self.unary())
        if self.current.text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> ExpressionAst:
        base = self.atom()
        if self.current.text == "^":
            self.advance()
            return BinaryOp(op="^", left=base, right=self.unary())
        return base

    def atom(self) -> ExpressionAst:
        token = self.current
        if token.kind == "number":
            self.advance()
            return Constant(value=float(token.text))
        if token.kind == "name":
            self.advance()
            if token.text in ("x1", "x2"):
                return Variable(name=token.text)
            if token.text in NAMED_CONSTANTS:
                return Constant(value=NAMED_CONSTANTS[token.text])
            if token.text not in FUNCTION_ARITY:
                raise ExpressionSyntaxError(
                    f"unknown identifier {token.text!r} at column {token.column}"
                )
            self.expect("(")
            args = [self.expr()]
            while self.current.text == ",":
                self.advance()
                args.append(self.expr())
            self.expect(")")
            if len(args) != FUNCTION_ARITY[token.text]:
                raise ExpressionSyntaxError(
                    f"{token.text} takes {FUNCTION_ARITY[token.text]} argument(s), "
                    f"got {len(args)} at column {token.column}"
                )
            return Call(func=token.text, args=tuple(args))
        if token.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if token.kind == "end":
            raise ExpressionSyntaxError(
                f"unexpected end of input at column {token.column}"
            )
        raise ExpressionSyntaxError(
            f"unexpected {token.text!r} at column {token.column}"
        )


def parse_expression(text: str) -> ExpressionAst:
    """Parse `text` into an expression tree."""
    return _Parser(text).parse()


def sgn(value):
    """Sign with sgn(0) = -1."""
    return np.where(value > 0, 1.0, -1.0)


Evaluated = tuple[np.ndarray, np.ndarray, np.ndarray]


def _fail(node: ExpressionAst, message: str):
    raise ExpressionEvaluationError(f"{message} in {to_text(node)}")


def _evaluate(node: ExpressionAst, x1: np.ndarray, x2: np.ndarray) -> Evaluated:
    zeros = np.zeros_like(x1)
    match node:
        case Constant(value=value):
            return np.full_like(x1, value), zeros, zeros
        case Variable(name="x1"):
            return x1, np.ones_like(x1), zeros
        case Variable(name="x2"):
            return x2, zeros, np.ones_like(x1)
        case Negate(operand=operand):
            v, g1, g2 = _evaluate(operand, x1, x2)
            return -v, -g1, -g2
        case BinaryOp():
            return _evaluate_binary(node, x1, x2)
        case Call():
            return _evaluate_call(node, x1, x2)
    raise TypeError(f"not an expression node: {node!r}")


def _evaluate_binary(node: BinaryOp, x1: np.ndarray, x2: np.ndarray) -> Evaluated:
    a, a1, a2 = _evaluate(node.left, x1, x2)
    b, b1, b2 = _evaluate(node.right, x1, x2)
    if node.op == "+":
        return a + b, a1 + b1, a2 + b2
    if node.op == "-":
        return a - b, a1 - b1, a2 - b2
    if node.op == "*":
        return a * b, a1 * b + a * b1, a2 * b + a * b2
    if node.op == "/":
        if np.any(b == 0):
            _fail(node, "division by zero")
        return a / b, (a1 * b - a * b1) / b**2, (a2 * b - a * b2) / b**2

    # "^"
    variable_exponent = np.any(b1 != 0) or np.any(b2 != 0)
    if np.any((a < 0) & (b != np.round(b))) or (variable_exponent and np.any(a <= 0)):
        _fail(node, "non-real power")
    if np.any((a == 0) & (b < 0)):
        _fail(node, "division by zero")
    with np.errstate(divide="ignore", invalid="ignore"):
        value = a**b
        scale = np.where(b == 0, 0.0, b * a ** (b - 1))
        g1 = scale * a1
        g2 = scale * a2
        if variable_exponent:
            log_a = np.log(a)
            g1 = g1 + value * log_a * b1
            g2 = g2 + value * log_a * b2
    if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(g2))):
        _fail(node, "infinite derivative")
    return value, g1, g2


def _evaluate_call(node: Call, x1: np.ndarray, x2: np.ndarray) -> Evaluated:
    evaluated = [_evaluate(arg, x1, x2) for arg in node.args]
    v, g1, g2 = evaluated[0]
    match node.func:
        case "sin":
            d = np.cos(v)
            return np.sin(v), d * g1, d * g2
        case "cos":
            d = -np.sin(v)
            return np.cos(v), d * g1, d * g2
        case "tanh":
            t = np.tanh(v)
            d = 1.0 - t * t
            return t, d * g1, d * g2
        case "abs":
            s = sgn(v)
            return v * s, s * g1, s * g2
        case "sqrt":
            if np.any(v < 0):
                _fail(node, "sqrt of negative value")
            root = np.sqrt(v)
            at_zero = root == 0
            if np.any(at_zero & ((g1 != 0) | (g2 != 0))):
                _fail(node, "infinite derivative of sqrt at zero")
            with np.errstate(divide="ignore", invalid="ignore"):
                d = np.where(at_zero, 0.0, 0.5 / root)
            return root, d * g1, d * g2
        case "relu":
            active = v > 0
            return np.where(active, v, 0.0), np.where(active, g1, 0.0), np.where(
                active, g2, 0.0
            )
        case "sgn":
            zeros = np.zeros_like(v)
            return sgn(v), zeros, zeros
        case "min" | "max":
            w, h1, h2 = evaluated[1]
            first = v <= w if node.func == "min" else v >= w
            return (
                np.where(first, v, w),
                np.where(first, g1, h1),
                np.where(first, g2, h2),
            )
    raise TypeError(f"unsupported function {node.func!r}")


def evaluate_many(ast: ExpressionAst, points) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate `ast` on an (N, 2) array; returns values (N,) and gradients (N, 2)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    x1 = np.ascontiguousarray(points[:, 0])
    x2 = np.ascontiguousarray(points[:, 1])
    with np.errstate(all="ignore"):
        value, g1, g2 = _evaluate(ast, x1, x2)
    value = np.broadcast_to(value, x1.shape).astype(np.float64)
    gradient = np.stack(
        [np.broadcast_to(g1, x1.shape), np.broadcast_to(g2, x1.shape)], axis=-1
    ).astype(np.float64)
    if not (np.all(np.isfinite(value)) and np.all(np.isfinite(gradient))):
        _fail(ast, "non-finite result")
    return value, gradient


def eval_expression(ast: ExpressionAst, x: Point) -> tuple[float, np.ndarray]:
    """Value and exact spatial gradient of `ast` at the point `x`."""
    value, gradient = evaluate_many(ast, [x])
    return float(value[0]), gradient[0]
