"""Expression Module

This module provides the expression language in which vector fields and
partitioning functions are written: an immutable AST, a recursive-descent
parser, a printer, vectorised evaluation and symbolic differentiation.

Grammar:
    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := ("-")? atom ("^" number)?
    atom   := number | ident | fn "(" expr ")" | "ifpos" "(" expr "," expr "," expr ")" | "(" expr ")"
    ident  := "x" digit+
    fn     := "sin" | "cos" | "exp" | "ln" | "sqrt" | "tanh"
"""

__all__ = [
    "Expr",
    "Constant",
    "Var",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Call",
    "IfPos",
    "FUNCTIONS",
    "parse",
    "to_source",
    "evaluate",
    "evaluate_batch",
    "differentiate",
    "gradient",
    "jacobian",
    "lie_derivative",
    "max_variable_index",
]

import math
import re
from dataclasses import dataclass
from functools import singledispatch

import numpy as np

from .exceptions import ExpressionDomainError, ExpressionSyntaxError

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt", "tanh")

_NUMPY_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "ln": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
}


class Expr:
    """Base class of all expression nodes. Nodes are frozen dataclasses."""

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True, eq=True)
class Constant(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    """Variable x_index, 1-based."""

    index: int


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True, eq=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    """Power with a constant exponent."""

    base: Expr
    exponent: float


@dataclass(frozen=True, eq=True)
class Call(Expr):
    fn: str
    arg: Expr

    def __post_init__(self):
        if self.fn not in FUNCTIONS:
            raise ValueError(f"Unknown function: {self.fn}")


@dataclass(frozen=True, eq=True)
class IfPos(Expr):
    """``then`` where ``cond > 0``, ``otherwise`` elsewhere."""

    cond: Expr
    then: Expr
    otherwise: Expr


# ---------------------------------------------------------------------------
# Smart constructors (fold trivial zeros and ones, nothing more)
# ---------------------------------------------------------------------------

ZERO = Constant(0.0)
ONE = Constant(1.0)


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Constant) and (value is None or e.value == value)


def _neg(a: Expr) -> Expr:
    if isinstance(a, Constant):
        return Constant(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def _add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Constant(a.value + b.value)
    return Add(a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    if _is_const(a) and _is_const(b):
        return Constant(a.value - b.value)
    return Sub(a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Constant(a.value * b.value)
    return Mul(a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Div(a, b)


def _pow(base: Expr, exponent: float) -> Expr:
    if exponent == 0.0:
        return ONE
    if exponent == 1.0:
        return base
    return Pow(base, float(exponent))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)
_VAR_RE = re.compile(r"x(\d+)\Z")


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    length = len(source)
    while pos < length:
        if source[pos].isspace():
            pos += 1
            continue
        match = _TOKEN_RE.match(source, pos)
        if match is None or match.end() == pos:
            raise ExpressionSyntaxError(f"Unexpected character {source[pos]!r}", pos, source)
        kind = match.lastgroup
        start = match.start(kind)
        tokens.append((kind, match.group(kind), start))
        pos = match.end()
    tokens.append(("end", "", length))
    return tokens


class _Parser:
    """Recursive-descent parser over the token list."""

    def __init__(self, source: str, dim: int):
        self.source = source
        self.dim = dim
        self.tokens = _tokenize(source)
        self.index = 0

    @property
    def current(self) -> tuple[str, str, int]:
        return self.tokens[self.index]

    def _advance(self) -> tuple[str, str, int]:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _error(self, message: str, position: int | None = None) -> ExpressionSyntaxError:
        if position is None:
            position = self.current[2]
        return ExpressionSyntaxError(message, position, self.source)

    def _expect(self, op: str) -> None:
        kind, text, pos = self.current
        if kind != "op" or text != op:
            found = "end of input" if kind == "end" else repr(text)
            raise self._error(f"Expected '{op}' but found {found}", pos)
        self._advance()

    def parse(self) -> Expr:
        expr = self._expr()
        kind, text, pos = self.current
        if kind != "end":
            raise self._error(f"Unexpected token {text!r}", pos)
        return expr

    def _expr(self) -> Expr:
        left = self._term()
        while self.current[0] == "op" and self.current[1] in "+-":
            op = self._advance()[1]
            right = self._term()
            left = Add(left, right) if op == "+" else Sub(left, right)
        return left

    def _term(self) -> Expr:
        left = self._factor()
        while self.current[0] == "op" and self.current[1] in "*/":
            op = self._advance()[1]
            right = self._factor()
            left = Mul(left, right) if op == "*" else Div(left, right)
        return left

    def _factor(self) -> Expr:
        negate = False
        if self.current[0] == "op" and self.current[1] == "-":
            self._advance()
            negate = True
        node = self._atom()
        if self.current[0] == "op" and self.current[1] == "^":
            self._advance()
            kind, text, pos = self.current
            if kind != "number":
                raise self._error("Non-constant exponent: '^' must be followed by a number", pos)
            self._advance()
            node = Pow(node, float(text))
        return Neg(node) if negate else node

    def _atom(self) -> Expr:
        kind, text, pos = self.current
        if kind == "number":
            self._advance()
            return Constant(float(text))
        if kind == "ident":
            self._advance()
            var_match = _VAR_RE.match(text)
            if var_match:
                index = int(var_match.group(1))
                if index < 1 or index > self.dim:
                    raise self._error(f"Variable {text} out of range for dimension {self.dim}", pos)
                return Var(index)
            if text in FUNCTIONS:
                self._expect("(")
                arg = self._expr()
                self._expect(")")
                return Call(text, arg)
            if text == "ifpos":
                self._expect("(")
                cond = self._expr()
                self._expect(",")
                then = self._expr()
                self._expect(",")
                otherwise = self._expr()
                self._expect(")")
                return IfPos(cond, then, otherwise)
            raise self._error(f"Unknown identifier {text!r}", pos)
        if kind == "op" and text == "(":
            self._advance()
            inner = self._expr()
            self._expect(")")
            return inner
        found = "end of input" if kind == "end" else repr(text)
        raise self._error(f"Unexpected {found}", pos)


def parse(source: str, dim: int) -> Expr:
    """
    Parse expression source text for a system of dimension ``dim``.

    Args:
        source: Expression text, e.g. ``"-x1"`` or ``"x1^2 + sin(x2)"``
        dim: Dimension n of the system; variables x1..xn are allowed

    Returns:
        The expression AST

    Raises:
        ExpressionSyntaxError: On a syntax error, an out-of-range variable or a non-constant exponent
    """
    if dim < 1:
        raise ValueError(f"Dimension must be positive, got {dim}")
    if not isinstance(source, str):
        raise ExpressionSyntaxError(f"Expression source must be text, got {type(source).__name__}")
    return _Parser(source, dim).parse()


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC_SUM = 1
_PREC_PRODUCT = 2
_PREC_FACTOR = 3
_PREC_POWER = 4
_PREC_ATOM = 5


def _format_number(value: float) -> str:
    if math.isfinite(value) and value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(float(value))


@singledispatch
def _render(expr: Expr) -> tuple[str, int]:
    raise TypeError(f"Cannot print {type(expr).__name__}")


@_render.register
def _(expr: Constant) -> tuple[str, int]:
    if math.copysign(1.0, expr.value) < 0:
        return f"(-{_format_number(-expr.value)})", _PREC_ATOM
    return _format_number(expr.value), _PREC_ATOM


@_render.register
def _(expr: Var) -> tuple[str, int]:
    return f"x{expr.index}", _PREC_ATOM


def _wrap(expr: Expr, min_prec: int) -> str:
    text, prec = _render(expr)
    return text if prec >= min_prec else f"({text})"


@_render.register
def _(expr: Neg) -> tuple[str, int]:
    return f"-{_wrap(expr.operand, _PREC_POWER)}", _PREC_FACTOR


@_render.register
def _(expr: Add) -> tuple[str, int]:
    return f"{_wrap(expr.left, _PREC_SUM)} + {_wrap(expr.right, _PREC_PRODUCT)}", _PREC_SUM


@_render.register
def _(expr: Sub) -> tuple[str, int]:
    return f"{_wrap(expr.left, _PREC_SUM)} - {_wrap(expr.right, _PREC_PRODUCT)}", _PREC_SUM


@_render.register
def _(expr: Mul) -> tuple[str, int]:
    return f"{_wrap(expr.left, _PREC_PRODUCT)}*{_wrap(expr.right, _PREC_FACTOR)}", _PREC_PRODUCT


@_render.register
def _(expr: Div) -> tuple[str, int]:
    return f"{_wrap(expr.left, _PREC_PRODUCT)}/{_wrap(expr.right, _PREC_FACTOR)}", _PREC_PRODUCT


@_render.register
def _(expr: Pow) -> tuple[str, int]:
    base = _wrap(expr.base, _PREC_ATOM)
    if expr.exponent < 0:
        # the grammar has no negative exponents
        return f"1/{base}^{_format_number(-expr.exponent)}", _PREC_PRODUCT
    return f"{base}^{_format_number(expr.exponent)}", _PREC_POWER


@_render.register
def _(expr: Call) -> tuple[str, int]:
    return f"{expr.fn}({_render(expr.arg)[0]})", _PREC_ATOM


@_render.register
def _(expr: IfPos) -> tuple[str, int]:
    parts = ", ".join(_render(e)[0] for e in (expr.cond, expr.then, expr.otherwise))
    return f"ifpos({parts})", _PREC_ATOM


def to_source(expr: Expr) -> str:
    """Print an expression in the grammar accepted by :func:`parse`."""
    return _render(expr)[0]


def max_variable_index(expr: Expr) -> int:
    """Largest variable index occurring in ``expr`` (0 for constant expressions)."""
    if isinstance(expr, Var):
        return expr.index
    if isinstance(expr, Constant):
        return 0
    if isinstance(expr, Neg):
        return max_variable_index(expr.operand)
    if isinstance(expr, Call):
        return max_variable_index(expr.arg)
    if isinstance(expr, Pow):
        return max_variable_index(expr.base)
    if isinstance(expr, IfPos):
        return max(max_variable_index(e) for e in (expr.cond, expr.then, expr.otherwise))
    return max(max_variable_index(expr.left), max_variable_index(expr.right))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _any_active(condition, active: np.ndarray) -> bool:
    return bool(np.any(np.broadcast_to(condition, active.shape) & active))


@singledispatch
def _eval(expr: Expr, cols: list, active: np.ndarray):
    raise TypeError(f"Cannot evaluate {type(expr).__name__}")


@_eval.register
def _(expr: Constant, cols, active):
    return expr.value


@_eval.register
def _(expr: Var, cols, active):
    if expr.index > len(cols):
        raise ExpressionDomainError(f"Variable x{expr.index} not defined for a point of dimension {len(cols)}", expr)
    return cols[expr.index - 1]


@_eval.register
def _(expr: Neg, cols, active):
    return -_eval(expr.operand, cols, active)


@_eval.register
def _(expr: Add, cols, active):
    return _eval(expr.left, cols, active) + _eval(expr.right, cols, active)


@_eval.register
def _(expr: Sub, cols, active):
    return _eval(expr.left, cols, active) - _eval(expr.right, cols, active)


@_eval.register
def _(expr: Mul, cols, active):
    return _eval(expr.left, cols, active) * _eval(expr.right, cols, active)


@_eval.register
def _(expr: Div, cols, active):
    numerator = _eval(expr.left, cols, active)
    denominator = _eval(expr.right, cols, active)
    if _any_active(denominator == 0, active):
        raise ExpressionDomainError("Division by zero", expr)
    return numerator / denominator


@_eval.register
def _(expr: Pow, cols, active):
    base = _eval(expr.base, cols, active)
    if not float(expr.exponent).is_integer() and _any_active(base < 0, active):
        raise ExpressionDomainError("Negative base with fractional exponent", expr)
    if expr.exponent < 0 and _any_active(base == 0, active):
        raise ExpressionDomainError("Zero base with negative exponent", expr)
    return np.power(base, expr.exponent)


@_eval.register
def _(expr: Call, cols, active):
    arg = _eval(expr.arg, cols, active)
    if expr.fn == "ln" and _any_active(arg <= 0, active):
        raise ExpressionDomainError("Logarithm of a nonpositive value", expr)
    if expr.fn == "sqrt" and _any_active(arg < 0, active):
        raise ExpressionDomainError("Square root of a negative value", expr)
    return _NUMPY_FUNCTIONS[expr.fn](arg)


@_eval.register
def _(expr: IfPos, cols, active):
    cond = np.broadcast_to(_eval(expr.cond, cols, active) > 0, active.shape)
    then_active = active & cond
    else_active = active & ~cond
    then_value = _eval(expr.then, cols, then_active) if then_active.any() else 0.0
    else_value = _eval(expr.otherwise, cols, else_active) if else_active.any() else 0.0
    return np.where(cond, then_value, else_value)


def evaluate_batch(expr: Expr, points) -> np.ndarray:
    """
    Evaluate an expression at many points at once.

    IfPos branches are evaluated lazily: domain checks apply only to the points
    that select the branch.

    Args:
        expr: Expression to evaluate
        points: Array-like of shape (m, n)

    Returns:
        Array of shape (m,)

    Raises:
        ExpressionDomainError: If an active point violates a function domain
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError(f"Expected points of shape (m, n), got shape {pts.shape}")
    active = np.ones(pts.shape[0], dtype=bool)
    cols = [pts[:, i] for i in range(pts.shape[1])]
    with np.errstate(all="ignore"):
        values = _eval(expr, cols, active)
    return np.array(np.broadcast_to(values, active.shape), dtype=float)


def evaluate(expr: Expr, x) -> float:
    """Evaluate an expression at a single point ``x`` in R^n."""
    point = np.asarray(x, dtype=float)
    if point.ndim != 1:
        raise ValueError(f"Expected a point of shape (n,), got shape {point.shape}")
    return float(evaluate_batch(expr, point[None, :])[0])


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------


@singledispatch
def _diff(expr: Expr, i: int) -> Expr:
    raise TypeError(f"Cannot differentiate {type(expr).__name__}")


@_diff.register
def _(expr: Constant, i):
    return ZERO


@_diff.register
def _(expr: Var, i):
    return ONE if expr.index == i else ZERO


@_diff.register
def _(expr: Neg, i):
    return _neg(_diff(expr.operand, i))


@_diff.register
def _(expr: Add, i):
    return _add(_diff(expr.left, i), _diff(expr.right, i))


@_diff.register
def _(expr: Sub, i):
    return _sub(_diff(expr.left, i), _diff(expr.right, i))


@_diff.register
def _(expr: Mul, i):
    return _add(_mul(_diff(expr.left, i), expr.right), _mul(expr.left, _diff(expr.right, i)))


@_diff.register
def _(expr: Div, i):
    d_num = _diff(expr.left, i)
    d_den = _diff(expr.right, i)
    if _is_const(d_den, 0.0):
        return _div(d_num, expr.right)
    return _div(_sub(_mul(d_num, expr.right), _mul(expr.left, d_den)), _pow(expr.right, 2.0))


@_diff.register
def _(expr: Pow, i):
    d_base = _diff(expr.base, i)
    if _is_const(d_base, 0.0):
        return ZERO
    return _mul(_mul(Constant(expr.exponent), _pow(expr.base, expr.exponent - 1.0)), d_base)


@_diff.register
def _(expr: Call, i):
    u = expr.arg
    du = _diff(u, i)
    if _is_const(du, 0.0):
        return ZERO
    if expr.fn == "sin":
        outer = Call("cos", u)
    elif expr.fn == "cos":
        outer = _neg(Call("sin", u))
    elif expr.fn == "exp":
        outer = expr
    elif expr.fn == "ln":
        return _div(du, u)
    elif expr.fn == "sqrt":
        return _div(du, _mul(Constant(2.0), expr))
    else:  # tanh
        outer = _sub(ONE, _pow(expr, 2.0))
    return _mul(outer, du)


@_diff.register
def _(expr: IfPos, i):
    # branch-wise; valid away from the switching surface cond = 0
    return IfPos(expr.cond, _diff(expr.then, i), _diff(expr.otherwise, i))


def differentiate(expr: Expr, i: int) -> Expr:
    """
    Symbolic partial derivative d expr / d x_i.

    Args:
        expr: Expression to differentiate
        i: 1-based variable index

    Returns:
        The derivative expression (trivially folded, not simplified)
    """
    if i < 1:
        raise ValueError(f"Variable index must be at least 1, got {i}")
    return _diff(expr, i)


def gradient(expr: Expr, dim: int) -> list[Expr]:
    """Symbolic gradient (d/dx1, ..., d/dxn) of ``expr``."""
    return [differentiate(expr, j) for j in range(1, dim + 1)]


def jacobian(f: list[Expr]) -> list[list[Expr]]:
    """Symbolic Jacobian J[i][j] = d f_i / d x_j of a vector field."""
    dim = len(f)
    return [gradient(component, dim) for component in f]


def lie_derivative(phi: Expr, f: list[Expr]) -> Expr:
    """
    Lie derivative psi = sum_j (d phi / d x_j) * f_j of ``phi`` along the field ``f``.

    Args:
        phi: Scalar function
        f: Vector field components (f_1, ..., f_n)

    Returns:
        psi as an expression
    """
    psi: Expr = ZERO
    for j, component in enumerate(f, start=1):
        psi = _add(psi, _mul(differentiate(phi, j), component))
    return psi
