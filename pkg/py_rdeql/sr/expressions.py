"""
Symbolic expressions in the single variable U (normalised density).

Expressions are flat prefix programs, as in tree-based genetic programming:
a list whose items are ``Function`` tokens, the variable token ``"U"`` or
float constants. Complexity is the number of tokens.

Text grammar (a subset of Python expression syntax)::

    expr     := expr ('+' | '-') term | term
    term     := term ('*' | '/') factor | factor
    factor   := ('-' | '+') factor | power
    power    := atom ('**' | '^') factor | atom
    atom     := NUMBER | 'U' | FUNC '(' expr ')' | '(' expr ')'
    FUNC     := 'exp' | 'sqrt' | 'square'

Example: ``0.0132 + 0.0198*exp(2.05*U)``.
"""

import ast
import logging
import math
import re
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
import sympy

from .. import config
from ..exceptions import ExpressionDomainError, ExpressionParseError

logger = logging.getLogger(__name__)

VARIABLE = "U"


@dataclass(frozen=True)
class Function:
    name: str
    arity: int
    precedence: int

    def __repr__(self):
        return self.name


FUNCTIONS = {f.name: f for f in (
    Function("add", 2, 1),
    Function("sub", 2, 1),
    Function("mul", 2, 2),
    Function("div", 2, 2),
    Function("pow", 2, 4),
    Function("neg", 1, 3),
    Function("exp", 1, 5),
    Function("square", 1, 5),
    Function("sqrt", 1, 5),
)}

Token = Union[Function, str, float]

_ATOM = 5


def _apply(name: str, args: List[np.ndarray], strict: bool) -> np.ndarray:
    if name == "add":
        return args[0] + args[1]
    if name == "sub":
        return args[0] - args[1]
    if name == "mul":
        return args[0] * args[1]
    if name == "neg":
        return -args[0]
    if name == "exp":
        return np.exp(args[0])
    if name == "square":
        return args[0] * args[0]
    if name == "sqrt":
        x = args[0]
        bad = x < 0
        if strict and np.any(bad):
            raise ExpressionDomainError(f"sqrt of negative value {np.min(x):g}")
        return np.where(bad, np.nan, np.sqrt(np.abs(x)))
    if name == "div":
        num, den = args
        bad = np.abs(den) < config.division_guard
        if strict and np.any(bad):
            raise ExpressionDomainError("division by a denominator below the guard")
        return np.where(bad, np.nan, num / np.where(bad, 1.0, den))
    if name == "pow":
        base, ex = args
        bad = base < 0
        if strict and np.any(bad):
            raise ExpressionDomainError(f"pow of negative base {np.min(base):g}")
        return np.where(bad, np.nan, np.abs(base) ** ex)
    raise ValueError(f"unknown function {name!r}")


def execute(program: Sequence[Token], U, strict: bool = False) -> np.ndarray:
    """
    Evaluate a prefix program at U (scalar or array).

    With ``strict`` a guard violation raises ExpressionDomainError; otherwise
    the offending entries become NaN.
    """
    U = np.asarray(U, dtype=float)
    stack: List[np.ndarray] = []
    with np.errstate(all="ignore"):
        for token in reversed(program):
            if isinstance(token, Function):
                args = [stack.pop() for _ in range(token.arity)]
                stack.append(_apply(token.name, args, strict))
            elif token == VARIABLE:
                stack.append(U)
            else:
                stack.append(np.full(U.shape, float(token)))
    if len(stack) != 1:
        raise ValueError("malformed program")
    out = stack[0]
    if strict and not np.all(np.isfinite(out)):
        raise ExpressionDomainError("expression evaluated to a non-finite value")
    return out


def is_valid(program: Sequence[Token]) -> bool:
    need = 1
    for token in program:
        if need == 0:
            return False
        need += (token.arity if isinstance(token, Function) else 0) - 1
    return need == 0


def subtree_end(program: Sequence[Token], start: int) -> int:
    """Index one past the subtree rooted at ``start``."""
    need, end = 1, start
    while need > 0:
        token = program[end]
        need += (token.arity if isinstance(token, Function) else 0) - 1
        end += 1
    return end


class SymbolicExpr:
    """An expression tree over U held as a prefix program."""

    __slots__ = ("program",)

    def __init__(self, program: Sequence[Token]):
        program = tuple(float(t) if isinstance(t, (int, float, np.floating)) and not isinstance(t, bool)
                        else t for t in program)
        if not program or not is_valid(program):
            raise ValueError(f"malformed program {program!r}")
        self.program = program

    @classmethod
    def parse(cls, text: str) -> "SymbolicExpr":
        return parse_expression(text)

    @property
    def complexity(self) -> int:
        return len(self.program)

    @property
    def constants(self) -> List[float]:
        return [t for t in self.program if isinstance(t, float)]

    def with_constants(self, values: Sequence[float]) -> "SymbolicExpr":
        values = iter(values)
        return SymbolicExpr([float(next(values)) if isinstance(t, float) else t for t in self.program])

    def evaluate(self, U, strict: bool = True):
        out = execute(self.program, U, strict=strict)
        return float(out) if out.ndim == 0 else out

    def __call__(self, U):
        return self.evaluate(U)

    def __eq__(self, other):
        return isinstance(other, SymbolicExpr) and self.program == other.program

    def __hash__(self):
        return hash(self.program)

    def __repr__(self):
        return f"SymbolicExpr({str(self)!r})"

    def __str__(self):
        return format_infix(self.program)

    def to_sympy(self) -> sympy.Expr:
        return to_sympy(self.program)


# ---------------------------------------------------------------- printing

def _format_constant(c: float) -> Tuple[str, int]:
    text = repr(float(c))
    return text, (3 if c < 0 else _ATOM)


def _format(program: Sequence[Token], start: int) -> Tuple[str, int, int]:
    """Returns (text, precedence, end index)."""
    token = program[start]
    if not isinstance(token, Function):
        if token == VARIABLE:
            return VARIABLE, _ATOM, start + 1
        text, prec = _format_constant(token)
        return text, prec, start + 1

    if token.arity == 1:
        arg, arg_prec, end = _format(program, start + 1)
        if token.name == "neg":
            return (f"-({arg})" if arg_prec < 3 else f"-{arg}"), 3, end
        return f"{token.name}({arg})", _ATOM, end

    left, lp, mid = _format(program, start + 1)
    right, rp, end = _format(program, mid)
    if token.name in ("add", "sub"):
        negative_right = right.startswith("-") and rp >= 2
        if negative_right:
            right = right[1:]
        elif token.name == "sub" and rp <= 1:
            right = f"({right})"
        op = "-" if (token.name == "add") == negative_right else "+"
        return f"{left} {op} {right}", 1, end
    if token.name in ("mul", "div"):
        if lp < 2:
            left = f"({left})"
        if rp < 2 or (token.name == "div" and rp == 2):
            right = f"({right})"
        return f"{left}{'*' if token.name == 'mul' else '/'}{right}", 2, end
    # pow
    if lp <= 4:
        left = f"({left})"
    if rp < _ATOM:
        right = f"({right})"
    return f"{left}**{right}", 4, end


def format_infix(program: Sequence[Token]) -> str:
    text, _, _ = _format(program, 0)
    return text


# ---------------------------------------------------------------- parsing

_BINOPS = {ast.Add: "add", ast.Sub: "sub", ast.Mult: "mul", ast.Div: "div",
           ast.Pow: "pow", ast.BitXor: "pow"}
_CALLS = ("exp", "sqrt", "square")


def parse_expression(text: str) -> SymbolicExpr:
    """
    Parse infix text into a SymbolicExpr.

    Raises:
        ExpressionParseError: with the 0-based character position of the problem
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionParseError("empty expression", str(text), 0)
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        position = (exc.offset - 1) if exc.offset else None
        raise ExpressionParseError(exc.msg or "invalid syntax", text, position) from None

    program: List[Token] = []

    def visit(node):
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            program.append(FUNCTIONS[_BINOPS[type(node.op)]])
            visit(node.left)
            visit(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            if isinstance(node.op, ast.UAdd):
                visit(node.operand)
            elif isinstance(node.operand, ast.Constant) and _is_number(node.operand.value):
                program.append(-float(node.operand.value))
            else:
                program.append(FUNCTIONS["neg"])
                visit(node.operand)
        elif isinstance(node, ast.Call):
            name = getattr(node.func, "id", None)
            if name not in _CALLS or len(node.args) != 1 or node.keywords:
                raise ExpressionParseError(f"unsupported call {ast.unparse(node.func)!r}",
                                           text, node.col_offset)
            program.append(FUNCTIONS[name])
            visit(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id != VARIABLE:
                raise ExpressionParseError(f"unknown name {node.id!r}", text, node.col_offset)
            program.append(VARIABLE)
        elif isinstance(node, ast.Constant) and _is_number(node.value):
            program.append(float(node.value))
        else:
            raise ExpressionParseError(f"unsupported syntax {type(node).__name__}",
                                       text, getattr(node, "col_offset", None))

    visit(tree.body)
    return SymbolicExpr(program)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def expr_eval(expr: Union[SymbolicExpr, str], U: float) -> float:
    """
    Exact evaluation of an expression at one density.

    Raises:
        ExpressionDomainError: sqrt or pow of a negative base, division by a
            near-zero denominator, or a non-finite result
    """
    if isinstance(expr, str):
        expr = parse_expression(expr)
    if not math.isfinite(U):
        raise ValueError(f"U must be finite, got {U}")
    return float(execute(expr.program, float(U), strict=True))


# ---------------------------------------------------------------- sympy bridge

U_SYMBOL = sympy.Symbol(VARIABLE, positive=True)


def to_sympy(program: Sequence[Token]) -> sympy.Expr:
    def build(start: int):
        token = program[start]
        if not isinstance(token, Function):
            if token == VARIABLE:
                return U_SYMBOL, start + 1
            if not math.isfinite(token):
                raise ValueError(f"non-finite constant {token}")
            return sympy.Float(token), start + 1
        args, pos = [], start + 1
        for _ in range(token.arity):
            arg, pos = build(pos)
            args.append(arg)
        name = token.name
        if name == "add":
            return args[0] + args[1], pos
        if name == "sub":
            return args[0] - args[1], pos
        if name == "mul":
            return args[0] * args[1], pos
        if name == "div":
            return args[0] / args[1], pos
        if name == "pow":
            return args[0] ** args[1], pos
        if name == "neg":
            return -args[0], pos
        if name == "exp":
            return sympy.exp(args[0]), pos
        if name == "square":
            return args[0] ** 2, pos
        return sympy.sqrt(args[0]), pos

    expr, _ = build(0)
    return expr


@dataclass(frozen=True)
class Template:
    """
    Coefficient-free form of an expression.

    ``key`` uses a bare placeholder ``C`` everywhere and is the identity used
    for grouping; ``display`` numbers the placeholders C0, C1, ... in order.
    """

    key: str

    @property
    def display(self) -> str:
        counter = iter(range(10_000))
        return re.sub(r"\bC\b", lambda _: f"C{next(counter)}", self.key)

    def __str__(self):
        return self.display


def _rational_exponent(ex):
    if ex.is_Float and float(2 * ex) == round(float(2 * ex)):
        return sympy.Rational(round(float(2 * ex)), 2)
    return ex


def _join(terms: List[Tuple[str, str]]) -> str:
    terms = sorted(terms, key=lambda t: (t[1], t[0]))
    if not terms:
        return "0"
    head_sign, head = terms[0]
    out = ("-" if head_sign == "-" else "") + head
    for sign, body in terms[1:]:
        out += f" {sign} {body}"
    return out


def _sum(e) -> str:
    args = e.args if e.is_Add else (e,)
    return _join([t for t in (_term(a) for a in args) if t is not None])


def _term(e):
    coeff, rest = e.as_coeff_Mul()
    if coeff == 0:
        return None
    sign = "-" if coeff < 0 else "+"
    if rest == 1:
        return sign, "C"
    factors = sorted(_factor(f) for f in sympy.Mul.make_args(rest))
    return sign, "*".join(["C", *factors])


def _factor(f) -> str:
    if f.is_Symbol:
        return str(f)
    if f.is_Number:
        return "C"
    if f.is_Add:
        return f"({_sum(f)})"
    if f.is_Pow:
        base, ex = f.as_base_exp()
        ex = _rational_exponent(ex)
        b = str(base) if base.is_Symbol else f"({_sum(base)})"
        if ex.is_Integer:
            e = str(ex)
        elif ex.is_Rational:
            e = f"({ex})"
        else:
            e = f"({_sum(ex)})"
        return f"{b}**{e}"
    if isinstance(f, sympy.Function) and len(f.args) == 1:
        return f"{f.func.__name__}({_sum(f.args[0])})"
    return str(f)


def canonical_template(expr: Union[SymbolicExpr, str]) -> Template:
    """
    Strip numeric coefficients, keeping signs, in a canonical term order.

    sympy first folds constants and merges like terms (so U*sqrt(U) becomes
    U**(3/2)); every additive term then gets a placeholder coefficient and
    commutative sums and products are sorted by their text.
    """
    if isinstance(expr, str):
        expr = parse_expression(expr)
    return Template(_sum(sympy.expand(expr.to_sympy(), deep=False, mul=True, multinomial=False,
                                      power_exp=False, power_base=False, log=False)))
