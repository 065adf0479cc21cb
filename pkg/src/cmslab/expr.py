"""Small closed expression language for maps, probabilities and region predicates.

Expressions are parsed into an immutable AST, evaluated pointwise with
:func:`evaluate`, and compiled to a flat postfix program (:func:`compile_expr`)
which the batch kernels in :mod:`cmslab.kernels` execute over arrays of points.

The grammar is documented in ``docs/grammar.ebnf``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

__all__ = [
    "Num", "Var", "Unary", "Binary", "Call", "Expr",
    "ExprError", "ExprSyntaxError", "UnknownIdentifier", "ArityError",
    "DomainError", "DimensionError",
    "parse", "evaluate", "to_source", "variables", "is_predicate",
    "Program", "compile_expr", "fold_constants", "OPCODES",
]


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, expected: Sequence[str] = ()):
        self.offset = offset
        self.expected = frozenset(expected)
        exp = f" (expected one of: {', '.join(sorted(self.expected))})" if expected else ""
        super().__init__(f"{message} at offset {offset}{exp}")


class UnknownIdentifier(ExprSyntaxError):
    pass


class ArityError(ExprSyntaxError):
    pass


class DomainError(ArithmeticError):
    """Raised when an expression is evaluated outside its domain."""

    def __init__(self, message: str, point=None):
        self.point = point
        super().__init__(message if point is None else f"{message} at point {tuple(point)}")


class DimensionError(ExprError):
    pass


# --------------------------------------------------------------------------- AST

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, x1 is Var(1)


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expr = Union[Num, Var, Unary, Binary, Call]

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "abs": 1, "min": 2, "max": 2}
CONSTANTS = {"pi": math.pi}
COMPARISONS = ("<", "<=", ">", ">=")
LOGICAL = ("and", "or")

# binding power: higher binds tighter
_PREC = {"or": 1, "and": 2, "<": 3, "<=": 3, ">": 3, ">=": 3,
         "+": 4, "-": 4, "*": 5, "/": 5, "^": 7}
_UNARY_PREC = 6


# --------------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|≤|≥|[-+*/^(),<>])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, name, op, eof
    text: str
    offset: int  # byte offset


def _tokenize(source: str) -> list[_Tok]:
    toks = []
    pos = 0
    byte = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", byte)
        text = m.group()
        kind = m.lastgroup
        if kind != "ws":
            if kind == "op":
                text = {"≤": "<=", "≥": ">="}.get(text, text)
            elif kind == "name" and text in LOGICAL:
                kind = "op"
            toks.append(_Tok(kind, text, byte))
        byte += len(m.group().encode())
        pos = m.end()
    toks.append(_Tok("eof", "", byte))
    return toks


# ------------------------------------------------------------------------ parser

class _Parser:
    def __init__(self, source: str, dimension: int | None):
        self.toks = _tokenize(source)
        self.i = 0
        self.dimension = dimension

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text or self.tok.kind == "eof":
            raise ExprSyntaxError(f"unexpected {self._describe(self.tok)}",
                                  self.tok.offset, [repr(text)])
        return self.advance()

    @staticmethod
    def _describe(t: _Tok) -> str:
        return "end of input" if t.kind == "eof" else f"token {t.text!r}"

    def parse(self) -> Expr:
        e = self.expression(0)
        if self.tok.kind != "eof":
            raise ExprSyntaxError(f"unexpected {self._describe(self.tok)}", self.tok.offset,
                                  ["operator", "end of input"])
        return e

    def expression(self, min_prec: int) -> Expr:
        left = self.prefix()
        while True:
            t = self.tok
            if t.kind != "op" or t.text not in _PREC:
                return left
            prec = _PREC[t.text]
            if prec < min_prec:
                return left
            self.advance()
            if t.text == "^":
                # right-associative; the exponent may carry a unary minus
                right = self.expression(prec)
            elif t.text in COMPARISONS:
                right = self.expression(prec + 1)
                nt = self.tok
                if nt.kind == "op" and nt.text in COMPARISONS:
                    raise ExprSyntaxError("chained comparison", nt.offset, ["and", "or"])
            else:
                right = self.expression(prec + 1)
            left = Binary(t.text, left, right)

    def prefix(self) -> Expr:
        t = self.tok
        if t.kind == "op" and t.text == "-":
            self.advance()
            return Unary("-", self.expression(_UNARY_PREC))
        if t.kind == "op" and t.text == "+":
            self.advance()
            return self.expression(_UNARY_PREC)
        return self.atom()

    def atom(self) -> Expr:
        t = self.advance()
        if t.kind == "num":
            v = float(t.text)
            if not math.isfinite(v):
                raise ExprSyntaxError(f"literal {t.text} out of range", t.offset)
            return Num(v)
        if t.kind == "op" and t.text == "(":
            e = self.expression(0)
            self.expect(")")
            return e
        if t.kind == "name":
            return self.name(t)
        self.i -= 1
        raise ExprSyntaxError(f"unexpected {self._describe(t)}", t.offset,
                              ["number", "variable", "function", "'('", "'-'"])

    def name(self, t: _Tok) -> Expr:
        if t.text in FUNCTIONS:
            self.expect("(")
            args = [self.expression(0)]
            while self.tok.text == ",":
                self.advance()
                args.append(self.expression(0))
            self.expect(")")
            if len(args) != FUNCTIONS[t.text]:
                raise ArityError(f"{t.text} takes {FUNCTIONS[t.text]} argument(s), got {len(args)}",
                                 t.offset)
            return Call(t.text, tuple(args))
        if t.text in CONSTANTS:
            return Num(CONSTANTS[t.text])
        m = re.fullmatch(r"x([1-9][0-9]*)", t.text)
        if m:
            idx = int(m.group(1))
            if self.dimension is not None and idx > self.dimension:
                raise UnknownIdentifier(
                    f"variable {t.text} exceeds dimension {self.dimension}", t.offset)
            return Var(idx)
        raise UnknownIdentifier(f"unknown identifier {t.text!r}", t.offset,
                                sorted(FUNCTIONS) + ["x1..xd", "pi"])


def parse(source: str, dimension: int | None = None) -> Expr:
    """Parse *source* into an AST.

    If *dimension* is given, variables beyond ``x{dimension}`` are rejected.
    """
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0, ["expression"])
    return _Parser(source, dimension).parse()


# ------------------------------------------------------------------ printing

def _fmt_num(v: float) -> str:
    if v == math.pi:
        return "pi"
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def to_source(e: Expr) -> str:
    """Render *e* back to source text; ``parse(to_source(e)) == e``."""
    return _show(e, 0)


def _show(e: Expr, ctx: int) -> str:
    if isinstance(e, Num):
        s = _fmt_num(e.value)
        # the parser never produces negative literals; hand-built ones stay atomic
        return f"({s})" if e.value < 0 or s.startswith("-") else s
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(_show(a, 0) for a in e.args)})"
    if isinstance(e, Unary):
        s = "-" + _show(e.operand, _UNARY_PREC)
        return f"({s})" if ctx > _UNARY_PREC else s
    prec = _PREC[e.op]
    if e.op == "^":
        lhs = _show(e.left, prec + 1)
        rhs = _show(e.right, prec)
    elif e.op in COMPARISONS:
        lhs = _show(e.left, prec + 1)
        rhs = _show(e.right, prec + 1)
    else:
        lhs = _show(e.left, prec)
        rhs = _show(e.right, prec + 1)
    s = f"{lhs} {e.op} {rhs}"
    return f"({s})" if prec < ctx else s


# ------------------------------------------------------------------ analysis

def variables(e: Expr) -> set[int]:
    if isinstance(e, Var):
        return {e.index}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Unary):
        return variables(e.operand)
    if isinstance(e, Binary):
        return variables(e.left) | variables(e.right)
    return set().union(*(variables(a) for a in e.args))


def is_predicate(e: Expr) -> bool:
    return isinstance(e, Binary) and (e.op in COMPARISONS or e.op in LOGICAL)


# ------------------------------------------------------------------ evaluation

def _check(v: float, what: str, point) -> float:
    if not math.isfinite(v):
        raise DomainError(f"non-finite result in {what}", point)
    return v


def evaluate(e: Expr, point: Sequence[float]):
    """Evaluate *e* at *point* in double precision.

    Returns a float for numeric expressions and a bool for predicates.
    """
    point = tuple(float(p) for p in point)
    for idx in variables(e):
        if idx > len(point):
            raise DimensionError(f"x{idx} is undefined for a point of dimension {len(point)}")
    return _eval(e, point)


def _eval(e: Expr, x: tuple):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return x[e.index - 1]
    if isinstance(e, Unary):
        return -_eval(e.operand, x)
    if isinstance(e, Call):
        a = [_eval(arg, x) for arg in e.args]
        f = e.func
        if f == "log":
            if a[0] <= 0:
                raise DomainError("log of non-positive value", x)
            return math.log(a[0])
        if f == "exp":
            try:
                return _check(math.exp(a[0]), "exp", x)
            except OverflowError:
                raise DomainError("overflow in exp", x) from None
        if f == "sin":
            return math.sin(a[0])
        if f == "cos":
            return math.cos(a[0])
        if f == "abs":
            return abs(a[0])
        if f == "min":
            return min(a[0], a[1])
        return max(a[0], a[1])
    op = e.op
    if op == "and":
        return bool(_eval(e.left, x)) and bool(_eval(e.right, x))
    if op == "or":
        return bool(_eval(e.left, x)) or bool(_eval(e.right, x))
    a = _eval(e.left, x)
    b = _eval(e.right, x)
    if op == "+":
        return _check(a + b, "+", x)
    if op == "-":
        return _check(a - b, "-", x)
    if op == "*":
        return _check(a * b, "*", x)
    if op == "/":
        if b == 0:
            raise DomainError("division by zero", x)
        return _check(a / b, "/", x)
    if op == "^":
        try:
            r = math.pow(a, b)
        except (ValueError, OverflowError):
            raise DomainError("invalid power", x) from None
        return _check(r, "^", x)
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


# ------------------------------------------------------------------ compilation

OPCODES = {
    "const": 0, "var": 1, "neg": 2, "+": 3, "-": 4, "*": 5, "/": 6, "^": 7,
    "sin": 8, "cos": 9, "exp": 10, "log": 11, "abs": 12, "min": 13, "max": 14,
    "<": 15, "<=": 16, ">": 17, ">=": 18, "and": 19, "or": 20,
}
OPNAMES = {v: k for k, v in OPCODES.items()}


@dataclass(frozen=True)
class Program:
    """Postfix program: parallel opcode/argument lists plus a constant pool."""

    ops: tuple
    args: tuple
    consts: tuple
    stack_depth: int


def fold_constants(e: Expr) -> Expr:
    """Replace variable-free subtrees by their value. Subtrees whose evaluation
    fails are kept so the error surfaces at run time."""
    if isinstance(e, (Num, Var)):
        return e
    if not variables(e):
        try:
            return Num(evaluate(e, ()))
        except DomainError:
            pass
    if isinstance(e, Unary):
        return Unary(e.op, fold_constants(e.operand))
    if isinstance(e, Call):
        return Call(e.func, tuple(fold_constants(a) for a in e.args))
    return Binary(e.op, fold_constants(e.left), fold_constants(e.right))


def compile_expr(e: Expr) -> Program:
    e = fold_constants(e)
    ops: list[int] = []
    args: list[int] = []
    consts: list[float] = []
    depth = _emit(e, ops, args, consts)
    return Program(tuple(ops), tuple(args), tuple(consts), depth)


def _emit(e: Expr, ops, args, consts) -> int:
    """Append code for *e*; return the stack depth it needs."""
    if isinstance(e, Num):
        ops.append(OPCODES["const"])
        args.append(len(consts))
        consts.append(e.value)
        return 1
    if isinstance(e, Var):
        ops.append(OPCODES["var"])
        args.append(e.index - 1)
        return 1
    if isinstance(e, Unary):
        d = _emit(e.operand, ops, args, consts)
        ops.append(OPCODES["neg"])
        args.append(0)
        return d
    if isinstance(e, Call):
        depth = 0
        for k, a in enumerate(e.args):
            depth = max(depth, k + _emit(a, ops, args, consts))
        ops.append(OPCODES[e.func])
        args.append(0)
        return depth
    dl = _emit(e.left, ops, args, consts)
    dr = _emit(e.right, ops, args, consts)
    ops.append(OPCODES[e.op])
    args.append(0)
    return max(dl, 1 + dr)
