"""
Expression service: AST, DSL parser, printer and evaluator

Every function handled by the toolkit (potentials, defining functions, graph
components, family maps) is an `Expr` over complex variables z1..zN. Nodes are
immutable and compare structurally, so they can be shared between threads and
used as cache keys.
"""
import numbers
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from levilab.exceptions import (
    DimensionMismatchError,
    ExprDomainError,
    ExprSyntaxError,
    UnknownIdentifierError,
    VariableIndexError,
)

REAL_MASK_TOL = 1e-14
MAX_REAL_TOL = 1e-12

FUNCTIONS = ("conj", "re", "im", "abs", "abs2", "log", "exp", "sqrt")
UNARY_OPS = ("neg",) + FUNCTIONS
BINARY_SYMBOLS = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}
PRECEDENCE = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
ATOM = 5
# Nodes whose derivative in z does not vanish identically in zbar
ANTIHOLOMORPHIC_OPS = ("conj", "re", "im", "abs", "abs2")


class Expr:
    """Base class of all expression nodes"""

    label = "expr"

    @property
    def operands(self) -> tuple:
        return ()

    def _key(self):
        raise NotImplementedError

    @cached_property
    def _hash(self):
        return hash((type(self).__name__, self._key()))

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        if type(self) is not type(other):
            return False
        return self._hash == other._hash and self._key() == other._key()

    def __ne__(self, other):
        return not self.__eq__(other)

    @cached_property
    def max_index(self) -> int:
        """Largest variable index used (0 for constants)"""
        return max((c.max_index for c in self.operands), default=0)

    @cached_property
    def is_smooth(self) -> bool:
        """False when the tree contains a `max` node"""
        return all(c.is_smooth for c in self.operands)

    @cached_property
    def has_guard(self) -> bool:
        return any(c.has_guard for c in self.operands)

    @cached_property
    def is_holomorphic(self) -> bool:
        """Syntactic check: no antiholomorphic, non-smooth or piecewise node"""
        return all(c.is_holomorphic for c in self.operands)

    # Operator overloading builds raw nodes; use the folding helpers for derived trees
    def __add__(self, other):
        return Binary("add", self, as_expr(other))

    def __radd__(self, other):
        return Binary("add", as_expr(other), self)

    def __sub__(self, other):
        return Binary("sub", self, as_expr(other))

    def __rsub__(self, other):
        return Binary("sub", as_expr(other), self)

    def __mul__(self, other):
        return Binary("mul", self, as_expr(other))

    def __rmul__(self, other):
        return Binary("mul", as_expr(other), self)

    def __truediv__(self, other):
        return Binary("div", self, as_expr(other))

    def __rtruediv__(self, other):
        return Binary("div", as_expr(other), self)

    def __pow__(self, other):
        return Binary("pow", self, as_expr(other))

    def __rpow__(self, other):
        return Binary("pow", as_expr(other), self)

    def __neg__(self):
        return Unary("neg", self)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, eq=False)
class Const(Expr):
    value: Union[Fraction, float, complex]

    def __post_init__(self):
        v = self.value
        if isinstance(v, bool):
            raise TypeError("booleans are not expression constants")
        if isinstance(v, Fraction):
            pass
        elif isinstance(v, numbers.Integral):
            v = Fraction(int(v))
        elif isinstance(v, numbers.Real):
            v = float(v) + 0.0
        elif isinstance(v, numbers.Complex):
            v = complex(v.real + 0.0, v.imag + 0.0)
        else:
            raise TypeError(f"unsupported constant {v!r}")
        if not np.isfinite(complex(v)):
            raise ValueError("constants must be finite")
        object.__setattr__(self, "value", v)

    @property
    def label(self):
        return "const"

    @property
    def kind(self) -> str:
        if isinstance(self.value, Fraction):
            return "rational"
        return "float" if isinstance(self.value, float) else "complex"

    def _key(self):
        return (self.kind, self.value)

    @cached_property
    def max_index(self):
        return 0

    @cached_property
    def is_smooth(self):
        return True

    @cached_property
    def has_guard(self):
        return False

    @cached_property
    def is_holomorphic(self):
        return True

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, eq=False)
class Var(Expr):
    index: int

    def __post_init__(self):
        if int(self.index) < 1:
            raise VariableIndexError(f"variable index must be >= 1, got {self.index}")
        object.__setattr__(self, "index", int(self.index))

    @property
    def label(self):
        return f"z{self.index}"

    def _key(self):
        return (self.index,)

    @cached_property
    def max_index(self):
        return self.index

    @cached_property
    def is_smooth(self):
        return True

    @cached_property
    def has_guard(self):
        return False

    @cached_property
    def is_holomorphic(self):
        return True

    def __repr__(self):
        return f"Var({self.index})"


@dataclass(frozen=True, eq=False)
class Unary(Expr):
    op: str
    arg: Expr

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise ValueError(f"unknown unary op '{self.op}'")

    @property
    def label(self):
        return self.op

    @property
    def operands(self):
        return (self.arg,)

    def _key(self):
        return (self.op, self.arg)

    @cached_property
    def is_holomorphic(self):
        return self.op not in ANTIHOLOMORPHIC_OPS and self.arg.is_holomorphic

    def __repr__(self):
        return f"Unary({self.op!r}, {self.arg!r})"


@dataclass(frozen=True, eq=False)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in BINARY_SYMBOLS:
            raise ValueError(f"unknown binary op '{self.op}'")

    @property
    def label(self):
        return self.op

    @property
    def operands(self):
        return (self.left, self.right)

    def _key(self):
        return (self.op, self.left, self.right)

    def __repr__(self):
        return f"Binary({self.op!r}, {self.left!r}, {self.right!r})"


@dataclass(frozen=True, eq=False)
class Max(Expr):
    """Pointwise maximum of real-valued arguments (non-smooth)"""
    args: Tuple[Expr, ...]

    def __post_init__(self):
        args = tuple(self.args)
        if not args:
            raise ValueError("max needs at least one argument")
        object.__setattr__(self, "args", args)

    label = "max"

    @property
    def operands(self):
        return self.args

    def _key(self):
        return self.args

    @cached_property
    def is_smooth(self):
        return False

    @cached_property
    def is_holomorphic(self):
        return False

    def __repr__(self):
        return f"Max({self.args!r})"


@dataclass(frozen=True, eq=False)
class Guard(Expr):
    """`body` unless `cond` evaluates to exactly 0, where the value is `fallback`"""
    cond: Expr
    body: Expr
    fallback: Expr

    label = "guard"

    @property
    def operands(self):
        return (self.cond, self.body, self.fallback)

    def _key(self):
        return (self.cond, self.body, self.fallback)

    @cached_property
    def has_guard(self):
        return True

    @cached_property
    def is_holomorphic(self):
        return False

    def __repr__(self):
        return f"Guard({self.cond!r}, {self.body!r}, {self.fallback!r})"


@dataclass(frozen=True, eq=False)
class Ref(Expr):
    """Named sub-expression; printed by name, evaluated through its body"""
    name: str
    body: Expr

    @property
    def label(self):
        return self.name

    @property
    def operands(self):
        return (self.body,)

    def _key(self):
        return (self.name, self.body)

    def __repr__(self):
        return f"Ref({self.name!r})"


@dataclass(frozen=True)
class Point:
    """Point of C^N, optionally with coordinates constrained to be real"""
    coords: Tuple[complex, ...]
    real_mask: Optional[Tuple[bool, ...]] = None

    def __post_init__(self):
        coords = tuple(complex(c) for c in self.coords)
        object.__setattr__(self, "coords", coords)
        if self.real_mask is None:
            return
        mask = tuple(bool(m) for m in self.real_mask)
        if len(mask) != len(coords):
            raise DimensionMismatchError(f"reality mask has {len(mask)} entries for {len(coords)} coordinates")
        for j, (c, real) in enumerate(zip(coords, mask)):
            if real and abs(c.imag) > REAL_MASK_TOL:
                raise ExprDomainError(f"coordinate {j + 1} is constrained real, got {c}")
        object.__setattr__(self, "real_mask", mask)

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords, dtype=complex)

    @classmethod
    def of(cls, *coords, real_mask=None):
        return cls(tuple(coords), real_mask)

    def __iter__(self):
        return iter(self.coords)

    def __len__(self):
        return len(self.coords)


PointLike = Union[Point, Sequence[complex], np.ndarray]


def as_expr(value) -> Expr:
    """Coerce numbers to constants"""
    if isinstance(value, Expr):
        return value
    return Const(value)


# --- folding constructors used by derived trees ------------------------------

ZERO = Const(0)
ONE = Const(1)
HALF = Const(Fraction(1, 2))


def is_const(e: Expr, value=None) -> bool:
    if not isinstance(e, Const):
        return False
    return value is None or e.value == value


def const(value) -> Const:
    """Constant with complex values collapsed to reals when the imaginary part is 0"""
    if isinstance(value, complex) and value.imag == 0:
        value = value.real
    if isinstance(value, float) and value.is_integer() and abs(value) < 2 ** 53:
        value = Fraction(int(value))
    return Const(value)


def var(index: int) -> Var:
    return Var(index)


def add(a: Expr, b: Expr) -> Expr:
    a, b = as_expr(a), as_expr(b)
    if is_const(a, 0):
        return b
    if is_const(b, 0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value + b.value)
    return Binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    a, b = as_expr(a), as_expr(b)
    if is_const(b, 0):
        return a
    if is_const(a, 0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value - b.value)
    return Binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    a, b = as_expr(a), as_expr(b)
    if is_const(a, 0) or is_const(b, 0):
        return ZERO
    if is_const(a, 1):
        return b
    if is_const(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value * b.value)
    if is_const(a, -1):
        return neg(b)
    if is_const(b, -1):
        return neg(a)
    return Binary("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    a, b = as_expr(a), as_expr(b)
    if is_const(b, 1):
        return a
    if is_const(a, 0) and not is_const(b, 0):
        return ZERO
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0:
        return const(a.value / b.value)
    return Binary("div", a, b)


def power(a: Expr, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    if is_const(b, 0):
        return ONE
    if is_const(b, 1):
        return a
    return Binary("pow", a, b)


def neg(a: Expr) -> Expr:
    a = as_expr(a)
    if isinstance(a, Const):
        return const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def conj(a: Expr) -> Expr:
    a = as_expr(a)
    if isinstance(a, Const):
        return const(a.value.conjugate())
    if isinstance(a, Unary) and a.op == "conj":
        return a.arg
    return Unary("conj", a)


def re_(a: Expr) -> Expr:
    return Unary("re", as_expr(a))


def im_(a: Expr) -> Expr:
    return Unary("im", as_expr(a))


def abs_(a: Expr) -> Expr:
    return Unary("abs", as_expr(a))


def abs2(a: Expr) -> Expr:
    return Unary("abs2", as_expr(a))


def log(a: Expr) -> Expr:
    return Unary("log", as_expr(a))


def exp(a: Expr) -> Expr:
    return Unary("exp", as_expr(a))


def sqrt(a: Expr) -> Expr:
    return Unary("sqrt", as_expr(a))


def maximum(*args: Expr) -> Expr:
    return Max(tuple(as_expr(a) for a in args))


def guard(cond: Expr, body: Expr, fallback: Expr) -> Expr:
    return Guard(as_expr(cond), as_expr(body), as_expr(fallback))


def total(terms: Iterable[Expr]) -> Expr:
    """Folded sum of expressions (0 for an empty iterable)"""
    out = ZERO
    for t in terms:
        out = add(out, t)
    return out


def norm2(indices: Iterable[int]) -> Expr:
    """sum of abs2(z_j) over the given variable indices"""
    return total(abs2(Var(j)) for j in indices)


def substitute(e: Expr, mapping: Mapping[int, Expr]) -> Expr:
    """
    Replace variables by expressions.

    Args:
        e (Expr): Expression to rewrite
        mapping (Mapping[int, Expr]): Variable index -> replacement; unmapped variables stay

    Returns:
        Expr: The rewritten tree (shared sub-trees are rewritten once)
    """
    mapping = {int(k): as_expr(v) for k, v in mapping.items()}
    memo: Dict[int, Expr] = {}

    def walk(node):
        hit = memo.get(id(node))
        if hit is not None:
            return hit
        if isinstance(node, Var):
            out = mapping.get(node.index, node)
        elif isinstance(node, Const):
            out = node
        elif isinstance(node, Unary):
            arg = walk(node.arg)
            out = node if arg is node.arg else Unary(node.op, arg)
        elif isinstance(node, Binary):
            left, right = walk(node.left), walk(node.right)
            out = node if (left is node.left and right is node.right) else Binary(node.op, left, right)
        elif isinstance(node, Max):
            args = tuple(walk(a) for a in node.args)
            out = node if all(a is b for a, b in zip(args, node.args)) else Max(args)
        elif isinstance(node, Guard):
            parts = [walk(c) for c in node.operands]
            out = node if all(a is b for a, b in zip(parts, node.operands)) else Guard(*parts)
        elif isinstance(node, Ref):
            body = walk(node.body)
            out = node if body is node.body else body
        else:
            raise TypeError(f"unknown node {type(node).__name__}")
        memo[id(node)] = out
        return out

    return walk(e)


# --- printer -----------------------------------------------------------------

def _precedence(e: Expr) -> int:
    if isinstance(e, Binary):
        return PRECEDENCE[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return PRECEDENCE["neg"]
    return ATOM


def _const_text(value) -> str:
    if isinstance(value, Fraction):
        if value.denominator == 1 and value >= 0:
            return str(value.numerator)
        return f"({value})"
    if isinstance(value, float):
        return repr(value) if value >= 0 else f"({value!r})"
    sign = "+" if value.imag >= 0 else "-"
    return f"({value.real!r}{sign}{abs(value.imag)!r}i)"


def to_text(e: Expr, names: Optional[Mapping[int, str]] = None) -> str:
    """
    Print an expression in the DSL.

    Args:
        e (Expr): Expression to print
        names (Mapping[int, str], optional): Alias per variable index; defaults to z1..zN

    Returns:
        str: Source text; parse(to_text(e), N) is structurally equal to e
    """
    names = names or {}

    def text(node):
        if isinstance(node, Const):
            return _const_text(node.value)
        if isinstance(node, Var):
            return names.get(node.index, node.label)
        if isinstance(node, Ref):
            return node.name
        if isinstance(node, Max):
            return "max(" + ", ".join(text(a) for a in node.args) + ")"
        if isinstance(node, Guard):
            return "guard(" + ", ".join(text(a) for a in node.operands) + ")"
        if isinstance(node, Unary):
            if node.op != "neg":
                return f"{node.op}({text(node.arg)})"
            inner = text(node.arg)
            if isinstance(node.arg, Const) and not inner.startswith("("):
                inner = f"({inner})"
            elif _precedence(node.arg) < PRECEDENCE["neg"]:
                inner = f"({inner})"
            return "-" + inner
        prec = PRECEDENCE[node.op]
        left, right = text(node.left), text(node.right)
        if node.op == "pow":
            if _precedence(node.left) <= prec:
                left = f"({left})"
            if _precedence(node.right) < PRECEDENCE["neg"]:
                right = f"({right})"
        else:
            if _precedence(node.left) < prec:
                left = f"({left})"
            if _precedence(node.right) <= prec:
                right = f"({right})"
        return f"{left} {BINARY_SYMBOLS[node.op]} {right}"

    return text(e)


# --- lexer / parser ----------------------------------------------------------

_FLOAT = r"(?:\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)"
_INT = r"\d+"
_NUMBER = re.compile(rf"{_FLOAT}|{_INT}")
_RATIONAL_TAIL = re.compile(r"/(\d+)(?![\w.])")
_BOXED = re.compile(
    rf"\((-?)(?:(?P<rat>\d+/\d+)|(?P<real>{_FLOAT}|{_INT})"
    rf"|(?P<cre>{_FLOAT}|{_INT})(?P<sign>[+-])(?P<cim>{_FLOAT}|{_INT})i"
    rf"|(?P<imag>{_FLOAT}|{_INT})i)\)"
)
_IDENT = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_VARIABLE = re.compile(r"z(\d+)")
_SYMBOLS = "+-*/^(),"


@dataclass(frozen=True)
class _Token:
    kind: str  # num, ident, op, eof
    value: object
    line: int
    column: int


def _number_value(text: str):
    if re.fullmatch(_INT, text):
        return Fraction(int(text))
    return float(text)


def _tokenize(source: str):
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        ch = source[pos]
        col = pos - line_start + 1
        if ch == "\n":
            pos += 1
            line += 1
            line_start = pos
            continue
        if ch.isspace():
            pos += 1
            continue
        prev = tokens[-1] if tokens else None
        if ch == "(" and not (prev is not None and prev.kind == "ident"):
            m = _BOXED.match(source, pos)
            if m:
                sign = -1 if m.group(1) else 1
                if m.group("rat"):
                    value = sign * Fraction(m.group("rat"))
                elif m.group("real"):
                    value = sign * _number_value(m.group("real"))
                elif m.group("cre"):
                    im_sign = -1.0 if m.group("sign") == "-" else 1.0
                    value = complex(sign * float(m.group("cre")), im_sign * float(m.group("cim")))
                else:
                    value = complex(0.0, sign * float(m.group("imag")))
                tokens.append(_Token("num", value, line, col))
                pos = m.end()
                continue
        if ch.isdigit() or (ch == "." and pos + 1 < len(source) and source[pos + 1].isdigit()):
            m = _NUMBER.match(source, pos)
            text = m.group(0)
            end = m.end()
            value = _number_value(text)
            after_caret = prev is not None and prev.kind == "op" and prev.value == "^"
            tail = _RATIONAL_TAIL.match(source, end)
            if isinstance(value, Fraction) and tail and not after_caret:
                if int(tail.group(1)) == 0:
                    raise ExprSyntaxError("zero denominator in rational literal", line, col)
                value = Fraction(int(text), int(tail.group(1)))
                end = tail.end()
            elif end < len(source) and source[end] == "i" and not (
                end + 1 < len(source) and (source[end + 1].isalnum() or source[end + 1] == "_")
            ):
                value = complex(0.0, float(value))
                end += 1
            tokens.append(_Token("num", value, line, col))
            pos = end
            continue
        m = _IDENT.match(source, pos)
        if m:
            tokens.append(_Token("ident", m.group(0), line, col))
            pos = m.end()
            continue
        if ch in _SYMBOLS:
            tokens.append(_Token("op", ch, line, col))
            pos += 1
            continue
        raise ExprSyntaxError(f"unexpected character '{ch}'", line, col)
    col = pos - line_start + 1
    tokens.append(_Token("eof", None, line, col))
    return tokens


class _Parser:
    """Recursive descent parser for the expression DSL"""

    def __init__(self, source, ambient_dim, definitions, names):
        self.tokens = _tokenize(source)
        self.pos = 0
        self.ambient_dim = ambient_dim
        self.definitions = definitions
        self.names = names

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def at_op(self, *symbols) -> bool:
        tok = self.current
        return tok.kind == "op" and tok.value in symbols

    def expect(self, symbol):
        tok = self.current
        if not (tok.kind == "op" and tok.value == symbol):
            raise ExprSyntaxError(f"expected '{symbol}', found {self.describe(tok)}", tok.line, tok.column)
        return self.advance()

    @staticmethod
    def describe(tok) -> str:
        return "end of input" if tok.kind == "eof" else f"'{tok.value}'"

    def parse(self) -> Expr:
        node = self.expr()
        tok = self.current
        if tok.kind != "eof":
            raise ExprSyntaxError(f"unexpected {self.describe(tok)}", tok.line, tok.column)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.at_op("+", "-"):
            op = "add" if self.advance().value == "+" else "sub"
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.at_op("*", "/"):
            op = "mul" if self.advance().value == "*" else "div"
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.at_op("-"):
            self.advance()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.at_op("^"):
            self.advance()
            return Binary("pow", base, self.unary())
        return base

    def primary(self) -> Expr:
        tok = self.current
        if tok.kind == "num":
            self.advance()
            return Const(tok.value)
        if tok.kind == "ident":
            self.advance()
            if self.at_op("("):
                return self.call(tok)
            return self.identifier(tok)
        if self.at_op("("):
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(f"unexpected {self.describe(tok)}", tok.line, tok.column)

    def call(self, tok) -> Expr:
        name = tok.value
        if name not in FUNCTIONS and name not in ("max", "guard"):
            raise UnknownIdentifierError(f"unknown function '{name}' (line {tok.line}, column {tok.column})")
        self.expect("(")
        args = [self.expr()]
        while self.at_op(","):
            self.advance()
            args.append(self.expr())
        self.expect(")")
        if name == "max":
            return Max(tuple(args))
        expected = 3 if name == "guard" else 1
        if len(args) != expected:
            raise ExprSyntaxError(f"{name} takes {expected} argument(s), got {len(args)}", tok.line, tok.column)
        if name == "guard":
            return Guard(*args)
        return Unary(name, args[0])

    def identifier(self, tok) -> Expr:
        name = tok.value
        if name in self.names:
            return self.variable(self.names[name], tok)
        m = _VARIABLE.fullmatch(name)
        if m:
            return self.variable(int(m.group(1)), tok)
        if name == "i":
            return Const(1j)
        if name in self.definitions:
            return self.definitions[name]
        raise UnknownIdentifierError(f"unknown identifier '{name}' (line {tok.line}, column {tok.column})")

    def variable(self, index, tok) -> Var:
        if index < 1 or index > self.ambient_dim:
            raise VariableIndexError(
                f"variable index {index} out of range 1..{self.ambient_dim} (line {tok.line}, column {tok.column})"
            )
        return Var(index)


def parse(
    source: str,
    ambient_dim: int,
    definitions: Optional[Mapping[str, Union[Expr, str]]] = None,
    names: Optional[Mapping[str, int]] = None,
) -> Expr:
    """
    Parse DSL source into an expression tree.

    Args:
        source (str): DSL text
        ambient_dim (int): Number of complex variables N
        definitions (Mapping, optional): Named sub-expressions (Expr or DSL text), resolved in order
        names (Mapping[str, int], optional): Variable aliases, e.g. {"t": 3}

    Returns:
        Expr: The parsed tree

    Raises:
        ExprSyntaxError: If the source does not follow the grammar
        UnknownIdentifierError: If a name is neither variable, alias, definition nor function
        VariableIndexError: If a variable index exceeds ambient_dim
    """
    names = dict(names or {})
    resolved: Dict[str, Ref] = {}
    for name, body in (definitions or {}).items():
        if name in FUNCTIONS or name in ("max", "guard", "i") or _VARIABLE.fullmatch(name) or name in names:
            raise ExprSyntaxError(f"definition '{name}' shadows a built-in name", 1, 1)
        if isinstance(body, str):
            body = _Parser(body, ambient_dim, resolved, names).parse()
        if body.max_index > ambient_dim:
            raise VariableIndexError(f"definition '{name}' uses z{body.max_index} beyond dimension {ambient_dim}")
        resolved[name] = Ref(name, body)
    return _Parser(source, ambient_dim, resolved, names).parse()


# --- evaluation --------------------------------------------------------------

def _integer_exponent(e: Expr) -> Optional[int]:
    if not isinstance(e, Const):
        return None
    v = e.value
    if isinstance(v, Fraction) and v.denominator == 1:
        return int(v)
    if isinstance(v, float) and v.is_integer() and abs(v) <= 1e6:
        return int(v)
    return None


def _int_power(base: np.ndarray, n: int) -> np.ndarray:
    result = np.ones_like(base)
    square = base.copy()
    k = abs(n)
    while k:
        if k & 1:
            result = result * square
        k >>= 1
        if k:
            square = square * square
    return result if n >= 0 else 1.0 / result


class _Evaluation:
    """One vectorized evaluation pass over m points, memoized per node"""

    def __init__(self, env: Tuple[np.ndarray, ...], strict: bool):
        self.env = env
        self.strict = strict
        self.size = len(env[0]) if env else 1
        self.memo: Dict[int, np.ndarray] = {}

    def fail(self, message, path):
        raise ExprDomainError(message, path)

    def run(self, node: Expr, path: Tuple[str, ...]) -> np.ndarray:
        hit = self.memo.get(id(node))
        if hit is not None:
            return hit
        if isinstance(node, Const):
            out = np.full(self.size, complex(node.value), dtype=complex)
        elif isinstance(node, Var):
            out = self.env[node.index - 1]
        elif isinstance(node, Unary):
            out = self.unary(node, path)
        elif isinstance(node, Binary):
            out = self.binary(node, path)
        elif isinstance(node, Max):
            out = self.maximum(node, path)
        elif isinstance(node, Guard):
            out = self.guard(node, path)
        elif isinstance(node, Ref):
            out = self.run(node.body, path + (f"0:{node.body.label}",))
        else:
            raise TypeError(f"unknown node {type(node).__name__}")
        if self.strict and not np.all(np.isfinite(out)):
            self.fail(f"non-finite value in {node.label}", path)
        self.memo[id(node)] = out
        return out

    def child(self, node, i, path):
        c = node.operands[i]
        return self.run(c, path + (f"{i}:{c.label}",))

    def unary(self, node, path):
        x = self.child(node, 0, path)
        op = node.op
        if op == "neg":
            return -x
        if op == "conj":
            return np.conj(x)
        if op == "re":
            return x.real.astype(complex)
        if op == "im":
            return x.imag.astype(complex)
        if op == "abs":
            return np.abs(x).astype(complex)
        if op == "abs2":
            return (x.real * x.real + x.imag * x.imag).astype(complex)
        if op == "exp":
            with np.errstate(all="ignore"):
                return np.exp(x)
        if op == "sqrt":
            return np.sqrt(x)
        zero = x == 0
        if zero.any():
            if self.strict:
                self.fail("log of 0", path)
        with np.errstate(all="ignore"):
            out = np.log(np.where(zero, 1.0, x))
        out[zero] = np.nan
        return out

    def binary(self, node, path):
        op = node.op
        if op == "pow":
            return self.power(node, path)
        a = self.child(node, 0, path)
        b = self.child(node, 1, path)
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
        zero = b == 0
        if zero.any() and self.strict:
            self.fail("division by 0", path)
        with np.errstate(all="ignore"):
            out = a / np.where(zero, 1.0, b)
        out[zero] = np.nan
        return out

    def power(self, node, path):
        base = self.child(node, 0, path)
        n = _integer_exponent(node.right)
        if n is not None:
            zero = base == 0
            if n < 0 and zero.any():
                if self.strict:
                    self.fail("0 raised to a negative power", path)
                base = np.where(zero, np.nan, base)
            with np.errstate(all="ignore"):
                return _int_power(base, n)
        expo = self.child(node, 1, path)
        bad = (base.imag == 0) & (base.real <= 0)
        if bad.any() and self.strict:
            self.fail("non-positive real base of a non-integer power", path)
        with np.errstate(all="ignore"):
            out = np.exp(expo * np.log(np.where(bad, 1.0, base)))
        out[bad] = np.nan
        return out

    def maximum(self, node, path):
        values = [self.child(node, i, path) for i in range(len(node.args))]
        stacked = np.vstack(values)
        nonreal = np.abs(stacked.imag) > MAX_REAL_TOL * (1.0 + np.abs(stacked.real))
        if nonreal.any() and self.strict:
            self.fail("max of a non-real argument", path)
        out = stacked.real.max(axis=0).astype(complex)
        out[nonreal.any(axis=0)] = np.nan
        return out

    def guard(self, node, path):
        cond = self.child(node, 0, path)
        on_guard = cond == 0
        out = np.empty(self.size, dtype=complex)
        for i, mask in ((1, ~on_guard), (2, on_guard)):
            if not mask.any():
                continue
            sub = _Evaluation(tuple(col[mask] for col in self.env), self.strict)
            out[mask] = sub.child(node, i, path)
        return out


def _coords(p: PointLike) -> np.ndarray:
    if isinstance(p, Point):
        return p.array
    return np.asarray(p, dtype=complex).reshape(-1)


def _check_dim(exprs: Sequence[Expr], dim: int):
    need = max((e.max_index for e in exprs), default=0)
    if need > dim:
        raise DimensionMismatchError(f"expression uses z{need} but the point has dimension {dim}")


def evaluate(e: Expr, p: PointLike) -> complex:
    """
    Evaluate an expression at a point in double precision.

    Raises:
        ExprDomainError: On log of 0, division by 0, bad powers or non-real max (with the node path)
        DimensionMismatchError: If the point has fewer coordinates than the expression uses
    """
    return evaluate_all((e,), p)[0]


def evaluate_all(exprs: Sequence[Expr], p: PointLike) -> list:
    """Evaluate several expressions at one point, sharing common sub-trees"""
    z = _coords(p)
    _check_dim(exprs, len(z))
    ev = _Evaluation(tuple(np.array([c]) for c in z), strict=True)
    return [complex(ev.run(e, (e.label,))[0]) for e in exprs]


def evaluate_many(e: Expr, points: np.ndarray, strict: bool = False) -> np.ndarray:
    """
    Evaluate an expression at many points at once.

    Args:
        e (Expr): Expression
        points (np.ndarray): Complex array of shape (m, N)
        strict (bool): Raise on domain errors instead of returning NaN entries

    Returns:
        np.ndarray: Complex values of shape (m,)
    """
    pts = np.atleast_2d(np.asarray(points, dtype=complex))
    _check_dim((e,), pts.shape[1])
    if pts.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    ev = _Evaluation(tuple(pts[:, j].copy() for j in range(pts.shape[1])), strict=strict)
    out = ev.run(e, (e.label,))
    return np.broadcast_to(out, (pts.shape[0],)).copy()


def evaluate_real(e: Expr, p: PointLike) -> float:
    """Evaluate and return the real part (for real-valued expressions)"""
    return evaluate(e, p).real
