"""Closed-form scalar expressions over the angular/retarded-time coordinates.

Expressions are immutable trees built from real constants, the variables
``u``, ``theta`` and ``psi``, the binary operators ``+ - * / ^`` and a fixed
set of unary functions.  Nodes are interned, so structurally identical
subtrees are the same Python object; evaluation and differentiation are
memoized on that identity, which keeps the derivative towers used by the
geometry code tractable.

Evaluation is vectorized: any of ``u``, ``theta``, ``psi`` may be numpy arrays
(broadcast together).  Domain violations raise :class:`DomainError` instead of
silently producing ``nan``/``inf``.
"""

from __future__ import annotations

import math
import threading
import weakref
from typing import Callable, Dict, Iterable, Mapping, Optional, Tuple, Union

import numpy as np

VARIABLES = ("u", "theta", "psi")
RESERVED = ("r",)
FUNCTIONS = (
    "sin", "cos", "tan", "cot", "csc", "sec",
    "exp", "ln", "sqrt", "sinh", "cosh", "neg",
)
NAMED_CONSTANTS = {"pi": math.pi}

_EPS = np.finfo(float).eps

Number = Union[int, float]


class ExprError(ValueError):
    """Base class for expression construction errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} (at byte offset {offset})")
        self.name = name
        self.offset = offset


class DomainError(ArithmeticError):
    """Raised when an expression is evaluated outside its natural domain."""


# ---------------------------------------------------------------------------
# Nodes

_INTERN: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()
# node identity is equality, so creation must be atomic across threads
_INTERN_LOCK = threading.RLock()


class Expr:
    __slots__ = ("_key", "_hash", "_diff", "__weakref__")

    kind = ""

    def __new__(cls, *args):
        key = cls._make_key(*args)
        with _INTERN_LOCK:
            node = _INTERN.get(key)
            if node is None:
                node = object.__new__(cls)
                node._key = key
                node._hash = hash(key)
                node._diff = {}
                node._init(*args)
                _INTERN[key] = node
        return node

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return self is other

    def __reduce__(self):
        return (parse, (to_string(self),))

    # operator sugar, always through the simplifying constructors
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __pow__(self, other):
        return power(self, _lift(other))

    def __rpow__(self, other):
        return power(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Expr({to_string(self)!r})"

    def __str__(self):
        return to_string(self)


class Const(Expr):
    __slots__ = ("value",)
    kind = "const"

    @staticmethod
    def _make_key(value):
        value = float(value)
        # keep -0.0 and 0.0 apart only where it matters: it never does here
        if value == 0.0:
            value = 0.0
        return ("const", value)

    def _init(self, value):
        self.value = 0.0 if float(value) == 0.0 else float(value)


class Var(Expr):
    __slots__ = ("name",)
    kind = "var"

    @staticmethod
    def _make_key(name):
        if name not in VARIABLES:
            raise UnknownIdentifierError(name, 0)
        return ("var", name)

    def _init(self, name):
        self.name = name


class BinOp(Expr):
    __slots__ = ("op", "left", "right")
    kind = "binop"

    @staticmethod
    def _make_key(op, left, right):
        return ("bin", op, id(left), id(right))

    def _init(self, op, left, right):
        self.op = op
        self.left = left
        self.right = right


class Func(Expr):
    __slots__ = ("name", "arg")
    kind = "func"

    @staticmethod
    def _make_key(name, arg):
        if name not in FUNCTIONS:
            raise UnknownIdentifierError(name, 0)
        return ("fn", name, id(arg))

    def _init(self, name, arg):
        self.name = name
        self.arg = arg


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Const(float(x))
    raise TypeError(f"cannot use {type(x).__name__} in an expression")


ZERO = Const(0.0)
ONE = Const(1.0)
U = Var("u")
THETA = Var("theta")
PSI = Var("psi")


def const(value: Number) -> Expr:
    return Const(value)


def var(name: str) -> Expr:
    return Var(name)


def _is_const(e: Expr, value: Optional[float] = None) -> bool:
    if not isinstance(e, Const):
        return False
    return value is None or e.value == value


# ---------------------------------------------------------------------------
# Simplifying constructors (constant folding and 0/1 identities only)

def _fold(op: str, a: float, b: float) -> Optional[float]:
    try:
        if op == "+":
            v = a + b
        elif op == "-":
            v = a - b
        elif op == "*":
            v = a * b
        elif op == "/":
            if b == 0.0:
                return None
            v = a / b
        else:
            if a < 0 and not float(b).is_integer():
                return None
            if a == 0 and b < 0:
                return None
            v = a ** b
    except (OverflowError, ZeroDivisionError, ValueError):
        return None
    if isinstance(v, complex) or not math.isfinite(v):
        return None
    return float(v)


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        v = _fold("+", a.value, b.value)
        if v is not None:
            return Const(v)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(b, Func) and b.name == "neg":
        return sub(a, b.arg)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        v = _fold("-", a.value, b.value)
        if v is not None:
            return Const(v)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if a is b:
        return ZERO
    if isinstance(b, Func) and b.name == "neg":
        return add(a, b.arg)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        v = _fold("*", a.value, b.value)
        if v is not None:
            return Const(v)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    if isinstance(a, Func) and a.name == "neg":
        return neg(mul(a.arg, b))
    if isinstance(b, Func) and b.name == "neg":
        return neg(mul(a, b.arg))
    # constants to the left so that folding can find them
    if _is_const(b):
        a, b = b, a
    if _is_const(a) and isinstance(b, BinOp) and b.op == "*" and _is_const(b.left):
        v = _fold("*", a.value, b.left.value)
        if v is not None:
            return mul(Const(v), b.right)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        v = _fold("/", a.value, b.value)
        if v is not None:
            return Const(v)
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(b, -1.0):
        return neg(a)
    if _is_const(b) and b.value != 0.0:
        return mul(Const(1.0 / b.value), a)
    return BinOp("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        v = _fold("^", a.value, b.value)
        if v is not None:
            return Const(v)
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return ONE
    if _is_const(a, 1.0):
        return ONE
    return BinOp("^", a, b)


def neg(a: Expr) -> Expr:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Func) and a.name == "neg":
        return a.arg
    if isinstance(a, BinOp) and a.op == "-":
        return BinOp("-", a.right, a.left)
    return Func("neg", a)


def func(name: str, a: Expr) -> Expr:
    if name == "neg":
        return neg(a)
    if _is_const(a):
        try:
            v = _apply_func(name, np.float64(a.value))
        except DomainError:
            v = None
        if v is not None and math.isfinite(float(v)):
            return Const(float(v))
    return Func(name, a)


def sin(a):
    return func("sin", _lift(a))


def cos(a):
    return func("cos", _lift(a))


def tan(a):
    return func("tan", _lift(a))


def cot(a):
    return func("cot", _lift(a))


def csc(a):
    return func("csc", _lift(a))


def sec(a):
    return func("sec", _lift(a))


def exp(a):
    return func("exp", _lift(a))


def ln(a):
    return func("ln", _lift(a))


def sqrt(a):
    return func("sqrt", _lift(a))


def sinh(a):
    return func("sinh", _lift(a))


def cosh(a):
    return func("cosh", _lift(a))


_BUILD = {"+": add, "-": sub, "*": mul, "/": div, "^": power}


def simplify(e: Expr) -> Expr:
    """Rebuild ``e`` bottom-up through the folding constructors."""
    memo: Dict[Expr, Expr] = {}

    def walk(n: Expr) -> Expr:
        out = memo.get(n)
        if out is not None:
            return out
        if isinstance(n, BinOp):
            out = _BUILD[n.op](walk(n.left), walk(n.right))
        elif isinstance(n, Func):
            out = func(n.name, walk(n.arg))
        else:
            out = n
        memo[n] = out
        return out

    return walk(e)


# ---------------------------------------------------------------------------
# Parsing

class _Token:
    __slots__ = ("kind", "text", "offset", "value")

    def __init__(self, kind, text, offset, value=None):
        self.kind = kind
        self.text = text
        self.offset = offset
        self.value = value


def _tokenize(text: str):
    raw = text.encode("utf-8")
    tokens = []
    i = 0
    n = len(raw)
    while i < n:
        ch = chr(raw[i])
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and chr(raw[i + 1]).isdigit()):
            j = i
            while j < n and (chr(raw[j]).isdigit() or chr(raw[j]) == "."):
                j += 1
            if j < n and chr(raw[j]) in "eE":
                k = j + 1
                if k < n and chr(raw[k]) in "+-":
                    k += 1
                if k < n and chr(raw[k]).isdigit():
                    while k < n and chr(raw[k]).isdigit():
                        k += 1
                    j = k
            lit = raw[i:j].decode()
            try:
                value = float(lit)
            except ValueError:
                raise ExprSyntaxError(f"malformed number {lit!r}", i) from None
            tokens.append(_Token("num", lit, i, value))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (chr(raw[j]).isalnum() or chr(raw[j]) == "_"):
                j += 1
            tokens.append(_Token("name", raw[i:j].decode(), i))
            i = j
            continue
        if ch in "+-*/^()":
            tokens.append(_Token(ch, ch, i))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {raw[i:i + 1]!r}", i)
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    # binding powers: + - (10), * / (20), unary minus (30), ^ (40)
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.next()
        if tok.kind != kind:
            what = "end of input" if tok.kind == "end" else repr(tok.text)
            raise ExprSyntaxError(f"expected {kind!r}, found {what}", tok.offset)
        return tok

    def parse(self) -> Expr:
        if self.peek().kind == "end":
            raise ExprSyntaxError("empty expression", 0)
        e = self.expression(0)
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.offset)
        return e

    def expression(self, min_bp: int) -> Expr:
        left = self.prefix()
        while True:
            tok = self.peek()
            if tok.kind in ("+", "-"):
                bp = 10
            elif tok.kind in ("*", "/"):
                bp = 20
            elif tok.kind == "^":
                bp = 40
            else:
                break
            if bp < min_bp or (bp == min_bp and tok.kind != "^"):
                break
            self.next()
            if tok.kind == "^":
                # right associative; the exponent may carry a unary minus
                right = self.expression(40)
            else:
                right = self.expression(bp + 1)
            left = BinOp(tok.kind, left, right)
        return left

    def prefix(self) -> Expr:
        tok = self.next()
        if tok.kind == "-":
            operand = self.expression(30)
            return Func("neg", operand)
        if tok.kind == "+":
            return self.expression(30)
        if tok.kind == "num":
            return Const(tok.value)
        if tok.kind == "(":
            e = self.expression(0)
            self.expect(")")
            return e
        if tok.kind == "name":
            name = tok.text
            if self.peek().kind == "(":
                if name not in FUNCTIONS:
                    raise UnknownIdentifierError(name, tok.offset)
                self.next()
                arg = self.expression(0)
                self.expect(")")
                return Func(name, arg)
            if name in RESERVED:
                raise UnknownIdentifierError(name, tok.offset)
            if name in VARIABLES:
                return Var(name)
            if name in NAMED_CONSTANTS:
                return Const(NAMED_CONSTANTS[name])
            raise UnknownIdentifierError(name, tok.offset)
        if tok.kind == "end":
            raise ExprSyntaxError("unexpected end of input", tok.offset)
        raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.offset)


def parse(text: str) -> Expr:
    """Parse an infix expression.

    Precedence, tightest first: ``^`` (right associative), unary minus,
    ``* /``, ``+ -`` (both left associative).  The radial coordinate ``r`` is
    reserved and rejected.

    >>> evaluate(parse("u*sin(theta)^2"), 2.0, math.pi / 2, 0.0)
    2.0
    """
    if not isinstance(text, str):
        raise TypeError("expression text must be a string")
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Printing

_PREC = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}


def _fmt_const(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        s = str(int(v))
    else:
        s = repr(v)
    return s


def to_string(e: Expr) -> str:
    """Print ``e`` so that :func:`parse` rebuilds an equal-valued tree."""
    memo: Dict[Expr, Tuple[str, int]] = {}

    def walk(n: Expr) -> Tuple[str, int]:
        hit = memo.get(n)
        if hit is not None:
            return hit
        if isinstance(n, Const):
            s = _fmt_const(n.value)
            out = (f"({s})", 100) if n.value < 0 else (s, 100)
        elif isinstance(n, Var):
            out = (n.name, 100)
        elif isinstance(n, Func):
            inner, _ = walk(n.arg)
            if n.name == "neg":
                a, p = walk(n.arg)
                out = ("-" + (a if p > 30 else f"({a})"), 30)
            else:
                out = (f"{n.name}({inner})", 100)
        else:
            prec = _PREC[n.op]
            a, pa = walk(n.left)
            b, pb = walk(n.right)
            if n.op == "^":
                a = a if pa > prec else f"({a})"
                b = b if pb >= prec else f"({b})"
            else:
                a = a if pa >= prec else f"({a})"
                b = b if pb > prec else f"({b})"
            out = (f"{a}{n.op}{b}", prec)
        memo[n] = out
        return out

    return walk(e)[0]


# ---------------------------------------------------------------------------
# Evaluation

def _near_zero_sin(x, s):
    return np.abs(s) <= 4 * _EPS * np.maximum(np.abs(x), 1.0)


def _apply_func(name: str, x):
    with np.errstate(all="ignore"):
        if name == "neg":
            return -x
        if name == "sin":
            return np.sin(x)
        if name == "cos":
            return np.cos(x)
        if name == "exp":
            return np.exp(x)
        if name == "sinh":
            return np.sinh(x)
        if name == "cosh":
            return np.cosh(x)
        if name in ("cot", "csc"):
            s = np.sin(x)
            if np.any(_near_zero_sin(x, s)):
                raise DomainError(f"{name} evaluated at a multiple of pi")
            return np.cos(x) / s if name == "cot" else 1.0 / s
        if name in ("tan", "sec"):
            c = np.cos(x)
            if np.any(_near_zero_sin(x, c)):
                raise DomainError(f"{name} evaluated at an odd multiple of pi/2")
            return np.sin(x) / c if name == "tan" else 1.0 / c
        if name == "ln":
            if np.any(x <= 0):
                raise DomainError("ln of a non-positive value")
            return np.log(x)
        if name == "sqrt":
            if np.any(x < 0):
                raise DomainError("sqrt of a negative value")
            return np.sqrt(x)
    raise UnknownIdentifierError(name, 0)


def _apply_bin(op: str, a, b):
    with np.errstate(all="ignore"):
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if np.any(b == 0):
                raise DomainError("division by zero")
            return a / b
        # power
        if np.ndim(b) == 0 and float(b) == 2.0:
            return a * a
        if np.ndim(b) == 0 and float(b).is_integer():
            if float(b) < 0 and np.any(a == 0):
                raise DomainError("zero raised to a negative power")
            return np.power(a, int(b)) if float(b) >= 0 else 1.0 / np.power(a, -int(b))
        bad = (a < 0) & (np.asarray(b) != np.round(b))
        if np.any(bad):
            raise DomainError("negative base with non-integer exponent")
        if np.any((a == 0) & (np.asarray(b) < 0)):
            raise DomainError("zero raised to a negative power")
        return np.power(a, b)


def evaluate(e: Expr, u=0.0, theta=0.0, psi=0.0):
    """Evaluate ``e`` at the given binding (scalars or broadcastable arrays).

    Returns a float for scalar inputs and an ndarray otherwise.
    """
    return evaluate_many([e], u, theta, psi)[0]


def evaluate_many(exprs: Iterable[Expr], u=0.0, theta=0.0, psi=0.0) -> list:
    """Evaluate several expressions sharing one memo table."""
    scalar = all(np.ndim(x) == 0 for x in (u, theta, psi))
    env = {
        "u": np.asarray(u, dtype=float),
        "theta": np.asarray(theta, dtype=float),
        "psi": np.asarray(psi, dtype=float),
    }
    shape = np.broadcast(env["u"], env["theta"], env["psi"]).shape
    memo: Dict[Expr, object] = {}

    def walk(n: Expr):
        hit = memo.get(n)
        if hit is not None:
            return hit
        # iterative post-order to survive deep trees
        stack = [(n, False)]
        while stack:
            node, ready = stack.pop()
            if node in memo:
                continue
            if isinstance(node, Const):
                memo[node] = np.float64(node.value)
            elif isinstance(node, Var):
                memo[node] = env[node.name]
            elif isinstance(node, Func):
                if ready:
                    memo[node] = _apply_func(node.name, memo[node.arg])
                else:
                    stack.append((node, True))
                    if node.arg not in memo:
                        stack.append((node.arg, False))
            else:
                if ready:
                    memo[node] = _apply_bin(node.op, memo[node.left], memo[node.right])
                else:
                    stack.append((node, True))
                    if node.right not in memo:
                        stack.append((node.right, False))
                    if node.left not in memo:
                        stack.append((node.left, False))
        return memo[n]

    out = []
    for e in exprs:
        v = walk(e)
        if not np.all(np.isfinite(v)):
            raise DomainError(f"non-finite value while evaluating {_short(e)}")
        if scalar:
            out.append(float(v))
        else:
            out.append(np.broadcast_to(v, shape).astype(float, copy=True))
    return out


def _short(e: Expr, limit: int = 60) -> str:
    s = to_string(e)
    return s if len(s) <= limit else s[: limit - 3] + "..."


# ---------------------------------------------------------------------------
# Differentiation

def _d_func(name: str, a: Expr) -> Expr:
    """Derivative of ``name(x)`` with respect to x, at x = a."""
    if name == "sin":
        return cos(a)
    if name == "cos":
        return neg(sin(a))
    if name == "tan":
        return power(sec(a), Const(2))
    if name == "cot":
        return neg(power(csc(a), Const(2)))
    if name == "csc":
        return neg(mul(csc(a), cot(a)))
    if name == "sec":
        return mul(sec(a), tan(a))
    if name == "exp":
        return exp(a)
    if name == "ln":
        return div(ONE, a)
    if name == "sqrt":
        return div(Const(0.5), sqrt(a))
    if name == "sinh":
        return cosh(a)
    if name == "cosh":
        return sinh(a)
    if name == "neg":
        return Const(-1.0)
    raise UnknownIdentifierError(name, 0)


def diff(e: Expr, v: str) -> Expr:
    """Exact symbolic partial derivative with respect to variable ``v``."""
    if v not in VARIABLES:
        raise UnknownIdentifierError(v, 0)
    hit = e._diff.get(v)
    if hit is not None:
        return hit
    # post-order over not-yet-differentiated nodes
    stack = [(e, False)]
    while stack:
        node, ready = stack.pop()
        if v in node._diff:
            continue
        if isinstance(node, Const):
            node._diff[v] = ZERO
            continue
        if isinstance(node, Var):
            node._diff[v] = ONE if node.name == v else ZERO
            continue
        children = (node.arg,) if isinstance(node, Func) else (node.left, node.right)
        if not ready:
            stack.append((node, True))
            for ch in children:
                if v not in ch._diff:
                    stack.append((ch, False))
            continue
        if isinstance(node, Func):
            da = node.arg._diff[v]
            if node.name == "neg":
                node._diff[v] = neg(da)
            else:
                node._diff[v] = ZERO if da is ZERO else mul(_d_func(node.name, node.arg), da)
            continue
        a, b = node.left, node.right
        da, db = a._diff[v], b._diff[v]
        op = node.op
        if op == "+":
            out = add(da, db)
        elif op == "-":
            out = sub(da, db)
        elif op == "*":
            out = add(mul(da, b), mul(a, db))
        elif op == "/":
            if db is ZERO:
                out = div(da, b)
            else:
                out = div(sub(mul(da, b), mul(a, db)), power(b, Const(2)))
        else:
            if db is ZERO:
                if da is ZERO:
                    out = ZERO
                else:
                    out = mul(mul(b, power(a, sub(b, ONE))), da)
            elif da is ZERO:
                out = mul(mul(node, ln(a)), db)
            else:
                out = mul(node, add(mul(db, ln(a)), div(mul(b, da), a)))
        node._diff[v] = out
    return e._diff[v]


def partial(e: Expr, n_u: int = 0, n_theta: int = 0, n_psi: int = 0) -> Expr:
    out = e
    for name, k in (("u", n_u), ("theta", n_theta), ("psi", n_psi)):
        for _ in range(k):
            out = diff(out, name)
    return out


def substitute(e: Expr, binding: Mapping[str, Union[Expr, Number]]) -> Expr:
    """Replace variables by expressions (or numbers), simplifying as it goes."""
    repl = {Var(k): _lift(v) for k, v in binding.items()}
    memo: Dict[Expr, Expr] = {}

    def walk(n: Expr) -> Expr:
        out = memo.get(n)
        if out is not None:
            return out
        if isinstance(n, Var):
            out = repl.get(n, n)
        elif isinstance(n, Const):
            out = n
        elif isinstance(n, Func):
            out = func(n.name, walk(n.arg))
        else:
            out = _BUILD[n.op](walk(n.left), walk(n.right))
        memo[n] = out
        return out

    return walk(e)


def free_variables(e: Expr) -> frozenset:
    seen = set()
    names = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        if isinstance(n, Var):
            names.add(n.name)
        elif isinstance(n, Func):
            stack.append(n.arg)
        elif isinstance(n, BinOp):
            stack.extend((n.left, n.right))
    return frozenset(names)


def node_count(e: Expr) -> int:
    """Number of distinct nodes in the expression DAG."""
    seen = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        if isinstance(n, Func):
            stack.append(n.arg)
        elif isinstance(n, BinOp):
            stack.extend((n.left, n.right))
    return len(seen)


def taylor2(e: Expr, about: float = 0.0) -> Expr:
    """Quadratic Taylor polynomial of ``e`` in ``u`` about ``u = about``."""
    du = sub(U, Const(about))
    f0 = substitute(e, {"u": about})
    f1 = substitute(diff(e, "u"), {"u": about})
    f2 = substitute(diff(diff(e, "u"), "u"), {"u": about})
    return add(add(f0, mul(f1, du)), mul(mul(Const(0.5), f2), power(du, Const(2))))


# ---------------------------------------------------------------------------

class ScalarField:
    """An expression together with a lazily filled table of its partials."""

    __slots__ = ("expr", "_partials")

    def __init__(self, expr: Union[Expr, str, Number]):
        if isinstance(expr, str):
            expr = parse(expr)
        self.expr = _lift(expr)
        self._partials: Dict[Tuple[int, int, int], Expr] = {(0, 0, 0): self.expr}

    @classmethod
    def zero(cls) -> "ScalarField":
        return cls(ZERO)

    def d(self, n_u: int = 0, n_theta: int = 0, n_psi: int = 0) -> Expr:
        key = (n_u, n_theta, n_psi)
        hit = self._partials.get(key)
        if hit is not None:
            return hit
        # reuse the nearest cached lower-order partial
        for name, idx in (("psi", 2), ("theta", 1), ("u", 0)):
            if key[idx] > 0:
                lower = list(key)
                lower[idx] -= 1
                out = diff(self.d(*lower), name)
                break
        self._partials[key] = out
        return out

    def __call__(self, u=0.0, theta=0.0, psi=0.0, n_u: int = 0, n_theta: int = 0, n_psi: int = 0):
        return evaluate(self.d(n_u, n_theta, n_psi), u, theta, psi)

    def is_zero(self) -> bool:
        return self.expr is ZERO

    def __repr__(self):
        return f"ScalarField({to_string(self.expr)!r})"
