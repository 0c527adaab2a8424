"""Scalar expressions in ``t`` with complex constants.

Grammar (Pratt parser, lowest to highest binding)::

    expr    := expr ('+' | '-') expr
             | expr ('*' | '/') expr
             | ('-' | '+') expr
             | expr '^' expr            (right associative)
             | NUMBER | NUMBER 'i' | IDENT | FUNC '(' expr ')' | '(' expr ')'

Numbers are decimal or scientific (``1``, ``.5``, ``2.5e-3``); a number
immediately followed by ``i`` is an imaginary literal (``0.7i``). Reserved
names are ``pi``, ``e``, ``i`` and the variable ``t``; any other identifier
is a parameter bound at evaluation time. Functions: sin cos tan sinh cosh
exp log sqrt abs. There is no implicit multiplication: ``2t`` is rejected.

All arithmetic is complex. ``log`` and ``sqrt`` use principal branches and
``z ^ w`` is ``exp(w log z)`` on the principal branch (integer real
exponents are evaluated by repeated multiplication).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np

from .errors import ExprEvalError, ExprSyntaxError, UnboundIdentifierError

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": lambda z: np.abs(z).astype(complex),
}
CONSTANTS = {"pi": complex(np.pi), "e": complex(np.e), "i": 1j}
VARIABLE = "t"


# --------------------------------------------------------------------- AST

@dataclass(frozen=True)
class Num:
    value: complex
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Const:
    name: str
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Param:
    name: str
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Node"
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"
    offset: int = field(default=0, compare=False)


Node = Union[Num, Const, Var, Param, Unary, Binary, Call]


# --------------------------------------------------------------- tokenizer

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num | imag | ident | op | end
    text: str
    offset: int


def _byte_offset(src: str, index: int) -> int:
    return len(src[:index].encode("utf-8"))


def _tokenize(src: str):
    pos = 0
    toks = []
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ExprSyntaxError(
                f"unexpected character {src[pos]!r}; expected a number, name, operator or parenthesis",
                _byte_offset(src, pos),
                src,
            )
        kind = m.lastgroup
        text = m.group()
        end = m.end()
        if kind == "num":
            # imaginary literal: digits directly followed by a lone 'i'
            if src[end:end + 1] == "i" and not re.match(r"[A-Za-z_0-9]", src[end + 1:end + 2]):
                toks.append(_Tok("imag", text, _byte_offset(src, pos)))
                end += 1
            else:
                toks.append(_Tok("num", text, _byte_offset(src, pos)))
        elif kind != "ws":
            toks.append(_Tok(kind, text, _byte_offset(src, pos)))
        pos = end
    toks.append(_Tok("end", "", _byte_offset(src, len(src))))
    return toks


# ------------------------------------------------------------------ parser

_LBP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 30}
_UNARY_BP = 25


class _Parser:
    def __init__(self, src):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, tok, message):
        raise ExprSyntaxError(message, tok.offset, self.src)

    def expect(self, text):
        tok = self.next()
        if tok.text != text:
            found = tok.text or "end of input"
            self.fail(tok, f"expected {text!r}, found {found!r}")
        return tok

    def parse(self):
        node = self.expression(0)
        tok = self.peek()
        if tok.kind != "end":
            self.fail(tok, f"expected an operator or end of input, found {tok.text!r}")
        return node

    def expression(self, rbp):
        left = self.nud(self.next())
        while True:
            tok = self.peek()
            lbp = _LBP.get(tok.text, 0) if tok.kind == "op" else 0
            if rbp >= lbp:
                return left
            self.next()
            if tok.text == "^":
                right = self.expression(lbp - 1)
            else:
                right = self.expression(lbp)
            left = Binary(tok.text, left, right, tok.offset)

    def nud(self, tok):
        if tok.kind in ("num", "imag"):
            value = float(tok.text)
            if not np.isfinite(value):
                self.fail(tok, "numeric literal out of range")
            return Num(complex(0, value) if tok.kind == "imag" else complex(value), tok.offset)
        if tok.kind == "ident":
            name = tok.text
            if self.peek().text == "(":
                if name not in FUNCTIONS:
                    self.fail(tok, f"unknown function {name!r}")
                self.next()
                arg = self.expression(0)
                self.expect(")")
                return Call(name, arg, tok.offset)
            if name in FUNCTIONS:
                self.fail(self.peek(), f"expected '(' after function {name!r}")
            if name in CONSTANTS:
                return Const(name, tok.offset)
            if name == VARIABLE:
                return Var(tok.offset)
            return Param(name, tok.offset)
        if tok.text == "(":
            node = self.expression(0)
            self.expect(")")
            return node
        if tok.text in ("-", "+"):
            return Unary(tok.text, self.expression(_UNARY_BP), tok.offset)
        found = tok.text or "end of input"
        self.fail(tok, f"expected a number, name or '(', found {found!r}")


def parse(src: str) -> Node:
    """Parse ``src`` into an immutable AST."""
    if not isinstance(src, str) or not src.strip():
        raise ExprSyntaxError("empty expression", 0, src if isinstance(src, str) else "")
    return _Parser(src).parse()


# ----------------------------------------------------------------- printer

def _fmt_num(x: float) -> str:
    return repr(float(x))


def to_string(node: Node) -> str:
    """Canonical, fully parenthesised source for ``node``."""
    if isinstance(node, Num):
        v = node.value
        if v.imag == 0:
            return _fmt_num(v.real)
        if v.real == 0:
            return _fmt_num(v.imag) + "i"
        return f"({_fmt_num(v.real)} + {_fmt_num(v.imag)}i)"
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Var):
        return VARIABLE
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Unary):
        return f"({node.op}{to_string(node.operand)})"
    if isinstance(node, Binary):
        return f"({to_string(node.left)} {node.op} {to_string(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def free_identifiers(node: Node) -> set:
    if isinstance(node, Param):
        return {node.name}
    if isinstance(node, Unary):
        return free_identifiers(node.operand)
    if isinstance(node, Binary):
        return free_identifiers(node.left) | free_identifiers(node.right)
    if isinstance(node, Call):
        return free_identifiers(node.arg)
    return set()


def depends_on_t(node: Node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Unary):
        return depends_on_t(node.operand)
    if isinstance(node, Binary):
        return depends_on_t(node.left) or depends_on_t(node.right)
    if isinstance(node, Call):
        return depends_on_t(node.arg)
    return False


# --------------------------------------------------------------- evaluator

def _finite(value, node, what):
    if not np.all(np.isfinite(value)):
        raise ExprEvalError(f"domain error in {what}", node.offset)
    return value


def _int_exponent(w):
    if np.ndim(w) == 0 or np.all(w == w.flat[0]):
        w0 = complex(np.asarray(w).flat[0])
        if w0.imag == 0 and w0.real == int(w0.real) and abs(w0.real) <= 64:
            return int(w0.real)
    return None


def _power(z, w, node):
    k = _int_exponent(w)
    if k is not None:
        if k < 0 and np.any(z == 0):
            raise ExprEvalError("division by zero in '^'", node.offset)
        base = z if k >= 0 else 1.0 / z
        out = np.ones_like(z)
        k = abs(k)
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return _finite(out, node, "'^'")
    if np.any(z == 0):
        if np.any(np.real(w[z == 0] if np.ndim(w) else w) <= 0):
            raise ExprEvalError("zero raised to a non-positive power", node.offset)
    with np.errstate(all="ignore"):
        safe = np.where(z == 0, 1.0, z)
        out = np.where(z == 0, 0.0, np.exp(w * np.log(safe)))
    return _finite(out, node, "'^'")


def _eval(node, t, params):
    if isinstance(node, Num):
        return np.full(np.shape(t), node.value, dtype=complex)
    if isinstance(node, Const):
        return np.full(np.shape(t), CONSTANTS[node.name], dtype=complex)
    if isinstance(node, Var):
        return np.asarray(t, dtype=complex)
    if isinstance(node, Param):
        try:
            value = params[node.name]
        except KeyError:
            raise UnboundIdentifierError(f"unbound identifier {node.name!r}", node.offset) from None
        return np.full(np.shape(t), complex(value), dtype=complex)
    if isinstance(node, Unary):
        v = _eval(node.operand, t, params)
        return 0 - v if node.op == "-" else v  # 0 - z keeps +0j, so log(-1) = i pi
    if isinstance(node, Binary):
        a = _eval(node.left, t, params)
        b = _eval(node.right, t, params)
        with np.errstate(all="ignore"):
            if node.op == "+":
                out = a + b
            elif node.op == "-":
                out = a - b
            elif node.op == "*":
                out = a * b
            elif node.op == "/":
                if np.any(b == 0):
                    raise ExprEvalError("division by zero", node.offset)
                out = a / b
            else:
                return _power(a, b, node)
        return _finite(out, node, f"'{node.op}'")
    if isinstance(node, Call):
        v = _eval(node.arg, t, params)
        if node.func == "log" and np.any(v == 0):
            raise ExprEvalError("log of zero", node.offset)
        with np.errstate(all="ignore"):
            out = FUNCTIONS[node.func](v)
        return _finite(out, node, f"{node.func}()")
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(node: Node, t=0.0, params: Mapping[str, complex] = None):
    """Evaluate ``node`` at ``t`` (scalar or array) with bound ``params``.

    Returns a Python complex for scalar ``t`` and a complex array otherwise.
    """
    out = _eval(node, np.asarray(t, dtype=float), params or {})
    return complex(out) if out.ndim == 0 else out


# short alias mirroring parse()
eval = evaluate  # noqa: A001


def _ipow(z, k):
    base = z if k >= 0 else 1.0 / z
    out = np.ones_like(z) if np.ndim(z) else 1.0 + 0j
    k = abs(k)
    while k:
        if k & 1:
            out = out * base
        base = base * base
        k >>= 1
    return out


_BINOPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": lambda a, b: a / b,
}


def _closure(node, params):
    """Unchecked evaluator; constant subtrees are folded to Python complex."""
    if not depends_on_t(node):
        with np.errstate(all="ignore"):
            value = complex(_eval(node, np.asarray(0.0), params))
        return value
    if isinstance(node, Var):
        return lambda t: t.astype(complex)
    if isinstance(node, Unary):
        f = _closure(node.operand, params)
        return (lambda t: 0 - f(t)) if node.op == "-" else f
    if isinstance(node, Call):
        f, g = _closure(node.arg, params), FUNCTIONS[node.func]
        return lambda t: g(f(t))
    if isinstance(node, Binary):
        left, right = _closure(node.left, params), _closure(node.right, params)
        if node.op == "^":
            if not callable(right):
                k = _int_exponent(np.asarray(right))
                if k is not None:
                    return lambda t: _ipow(left(t), k)
            lf = left if callable(left) else (lambda t, c=left: c)
            rf = right if callable(right) else (lambda t, c=right: c)

            def power(t):
                z, w = lf(t), rf(t)
                safe = np.where(z == 0, 1.0, z)
                zero = np.where(np.real(w) > 0, 0.0, np.nan)  # nan sends 0^w, Re w <= 0, to the checked path
                return np.where(z == 0, zero, np.exp(w * np.log(safe)))
            return power
        op = _BINOPS[node.op]
        if not callable(left):
            return lambda t: op(left, right(t))
        if not callable(right):
            return lambda t: op(left(t), right)
        return lambda t: op(left(t), right(t))
    raise TypeError(f"not an expression node: {node!r}")


def compile_expr(node: Node, params: Mapping[str, complex]) -> Callable:
    """Bind ``params`` and return ``f(t)`` evaluating ``node`` (vectorised in t).

    The returned function runs an unchecked closure tree and re-evaluates
    with the checking evaluator only when a non-finite value shows up, so
    errors carry the same message and offset as :func:`evaluate`.
    """
    missing = free_identifiers(node) - set(params)
    if missing:
        name = sorted(missing)[0]
        raise UnboundIdentifierError(f"unbound identifier {name!r}")
    bound = dict(params)
    try:
        fast = _closure(node, bound)
    except ExprEvalError:
        fast = None  # constant subtree fails: let the checked path report it

    def f(t):
        t = np.asarray(t, dtype=float)
        if fast is not None:
            with np.errstate(all="ignore"):
                out = fast(t) if callable(fast) else np.full(t.shape, fast, dtype=complex)
            if np.all(np.isfinite(out)):
                return np.broadcast_to(out, t.shape).astype(complex, copy=False)
        return _eval(node, t, bound)

    return f


def parse_complex(text: str, params: Mapping[str, complex] = None) -> complex:
    """Parse a constant such as ``0+0.7i`` or ``-2*pi`` into a complex number."""
    node = parse(text)
    if depends_on_t(node):
        raise ExprSyntaxError("constant expression may not reference 't'", 0, text)
    return evaluate(node, 0.0, params or {})
