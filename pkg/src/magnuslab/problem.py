"""Time-dependent operators ``A(t)``, the built-in catalog and exact solutions.

An operator is a sequence of contiguous pieces ``[t_start, t_end)`` whose
``n x n`` entries are expressions in ``t``. At a breakpoint the right limit
(the later piece) is used. Built-in problems are stored as ordinary problem
schemas, so they go through the same parser as user files.

Problem file (JSON)::

    {"n": 2, "params": {"alpha": [2, 0]},
     "pieces": [{"t_start": 0, "t_end": "inf", "entries": [["alpha", "t"], ["0", "-1"]]}]}

or ``{"builtin": "example2", "params": {"alpha": [0.4, 0]}}``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from . import expr
from .errors import ConfigError, ExprSyntaxError, ProblemError, QuadratureError
from .linalg import spectral_norm


@dataclass(frozen=True)
class Piece:
    t_start: float
    t_end: float
    entries: Tuple[Tuple[expr.Node, ...], ...]

    @property
    def constant(self) -> bool:
        return not any(expr.depends_on_t(e) for row in self.entries for e in row)


class TimeDependentOperator:
    """Piecewise expression matrix ``A(t)`` with bound parameters."""

    def __init__(self, n: int, pieces: Sequence[Piece], params: Mapping[str, complex] = None,
                 exact: Optional[str] = None, name: str = "custom"):
        self.n = int(n)
        self.pieces = tuple(pieces)
        self.params = {k: complex(v) for k, v in (params or {}).items()}
        self.exact = exact
        self.name = name
        self._validate()
        self._compiled = [
            [[expr.compile_expr(e, self.params) for e in row] for row in p.entries]
            for p in self.pieces
        ]

    def _validate(self):
        if self.n < 1:
            raise ProblemError("dimension n must be >= 1")
        if not self.pieces:
            raise ProblemError("operator needs at least one piece")
        if self.pieces[0].t_start != 0:
            raise ProblemError("first piece must start at t = 0")
        for k, p in enumerate(self.pieces):
            if not p.t_end > p.t_start:
                raise ProblemError(f"piece {k}: t_end must exceed t_start")
            if len(p.entries) != self.n or any(len(r) != self.n for r in p.entries):
                raise ProblemError(f"piece {k}: entries must be {self.n}x{self.n}")
            if k > 0 and p.t_start != self.pieces[k - 1].t_end:
                raise ProblemError(f"piece {k}: pieces must be contiguous")
            if k < len(self.pieces) - 1 and math.isinf(p.t_end):
                raise ProblemError(f"piece {k}: only the last piece may be unbounded")
            for row in p.entries:
                for e in row:
                    missing = expr.free_identifiers(e) - set(self.params)
                    if missing:
                        raise ProblemError(f"piece {k}: unbound parameter(s) {sorted(missing)}")

    # -- structure -----------------------------------------------------------
    @property
    def t_max(self) -> float:
        return self.pieces[-1].t_end

    def breakpoints(self, t: float) -> list:
        """``[0, b_1, ..., t]``: every piece boundary strictly inside ``(0, t)``."""
        pts = [0.0]
        for p in self.pieces[1:]:
            if p.t_start < t:
                pts.append(p.t_start)
        if t > 0:
            pts.append(float(t))
        return pts

    def piece_index(self, t: float) -> int:
        if t < 0 or t > self.t_max:
            raise ProblemError(f"t = {t} outside all pieces")
        for k in range(len(self.pieces) - 1, -1, -1):
            if self.pieces[k].t_start <= t:
                return k
        return 0

    def scaled(self, factor: complex) -> "TimeDependentOperator":
        """The operator ``factor * A(t)`` (same pieces)."""
        f = expr.Num(complex(factor))
        pieces = [
            Piece(p.t_start, p.t_end,
                  tuple(tuple(expr.Binary("*", f, e) for e in row) for row in p.entries))
            for p in self.pieces
        ]
        return TimeDependentOperator(self.n, pieces, self.params, None, f"{self.name}*{factor}")

    # -- evaluation ----------------------------------------------------------
    def _eval_piece(self, k: int, ts: np.ndarray) -> np.ndarray:
        out = np.empty(ts.shape + (self.n, self.n), dtype=complex)
        for i, row in enumerate(self._compiled[k]):
            for j, f in enumerate(row):
                out[..., i, j] = f(ts)
        return out

    def evaluate_piece(self, k: int, ts) -> np.ndarray:
        """Evaluate with piece ``k`` forced (used for interior quadrature nodes)."""
        return self._eval_piece(k, np.asarray(ts, dtype=float))

    def __call__(self, t):
        ts = np.asarray(t, dtype=float)
        if ts.ndim == 0:
            return self._eval_piece(self.piece_index(float(ts)), ts)
        out = np.empty(ts.shape + (self.n, self.n), dtype=complex)
        idx = np.array([self.piece_index(float(s)) for s in ts.ravel()]).reshape(ts.shape)
        for k in np.unique(idx):
            mask = idx == k
            out[mask] = self._eval_piece(int(k), ts[mask])
        return out

    def to_schema(self) -> dict:
        return {
            "n": self.n,
            "params": {k: [v.real, v.imag] for k, v in sorted(self.params.items())},
            "pieces": [
                {
                    "t_start": p.t_start,
                    "t_end": "inf" if math.isinf(p.t_end) else p.t_end,
                    "entries": [[expr.to_string(e) for e in row] for row in p.entries],
                }
                for p in self.pieces
            ],
        }


def evaluate(op: TimeDependentOperator, t: float) -> np.ndarray:
    """``A(t)``; at a breakpoint the right limit is used."""
    if t < 0:
        raise ProblemError("t must be non-negative")
    return op(float(t))


# ------------------------------------------------------------------ norm integral

def _piece_norm_integral(op, k, a, b):
    if b <= a:
        return 0.0
    if op.pieces[k].constant:
        return spectral_norm(op.evaluate_piece(k, a)) * (b - a)
    f = lambda s: spectral_norm(op.evaluate_piece(k, s))
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=1e-10, epsrel=1e-12, limit=400)
        except integrate.IntegrationWarning:
            val, err = integrate.quad(f, a, b, epsabs=1e-10, epsrel=1e-12, limit=400,
                                      full_output=1)[:2]
            if err > 1e-8:
                raise QuadratureError(
                    f"norm integral did not converge on [{a}, {b}] (error {err:.2e})")
    return val


def norm_integral_between(op: TimeDependentOperator, t0: float, t1: float) -> float:
    """``int_{t0}^{t1} ||A(s)||_2 ds``, split at piece boundaries."""
    if t0 < 0 or t1 < t0:
        raise ProblemError("need 0 <= t0 <= t1")
    total = 0.0
    for k, p in enumerate(op.pieces):
        a, b = max(p.t_start, t0), min(p.t_end, t1)
        if b > a:
            total += _piece_norm_integral(op, k, a, b)
    return total


def norm_integral(op: TimeDependentOperator, t: float) -> float:
    """``int_0^t ||A(s)||_2 ds`` by adaptive Gauss-Kronrod on each piece."""
    if t < 0:
        raise ProblemError("t must be non-negative")
    return norm_integral_between(op, 0.0, t)


def trace_integral(op: TimeDependentOperator, t: float) -> complex:
    """``int_0^t tr A(s) ds`` (the exponent in Liouville's formula for ``det Y``)."""
    total = 0j
    for k, p in enumerate(op.pieces):
        a, b = p.t_start, min(p.t_end, t)
        if b <= a:
            break
        if p.constant:
            total += np.trace(op.evaluate_piece(k, a)) * (b - a)
            continue
        tr = lambda s, k=k: np.trace(op.evaluate_piece(k, s))
        re = integrate.quad(lambda s: tr(s).real, a, b, epsabs=1e-12, epsrel=1e-12, limit=400)[0]
        im = integrate.quad(lambda s: tr(s).imag, a, b, epsabs=1e-12, epsrel=1e-12, limit=400)[0]
        total += complex(re, im)
    return total


# ------------------------------------------------------------------ catalog

X1 = np.array([[1, 0], [0, -1]], dtype=complex)
X2 = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = X1


def _phi(x):
    """``(e^x - 1 - x) / x`` without cancellation near zero."""
    x = complex(x)
    if abs(x) < 0.1:
        term, total = x / 2, 0j
        k = 2
        while abs(term) > 1e-18 * max(abs(total), 1e-300) or k < 4:
            total += term
            k += 1
            term = term * x / k
        return total
    return (np.expm1(x) - x) / x


def _exact_example1(t, eps, params):
    eps = complex(eps)
    y11 = np.exp(2 * eps * t)
    y22 = np.exp(-eps * t)
    # 1/(9 eps) e^{2 eps t} - (1/(9 eps) + t/3) e^{-eps t} = (t/3) e^{-eps t} phi(3 eps t)
    y12 = (t / 3) * y22 * _phi(3 * eps * t) if t > 0 else 0j
    return np.array([[y11, y12], [0, y22]], dtype=complex)


def _exact_example2(t, eps, params):
    eps = complex(eps)
    a, b = params["alpha"], params["beta"]
    if t <= 1:
        return np.eye(2, dtype=complex) + eps * b * t * X2
    w = a * (t - 1)
    return np.array([[np.exp(eps * w), eps * b * np.exp(eps * w)], [0, np.exp(-eps * w)]])


def _sinc_half(w, t):
    """``sin(w t / 2) / w`` with the ``w -> 0`` limit ``t / 2``."""
    x = w * t / 2
    if abs(x) < 1e-4:
        return (t / 2) * (1 - x * x / 6 + x ** 4 / 120)
    return np.sin(x) / w


def _exact_example3(t, eps, params):
    eps = complex(eps)
    hbar, w0, w, beta = params["hbar"], params["omega0"], params["omega"], params["beta"]
    delta = eps * w0 - w
    wt = np.sqrt(delta ** 2 + 4 * beta ** 2 * eps ** 2 / hbar ** 2)
    c = np.cos(wt * t / 2)  # even in wt: branch of the root is immaterial
    s = _sinc_half(wt, t)  # sin(wt t/2)/wt, also even
    em, ep = np.exp(-0.5j * t * w), np.exp(0.5j * t * w)
    off = -1j * 2 * eps * beta / hbar * s
    return np.array([
        [em * (c - 1j * delta * s), em * off],
        [ep * off, ep * (c + 1j * delta * s)],
    ], dtype=complex)


def _exact_diagonal(t, eps, params):
    eps = complex(eps)
    i1 = params["c1"] * t + params["d1"] * np.sin(t)
    i2 = params["c2"] * t + params["d2"] * np.sin(t)
    return np.diag([np.exp(eps * i1), np.exp(eps * i2)]).astype(complex)


def _radius_example1(t, params):
    return 2 * np.pi / (3 * t) if t > 0 else math.inf


def _radius_example2(t, params):
    return np.pi / (abs(params["alpha"]) * (t - 1)) if t > 1 else math.inf


def _radius_example3(t, params):
    return 2 * np.pi / (abs(params["omega0"]) * t) if t > 0 else math.inf


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    description: str
    defaults: Dict[str, complex]
    schema: Callable[[], dict]
    exact: Callable
    radius: Optional[Callable] = None  # closed-form F(t) where known
    t_domain: Optional[Callable] = None  # closed-form solution of F(t) = 1
    notes: str = field(default="")


CATALOG: Dict[str, CatalogEntry] = {
    "example1": CatalogEntry(
        "example1",
        "A(t) = [[2, t], [0, -1]]",
        {},
        lambda: {"n": 2, "pieces": [
            {"t_start": 0, "t_end": "inf", "entries": [["2", "t"], ["0", "-1"]]}]},
        _exact_example1,
        _radius_example1,
        lambda params: 2 * np.pi / 3,
    ),
    "example2": CatalogEntry(
        "example2",
        "A(t) = beta*X2 on [0, 1), alpha*X1 for t >= 1",
        {"alpha": 2.0, "beta": 1.0},
        lambda: {"n": 2, "pieces": [
            {"t_start": 0, "t_end": 1, "entries": [["0", "beta"], ["0", "0"]]},
            {"t_start": 1, "t_end": "inf", "entries": [["alpha", "0"], ["0", "-alpha"]]}]},
        _exact_example2,
        _radius_example2,
        lambda params: 1 + np.pi / abs(params["alpha"]),
        "radius formula valid for t > 1; on [0, 1] the series terminates",
    ),
    "example3": CatalogEntry(
        "example3",
        "two-level system in a rotating field, A(t) = -(i/hbar) H(t)",
        {"hbar": 1.0, "omega0": 1.0, "omega": 0.5, "beta": 1e-3},
        lambda: {"n": 2, "pieces": [
            {"t_start": 0, "t_end": "inf", "entries": [
                ["-i*omega0/2", "-i*(beta/hbar)*exp(-i*omega*t)"],
                ["-i*(beta/hbar)*exp(i*omega*t)", "i*omega0/2"]]}]},
        _exact_example3,
        _radius_example3,
        lambda params: 2 * np.pi / abs(params["omega0"]),
        "radius and t-domain formulas are the weak-coupling approximation",
    ),
    "diagonal": CatalogEntry(
        "diagonal",
        "A(t) = diag(c1 + d1 cos t, c2 + d2 cos t)",
        {"c1": 1.0, "d1": 0.5, "c2": 1.0, "d2": 0.5},
        lambda: {"n": 2, "pieces": [
            {"t_start": 0, "t_end": "inf", "entries": [
                ["c1 + d1*cos(t)", "0"], ["0", "c2 + d2*cos(t)"]]}]},
        _exact_diagonal,
        lambda t, params: math.inf,
        lambda params: math.inf,
        "log Y is entire in eps; default parameters make both entries equal",
    ),
}


def exact_solution(entry, t: float, eps: complex = 1.0, params: Mapping[str, complex] = None):
    """Closed-form ``Y(t; eps)`` for a catalog entry (name, entry or built-in operator)."""
    if isinstance(entry, TimeDependentOperator):
        if entry.exact is None:
            raise ProblemError("operator has no closed-form solution")
        params = {**entry.params, **(params or {})}
        entry = entry.exact
    if isinstance(entry, str):
        try:
            entry = CATALOG[entry]
        except KeyError:
            raise ProblemError(f"unknown builtin {entry!r}") from None
    if t < 0:
        raise ProblemError("t must be non-negative")
    merged = {**entry.defaults, **{k: complex(v) for k, v in (params or {}).items()}}
    return entry.exact(float(t), eps, merged)


# ------------------------------------------------------------------ loading

def _parse_param(name, value):
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, str):
        return expr.parse_complex(value)
    raise ProblemError(f"parameter {name!r}: expected [re, im], a number or a string")


def _parse_t_end(value):
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        raise ProblemError(f"bad t_end {value!r}")
    return float(value)


def _parse_entry(src, k, i, j):
    try:
        return expr.parse(str(src))
    except ExprSyntaxError as exc:
        raise ExprSyntaxError(f"piece {k}, entry ({i}, {j}): {exc.message}", exc.offset, exc.source) from None


def from_schema(schema: Mapping) -> TimeDependentOperator:
    """Build an operator from a parsed problem-file dictionary."""
    if not isinstance(schema, Mapping):
        raise ProblemError("problem must be a JSON object")
    params = {k: _parse_param(k, v) for k, v in (schema.get("params") or {}).items()}
    if "builtin" in schema:
        return builtin(schema["builtin"], params)
    try:
        n = int(schema["n"])
        raw_pieces = schema["pieces"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemError(f"problem schema needs 'n' and 'pieces' ({exc})") from None
    pieces = []
    for k, rp in enumerate(raw_pieces):
        try:
            entries = tuple(tuple(_parse_entry(s, k, i, j) for j, s in enumerate(row))
                            for i, row in enumerate(rp["entries"]))
            pieces.append(Piece(float(rp["t_start"]), _parse_t_end(rp["t_end"]), entries))
        except (KeyError, TypeError) as exc:
            raise ProblemError(f"piece {k}: malformed ({exc})") from None
    op = TimeDependentOperator(n, pieces, params)
    _check_finite(op)
    return op


def _check_finite(op):
    for k, p in enumerate(op.pieces):
        end = p.t_end if math.isfinite(p.t_end) else p.t_start + 1.0
        ts = np.linspace(p.t_start, end, 5)
        op.evaluate_piece(k, ts)  # raises ExprEvalError on a non-finite entry


def builtin(name: str, params: Mapping[str, complex] = None) -> TimeDependentOperator:
    """Catalog problem ``name`` with ``params`` overriding the defaults."""
    try:
        entry = CATALOG[name]
    except KeyError:
        raise ProblemError(f"unknown builtin {name!r}; choose from {sorted(CATALOG)}") from None
    unknown = set(params or {}) - set(entry.defaults)
    if unknown:
        raise ProblemError(f"{name}: unknown parameter(s) {sorted(unknown)}")
    merged = {**entry.defaults, **{k: complex(v) for k, v in (params or {}).items()}}
    schema = entry.schema()
    pieces = [
        Piece(float(p["t_start"]), _parse_t_end(p["t_end"]),
              tuple(tuple(expr.parse(s) for s in row) for row in p["entries"]))
        for p in schema["pieces"]
    ]
    return TimeDependentOperator(schema["n"], pieces, merged, exact=name, name=name)


def load_problem(path) -> TimeDependentOperator:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read problem file: {exc}") from None
    try:
        schema = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return from_schema(schema)


def zero_operator(n: int = 2) -> TimeDependentOperator:
    zero = expr.parse("0")
    entries = tuple(tuple(zero for _ in range(n)) for _ in range(n))
    return TimeDependentOperator(n, [Piece(0.0, math.inf, entries)], name="zero")
