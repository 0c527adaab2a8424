"""Magnus terms ``Omega_1 ... Omega_K`` from the Bernoulli recursion.

With ``S_m^(j) = sum over compositions k_1+...+k_j = m-1 of
ad_{Omega_k1} ... ad_{Omega_kj} A`` the terms satisfy

    Omega_1' = A,    Omega_m' = sum_{j=1}^{m-1} (B_j / j!) S_m^(j)

and the inner sums obey ``S_m^(j) = sum_{k=1}^{m-j} [Omega_k, S_{m-k}^(j-1)]``,
``S_1^(0) = A``. This avoids enumerating compositions (their number grows like
``2^m``); :func:`compositions` is kept as an independent check.

Terms are carried on a grid of subintervals, four Gauss-Legendre nodes each.
Values of ``Omega_k`` at interior nodes come from integrating the cubic
interpolant of the integrand, which is exact for cubics. The bracket is
``ad_X Y = XY - YX`` and ``B_1 = -1/2``; the opposite sign convention
flips the sign of ``Omega_2``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np

from . import linalg
from .errors import ConfigError, InsufficientTermsError, NumericalError, RefinementError
from .problem import TimeDependentOperator, norm_integral

K_MAX = 30
MAX_NODES = 2 ** 14
DEFAULT_RTOL = 1e-8

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def _cumulative_matrix():
    p = np.arange(4)
    V = _GL_X[:, None] ** p
    Q = (_GL_X[:, None] ** (p + 1) - (-1.0) ** (p + 1)) / (p + 1)
    return Q @ np.linalg.inv(V)


_GL_CUM = _cumulative_matrix()  # on [-1, 1]; rows: nodes, cols: samples


@lru_cache(maxsize=None)
def _bernoulli(k: int) -> Fraction:
    if k == 0:
        return Fraction(1)
    return -sum(math.comb(k + 1, j) * _bernoulli(j) for j in range(k)) / (k + 1)


def bernoulli(k: int) -> Fraction:
    """Exact ``B_k`` with ``B_1 = -1/2``."""
    if k < 0 or k > 64:
        raise ConfigError("bernoulli: need 0 <= k <= 64")
    for j in range(k):  # fill the cache bottom-up, keeping recursion shallow
        _bernoulli(j)
    return _bernoulli(k)


def compositions(m_minus_1: int, j: int) -> list:
    """Ordered compositions of ``m_minus_1`` into ``j`` positive parts, lexicographic."""
    total = int(m_minus_1)
    if j < 1 or j > total:
        return []
    out = []
    for cuts in itertools.combinations(range(1, total), j - 1):
        edges = (0,) + cuts + (total,)
        out.append(tuple(b - a for a, b in zip(edges, edges[1:])))
    return out


def dexpinv_apply(Omega, A, order: int) -> np.ndarray:
    """``sum_{k=0}^{order} (B_k / k!) ad_Omega^k A``."""
    if order < 0 or order > 64:
        raise ConfigError("dexpinv order must be in [0, 64]")
    Omega = np.asarray(Omega, dtype=complex)
    term = np.asarray(A, dtype=complex)
    out = term.copy()
    for k in range(1, order + 1):
        term = linalg.commutator(Omega, term)
        b = bernoulli(k)
        if b:
            out = out + float(b / math.factorial(k)) * term
    return out


@dataclass(frozen=True)
class SeriesGrid:
    t_final: float
    nodes: np.ndarray  # subinterval endpoints, breakpoint aligned
    stored_terms: np.ndarray  # (K, len(nodes), n, n)


@dataclass(frozen=True)
class MagnusSeriesResult:
    terms: np.ndarray  # (K, n, n): Omega_1(t) ... Omega_K(t)
    term_norms: np.ndarray
    partial_sums: np.ndarray
    empirical_radius: float
    diagnostics: dict = field(default_factory=dict)
    grid: Optional[SeriesGrid] = None

    @property
    def K(self) -> int:
        return len(self.terms)


def _build_nodes(op: TimeDependentOperator, t: float, per_piece: int):
    """Subinterval edges, widths, piece index per subinterval."""
    edges, owner = [], []
    for k, p in enumerate(op.pieces):
        a, b = p.t_start, min(p.t_end, t)
        if b <= a:
            break
        e = np.linspace(a, b, per_piece + 1)
        edges.append(e[:-1])
        owner.extend([k] * per_piece)
    edges = np.concatenate(edges + [np.array([t])])
    return edges, np.array(owner)


def _terms_on_grid(op, t, K, per_piece):
    edges, owner = _build_nodes(op, t, per_piece)
    h = np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    xs = mid[:, None] + 0.5 * h[:, None] * _GL_X[None, :]  # (N, 4)
    n = op.n
    A = np.empty(xs.shape + (n, n), dtype=complex)
    for k in np.unique(owner):
        sel = owner == k
        A[sel] = op.evaluate_piece(int(k), xs[sel])

    half = 0.5 * h[:, None, None, None]

    def integrate(f):
        # f: (N, 4, n, n) integrand at the nodes -> values at nodes and at edges
        inner = half * np.einsum("lj,ijab->ilab", _GL_CUM, f)
        total = half[:, 0] * np.einsum("j,ijab->iab", _GL_W, f)
        prefix = np.concatenate([np.zeros((1, n, n), complex), np.cumsum(total, axis=0)])
        return prefix[:-1, None] + inner, prefix

    omega_nodes = []  # Omega_k at quadrature nodes
    omega_edges = []
    S = {(1, 0): A}
    coef = [float(bernoulli(j) / math.factorial(j)) for j in range(K)]
    for m in range(1, K + 1):
        if m == 1:
            deriv = A
        else:
            deriv = np.zeros_like(A)
            for j in range(1, m):
                acc = None
                for k in range(1, m - j + 1):
                    prev = S.get((m - k, j - 1))
                    if prev is None:
                        continue
                    c = linalg.commutator(omega_nodes[k - 1], prev)
                    acc = c if acc is None else acc + c
                if acc is None:
                    acc = np.zeros_like(A)
                S[(m, j)] = acc
                if coef[j] != 0.0:
                    deriv = deriv + coef[j] * acc
        on, oe = integrate(deriv)
        omega_nodes.append(on)
        omega_edges.append(oe)
    return edges, np.array(omega_edges)


def _zero_floor(norms):
    """Per-term scale used to decide whether a computed norm is really zero."""
    floor = np.zeros_like(norms)
    for k in range(len(norms)):
        nb = [norms[i] for i in (k - 1, k + 1) if 0 <= i < len(norms)]
        floor[k] = max(nb) if nb else norms[k]
    return floor


def nonzero_mask(norms, rel: float = 1e-10) -> np.ndarray:
    """True where ``norms[k]`` is not a cancellation-level zero relative to its neighbours."""
    norms = np.asarray(norms, dtype=float)
    return (norms > rel * _zero_floor(norms)) & (norms > 1e-300)


def magnus_terms(op: TimeDependentOperator, t: float, K: int = 20, N_nodes: int = 8,
                 rtol: float = DEFAULT_RTOL, max_nodes: int = MAX_NODES,
                 refine: bool = True) -> MagnusSeriesResult:
    """``Omega_1(t) ... Omega_K(t)`` with grid doubling until term norms settle.

    ``N_nodes`` is the initial number of subintervals per piece. The grid is
    doubled until every ``||Omega_m(t)||`` changes by less than ``rtol``
    (relative, with a floor for terms that cancel to zero).
    """
    if not 1 <= K <= K_MAX:
        raise ConfigError(f"K must be in [1, {K_MAX}]")
    if N_nodes < 8:
        raise ConfigError("N_nodes must be >= 8 per piece")
    if t < 0:
        raise ConfigError("t must be non-negative")
    n_pieces = len(op.breakpoints(t)) - 1 if t > 0 else 0
    if t == 0 or n_pieces == 0:
        z = np.zeros((K, op.n, op.n), complex)
        return MagnusSeriesResult(z, np.zeros(K), z.copy(), math.inf, {"note": "t = 0"})

    per = N_nodes
    edges, vals = _terms_on_grid(op, t, K, per)
    norms = linalg.spectral_norm(vals[:, -1])
    delta = math.inf
    levels = 1
    while refine:
        if 4 * 2 * per * n_pieces > max_nodes:
            raise RefinementError(
                f"grid refinement cap ({max_nodes} nodes) reached; last relative change {delta:.3e}",
                last_delta=delta)
        per *= 2
        edges, vals2 = _terms_on_grid(op, t, K, per)
        norms2 = linalg.spectral_norm(vals2[:, -1])
        scale = np.maximum(norms2, 1e-4 * _zero_floor(norms2))
        scale = np.where(scale > 0, scale, 1.0)
        # roundoff in terms that vanish exactly is not a refinement signal
        atol = 1e-14 * norms2[0]
        delta = float(np.max(np.maximum(np.abs(norms2 - norms) - atol, 0.0) / scale))
        vals, norms = vals2, norms2
        levels += 1
        if delta < rtol:
            break

    terms = vals[:, -1]
    diag = {"subintervals_per_piece": per, "quadrature_nodes": 4 * per * n_pieces,
            "refinement_levels": levels, "last_relative_change": delta,
            "norm_integral": norm_integral(op, t)}
    radius, fit = _radius_or_flag(norms)
    diag.update(fit)
    grid = SeriesGrid(float(t), edges, vals)
    return MagnusSeriesResult(terms, norms, np.cumsum(terms, axis=0), radius, diag, grid)


def _radius_or_flag(norms):
    if len(norms) > 1 and np.all(norms[1:] <= 1e-10 * max(norms[0], 1e-300)):
        return math.inf, {"fit": "series terminates after the first term"}
    try:
        r, info = empirical_radius(norms, return_fit=True)
        return r, info
    except InsufficientTermsError as exc:
        return math.nan, {"fit": str(exc)}


def empirical_radius(term_norms, return_fit: bool = False):
    """Root-test radius ``1 / exp(slope)`` of ``log ||Omega_k||`` against ``k``.

    The least-squares fit uses the upper half of the nonzero terms
    (``term_norms[k-1] = ||Omega_k||``). Returns ``inf`` when the slope is
    below ``-ln(1e6)`` per term.
    """
    norms = np.asarray(term_norms, dtype=float)
    ks = np.arange(1, len(norms) + 1)
    mask = nonzero_mask(norms)
    if mask.sum() < 8:
        raise InsufficientTermsError(
            f"need at least 8 nonzero terms for a radius fit, have {int(mask.sum())}")
    kk, nn = ks[mask], norms[mask]
    half = len(kk) // 2
    kk, ll = kk[half:], np.log(nn[half:])
    slope, icpt = np.polyfit(kk, ll, 1)
    resid = ll - (slope * kk + icpt)
    info = {"fit_slope": float(slope), "fit_terms": [int(k) for k in kk],
            "fit_rms_residual": float(np.sqrt(np.mean(resid ** 2)))}
    r = math.inf if slope < -math.log(1e6) else float(np.exp(-slope))
    return (r, info) if return_fit else r


@dataclass(frozen=True)
class Reconstruction:
    Y_magnus: np.ndarray  # exp of the full partial sum (M = K)
    errors_by_K: np.ndarray  # errors_by_K[M-1] = ||exp(sum_{k<=M} eps^k Omega_k) - Y||_2
    Y_reference: np.ndarray


def reconstruct(op: TimeDependentOperator, t: float, K: int, eps: complex = 1.0,
                series: MagnusSeriesResult = None, tol: float = 1e-11) -> Reconstruction:
    """Compare ``exp`` of each partial sum with the propagated ``Y(t; eps)``."""
    from .propagator import propagate

    if series is None:
        series = magnus_terms(op, t, K)
    if series.K < K:
        raise ConfigError("series has fewer than K terms")
    Y = propagate(op, t, eps, tol).Y
    powers = complex(eps) ** np.arange(1, K + 1)
    partial = np.cumsum(powers[:, None, None] * series.terms[:K], axis=0)
    errs = np.empty(K)
    Ym = None
    for M in range(K):
        try:
            Ym = linalg.expm(partial[M])
            errs[M] = linalg.spectral_norm(Ym - Y)
        except NumericalError:  # overflow of a divergent partial sum
            errs[M] = math.inf
    return Reconstruction(Ym, errs, Y)
