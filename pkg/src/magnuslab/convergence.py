"""Convergence analysis of the Magnus series.

Two kinds of answer are produced here.

* Norm certificates: the series converges while ``int_0^t ||A|| < r_c``.
  :func:`norm_bound_time` finds the time at which the integral reaches a
  given ``r_c`` (``NORM_CONSTANTS``; ``xi`` comes from :func:`compute_xi`).
* The exact radius of ``Omega_t(eps) = sum eps^k Omega_k(t)`` as a power
  series in ``eps``. It is governed by the roots of the discriminant
  ``Delta(eps)`` of the characteristic polynomial of ``Y_t(eps)``: at a root
  some eigenvalues coincide, and the root limits the radius unless the
  logarithms of the coalescing eigenvalues, continued from ``log rho(0) = 0``,
  end on the same branch ("extraneous"). A root where ``p`` (largest number
  of equal continued logs in a cluster) is smaller than ``q`` (largest Jordan
  block) fixes the radius at ``|eps0|``.

Roots are located with the argument principle on rectangles and polished by
Newton's method with ``dDelta/deps`` from the variational equation. For the
residual test ``Delta`` is divided by ``||Y||^(n(n-1))``, which makes
``root_tol`` independent of the size of ``Y``.
"""
from __future__ import annotations

import cmath
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from . import linalg
from .errors import (ClusteringError, ConfigError, NumericalError, PairingError,
                     RootFindingError)
from .problem import TimeDependentOperator, norm_integral, norm_integral_between
from .propagator import DEFAULT_TOL, propagate, propagate_batch

ROOT_TOL = 1e-9
CLUSTER_TOL = 1e-6
SAMPLE_TOL = 1e-10  # propagation tolerance for boundary and path sampling
CHACON_FOMENKO = 0.57745  # published value, no closed form available
XI_REFERENCE = 1.08686869

_SPLIT_FRACTIONS = (0.5371, 0.4629, 0.5853, 0.4147, 0.5137, 0.4771)


# ------------------------------------------------------------------ certificates

def xi_integrand(x):
    """``1 / (2 (2 + (x/2)(1 - cot(x/2))))``; tends to 1/2 at 0 and to 0 at 2 pi."""
    x = np.asarray(x, dtype=float)
    h = 0.5 * x
    with np.errstate(divide="ignore", invalid="ignore"):
        hcot = np.where(np.abs(h) < 1e-3, 1 - h * h / 3 - h ** 4 / 45, h / np.tan(h))
    out = 0.5 / (2 + h - hcot)
    out = np.where(np.isfinite(out), out, 0.0)
    return float(out) if out.ndim == 0 else out


def compute_xi(epsabs: float = 1e-13) -> float:
    """The constant ``xi = 1/2 int_0^{2 pi} dx / (2 + (x/2)(1 - cot(x/2)))``."""
    val, _ = integrate.quad(xi_integrand, 0.0, 2 * math.pi, epsabs=epsabs, epsrel=epsabs,
                            limit=200)
    return val


XI = compute_xi()

NORM_CONSTANTS = {
    "0.57745": CHACON_FOMENKO,
    "log2": math.log(2.0),
    "xi": XI,
    "pi": math.pi,
}


def _solve_in(op, lo, hi, target, tol):
    """Smallest ``tau`` in ``[lo, hi]`` with ``int_lo^tau ||A|| = target``."""
    a, fa = lo, -target
    b = hi
    x, fx = a, fa
    for _ in range(200):
        if b - a <= tol:
            break
        d = linalg.spectral_norm(op(x)) if x < op.t_max else 0.0
        cand = x - fx / d if d > 0 else None
        if cand is None or not (a < cand < b):
            cand = 0.5 * (a + b)
        fc = fx + norm_integral_between(op, x, cand) if cand >= x else \
            fx - norm_integral_between(op, cand, x)
        if fc < 0:
            a, fa = cand, fc
        else:
            b = cand
        if abs(cand - x) < 0.1 * tol:
            x, fx = cand, fc
            break
        x, fx = cand, fc
    # the crossing lies in [a, b]; report the point carrying the smaller residual
    return x if abs(fx) < 1e-9 or b - a > tol else 0.5 * (a + b)


def norm_bound_time(op: TimeDependentOperator, r_c: float, tol: float = 1e-8,
                    t_cap: float = 1e4) -> float:
    """``T = max{t : int_0^t ||A(s)||_2 ds < r_c}``; ``inf`` if never reached before ``t_cap``."""
    if not r_c > 0:
        raise ConfigError("r_c must be positive")
    acc = 0.0
    for p in op.pieces:
        lo = p.t_start
        if lo >= t_cap:
            break
        if math.isfinite(p.t_end):
            hi = min(p.t_end, t_cap)
            seg = norm_integral_between(op, lo, hi)
            if acc + seg >= r_c:
                return _solve_in(op, lo, hi, r_c - acc, tol)
            acc += seg
            continue
        step = 1.0
        while lo < t_cap:
            hi = min(lo + step, t_cap)
            seg = norm_integral_between(op, lo, hi)
            if acc + seg >= r_c:
                return _solve_in(op, lo, hi, r_c - acc, tol)
            acc += seg
            lo = hi
            step *= 2
    return math.inf


def norm_times(op: TimeDependentOperator) -> dict:
    """``norm_bound_time`` for each certificate constant, ascending in the constant."""
    return {name: norm_bound_time(op, r) for name, r in
            sorted(NORM_CONSTANTS.items(), key=lambda kv: kv[1])}


@dataclass(frozen=True)
class GapCheck:
    passed: bool
    pairs: tuple = ()  # (j, k, m) with lambda_j - lambda_k ~ 2 pi i m

    def __bool__(self):
        return self.passed


def eigenvalue_gap_check(Omega, gap_tol: float = 1e-8) -> GapCheck:
    """Fail iff two eigenvalues of ``Omega`` differ by ``2 pi i m`` with ``m != 0``."""
    lam = linalg.eigenvalues(Omega, check=False)
    bad = []
    for j, k in itertools.combinations(range(len(lam)), 2):
        d = lam[j] - lam[k]
        m = round(d.imag / (2 * math.pi))
        if m != 0 and abs(d - 2j * math.pi * m) <= gap_tol * max(1.0, abs(d)):
            bad.append((j, k, m))
    return GapCheck(not bad, tuple(bad))


# ------------------------------------------------------------------ discriminant

def _propagate_many(op, t, eps, tol, variational=False, jobs=1):
    eps = np.asarray(eps, dtype=complex)
    if jobs <= 1 or eps.size < 16 * jobs:
        r = propagate_batch(op, t, eps, tol, variational)
        return r.Y, r.Z
    chunks = np.array_split(eps, jobs)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(lambda c: propagate_batch(op, t, c, tol, variational), chunks))
    Y = np.concatenate([p.Y for p in parts])
    Z = np.concatenate([p.Z for p in parts]) if variational else None
    return Y, Z


def _normaliser(Y):
    n = Y.shape[-1]
    return linalg.spectral_norm(Y) ** (n * (n - 1))


def discriminant_of_eps(op: TimeDependentOperator, t: float, eps: complex,
                        derivative: bool = False, tol: float = DEFAULT_TOL):
    """``Delta(eps)`` of ``Y_t(eps)``; with ``derivative`` also ``dDelta/deps``."""
    if not derivative:
        return linalg.discriminant(propagate(op, t, eps, tol).Y)
    r = propagate_batch(op, t, [eps], tol, variational=True)
    Y, Z = r.Y[0], r.Z[0]
    return linalg.discriminant(Y), linalg.discriminant_derivative(Y, Z)


class _NearRoot(Exception):
    def __init__(self, where):
        self.where = where


@dataclass
class RootSearch:
    """Roots of ``Delta`` in ``|eps| <= search_radius``, ordered by modulus."""

    roots: List[complex]
    orders: List[int]  # order of the zero of Delta (winding number)
    residuals: List[float]  # normalised |Delta|
    search_radius: float
    identically_zero: bool = False
    samples: int = 0

    def __iter__(self):
        return iter(self.roots)

    def __len__(self):
        return len(self.roots)

    def __getitem__(self, i):
        return self.roots[i]


def order_roots(items, key=lambda e: e):
    """Sort by modulus; moduli equal to 1e-6 are ordered by decreasing Im, then Re."""
    items = sorted(items, key=lambda e: abs(key(e)))
    out, group = [], []
    for e in items:
        if group and abs(key(e)) - abs(key(group[0])) > 1e-6 * max(1.0, abs(key(e))):
            out.extend(sorted(group, key=lambda g: (-key(g).imag, key(g).real)))
            group = []
        group.append(e)
    out.extend(sorted(group, key=lambda g: (-key(g).imag, key(g).real)))
    return out


class _DiscSampler:
    """Cached ``Delta``, normalised ``|Delta|`` and ``|Delta'/Delta|`` at sample points."""

    def __init__(self, op, t, tol=SAMPLE_TOL, jobs=1):
        self.op, self.t, self.tol, self.jobs = op, t, tol, jobs
        self.cache = {}

    def values(self, pts):
        missing = list(dict.fromkeys(p for p in pts if p not in self.cache))
        if missing:
            Y, Z = _propagate_many(self.op, self.t, missing, self.tol, True, self.jobs)
            d = np.atleast_1d(linalg.discriminant(Y))
            dd = np.atleast_1d(linalg.discriminant_derivative(Y, Z))
            dn = d / _normaliser(Y)
            with np.errstate(divide="ignore", invalid="ignore"):
                ld = np.abs(dd / d)
            for p, a, b, c in zip(missing, d, dn, ld):
                self.cache[p] = (complex(a), abs(b), float(c))
        raw = np.array([self.cache[p][0] for p in pts])
        nrm = np.array([self.cache[p][1] for p in pts])
        ld = np.array([self.cache[p][2] for p in pts])
        return raw, nrm, ld


class _RootFinder:
    def __init__(self, op, t, root_tol, jobs, near_tol=1e-9, init_samples=12):
        self.op, self.t, self.root_tol, self.jobs = op, t, root_tol, jobs
        self.sampler = _DiscSampler(op, t, SAMPLE_TOL, jobs)
        self.near_tol = near_tol
        self.init_samples = init_samples

    # -- argument principle ----------------------------------------------------
    def edge_phases(self, edges, n0):
        """Total change of ``arg Delta`` along each straight edge ``(p, q)``."""
        fracs = [list(np.linspace(0.0, 1.0, n0 + 1)) for _ in edges]
        for _ in range(80):
            pts = [p + (q - p) * f for (p, q), fr in zip(edges, fracs) for f in fr]
            raw, nrm, ld = self.sampler.values(pts)
            pos = 0
            refined = False
            totals = []
            for (p, q), fr in zip(edges, fracs):
                k = len(fr)
                r, a, g = raw[pos:pos + k], nrm[pos:pos + k], ld[pos:pos + k]
                pos += k
                if np.any(a < self.near_tol):
                    j = int(np.argmin(a))
                    raise _NearRoot(p + (q - p) * fr[j])
                d = np.angle(r[1:] / r[:-1])
                # the log-derivative bound catches a root passing between two samples
                span = np.abs(q - p) * np.diff(fr)
                bad = np.nonzero((np.abs(d) > math.pi / 3)
                                 | (np.maximum(g[1:], g[:-1]) * span > math.pi / 2))[0]
                if bad.size:
                    refined = True
                    need = np.maximum(np.abs(d) / (math.pi / 3),
                                      np.maximum(g[1:], g[:-1]) * span / (math.pi / 2))
                    for j in bad[::-1]:
                        if fr[j + 1] - fr[j] < 1e-12:
                            raise _NearRoot(p + (q - p) * fr[j])
                        m = int(min(max(math.ceil(need[j]), 2), 16))
                        fr[j + 1:j + 1] = list(np.linspace(fr[j], fr[j + 1], m + 1)[1:-1])
                totals.append(float(np.sum(d)))
            if not refined:
                return totals
        raise RootFindingError("boundary sampling did not resolve the phase of the discriminant")

    @staticmethod
    def rect_edges(rect):
        x0, x1, y0, y1 = rect
        c = [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)]
        return [(c[i], c[(i + 1) % 4]) for i in range(4)]

    def windings(self, rects, n0):
        edges = [e for r in rects for e in self.rect_edges(r)]
        # share edges traversed in both directions
        canon, sign = [], []
        index = {}
        for p, q in edges:
            key, s = ((p, q), 1.0) if (p.real, p.imag) <= (q.real, q.imag) else ((q, p), -1.0)
            if key not in index:
                index[key] = len(canon)
                canon.append(key)
            sign.append((index[key], s))
        ph = self.edge_phases(canon, n0)
        out = []
        for i in range(len(rects)):
            tot = sum(s * ph[j] for j, s in sign[4 * i:4 * i + 4])
            out.append(int(round(tot / (2 * math.pi))))
        return out

    @staticmethod
    def split(rect, f):
        x0, x1, y0, y1 = rect
        xm, ym = x0 + f * (x1 - x0), y0 + f * (y1 - y0)
        return [(x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1)]

    # -- Newton ----------------------------------------------------------------
    def newton(self, starts, mults, max_iter=40):
        z = np.array(starts, dtype=complex)
        m = np.array(mults, dtype=float)
        best_z = z.copy()
        best_r = np.full(z.size, np.inf)
        stall = np.zeros(z.size, dtype=int)
        active = np.ones(z.size, dtype=bool)
        caps = np.maximum(0.25 * np.abs(z), 1e-3)
        for _ in range(max_iter):
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                break
            Y, Z = _propagate_many(self.op, self.t, z[idx], DEFAULT_TOL, True, self.jobs)
            for jj, i in enumerate(idx):
                D = linalg.discriminant(Y[jj])
                rn = abs(D) / _normaliser(Y[jj])
                if rn < best_r[i] * 0.5:
                    stall[i] = 0
                else:
                    stall[i] += 1
                if rn < best_r[i]:
                    best_r[i], best_z[i] = rn, z[i]
                if rn == 0 or stall[i] >= 3:
                    active[i] = False
                    continue
                dD = linalg.discriminant_derivative(Y[jj], Z[jj])
                if dD == 0 or not np.isfinite(dD):
                    active[i] = False
                    continue
                step = m[i] * D / dD
                if abs(step) > caps[i]:
                    step *= caps[i] / abs(step)
                if abs(step) < 1e-15 * max(1.0, abs(z[i])):
                    active[i] = False
                z[i] = z[i] - step
        return best_z, best_r

    # -- driver ----------------------------------------------------------------
    def run(self, R):
        # probe for an identically vanishing discriminant
        probe = [R * 0.5 * cmath.exp(2j * math.pi * (k + 0.37) / 7) for k in range(7)]
        _, nrm, _ = self.sampler.values(probe)
        if np.all(nrm < 1e-13):
            return RootSearch([0j], [0], [0.0], R, identically_zero=True,
                              samples=len(self.sampler.cache))
        m0 = self.zero_order(R)
        half = R
        for attempt in range(5):
            try:
                top = (-half, half, -half, half)
                w = self.windings([top], 4 * self.init_samples)[0]
                break
            except _NearRoot:
                half *= 1.0173
        else:
            raise RootFindingError("winding number inconsistent on the search square after 5 retries")
        found = [(0j, m0, 0.0)]
        queue = [(top, w)]
        tiny = 1e-10 * R
        while queue:
            newton_rects, split_rects = [], []
            for rect, w in queue:
                if w <= 0:
                    continue
                x0, x1, y0, y1 = rect
                size = max(x1 - x0, y1 - y0)
                if x0 < 0 < x1 and y0 < 0 < y1:
                    if w == m0:
                        continue
                    if w < m0:
                        raise RootFindingError("winding number below the order of the zero at eps = 0")
                    split_rects.append((rect, w))
                elif w == 1 or size < 0.02 * R:
                    newton_rects.append((rect, w))
                else:
                    split_rects.append((rect, w))
            if newton_rects:
                centres = [complex(0.5 * (r[0] + r[1]), 0.5 * (r[2] + r[3])) for r, _ in newton_rects]
                zs, rs = self.newton(centres, [w for _, w in newton_rects])
                for (rect, w), z, r in zip(newton_rects, zs, rs):
                    x0, x1, y0, y1 = rect
                    pad = 0.05 * max(x1 - x0, y1 - y0) + 1e-12
                    inside = x0 - pad <= z.real <= x1 + pad and y0 - pad <= z.imag <= y1 + pad
                    if r <= self.root_tol and inside:
                        found.append((complex(z), w, float(r)))
                    else:
                        split_rects.append((rect, w))
            queue = []
            for rect, w in split_rects:
                if max(rect[1] - rect[0], rect[3] - rect[2]) < tiny:
                    raise RootFindingError(f"could not isolate a root near {complex(rect[0], rect[2])}")
                queue.extend(self.subdivide(rect, w))
        return self.finish(found, R)

    def subdivide(self, rect, w):
        for n0 in (self.init_samples, 2 * self.init_samples):
            for f in _SPLIT_FRACTIONS:
                kids = self.split(rect, f)
                try:
                    ws = self.windings(kids, n0)
                except _NearRoot:
                    continue
                if sum(ws) == w:
                    return list(zip(kids, ws))
        raise RootFindingError(
            f"winding-number inconsistency near {complex(rect[0], rect[2])} after retries")

    def zero_order(self, R):
        r0 = 1e-3 * R
        for attempt in range(5):
            try:
                return self.windings([(-r0, 1.1 * r0, -r0, 1.1 * r0)], 16)[0]
            except _NearRoot:
                r0 *= 1.7
        raise RootFindingError("order of the zero at eps = 0 could not be determined")

    def finish(self, found, R):
        zero = found[0]
        rest = order_roots(found[1:], key=lambda e: e[0])
        out = [zero]
        for z, w, r in rest:
            if abs(z) > R * (1 + 1e-9):
                continue
            if any(abs(z - o[0]) <= 1e-6 * max(1.0, abs(z)) for o in out):
                continue
            out.append((z, w, r))
        return RootSearch([o[0] for o in out], [o[1] for o in out], [o[2] for o in out], R,
                          samples=len(self.sampler.cache))


def default_search_radius(op: TimeDependentOperator, t: float) -> float:
    """Three times the norm-certified radius ``pi / int_0^t ||A||``."""
    nu = norm_integral(op, t)
    return 3 * math.pi / nu if nu > 0 else math.inf


def find_disc_roots(op: TimeDependentOperator, t: float, search_radius: float = None,
                    root_tol: float = ROOT_TOL, jobs: int = 1) -> RootSearch:
    """Roots of ``Delta(eps)`` in the disk ``|eps| <= search_radius``.

    ``eps = 0`` always comes first. If ``Delta`` vanishes identically the
    result has ``identically_zero`` set and only the trivial root.
    """
    if search_radius is None:
        search_radius = default_search_radius(op, t)
    if not search_radius > 0:
        raise ConfigError("search_radius must be positive")
    if t == 0 or not math.isfinite(search_radius):
        return RootSearch([0j], [0], [0.0], search_radius, identically_zero=True)
    return _RootFinder(op, t, root_tol, jobs).run(search_radius)


# ------------------------------------------------------------------ continuation

@dataclass(frozen=True)
class EigenPath:
    curve: np.ndarray  # eps samples from 0 to eps0
    rho: np.ndarray  # (m, n), continuously paired
    logrho: np.ndarray  # (m, n), continued logarithms
    window: float = 0.0  # radius of the terminal cluster window around eps0

    def to_csv(self) -> str:
        n = self.rho.shape[1]
        head = ["eps_re", "eps_im"]
        for j in range(n):
            head += [f"rho{j}_re", f"rho{j}_im", f"log{j}_re", f"log{j}_im"]
        lines = [",".join(head)]
        for e, r, g in zip(self.curve, self.rho, self.logrho):
            row = [e.real, e.imag]
            for j in range(n):
                row += [r[j].real, r[j].imag, g[j].real, g[j].imag]
            lines.append(",".join(format(float(v), ".17g") for v in row))
        return "\n".join(lines) + "\n"


def _pair(prev, new):
    """Permutation of ``new`` closest to ``prev`` (min total distance)."""
    n = len(prev)
    if n <= 6:
        best, arg = math.inf, None
        for perm in itertools.permutations(range(n)):
            c = sum(abs(new[perm[j]] - prev[j]) for j in range(n))
            if c < best:
                best, arg = c, perm
        return new[list(arg)]
    from scipy.optimize import linear_sum_assignment
    cost = np.abs(prev[:, None] - new[None, :])
    _, cols = linear_sum_assignment(cost)
    return new[cols]


def _min_gap(r):
    if len(r) < 2:
        return math.inf
    d = np.abs(r[:, None] - r[None, :])
    d[np.diag_indices(len(r))] = np.inf
    return float(d.min())


def continue_eigenvalues(op: TimeDependentOperator, t: float, eps0: complex,
                         curve: Sequence[complex] = None, window: float = None,
                         coincident_ok: bool = False, jobs: int = 1,
                         max_samples: int = 20000) -> EigenPath:
    """Follow the eigenvalues of ``Y_t(eps)`` from ``eps = 0`` to ``eps0``.

    ``curve`` lists waypoints (default ``[0, eps0]``). Steps are halved until
    each eigenvalue moves less than a third of the smallest eigenvalue gap,
    except inside the terminal window ``|eps - eps0| < window`` (where the
    coalescing eigenvalues cannot be told apart and need not be) and inside
    the start region ``|eps| int ||A|| < pi/2``, where all continued logs are
    principal logs. ``coincident_ok`` drops the gap test everywhere, for
    problems whose eigenvalues coincide identically.
    """
    eps0 = complex(eps0)
    pts = [0j] + [complex(c) for c in (curve or [])[1:-1]] + [eps0] if curve else [0j, eps0]
    seg = np.abs(np.diff(pts))
    L = float(seg.sum())
    if L == 0:
        raise ConfigError("eps0 must be nonzero")
    cum = np.concatenate([[0.0], np.cumsum(seg)])

    def at(s):
        k = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        return pts[k] + (pts[k + 1] - pts[k]) * ((s - cum[k]) / seg[k])

    nu = norm_integral(op, t)
    s_start = min(0.5 * math.pi / nu, 0.5 * L) if nu > 0 else 0.5 * L
    if window is None:
        window = 1e-3 * abs(eps0)
    # start region: a few samples for output only
    s_list = list(np.linspace(0.0, s_start, 5)) + list(np.linspace(s_start, L, 48)[1:])
    s_list += [c for c in cum[1:-1] if c > s_start]
    s_list = sorted(set(s_list))
    vals = {}

    def ensure(ss):
        need = [s for s in ss if s not in vals]
        if need:
            Y, _ = _propagate_many(op, t, [at(s) for s in need], SAMPLE_TOL, jobs=jobs)
            for s, lam in zip(need, np.linalg.eigvals(Y)):
                vals[s] = lam

    while True:
        ensure(s_list)
        if len(s_list) > max_samples:
            raise PairingError("eigenvalue continuation exceeded the sample budget", None)
        inserts = []
        for a, b in zip(s_list, s_list[1:]):
            if b <= s_start:
                continue
            ra, rb = vals[a], _pair(vals[a], vals[b])
            motion = np.abs(rb - ra)
            ok = bool(np.all(motion < 0.5 * np.abs(ra)))
            in_window = abs(at(a) - eps0) < window and abs(at(b) - eps0) < window
            if ok and not (coincident_ok or in_window):
                gap = min(_min_gap(ra), _min_gap(rb))
                ok = float(motion.max()) < gap / 3
            if not ok:
                if b - a < 1e-11 * L:
                    raise PairingError(f"eigenvalue collision near eps = {at(a):.10g}", at(a))
                inserts.append(0.5 * (a + b))
        if not inserts:
            break
        s_list = sorted(set(s_list) | set(inserts))

    # walk: principal logs at the end of the start region, then continue
    i0 = s_list.index(min(s_list, key=lambda s: abs(s - s_start)))
    rho = np.empty((len(s_list), op.n), dtype=complex)
    logs = np.empty_like(rho)
    rho[i0] = vals[s_list[i0]]
    logs[i0] = np.log(rho[i0])
    for i in range(i0 + 1, len(s_list)):
        rho[i] = _pair(rho[i - 1], vals[s_list[i]])
        logs[i] = logs[i - 1] + np.log(rho[i] / rho[i - 1])
    for i in range(i0 - 1, -1, -1):
        rho[i] = _pair(rho[i + 1], vals[s_list[i]])
        logs[i] = np.log(rho[i])
    logs[0] = 0.0
    curve_pts = np.array([at(s) for s in s_list])
    return EigenPath(curve_pts, rho, logs, float(window))


# ------------------------------------------------------------------ classification

@dataclass(frozen=True)
class DiscRoot:
    eps0: complex
    residual: float
    multiplicity_l: int
    rho0: complex
    p: int
    q: int
    classification: str  # extraneous | non_extraneous | inconclusive
    clusters: tuple = ()
    note: str = ""
    order: int = 0  # order of the zero of Delta at eps0, when known

    @property
    def decisive(self) -> bool:
        return self.classification == "non_extraneous"


def _clusters(values, thr):
    n = len(values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in itertools.combinations(range(n), 2):
        if abs(values[i] - values[j]) < thr:
            parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    groups = sorted(groups.values(), key=lambda g: g[0])
    for a, b in itertools.combinations(groups, 2):
        d = min(abs(values[i] - values[j]) for i in a for j in b)
        if d < 10 * thr:
            raise ClusteringError(
                f"eigenvalue clusters separated by {d:.3g}, below ten times the cluster threshold {thr:.3g}")
    return groups


def _same_sheet_groups(logs, members):
    """Partition cluster members by the branch index of their continued logs."""
    base = logs[members[0]]
    groups = {}
    for j in members:
        m = int(round((logs[j] - base).imag / (2 * math.pi)))
        groups.setdefault(m, []).append(j)
    return list(groups.values())


def _identically_zero_near(op, t, eps0):
    probe = [eps0 * (1 + 0.01 * cmath.exp(2j * math.pi * k / 3)) for k in range(3)]
    Y, _ = _propagate_many(op, t, probe, SAMPLE_TOL)
    return bool(np.all(np.abs(np.atleast_1d(linalg.discriminant(Y))) / _normaliser(Y) < 1e-13))


def classify_root(op: TimeDependentOperator, t: float, eps0: complex,
                  root_tol: float = ROOT_TOL, cluster_tol: float = CLUSTER_TOL,
                  curve=None, jobs: int = 1,
                  order: int = 0) -> DiscRoot:
    """Classify the discriminant root ``eps0`` from continued logs and Jordan structure."""
    eps0 = complex(eps0)
    n = op.n
    if abs(eps0) < 1e-14:
        return DiscRoot(0j, 0.0, n, 1 + 0j, n, 1, "extraneous", (),
                        "eps = 0: every eigenvalue equals 1 with log 0", order)
    Y0 = propagate(op, t, eps0).Y
    normY = linalg.spectral_norm(Y0)
    residual = abs(linalg.discriminant(Y0)) / normY ** (n * (n - 1))
    if residual > root_tol:
        raise RootFindingError(f"eps0 = {eps0} is not a discriminant root (residual {residual:.3g})")
    flat = _identically_zero_near(op, t, eps0)
    path = _continue_with_detour(op, t, eps0, curve, flat, jobs)
    lam = np.linalg.eigvals(Y0)
    logs_end = path.logrho[-1]
    # attach continued logs to the accurately computed eigenvalues
    order_idx = _pair(lam, path.rho[-1])
    perm = [int(np.argmin(np.abs(path.rho[-1] - v))) for v in order_idx]
    logs = logs_end[perm] if len(set(perm)) == n else logs_end
    thr = max(cluster_tol, 10 * math.sqrt(root_tol)) * normY
    groups = [g for g in _clusters(lam, thr) if len(g) >= 2]
    if not groups:
        raise ClusteringError(f"no multiple eigenvalue at eps0 = {eps0}")
    info = []
    for g in groups:
        rho0 = complex(np.mean(lam[g]))
        spread = max(abs(lam[i] - lam[j]) for i in g for j in g)
        sheets = _same_sheet_groups(logs, g)
        p = max(len(s) for s in sheets)
        q = linalg.max_jordan_block(Y0, rho0, threshold=max(1e-8 * normY, 10 * spread))
        q = min(q, len(g))
        info.append({"l": len(g), "rho0": rho0, "p": p, "q": q,
                     "logs": [complex(logs[j]) for j in g]})
    note = ""
    if flat:
        cls = "inconclusive"
        note = ("discriminant vanishes identically near eps0; exceptional case with "
                f"p = {info[0]['p']} > q = {info[0]['q']}")
        pick = info[0]
    elif all(c["p"] == c["l"] for c in info):
        cls, pick = "extraneous", info[0]
        note = "continued logs of the coalescing eigenvalues agree"
    elif any(c["p"] < c["q"] for c in info):
        cls = "non_extraneous"
        pick = next(c for c in info if c["p"] < c["q"])
    else:
        cls = "inconclusive"
        pick = next(c for c in info if c["p"] < c["l"])
        note = f"non-extraneous with p = {pick['p']} >= q = {pick['q']}; radius is only bounded below"
    return DiscRoot(eps0, float(residual), pick["l"], pick["rho0"], pick["p"], pick["q"], cls,
                    tuple(info), note, order)


def _continue_with_detour(op, t, eps0, curve, flat, jobs):
    try:
        return continue_eigenvalues(op, t, eps0, curve, coincident_ok=flat, jobs=jobs)
    except PairingError as first:
        if curve is not None:
            raise
        for side in (1, -1):
            mid = 0.5 * eps0 + side * 0.25j * eps0
            try:
                return continue_eigenvalues(op, t, eps0, [0j, mid, eps0], coincident_ok=flat,
                                            jobs=jobs)
            except PairingError:
                continue
        raise first


# ------------------------------------------------------------------ radius

@dataclass(frozen=True)
class RadiusResult:
    value: float
    kind: str  # "exact" or "lower_bound"
    root: Optional[DiscRoot] = None
    note: str = ""
    roots: tuple = ()  # classified roots visited, in order
    search_radius: float = math.nan

    @property
    def is_lower_bound(self) -> bool:
        return self.kind == "lower_bound"


def _walk(op, t, search, root_tol, jobs, classify_all=False):
    """Classify roots in order; returns (deciding RadiusResult or None, classified roots)."""
    visited, decided = [], None
    for z, w, r in zip(search.roots, search.orders, search.residuals):
        if decided is not None:
            try:
                visited.append(classify_root(op, t, z, root_tol, jobs=jobs, order=w))
            except NumericalError as exc:
                visited.append(DiscRoot(z, r, 0, 0j, 0, 0, "inconclusive", (),
                                        f"classification failed: {exc}", w))
            continue
        dr = classify_root(op, t, z, root_tol, jobs=jobs, order=w)
        visited.append(dr)
        if dr.classification == "non_extraneous":
            decided = RadiusResult(abs(z), "exact", dr, "", (), search.search_radius)
        elif dr.classification == "inconclusive":
            decided = RadiusResult(abs(z), "lower_bound", dr, dr.note, (), search.search_radius)
        if decided is not None and not classify_all:
            break
    if decided is not None:
        decided = RadiusResult(decided.value, decided.kind, decided.root, decided.note,
                               tuple(visited), decided.search_radius)
    return decided, visited


def spectral_radius(op: TimeDependentOperator, t: float, search_radius: float = None,
                    root_tol: float = ROOT_TOL, jobs: int = 1,
                    classify_all: bool = False) -> RadiusResult:
    """Radius of convergence in ``eps`` of ``Omega_t(eps)``.

    Walks the discriminant roots by increasing modulus, skipping extraneous
    ones. Without an explicit ``search_radius`` a disk of 1.6 times the
    certified radius is searched first, then the default radius.
    ``classify_all`` keeps classifying after the deciding root (for reports).
    """
    if t == 0:
        return RadiusResult(math.inf, "lower_bound", None, "t = 0: Y = I for every eps")
    if search_radius is not None:
        radii = [search_radius]
    else:
        full = default_search_radius(op, t)
        radii = [1.6 * full / 3, full] if math.isfinite(full) and not classify_all else [full]
    visited = []
    for R in radii:
        search = find_disc_roots(op, t, R, root_tol, jobs)
        if search.identically_zero:
            return RadiusResult(radii[-1], "lower_bound", None,
                                f"discriminant vanishes identically (exceptional case p = {op.n} > q); "
                                "no finite radius is implied", (), radii[-1])
        decided, visited = _walk(op, t, search, root_tol, jobs, classify_all)
        if decided is not None:
            return decided
    R = radii[-1]
    return RadiusResult(R, "lower_bound", None,
                        "no non-extraneous discriminant root inside the search radius",
                        tuple(visited), R)


# ------------------------------------------------------------------ t-domain

@dataclass(frozen=True)
class TDomainResult:
    value: float
    flag: str  # "exact", "inf" or "inconclusive"
    evaluations: tuple = ()  # (t, F(t), kind)
    note: str = ""


def magnus_t_domain(op: TimeDependentOperator, t_max: float = None, xtol: float = 1e-6,
                    jobs: int = 1, eval_radius: float = 1.5) -> TDomainResult:
    """Smallest ``t`` with ``F(t) = 1``, where ``F(t)`` is the spectral radius at ``t``.

    The search starts at the norm certificate ``T(pi)``, where ``F >= 1`` is
    guaranteed. A bracket is grown forwards using the guess ``F ~ 1/t`` and
    then closed by Brent's method on ``t (F(t) - 1)``, which is nearly
    linear when ``F`` behaves like ``c/t``. Radii are computed in the disk
    ``|eps| <= eval_radius``; a root-free disk counts as ``F > 1``.
    """
    t_lo = norm_bound_time(op, math.pi)
    if not math.isfinite(t_lo):
        return TDomainResult(math.inf, "inf", (), "norm certificate holds for all t")
    if t_max is None:
        t_max = 4 * t_lo
    if not t_max > 0:
        raise ConfigError("t_max must be positive")
    t_max = min(float(t_max), op.t_max)
    if t_max <= t_lo:
        return TDomainResult(math.inf, "inf", (), "t_max lies inside the norm-certified interval")
    memo = {}
    notes = []

    def F(tt):
        tt = float(tt)
        if tt not in memo:
            memo[tt] = spectral_radius(op, tt, eval_radius, jobs=jobs)
            r = memo[tt]
            if r.is_lower_bound and r.value <= 1:
                notes.append(f"radius at t = {tt:.6g} is only a lower bound ({r.value:.6g})")
        return memo[tt]

    def evals():
        return tuple((tt, memo[tt].value, memo[tt].kind) for tt in sorted(memo))

    a = t_lo
    ra = F(a)
    if ra.value <= 1 and not ra.is_lower_bound:
        return TDomainResult(a, "exact", evals(), "F(T(pi)) <= 1 at the certificate time")
    guess = a * ra.value if not ra.is_lower_bound else 1.5 * a
    b = min(max(1.02 * guess, 1.01 * a), t_max)
    while F(b).value >= 1:
        if b >= t_max:
            flag = "inconclusive" if notes else "inf"
            return TDomainResult(math.inf, flag, evals(), "F(t) >= 1 on (0, t_max]")
        a = b
        b = min(1.5 * b, t_max)

    def u(tt):
        return tt * (F(tt).value - 1)

    root = optimize.brentq(u, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=100)
    exact = sorted((tt, r.value) for tt, r in memo.items() if not r.is_lower_bound)
    rising = any(f2 > f1 * (1 + 1e-6) for (_, f1), (_, f2) in zip(exact, exact[1:]))
    if rising:
        return _dense_scan(F, t_lo, b, xtol, evals, "F increased between samples", notes)
    flag = "inconclusive" if notes else "exact"
    return TDomainResult(float(root), flag, evals(), "; ".join(notes))


def _dense_scan(F, a, b, xtol, evals, why, notes):
    grid = np.linspace(a, b, 17)
    prev = a
    for tt in grid[1:]:
        if F(tt).value < 1:
            root = optimize.brentq(lambda s: F(s).value - 1, prev, tt, xtol=xtol)
            return TDomainResult(float(root), "inconclusive" if notes else "exact", evals(),
                                 f"non-monotone F detected ({why}); dense scan used")
        prev = tt
    return TDomainResult(math.inf, "inf", evals(), f"non-monotone F ({why}); no crossing found")


# ------------------------------------------------------------------ report

@dataclass(frozen=True)
class ConvergenceReport:
    t: float
    norm_times: dict
    disc_roots: tuple
    spectral_radius: RadiusResult
    empirical_radius: float
    magnus_t_domain: Optional[TDomainResult] = None
    identically_zero: bool = False
    notes: tuple = field(default=())


def analyze(op: TimeDependentOperator, t: float, search_radius: float = None,
            t_domain: bool = False, t_max: float = None, K: int = 20,
            root_tol: float = ROOT_TOL, jobs: int = 1) -> ConvergenceReport:
    """Norm certificates, classified roots, spectral and empirical radii at time ``t``."""
    from .magnus import magnus_terms

    times = norm_times(op)
    rad = spectral_radius(op, t, search_radius, root_tol, jobs, classify_all=True)
    notes = []
    try:
        emp = magnus_terms(op, t, K).empirical_radius
    except NumericalError as exc:
        emp = math.nan
        notes.append(f"empirical radius unavailable: {exc}")
    dom = magnus_t_domain(op, t_max, jobs=jobs) if t_domain else None
    if rad.note:
        notes.append(rad.note)
    zero = rad.root is None and "identically" in rad.note
    return ConvergenceReport(float(t), times, rad.roots, rad, emp, dom, zero, tuple(notes))
