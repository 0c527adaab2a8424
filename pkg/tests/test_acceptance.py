"""Acceptance gate: every numbered criterion at its stated tolerance and time limit.

Under pytest one summary line per criterion is printed at the end of the
session; ``python tests/test_acceptance.py`` runs the gate on its own.
"""
import contextlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from magnuslab import convergence as C
from magnuslab.cli import main
from magnuslab.magnus import bernoulli, magnus_terms, reconstruct
from magnuslab.problem import CATALOG, builtin

import properties
from helpers import X1, X2

TWO_PI_3 = 2 * math.pi / 3


@dataclass
class Outcome:
    number: int
    title: str
    limit: float  # seconds; inf when no limit is stated
    checks: list = field(default_factory=list)
    elapsed: float = 0.0

    def check(self, what, ok, detail=""):
        self.checks.append((what, bool(ok), detail))

    @property
    def passed(self):
        return bool(self.checks) and all(ok for _, ok, _ in self.checks) and self.elapsed < self.limit

    def line(self):
        bad = [f"{w} [{d}]" if d else w for w, ok, d in self.checks if not ok]
        if self.elapsed >= self.limit:
            bad.append(f"runtime {self.elapsed:.1f}s over the {self.limit:g}s limit")
        limit = f"limit {self.limit:g}s" if math.isfinite(self.limit) else "no time limit"
        tail = "; failed: " + "; ".join(bad) if bad else ""
        return (f"{'PASS' if self.passed else 'FAIL'}  criterion {self.number}: {self.title} "
                f"({self.elapsed:.2f}s, {limit}){tail}")


def _run(number, title, limit, body):
    o = Outcome(number, title, limit)
    t0 = time.perf_counter()
    try:
        body(o)
    except Exception as exc:  # recorded so the summary line still appears
        o.check("raised", False, f"{type(exc).__name__}: {exc}")
    o.elapsed = time.perf_counter() - t0
    return o


def _near(o, what, got, want, tol):
    o.check(what, abs(got - want) <= tol, f"got {got!r}, want {want!r} +/- {tol:g}")


# ------------------------------------------------------------------ criteria

def xi_constant(o):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(["xi"])
    o.check("xi command exits 0", code == 0, f"exit {code}")
    _near(o, "xi", json.loads(buf.getvalue())["xi"], 1.08686869, 1e-7)


def example1_norm_certificate(o):
    _near(o, "T(pi)", C.norm_bound_time(builtin("example1"), math.pi), 1.43205, 1e-3)


def example1_spectral_radius(o):
    op = builtin("example1")
    r = C.spectral_radius(op, 1.0)
    o.check("radius is exact", r.kind == "exact", r.kind)
    _near(o, "spectral radius", r.value, TWO_PI_3, 1e-3)
    root = r.root
    o.check("deciding root found", root is not None)
    if root is not None:
        _near(o, "deciding root", root.eps0, 2j * math.pi / 3, 1e-3)
        got = (root.classification, root.multiplicity_l, root.p, root.q)
        o.check("classification l, p, q", got == ("non_extraneous", 2, 1, 2), str(got))
    dom = C.magnus_t_domain(op)
    o.check("t-domain is exact", dom.flag == "exact", dom.flag)
    _near(o, "t-domain", dom.value, TWO_PI_3, 1e-3)


def example2_term_identity(o):
    a, b = 0.4, 1.0
    res = magnus_terms(builtin("example2", {"alpha": a, "beta": b}), 2.0, K=12)
    for n in range(2, 9):
        coeff = (-1) ** (n - 1) * 2 ** (n - 1) * float(bernoulli(n - 1)) / math.factorial(n - 1)
        want = coeff * a ** (n - 1) * b * X2
        err = np.abs(res.terms[n - 1] - want).max()
        size = np.abs(want).max()
        # odd Bernoulli numbers vanish; those terms are checked against roundoff
        ok = err <= 1e-6 * size if size > 0 else err <= 1e-14
        o.check(f"Omega_{n}", ok, f"error {err:.3g}, size {size:.3g}")
    log = a * X1 + 2 * a * b / (1 - math.exp(-2 * a)) * X2
    err = np.abs(res.partial_sums[11] - log).max()
    o.check("sum of 12 terms vs closed-form log", err <= 1e-6, f"error {err:.3g}")


def example2_radius(o):
    op = builtin("example2", {"alpha": 2.0, "beta": 1.0})
    r = C.spectral_radius(op, 2.0)
    o.check("radius is exact", r.kind == "exact", r.kind)
    _near(o, "spectral radius", r.value, math.pi / 2, 1e-3)
    emp = magnus_terms(op, 2.0, K=16).empirical_radius
    o.check("empirical radius within 10%", abs(emp - math.pi / 2) <= 0.1 * math.pi / 2, f"got {emp!r}")
    e = reconstruct(builtin("example2", {"alpha": 3.5, "beta": 1.0}), 2.0, 20, 1.0).errors_by_K
    tail = e[len(e) // 2:]
    # odd terms vanish, so errors come in equal pairs up to roundoff
    grows = np.all(np.diff(tail) >= -1e-9 * tail.max()) and e[-1] >= 2 * e.min()
    o.check("alpha = 3.5 reconstruction does not converge", grows,
            f"min {e.min():.3g}, last {e[-1]:.3g}")


def example3_rotating_field(o):
    op = builtin("example3")
    r = C.spectral_radius(op, 2 * math.pi)
    root = r.root
    o.check("non-extraneous root found", root is not None, r.note)
    if root is not None:
        o.check("first non-extraneous root within 1% of 1", abs(abs(root.eps0) - 1) <= 0.01,
                f"got {root.eps0!r}")
        o.check("p = 1, q = 2", (root.p, root.q) == (1, 2), f"p = {root.p}, q = {root.q}")
    dom = C.magnus_t_domain(op)
    o.check("t-domain within 1% of 2 pi", abs(dom.value - 2 * math.pi) <= 0.02 * math.pi,
            f"got {dom.value!r} ({dom.flag})")


def property_suites(o):
    properties.calls.clear()
    for name, suite in properties.SUITES.items():
        try:
            suite()
            o.check(name, True)
        except Exception as exc:
            o.check(name, False, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
    for key, n in sorted(properties.calls.items()):
        o.check(f"{key} case count", n >= properties.CASES, f"{n} cases")
    o.check("all suites ran", len(properties.calls) == len(properties.SUITES), str(dict(properties.calls)))


def consistency_ordering(o):
    for name in CATALOG:
        op = builtin(name)
        T = C.norm_times(op)
        vals = [T[k] for k in ("0.57745", "log2", "xi", "pi")]
        o.check(f"{name}: norm times increase", all(a < b for a, b in zip(vals, vals[1:])), str(vals))
        dom = C.magnus_t_domain(op)
        o.check(f"{name}: t-domain resolved", dom.flag in ("exact", "inf"), dom.flag)
        o.check(f"{name}: T(pi) <= t-domain", vals[-1] <= dom.value, f"{vals[-1]!r} vs {dom.value!r}")
        if name == "example1":
            o.check("example1: strict gap", vals[-1] < dom.value - 1e-3, f"{vals[-1]!r} vs {dom.value!r}")


CRITERIA = [
    (1, "xi constant", 1.0, xi_constant),
    (2, "example 1 norm certificate", 1.0, example1_norm_certificate),
    (3, "example 1 spectral radius and t-domain", 30.0, example1_spectral_radius),
    (4, "example 2 term identity", 60.0, example2_term_identity),
    (5, "example 2 radius", 60.0, example2_radius),
    (6, "example 3 rotating field", 60.0, example3_rotating_field),
    (7, "property suites", 60.0, property_suites),
    (8, "consistency ordering", math.inf, consistency_ordering),
]


@pytest.mark.slow
@pytest.mark.parametrize("number, title, limit, body", CRITERIA, ids=[f"criterion{c[0]}" for c in CRITERIA])
def test_criterion(number, title, limit, body, record_property):
    o = _run(number, title, limit, body)
    record_property("acceptance", o.line())
    assert o.passed, o.line()


if __name__ == "__main__":
    results = [_run(*c) for c in CRITERIA]
    for o in results:
        print(o.line())
    sys.exit(0 if all(o.passed for o in results) else 1)
