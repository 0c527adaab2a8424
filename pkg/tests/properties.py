"""Randomised invariant suites, each run for at least ``CASES`` examples.

They are driven from the acceptance gate, which also times them; each suite
counts its own invocations so the gate can check the case count.
"""
import math
from collections import Counter

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from magnuslab import linalg
from magnuslab.magnus import magnus_terms
from magnuslab.problem import norm_integral, trace_integral
from magnuslab.propagator import propagate

from helpers import cplx, diagonal_operator, operators

CASES = 200
calls = Counter()

_settings = settings(max_examples=CASES, deadline=None, derandomize=True, database=None,
                     suppress_health_check=list(HealthCheck))

times = st.floats(0.1, 1.5)


@_settings
@given(operators(), times, cplx(-1.5, 1.5))
def liouville(op, t, eps):
    calls["liouville"] += 1
    Y = propagate(op, t, eps).Y
    want = np.exp(eps * trace_integral(op, t))
    assert abs(np.linalg.det(Y) - want) <= 1e-9 * abs(want)


@_settings
@given(operators(), times, cplx(-1.5, 1.5))
def gronwall(op, t, eps):
    calls["gronwall"] += 1
    Y = propagate(op, t, eps).Y
    bound = math.exp(abs(eps) * norm_integral(op, t))
    assert linalg.spectral_norm(Y) <= bound * (1 + 1e-9)
    assert linalg.spectral_norm(np.linalg.inv(Y)) <= bound * (1 + 1e-9)


@_settings
@given(operators(), times, cplx(-1.5, 1.5), st.integers(0, 2**32 - 1))
def angle_bound(op, t, eps, seed):
    calls["angle_bound"] += 1
    Y = propagate(op, t, eps).Y
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.n) + 1j * rng.standard_normal(op.n)
    x /= np.linalg.norm(x)
    assert linalg.angle(Y @ x, x) <= abs(eps) * norm_integral(op, t) + 1e-8


@_settings
@given(operators(), times, st.floats(0.05, 3.1), st.floats(-math.pi, math.pi))
def sector(op, t, gamma, phase):
    calls["sector"] += 1
    nu = norm_integral(op, t)
    eps = gamma / nu * complex(math.cos(phase), math.sin(phase))
    lam = linalg.eigenvalues(propagate(op, t, eps).Y)
    assert np.all(np.abs(lam) <= math.exp(gamma) * (1 + 1e-9))
    assert np.all(np.abs(lam) >= math.exp(-gamma) * (1 - 1e-9))
    assert np.all(np.abs(np.angle(lam)) <= gamma + 1e-6)


@_settings
@given(operators(n=2), st.floats(0.1, 0.6))
def traceless(op, t):
    calls["traceless"] += 1
    res = magnus_terms(op, t, K=4)
    scale = max(1.0, res.term_norms[0])
    for k in range(1, 4):
        assert abs(np.trace(res.terms[k])) <= 1e-10 * scale ** (k + 1)


@_settings
@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=2, max_size=3),
       st.floats(0.1, 3.0))
def diagonal_terminates(coeffs, t):
    calls["diagonal_terminates"] += 1
    res = magnus_terms(diagonal_operator(coeffs), t, K=6)
    assert np.all(res.term_norms[1:] < 1e-10)


@_settings
@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.floats(0.05, 3.0))
def contour_log(seed, n, gamma):
    calls["contour_log"] += 1
    rng = np.random.default_rng(seed)
    # spectrum inside the sector-annulus: |Re log z| <= gamma, |arg z| <= gamma
    mu = rng.uniform(-gamma, gamma, n) + 1j * rng.uniform(-gamma, gamma, n)
    V = np.eye(n) + 0.3 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    Y = V @ np.diag(np.exp(mu)) @ np.linalg.inv(V)
    L1 = linalg.logm_contour(Y, gamma)
    L2 = linalg.logm_principal(Y)
    assert np.abs(L1 - L2).max() <= 1e-8 * max(1.0, np.abs(L2).max())


@_settings
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.booleans())
def discriminant_planted(seed, n, planted):
    calls["discriminant_planted"] += 1
    rng = np.random.default_rng(seed)
    # well-separated spectrum on a circle, optionally with one planted double
    ang = 2 * math.pi * (np.arange(n) + rng.uniform(0, 0.3, n)) / n
    lam = np.exp(1j * ang) * rng.uniform(0.8, 1.2)
    if planted:
        lam[1] = lam[0]
    V = np.eye(n) + 0.3 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    A = V @ np.diag(lam) @ np.linalg.inv(V)
    ev = np.linalg.eigvals(A)
    # eigenvalue scale, not ||A||: the matrices are far from normal
    scale = max(1.0, np.abs(ev).max()) ** (n * (n - 1))
    d = abs(linalg.discriminant(A)) / scale
    gap = min(abs(ev[i] - ev[j]) for i in range(n) for j in range(i + 1, n))
    has_double = gap < 1e-4
    assert has_double == planted
    assert (d < 1e-8) == has_double


SUITES = {
    "Liouville determinant identity": liouville,
    "Gronwall bounds on Y and its inverse": gronwall,
    "angle bound": angle_bound,
    "sector containment": sector,
    "traceless higher terms": traceless,
    "diagonal series termination": diagonal_terminates,
    "contour vs principal logarithm": contour_log,
    "discriminant vs multiple eigenvalue": discriminant_planted,
}
