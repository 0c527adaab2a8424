import cmath
import math

import numpy as np
import pytest

from magnuslab import convergence as C
from magnuslab import linalg
from magnuslab.errors import ConfigError
from magnuslab.magnus import magnus_terms
from magnuslab.problem import builtin, exact_solution, norm_integral, zero_operator

from helpers import diagonal_operator

TWO_PI_3 = 2 * math.pi / 3


@pytest.fixture(scope="module")
def ex1():
    return builtin("example1")


@pytest.fixture(scope="module")
def ex2():
    return builtin("example2", {"alpha": 2.0, "beta": 1.0})


def test_xi():
    assert C.compute_xi() == pytest.approx(1.08686869, abs=1e-7)
    assert abs(C.compute_xi(1e-12) - C.compute_xi(1e-13)) < 1e-9
    assert C.xi_integrand(1e-9) == pytest.approx(0.5)
    assert C.xi_integrand(0.0) == 0.5
    assert C.xi_integrand(2 * math.pi - 1e-9) < 1e-8


def test_norm_bound_time(ex1, ex2):
    assert C.norm_bound_time(ex1, math.pi) == pytest.approx(1.43205, abs=1e-3)
    assert C.norm_bound_time(ex2, math.pi) == pytest.approx(1 + (math.pi - 1) / 2, abs=1e-8)
    assert C.norm_bound_time(zero_operator(2), math.pi) == math.inf
    with pytest.raises(ConfigError):
        C.norm_bound_time(ex1, 0.0)


def test_norm_times_ascending(ex1):
    times = C.norm_times(ex1)
    assert list(times) == ["0.57745", "log2", "xi", "pi"]
    vals = list(times.values())
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_gap_check():
    assert C.eigenvalue_gap_check(np.zeros((2, 2)))
    res = C.eigenvalue_gap_check(np.diag([1j * math.pi, -1j * math.pi]))
    assert not res and res.pairs[0][2] in (1, -1)


def test_gap_check_example1_log():
    # the log of Y has eigenvalues 2t and -t, so the gap 3t reaches 2 pi at t = 2 pi / 3
    t = TWO_PI_3 - 0.05
    L = linalg.logm_principal(exact_solution("example1", t, 1.0))
    assert C.eigenvalue_gap_check(L)
    lam = np.sort(linalg.eigenvalues(L).real)
    assert lam[1] - lam[0] == pytest.approx(3 * t)


def test_discriminant_of_eps(ex1, ex2):
    assert C.discriminant_of_eps(ex1, 1.0, 0.0) == 0
    t, eps = 1.0, 0.4 + 0.9j
    want = (np.exp(2 * eps * t) + np.exp(-eps * t)) ** 2 - 4 * np.exp(eps * t)
    assert abs(C.discriminant_of_eps(ex1, t, eps) - want) <= 1e-9 * abs(want)
    w = 2.0
    want2 = 4 * (np.cosh(eps * w) ** 2 - 1)
    assert abs(C.discriminant_of_eps(ex2, 2.0, eps) - want2) <= 1e-9 * abs(want2)


def test_discriminant_derivative(ex1):
    eps, h = 0.3 - 0.7j, 1e-6
    d, dd = C.discriminant_of_eps(ex1, 1.0, eps, derivative=True)
    fd = (C.discriminant_of_eps(ex1, 1.0, eps + h) - C.discriminant_of_eps(ex1, 1.0, eps - h)) / (2 * h)
    assert dd == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("name", ["example1", "example2"])
def test_discriminant_conjugate_symmetry(name):
    op = builtin(name)
    eps = 0.8 + 0.6j
    a = C.discriminant_of_eps(op, 2.0, eps)
    b = C.discriminant_of_eps(op, 2.0, eps.conjugate())
    assert b == pytest.approx(a.conjugate(), rel=1e-10)


def test_find_roots_example1(ex1):
    res = C.find_disc_roots(ex1, 1.0, 3.0)
    assert res.roots[0] == 0
    assert len(res.roots) == 3
    assert sorted(r.imag for r in res.roots[1:]) == pytest.approx([-TWO_PI_3, TWO_PI_3], abs=1e-8)
    assert all(abs(r.real) < 1e-8 for r in res.roots)
    assert all(r <= C.ROOT_TOL for r in res.residuals)
    assert res.roots[1].imag > 0  # conjugate pairs list the upper root first


def test_find_roots_example2(ex2):
    res = C.find_disc_roots(ex2, 2.0, 2.0)
    assert len(res.roots) == 3
    assert sorted(r.imag for r in res.roots[1:]) == pytest.approx([-math.pi / 2, math.pi / 2], abs=1e-8)


def test_find_roots_identically_zero():
    res = C.find_disc_roots(builtin("diagonal"), 1.0, 2.0)
    assert res.identically_zero and res.roots == [0]


def test_order_roots():
    items = [2j, -2j, 1 + 0j, 0j, 2 + 1e-9j]
    out = C.order_roots(items)
    assert out[0] == 0 and out[1] == 1
    assert out[2:] == [2j, 2 + 1e-9j, -2j]


def test_continue_example1(ex1):
    eps0 = 1j * TWO_PI_3
    path = C.continue_eigenvalues(ex1, 1.0, eps0)
    assert path.curve[0] == 0 and path.curve[-1] == pytest.approx(eps0)
    assert np.allclose(path.logrho[0], 0)
    logs = sorted(path.logrho[-1], key=lambda z: z.imag)
    assert logs[0] == pytest.approx(-2j * math.pi / 3, abs=1e-6)
    assert logs[1] == pytest.approx(4j * math.pi / 3, abs=1e-6)
    # unwrapped logs move continuously
    assert np.all(np.abs(np.diff(path.logrho.imag, axis=0)) < math.pi)
    # the two eigenvalues travel the unit circle in opposite directions
    phase = np.unwrap(np.angle(path.rho), axis=0)
    assert phase[-1].max() > 0 > phase[-1].min()


def test_continue_example2(ex2):
    path = C.continue_eigenvalues(ex2, 2.0, 1j * math.pi / 2)
    assert np.allclose(path.rho[-1], [-1, -1], atol=1e-6)
    logs = sorted(path.logrho[-1], key=lambda z: z.imag)
    assert logs == pytest.approx([-1j * math.pi, 1j * math.pi], abs=1e-6)


def test_continue_diagonal_distinct():
    coeffs = [(1.0, 0.5), (-0.3, 2.0)]
    op = diagonal_operator(coeffs)
    t, eps0 = 1.2, 2.0 + 3.0j
    path = C.continue_eigenvalues(op, t, eps0)
    ints = np.array([a * t + b * math.sin(t) for a, b in coeffs])
    for e, g in zip(path.curve[::7], path.logrho[::7]):
        assert np.allclose(sorted(g, key=lambda z: z.real), sorted(e * ints, key=lambda z: z.real), atol=1e-8)


def test_eigenpath_csv(ex1):
    path = C.continue_eigenvalues(ex1, 1.0, 0.5j)
    lines = path.to_csv().splitlines()
    assert lines[0].startswith("eps_re,eps_im,rho0_re")
    assert len(lines) == len(path.curve) + 1


def test_classify_example1(ex1):
    r = C.classify_root(ex1, 1.0, 1j * TWO_PI_3)
    assert (r.classification, r.multiplicity_l, r.p, r.q) == ("non_extraneous", 2, 1, 2)
    assert r.rho0 == pytest.approx(cmath.exp(-2j * math.pi / 3), abs=1e-6)


def test_classify_zero_is_extraneous(ex1):
    assert C.classify_root(ex1, 1.0, 0.0).classification == "extraneous"


def test_classify_example2(ex2):
    r = C.classify_root(ex2, 2.0, 1j * math.pi / 2)
    assert (r.classification, r.p, r.q) == ("non_extraneous", 1, 2)


def test_classify_diagonal_exceptional():
    r = C.classify_root(builtin("diagonal"), 1.0, 2.0j)
    assert (r.p, r.q, r.classification) == (2, 1, "inconclusive")


def test_spectral_radius_examples(ex1, ex2):
    r1 = C.spectral_radius(ex1, 1.0)
    assert r1.kind == "exact" and r1.value == pytest.approx(TWO_PI_3, abs=1e-6)
    r2 = C.spectral_radius(ex2, 2.0)
    assert r2.kind == "exact" and r2.value == pytest.approx(math.pi / 2, abs=1e-6)


def test_spectral_radius_diagonal_lower_bound():
    op = builtin("diagonal")
    r = C.spectral_radius(op, 1.0)
    assert r.kind == "lower_bound"
    assert r.value == pytest.approx(C.default_search_radius(op, 1.0))
    assert "p = 2 > q" in r.note


def test_spectral_radius_example2_before_breakpoint():
    # on [0, 1] only the nilpotent piece acts and the discriminant vanishes identically
    r = C.spectral_radius(builtin("example2"), 0.5)
    assert r.kind == "lower_bound"


def test_radius_dominates_norm_certificate(ex1, ex2):
    for op, t in ((ex1, 1.0), (ex2, 2.0)):
        assert C.spectral_radius(op, t).value >= math.pi / norm_integral(op, t)


def test_empirical_agrees_with_spectral(ex1, ex2):
    for op, t in ((ex1, 1.0), (ex2, 2.0)):
        emp = magnus_terms(op, t, 20).empirical_radius
        assert emp == pytest.approx(C.spectral_radius(op, t).value, rel=0.1)


@pytest.fixture(scope="module")
def ex1_report(ex1):
    return C.analyze(ex1, 1.0)


def test_roots_inside_certified_disk_are_extraneous(ex1, ex1_report):
    # the sector argument puts every multiple eigenvalue there on one log sheet
    t, rep = 1.0, ex1_report
    cert = math.pi / norm_integral(ex1, t)
    inside = [r for r in rep.disc_roots if abs(r.eps0) < cert]
    assert inside and all(r.classification == "extraneous" for r in inside)


def test_analyze_report(ex1_report):
    rep = ex1_report
    assert [abs(r.eps0) for r in rep.disc_roots] == sorted(abs(r.eps0) for r in rep.disc_roots)
    assert rep.spectral_radius.value == pytest.approx(TWO_PI_3, abs=1e-6)
    assert rep.magnus_t_domain is None
    assert not rep.identically_zero


def test_t_domain_example2(ex2):
    dom = C.magnus_t_domain(ex2)
    assert dom.flag == "exact"
    assert dom.value == pytest.approx(1 + math.pi / 2, abs=1e-3)


def test_t_domain_zero_operator():
    assert C.magnus_t_domain(zero_operator(2)).flag == "inf"


def test_jobs_give_identical_results(ex1):
    a = C.find_disc_roots(ex1, 1.0, 3.0, jobs=1)
    b = C.find_disc_roots(ex1, 1.0, 3.0, jobs=3)
    assert a.roots == b.roots
