import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magnuslab import expr
from magnuslab.errors import ExprEvalError, ExprSyntaxError, UnboundIdentifierError


def ev(src, t=0.0, **params):
    return expr.evaluate(expr.parse(src), t, params)


def test_basic_examples():
    assert ev("t^2/2", 2.0) == 2
    assert ev("2") == 2 and ev("-1") == -1
    assert abs(ev("cos(omega*t)", 0.5, omega=math.pi)) < 1e-15
    assert ev("i*pi") == complex(0, math.pi)
    assert ev("t", 3.5) == 3.5


def test_example2_coefficient_factor():
    # 2*alpha*beta/(1 - exp(-2 alpha)) at alpha = 0.3, beta = 1, value from mpmath
    v = ev("2*alpha*beta/(1-exp(-2*alpha))", alpha=0.3, beta=1.0)
    assert v == pytest.approx(1.3298215290965225, rel=1e-15)
    assert ev("1/(1-exp(-2*alpha))", alpha=0.3) == pytest.approx(2.2163692151608708, rel=1e-15)


def test_precedence_and_associativity():
    assert ev("2^3^2") == 512
    assert ev("-2^2") == -4
    assert ev("1 - 2 - 3") == -4
    assert ev("8 / 4 / 2") == 1
    assert ev("2 + 3 * 4") == 14
    assert ev("(2 + 3) * 4") == 20


def test_literals():
    assert ev("1.5e-3") == 1.5e-3
    assert ev("0.7i") == 0.7j
    assert ev(".5") == 0.5
    assert expr.parse_complex("0+0.7i") == 0.7j
    assert expr.parse_complex("-2*pi") == -2 * math.pi


def test_functions_principal_branch():
    assert ev("log(-1)") == pytest.approx(1j * math.pi)
    assert ev("sqrt(-4)") == pytest.approx(2j)
    assert ev("abs(3 + 4*i)") == 5
    assert ev("(-1)^0.5") == pytest.approx(1j)


def test_vectorised_t():
    ts = np.linspace(0, 1, 5)
    out = expr.evaluate(expr.parse("t*t + 1"), ts, {})
    assert np.allclose(out, ts ** 2 + 1)


@pytest.mark.parametrize("src, offset", [
    ("2t", 1),
    ("1 +", 3),
    ("(1 + 2", 6),
    ("1 $ 2", 2),
    ("sin 1", 4),
])
def test_syntax_errors_located(src, offset):
    with pytest.raises(ExprSyntaxError) as ei:
        expr.parse(src)
    assert ei.value.offset == offset
    assert f"at offset {offset}" in str(ei.value)


def test_unknown_function_and_empty():
    with pytest.raises(ExprSyntaxError):
        expr.parse("foo(1)")
    with pytest.raises(ExprSyntaxError):
        expr.parse("   ")


def test_eval_errors():
    with pytest.raises(UnboundIdentifierError):
        ev("alpha + 1")
    with pytest.raises(ExprEvalError) as ei:
        ev("1/(t - 1)", 1.0)
    assert ei.value.offset == 1
    with pytest.raises(ExprEvalError):
        ev("log(0)")
    with pytest.raises(ExprEvalError):
        ev("0^(-1)")


def test_compiled_matches_checked_path():
    node = expr.parse("beta*exp(-i*omega*t) + t^3 - 2/(t + 3)")
    params = {"beta": 0.3 + 0.1j, "omega": 0.5}
    f = expr.compile_expr(node, params)
    ts = np.linspace(0, 4, 9)
    assert np.allclose(f(ts), expr.evaluate(node, ts, params), rtol=1e-15)
    g = expr.compile_expr(expr.parse("1/(t-1)"), {})
    with pytest.raises(ExprEvalError):
        g(np.array([0.0, 1.0]))


def test_parse_complex_rejects_t():
    with pytest.raises(ExprSyntaxError):
        expr.parse_complex("t + 1")


def test_free_identifiers():
    assert expr.free_identifiers(expr.parse("alpha*t + sin(beta) + pi")) == {"alpha", "beta"}


# expressions for round-trip and fuzz properties
_atoms = st.one_of(
    st.sampled_from(["t", "pi", "e", "i", "alpha", "x1"]),
    st.floats(0, 1e3, allow_nan=False).map(repr),
    st.floats(0, 10, allow_nan=False).map(lambda v: repr(v) + "i"),
)


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*", "/", "^"]), children).map(
            lambda x: f"({x[0]} {x[1]} {x[2]})"),
        children.map(lambda c: f"-{c}"),
        st.tuples(st.sampled_from(sorted(expr.FUNCTIONS)), children).map(lambda x: f"{x[0]}({x[1]})"),
    )


expressions = st.recursive(_atoms, _combine, max_leaves=12)


@settings(max_examples=150, deadline=None)
@given(expressions)
def test_print_parse_roundtrip(src):
    a = expr.parse(src)
    b = expr.parse(expr.to_string(a))
    assert a == b or expr.to_string(a) == expr.to_string(b)


@settings(max_examples=100, deadline=None)
@given(expressions, st.floats(0, 5))
def test_evaluation_deterministic(src, t):
    node = expr.parse(src)
    params = {"alpha": 0.3 - 0.2j, "x1": 1.5}
    try:
        a = expr.evaluate(node, t, params)
    except ExprEvalError:
        return
    b = expr.evaluate(node, t, params)
    assert a == b or (np.isnan(a) and np.isnan(b))


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="0123456789.+-*/^()eitpasincoxlgqrbh $_,", max_size=25))
def test_fuzz_never_crashes(src):
    try:
        expr.parse(src)
    except ExprSyntaxError as exc:
        assert 0 <= exc.offset <= len(src.encode())
