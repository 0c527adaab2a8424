"""Shared hypothesis strategies and small matrix builders for the test suite."""
import numpy as np
from hypothesis import strategies as st

from magnuslab import problem
from magnuslab.expr import parse
from magnuslab.problem import Piece, TimeDependentOperator

X1 = np.diag([1.0, -1.0]).astype(complex)
X2 = np.array([[0, 1], [0, 0]], dtype=complex)

finite = st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False)


def cplx(lo=-2.0, hi=2.0):
    f = st.floats(lo, hi, allow_nan=False, allow_infinity=False)
    return st.builds(complex, f, f)


@st.composite
def matrices(draw, n=None, scale=1.0):
    n = draw(st.integers(2, 4)) if n is None else n
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))


def _fmt(z):
    return f"({z.real!r} + {z.imag!r}*i)"


@st.composite
def operators(draw, n=None, max_pieces=2):
    """Random piecewise operators with entries ``a + b*t`` or ``a + b*cos(c*t)``.

    Mixing constant and t-dependent pieces exercises both the expm path and
    the adaptive integrator.
    """
    n = draw(st.integers(2, 3)) if n is None else n
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    k = draw(st.integers(1, max_pieces))
    cuts = np.sort(rng.uniform(0.2, 1.0, k - 1)).tolist()
    starts = [0.0] + cuts
    ends = cuts + [np.inf]
    pieces = []
    for a, b in zip(starts, ends):
        kind = rng.integers(3)
        rows = []
        for _ in range(n):
            row = []
            for _ in range(n):
                c0 = complex(*rng.normal(0, 0.7, 2))
                c1 = complex(*rng.normal(0, 0.7, 2))
                if kind == 0:
                    s = _fmt(c0)
                elif kind == 1:
                    s = f"{_fmt(c0)} + {_fmt(c1)}*t"
                else:
                    s = f"{_fmt(c0)} + {_fmt(c1)}*cos({rng.uniform(0.5, 3)!r}*t)"
                row.append(parse(s))
            rows.append(tuple(row))
        pieces.append(Piece(a, b, tuple(rows)))
    return TimeDependentOperator(n, pieces)


def diagonal_operator(coeffs):
    """``diag(a_j + b_j cos t)`` for the pairs in ``coeffs``."""
    n = len(coeffs)
    zero = parse("0")
    rows = []
    for i, (a, b) in enumerate(coeffs):
        rows.append(tuple(parse(f"{_fmt(complex(a))} + {_fmt(complex(b))}*cos(t)") if j == i else zero
                          for j in range(n)))
    return TimeDependentOperator(n, [Piece(0.0, np.inf, tuple(rows))])


def example1_Y(t, eps):
    """Closed-form fundamental matrix of ``A = [[2, t], [0, -1]]``."""
    return problem.exact_solution("example1", t, eps)
