"""Reference solution of ``Y' = eps A(t) Y``, ``Y(0) = I``.

The integrator is Dormand-Prince 5(4) with FSAL, run on complex matrices
directly. It is batched over an array of ``eps`` values: all members share
one step sequence (the error norm is the maximum over the batch), so ``A`` is
evaluated once per stage for the whole batch. Root finding evaluates the
discriminant on many ``eps`` at a time and relies on this.

Pieces with t-independent entries are propagated exactly by ``expm``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import NumericalError, StepSizeUnderflow
from .problem import TimeDependentOperator

DEFAULT_TOL = 1e-11
SAFETY = 0.9
MIN_FACTOR, MAX_FACTOR = 0.2, 5.0

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])  # = last row of _A
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass(frozen=True)
class PropagationResult:
    Y: np.ndarray
    t: float
    eps: complex
    est_error: float
    dY_deps: Optional[np.ndarray] = None
    steps: int = 0


@dataclass(frozen=True)
class BatchResult:
    """``Y[k]`` (and ``Z[k] = dY/deps``) for ``eps[k]``."""

    Y: np.ndarray
    eps: np.ndarray
    t: float
    est_error: float
    Z: Optional[np.ndarray] = None
    steps: int = 0


_A_ROWS = [np.array(row) for row in _A]


def _rhs(eps, A, S):
    """Right-hand side on the stacked state ``S = (Y[, Z])`` of shape (m, c, n, n)."""
    AS = A @ S
    k = eps[:, None, None, None] * AS
    if S.shape[1] == 2:
        k[:, 1] += AS[:, 0]  # Z' = eps A Z + A Y
    return k


def _dopri_piece(op, k, a, b, eps, S, tol, h):
    """Integrate piece ``k`` from ``a`` to ``b``; returns S, last h, max local error, steps."""
    t = a
    emax = float(np.max(np.abs(eps))) if eps.size else 0.0
    A0 = op.evaluate_piece(k, a)
    if h is None:
        scale = emax * max(np.linalg.norm(A0, 2), 1e-12)
        h = min(b - a, 0.05 / scale if scale > 0 else b - a)
    K = np.empty((7,) + S.shape, dtype=complex)
    K[0] = _rhs(eps, A0, S)
    worst = 0.0
    steps = 0
    while t < b:
        h = min(h, b - t)
        if b - t - h < 1e-13 * max(1.0, abs(b)):
            h = b - t
        if h < 1e-14 * max(1.0, abs(t)):
            raise StepSizeUnderflow(f"step size underflow at t = {t:.17g}")
        As = op.evaluate_piece(k, t + _C[1:] * h)  # stages 2..7
        for s in range(1, 7):
            stage = S + h * np.tensordot(_A_ROWS[s], K[:s], axes=1)
            K[s] = _rhs(eps, As[s - 1], stage)
        S5 = stage  # the last stage is taken at the 5th-order solution (FSAL)
        err = h * np.tensordot(_E, K, axes=1)
        ratio = float(np.max(np.abs(err) / (tol * (1.0 + np.abs(S5)))))
        if not np.isfinite(ratio):
            if not np.all(np.isfinite(S5)):
                raise NumericalError(f"solution overflow near t = {t:.6g}")
            ratio = 1e10
        if ratio <= 1.0:
            t = t + h
            S = S5
            K[0] = K[6]
            worst = max(worst, float(np.max(np.abs(err[:, 0]))))
            steps += 1
        fac = MAX_FACTOR if ratio == 0 else min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * ratio ** -0.2))
        if ratio > 1.0:
            fac = min(fac, 1.0)
        h = h * fac
    return S, h, worst, steps


def _expm_piece(A, dt, eps, S):
    m, c, n, _ = S.shape
    if c == 1:
        E = scipy.linalg.expm(eps[:, None, None] * (A * dt))
        return E[:, None] @ S
    blk = np.zeros((m, 2 * n, 2 * n), dtype=complex)
    blk[:, :n, :n] = eps[:, None, None] * (A * dt)
    blk[:, n:, n:] = blk[:, :n, :n]
    blk[:, :n, n:] = A * dt
    F = scipy.linalg.expm(blk)
    E, D = F[:, :n, :n], F[:, :n, n:]  # D = d/deps expm(eps A dt)
    out = np.empty_like(S)
    out[:, 0] = E @ S[:, 0]
    out[:, 1] = E @ S[:, 1] + D @ S[:, 0]
    return out


def propagate_batch(op: TimeDependentOperator, t: float, eps, tol: float = DEFAULT_TOL,
                    variational: bool = False) -> BatchResult:
    """Propagate ``Y' = eps A Y`` to time ``t`` for every ``eps`` in the array."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if tol < 1e-13:
        raise ValueError("tol must be >= 1e-13")
    if t > op.t_max:
        raise ValueError(f"t = {t} beyond the last piece")
    eps = np.atleast_1d(np.asarray(eps, dtype=complex)).ravel()
    n = op.n
    S = np.zeros((eps.size, 2 if variational else 1, n, n), dtype=complex)
    S[:, 0] = np.eye(n)
    h = None
    worst = 0.0
    steps = 0
    for k, p in enumerate(op.pieces):
        a, b = p.t_start, min(p.t_end, t)
        if b <= a:
            break
        if p.constant:
            with np.errstate(over="raise", invalid="raise"):
                try:
                    S = _expm_piece(op.evaluate_piece(k, a), b - a, eps, S)
                except FloatingPointError:
                    raise NumericalError("matrix exponential overflow") from None
            steps += 1
        else:
            S, h, w, st = _dopri_piece(op, k, a, b, eps, S, tol, h)
            worst = max(worst, w)
            steps += st
    if not np.all(np.isfinite(S)):
        raise NumericalError("non-finite propagator")
    Z = S[:, 1] if variational else None
    return BatchResult(S[:, 0], eps, float(t), worst, Z, steps)


def propagate(op: TimeDependentOperator, t: float, eps: complex = 1.0,
              tol: float = DEFAULT_TOL) -> PropagationResult:
    """``Y(t; eps)`` with adaptive DOPRI5 (exact ``expm`` on constant pieces)."""
    r = propagate_batch(op, t, [eps], tol)
    return PropagationResult(r.Y[0], r.t, complex(eps), r.est_error, None, r.steps)


def propagate_variational(op: TimeDependentOperator, t: float, eps: complex = 1.0,
                          tol: float = DEFAULT_TOL) -> PropagationResult:
    """As :func:`propagate`, also integrating ``Z = dY/deps``."""
    r = propagate_batch(op, t, [eps], tol, variational=True)
    return PropagationResult(r.Y[0], r.t, complex(eps), r.est_error, r.Z[0], r.steps)
