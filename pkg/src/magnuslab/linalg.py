"""Dense complex matrix kernel.

Matrices are plain ``numpy`` arrays of dtype ``complex128`` with shape
``(n, n)``; most routines also accept a stack ``(..., n, n)``. Exponential
and Schur-based logarithm are delegated to :mod:`scipy.linalg`; the
contour-integral logarithm, the discriminant, and the Jordan-block estimate
are implemented here.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import (
    BranchCutError,
    DimensionError,
    EigenvalueError,
    NumericalError,
    SingularMatrixError,
)

N_MAX = 16

_GL64 = np.polynomial.legendre.leggauss(64)


def as_matrix(A, allow_stack=False) -> np.ndarray:
    """Return ``A`` as a finite complex square matrix (or stack of them)."""
    M = np.asarray(A, dtype=complex)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2] or M.shape[-1] < 1:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    if M.ndim > 2 and not allow_stack:
        raise DimensionError(f"expected a single matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericalError("matrix has non-finite entries")
    return M


def _check_same(A, B):
    if A.shape[-2:] != B.shape[-2:]:
        raise DimensionError(f"dimension mismatch: {A.shape[-2:]} vs {B.shape[-2:]}")


def matmul(A, B) -> np.ndarray:
    A = as_matrix(A, allow_stack=True)
    B = as_matrix(B, allow_stack=True)
    _check_same(A, B)
    return A @ B


def commutator(A, B) -> np.ndarray:
    """``[A, B] = AB - BA``; broadcasts over leading axes."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    _check_same(A, B)
    return A @ B - B @ A


def spectral_norm(A) -> float:
    """Largest singular value, as the square root of the top eigenvalue of A*A."""
    A = as_matrix(A, allow_stack=True)
    gram = np.swapaxes(A.conj(), -1, -2) @ A
    top = np.linalg.eigvalsh(gram)[..., -1]
    out = np.sqrt(np.maximum(top, 0.0))
    return float(out) if out.ndim == 0 else out


def _eig2(A: np.ndarray) -> np.ndarray:
    # m +- sqrt(((a-d)/2)^2 + bc) avoids the cancellation in tr^2 - 4 det
    a, b = A[..., 0, 0], A[..., 0, 1]
    c, d = A[..., 1, 0], A[..., 1, 1]
    m = 0.5 * (a + d)
    s = np.sqrt(0.25 * (a - d) ** 2 + b * c)
    return np.stack([m + s, m - s], axis=-1)


def eigenvalues(A, n_max: int = N_MAX, check: bool = True) -> np.ndarray:
    """Eigenvalues with algebraic multiplicity.

    Closed-form quadratic for ``n == 2``; LAPACK Hessenberg/QR otherwise.
    Accepts a stack of matrices.
    """
    A = as_matrix(A, allow_stack=True)
    n = A.shape[-1]
    if n > n_max:
        raise DimensionError(f"n = {n} exceeds n_max = {n_max}")
    if n == 1:
        return A[..., 0, :].copy()
    if n == 2:
        lam = _eig2(A)
    else:
        try:
            lam = np.linalg.eigvals(A)
        except np.linalg.LinAlgError as exc:
            raise EigenvalueError(f"QR iteration did not converge: {exc}") from exc
    if check:
        _check_eig_residual(A, lam)
    return lam


def _check_eig_residual(A, lam):
    # smallest singular value of (A - rho I) relative to ||A|| must be tiny
    n = A.shape[-1]
    scale = np.maximum(spectral_norm(A), 1.0)
    eye = np.eye(n)
    shifted = A[..., None, :, :] - lam[..., :, None, None] * eye
    smin = np.linalg.svd(shifted, compute_uv=False)[..., -1]
    bad = smin > 1e-6 * np.asarray(scale)[..., None]
    if np.any(bad):
        raise EigenvalueError("eigenvalue residual check failed")


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    diagonalizable: bool
    transform: Optional[np.ndarray]
    condition: float


def eigendecomposition(A, cond_max: float = 1e6) -> EigenDecomposition:
    A = as_matrix(A)
    lam, V = np.linalg.eig(A)
    cond = float(np.linalg.cond(V))
    ok = bool(np.isfinite(cond) and cond < cond_max)
    return EigenDecomposition(lam, ok, V if ok else None, cond)


def expm(A) -> np.ndarray:
    """Matrix exponential (scaling and squaring with Pade approximant)."""
    A = as_matrix(A, allow_stack=True)
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(A)
    if not np.all(np.isfinite(E)):
        raise NumericalError("matrix exponential overflowed")
    return E


def _branch_check(lam, Y):
    scale = max(spectral_norm(Y), 1.0)
    for z in lam:
        if abs(z) <= 1e-14 * scale:
            raise SingularMatrixError("matrix is singular; logarithm undefined")
        if z.real < 0 and abs(z.imag) <= 1e-14 * abs(z):
            raise BranchCutError(
                f"eigenvalue {z} lies on the closed negative real axis", eigenvalue=z
            )


def logm_principal(Y, cond_max: float = 1e6) -> np.ndarray:
    """Principal matrix logarithm.

    Uses the eigendecomposition when the eigenvector matrix is well
    conditioned (``cond < cond_max``), otherwise the Schur-based inverse
    scaling-and-squaring algorithm.
    """
    Y = as_matrix(Y)
    n = Y.shape[0]
    lam = eigenvalues(Y, check=False) if n <= N_MAX else np.linalg.eigvals(Y)
    _branch_check(lam, Y)
    if n == 1:
        return np.log(Y)
    if np.allclose(Y, np.diag(np.diag(Y)), rtol=0, atol=0):
        return np.diag(np.log(np.diag(Y)))
    dec = eigendecomposition(Y, cond_max)
    if dec.diagonalizable:
        V = dec.transform
        L = V @ np.diag(np.log(dec.eigenvalues)) @ np.linalg.inv(V)
    else:
        L = scipy.linalg.logm(Y, disp=False)[0]
    if not np.all(np.isfinite(L)):
        raise NumericalError("logarithm produced non-finite entries")
    return np.asarray(L, dtype=complex)


def _square_edges(g):
    # counterclockwise boundary of [-g, g] x i[-g, g] in the log plane
    c = np.array([-g - 1j * g, g - 1j * g, g + 1j * g, -g + 1j * g])
    return [(c[k], c[(k + 1) % 4]) for k in range(4)]


def _contour_sum(Y, g, panels):
    n = Y.shape[0]
    x, w = _GL64
    total = np.zeros((n, n), dtype=complex)
    eye = np.eye(n)
    for a, b in _square_edges(g):
        edges = np.linspace(0.0, 1.0, panels + 1)
        lo, hi = edges[:-1, None], edges[1:, None]
        s = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
        ws = (0.5 * (hi - lo) * w).ravel()
        u = a + (b - a) * s
        z = np.exp(u)
        R = np.linalg.solve(z[:, None, None] * eye - Y, np.broadcast_to(eye, (len(z), n, n)))
        coef = ws * u * z * (b - a)
        total += np.tensordot(coef, R, axes=(0, 0))
    return total / (2j * np.pi)


def logm_contour(Y, gamma: float, tol: float = 1e-10, max_panels: int = 256) -> np.ndarray:
    """Logarithm as the resolvent integral of ``log z`` around the sector-annulus.

    The contour is the boundary of ``{e^-g <= |z| <= e^g, |arg z| <= g}`` with
    ``g = (gamma + pi) / 2``, traversed counterclockwise. Composite
    Gauss-Legendre (64 nodes per panel) with panel doubling until the change
    drops below ``tol``.
    """
    Y = as_matrix(Y)
    if not 0 <= gamma < np.pi:
        raise ValueError("gamma must lie in [0, pi)")
    g = 0.5 * (gamma + np.pi)
    lam = np.linalg.eigvals(Y)
    for z in lam:
        if z == 0:
            raise SingularMatrixError("matrix is singular; logarithm undefined")
        u = np.log(z)
        if abs(u.real) >= g or abs(u.imag) >= g:
            raise BranchCutError(f"eigenvalue {z} lies on or outside the contour", eigenvalue=z)
    panels = 1
    prev = _contour_sum(Y, g, panels)
    while panels < max_panels:
        panels *= 2
        cur = _contour_sum(Y, g, panels)
        if np.max(np.abs(cur - prev)) < tol * max(1.0, np.max(np.abs(cur))):
            return cur
        prev = cur
    raise NumericalError("contour quadrature did not converge")


def char_poly(A) -> np.ndarray:
    """Coefficients ``c[0..n]`` of ``det(rho I - A) = sum c_k rho^k`` (``c_n = 1``).

    Faddeev-LeVerrier recursion; broadcasts over leading axes.
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[-1]
    c = np.zeros(A.shape[:-2] + (n + 1,), dtype=complex)
    c[..., n] = 1.0
    eye = np.eye(n)
    M = np.zeros_like(A)
    for k in range(1, n + 1):
        M = A @ M + c[..., n - k + 1, None, None] * eye
        c[..., n - k] = -np.trace(A @ M, axis1=-2, axis2=-1) / k
    return c


def char_poly_derivative(A, dA):
    """Directional derivative of :func:`char_poly` along ``dA``."""
    A = np.asarray(A, dtype=complex)
    dA = np.asarray(dA, dtype=complex)
    n = A.shape[-1]
    c = np.zeros(A.shape[:-2] + (n + 1,), dtype=complex)
    dc = np.zeros_like(c)
    c[..., n] = 1.0
    eye = np.eye(n)
    M = np.zeros_like(A)
    dM = np.zeros_like(A)
    for k in range(1, n + 1):
        M, dM = (
            A @ M + c[..., n - k + 1, None, None] * eye,
            dA @ M + A @ dM + dc[..., n - k + 1, None, None] * eye,
        )
        c[..., n - k] = -np.trace(A @ M, axis1=-2, axis2=-1) / k
        dc[..., n - k] = -np.trace(dA @ M + A @ dM, axis1=-2, axis2=-1) / k
    return c, dc


def _sylvester(p, q):
    """Sylvester matrix of polynomials given high-to-low coefficient arrays."""
    m, k = p.shape[-1] - 1, q.shape[-1] - 1
    size = m + k
    S = np.zeros(p.shape[:-1] + (size, size), dtype=complex)
    for r in range(k):
        S[..., r, r:r + m + 1] = p
    for r in range(m):
        S[..., k + r, r:r + k + 1] = q
    return S


def disc_from_coeffs(c) -> np.ndarray:
    """Discriminant of the monic polynomial with low-to-high coefficients ``c``."""
    c = np.asarray(c, dtype=complex)
    n = c.shape[-1] - 1
    if n <= 1:
        return np.ones(c.shape[:-1], dtype=complex)
    p = c[..., ::-1]
    dp = p[..., :-1] * np.arange(n, 0, -1)
    sign = (-1) ** (n * (n - 1) // 2)
    return sign * np.linalg.det(_sylvester(p, dp)) / p[..., 0]


def discriminant(A):
    """Discriminant of ``det(A - rho I)`` as a polynomial in ``rho``.

    ``n == 2`` uses ``(a - d)^2 + 4bc`` (equal to ``tr^2 - 4 det`` without the
    cancellation); larger ``n`` go through the Sylvester resultant of the
    characteristic polynomial and its derivative.
    """
    A = as_matrix(A, allow_stack=True)
    n = A.shape[-1]
    if n > N_MAX:
        raise DimensionError(f"n = {n} exceeds n_max = {N_MAX}")
    if n == 1:
        out = np.ones(A.shape[:-2], dtype=complex)
    elif n == 2:
        a, b = A[..., 0, 0], A[..., 0, 1]
        c, d = A[..., 1, 0], A[..., 1, 1]
        out = (a - d) ** 2 + 4 * b * c
    else:
        out = disc_from_coeffs(char_poly(A))
    return complex(out) if np.ndim(out) == 0 else out


def discriminant_derivative(A, dA):
    """Derivative of :func:`discriminant` along the direction ``dA``.

    For ``n >= 3`` the chain rule runs through the characteristic-polynomial
    coefficients; the outer derivative of the (polynomial) discriminant with
    respect to the coefficients is taken exactly by a discrete Cauchy
    integral with more nodes than its degree.
    """
    A = np.asarray(A, dtype=complex)
    dA = np.asarray(dA, dtype=complex)
    n = A.shape[-1]
    if n == 1:
        out = np.zeros(A.shape[:-2], dtype=complex)
    elif n == 2:
        a, b = A[..., 0, 0], A[..., 0, 1]
        c, d = A[..., 1, 0], A[..., 1, 1]
        da, db = dA[..., 0, 0], dA[..., 0, 1]
        dc_, dd = dA[..., 1, 0], dA[..., 1, 1]
        out = 2 * (a - d) * (da - dd) + 4 * (db * c + b * dc_)
    else:
        c, dc = char_poly_derivative(A, dA)
        N = 2 * n + 2
        roots = np.exp(2j * np.pi * np.arange(N) / N)
        cmax = np.max(np.abs(c), axis=-1, keepdims=True)
        dmax = np.max(np.abs(dc), axis=-1, keepdims=True)
        r = np.where(dmax > 0, cmax / np.where(dmax > 0, dmax, 1.0), 1.0)
        h = r[..., None, :] * roots[:, None]
        vals = disc_from_coeffs(c[..., None, :] + h * dc[..., None, :])
        out = np.sum(vals * roots.conj(), axis=-1) / (N * r[..., 0])
    return complex(out) if np.ndim(out) == 0 else out


def matrix_rank(M, threshold: float) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > threshold))


def max_jordan_block(Y, rho0, tol: float = 1e-8, threshold: Optional[float] = None) -> int:
    """Largest Jordan block size for the eigenvalue ``rho0`` of ``Y``.

    ``q`` is the smallest ``k`` with ``rank (Y - rho0)^k == rank (Y - rho0)^(k+1)``;
    singular values at or below ``max(tol * ||Y||, threshold)`` count as zero.
    """
    Y = as_matrix(Y)
    n = Y.shape[0]
    cut = tol * spectral_norm(Y)
    if threshold is not None:
        cut = max(cut, threshold)
    M = Y - rho0 * np.eye(n)
    ranks = [n]
    P = np.eye(n, dtype=complex)
    for _ in range(n + 1):
        P = P @ M
        ranks.append(matrix_rank(P, cut))
    if ranks[1] == n:
        raise EigenvalueError(f"{rho0} is not an eigenvalue within tolerance {cut:.3g}")
    for k in range(1, n + 1):
        if ranks[k] == ranks[k + 1]:
            return k
    return n


def angle(x, y) -> float:
    """Real angle in ``[0, pi]`` from ``cos a = Re<x, y> / (|x| |y|)``."""
    x = np.asarray(x, dtype=complex).ravel()
    y = np.asarray(y, dtype=complex).ravel()
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise ValueError("angle undefined for a zero vector")
    cos = np.real(np.vdot(x, y)) / (nx * ny)
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))
