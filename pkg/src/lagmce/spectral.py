"""Small symmetric eigenproblems and the scalar functions built on them.

Everything here works on stacks of matrices: an input of shape ``(..., n, n)``
is decomposed matrix by matrix with a vectorised cyclic Jacobi iteration, so a
whole grid of Hessians (or a million random samples) is handled in one call.
Eigenvalues are always returned in descending order, matching the convention
lambda_1 >= ... >= lambda_n.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import tolerances as tol
from .errors import DegenerateSpectrum, PhaseOutOfRange


@dataclass(frozen=True)
class Spectrum:
    """Descending eigenvalues ``lam`` and orthonormal eigenvectors ``gamma``.

    ``gamma[..., :, i]`` is the eigenvector of ``lam[..., i]``.
    """

    lam: np.ndarray
    gamma: np.ndarray

    @property
    def n(self) -> int:
        return self.lam.shape[-1]

    @property
    def gap(self) -> np.ndarray:
        """Smallest gap between consecutive eigenvalues (inf when n == 1)."""
        if self.n < 2:
            return np.full(self.lam.shape[:-1], np.inf)
        return np.min(self.lam[..., :-1] - self.lam[..., 1:], axis=-1)


def symmetrize(M) -> np.ndarray:
    """Return the symmetric matrix stored in the upper triangle of ``M``."""
    M = np.asarray(M, dtype=float)
    upper = np.triu(M)
    return upper + np.swapaxes(np.triu(M, 1), -1, -2)


def _jacobi(A: np.ndarray, max_sweeps: int = 60):
    """Cyclic Jacobi on a (B, n, n) stack. Returns (diag, V)."""
    B, n, _ = A.shape
    A = A.copy()
    V = np.broadcast_to(np.eye(n), (B, n, n)).copy()
    if n == 1:
        return A[:, 0, :1].copy(), V
    scale = np.sqrt(np.sum(A * A, axis=(1, 2)))
    iu = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(A[:, iu[0], iu[1]] ** 2, axis=1))
        active = off >= tol.JACOBI_OFFDIAG * scale
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        sub = A[idx]
        subV = V[idx]
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = sub[:, p, q]
                nz = apq != 0.0
                if not nz.any():
                    continue
                app = sub[:, p, p]
                aqq = sub[:, q, q]
                safe = np.where(nz, apq, 1.0)
                theta = (aqq - app) / (2.0 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
                t = np.where(theta == 0.0, 1.0, t)
                t = np.where(nz, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                c_ = c[:, None]
                s_ = s[:, None]
                colp = sub[:, :, p].copy()
                colq = sub[:, :, q].copy()
                sub[:, :, p] = c_ * colp - s_ * colq
                sub[:, :, q] = s_ * colp + c_ * colq
                rowp = sub[:, p, :].copy()
                rowq = sub[:, q, :].copy()
                sub[:, p, :] = c_ * rowp - s_ * rowq
                sub[:, q, :] = s_ * rowp + c_ * rowq
                sub[:, p, q] = 0.0
                sub[:, q, p] = 0.0
                vp = subV[:, :, p].copy()
                vq = subV[:, :, q].copy()
                subV[:, :, p] = c_ * vp - s_ * vq
                subV[:, :, q] = s_ * vp + c_ * vq
        A[idx] = sub
        V[idx] = subV
    return np.diagonal(A, axis1=1, axis2=2).copy(), V


def eig_sym(M) -> Spectrum:
    """Eigendecomposition of one symmetric matrix or a stack of them.

    Eigenvalues are sorted descending; each eigenvector's largest-magnitude
    component is made positive so the output is deterministic.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError(f"expected (..., n, n) array, got shape {M.shape}")
    lead = M.shape[:-2]
    n = M.shape[-1]
    A = symmetrize(M).reshape(-1, n, n)
    d, V = _jacobi(A)
    order = np.argsort(-d, axis=1, kind="stable")
    d = np.take_along_axis(d, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    big = np.argmax(np.abs(V), axis=1)
    sign = np.sign(np.take_along_axis(V, big[:, None, :], axis=1))
    sign[sign == 0] = 1.0
    V = V * sign
    return Spectrum(d.reshape(lead + (n,)), V.reshape(lead + (n, n)))


def _eigenvalues(s) -> np.ndarray:
    return s.lam if isinstance(s, Spectrum) else np.asarray(s, dtype=float)


def phase(s) -> np.ndarray:
    """Sum of arctangents of the eigenvalues (accepts a Spectrum or raw eigenvalues)."""
    out = np.sum(np.arctan(_eigenvalues(s)), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _matrix_function(M, fn) -> np.ndarray:
    sp = eig_sym(M)
    g = sp.gamma
    return np.einsum("...ik,...k,...jk->...ij", g, fn(sp.lam), g)


def arctan_matrix(M) -> np.ndarray:
    """Q arctan(Xi) Q^T for M = Q Xi Q^T."""
    return _matrix_function(M, np.arctan)


def tan_matrix(M) -> np.ndarray:
    """Matrix tangent; eigenvalues of ``M`` must avoid odd multiples of pi/2."""
    return _matrix_function(M, np.tan)


def sigma_all(lam) -> np.ndarray:
    """All elementary symmetric polynomials sigma_0..sigma_n along the last axis."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    e = np.zeros(lam.shape[:-1] + (n + 1,))
    e[..., 0] = 1.0
    for m in range(n):
        x = lam[..., m]
        for k in range(m + 1, 0, -1):
            e[..., k] = e[..., k] + x * e[..., k - 1]
    return e


def sigma_k(lam, k: int):
    """k-th elementary symmetric polynomial via the one-term-at-a-time recurrence."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside 0..{n}")
    out = sigma_all(lam)[..., k]
    return float(out) if np.ndim(out) == 0 else out


def dsigma_k(lam, k: int, i: int):
    """Partial derivative of sigma_k with respect to lambda_i (0-based i)."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    if not 0 <= i < n:
        raise IndexError(f"i={i} outside 0..{n - 1}")
    return sigma_k(np.delete(lam, i, axis=-1), k - 1)


class PhaseRegime(str, enum.Enum):
    SUPERCRITICAL = "supercritical"
    CRITICAL = "critical"
    SUBCRITICAL = "subcritical"


@dataclass(frozen=True)
class PhaseClass:
    theta: float
    n: int
    regime: PhaseRegime


def critical_phase(n: int) -> float:
    return (n - 2) * np.pi / 2


def classify_phase(theta: float, n: int) -> PhaseClass:
    a = abs(float(theta))
    if a >= n * np.pi / 2:
        raise PhaseOutOfRange(f"|theta|={a} >= n*pi/2 for n={n}")
    c = critical_phase(n)
    if abs(a - c) <= tol.CRITICAL_PHASE:
        regime = PhaseRegime.CRITICAL
    elif a > c:
        regime = PhaseRegime.SUPERCRITICAL
    else:
        regime = PhaseRegime.SUBCRITICAL
    return PhaseClass(float(theta), n, regime)


def eigen_derivative(M, dM):
    """First-order perturbation of eigenpairs of ``M`` in direction ``dM``.

    Returns ``(dlam, dgamma)`` with
    dlam_l = <g_l, dM g_l> and dg_l = sum_{i != l} <g_i, dM g_l> / (lam_l - lam_i) g_i.

    Raises
    ------
    DegenerateSpectrum
        If two eigenvalues are within ``DEGENERATE_GAP``; the formulas need a
        simple spectrum.
    """
    sp = M if isinstance(M, Spectrum) else eig_sym(M)
    if np.any(sp.gap <= tol.DEGENERATE_GAP):
        raise DegenerateSpectrum(f"eigenvalue gap {np.min(sp.gap):.3e} <= {tol.DEGENERATE_GAP}")
    g = sp.gamma
    C = np.einsum("...ai,...ab,...bl->...il", g, symmetrize(dM), g)
    dlam = np.diagonal(C, axis1=-2, axis2=-1).copy()
    diff = sp.lam[..., None, :] - sp.lam[..., :, None]  # [i, l] = lam_l - lam_i
    n = sp.n
    offdiag = ~np.eye(n, dtype=bool)
    coef = np.where(offdiag, C / np.where(offdiag, diff, 1.0), 0.0)
    dgamma = np.einsum("...ai,...il->...al", g, coef)
    return dlam, dgamma


def sample_supercritical(n: int, size: int, rng: np.random.Generator, target: float | None = None):
    """Random eigenvalue tuples with sum(arctan) >= target, sorted descending.

    Angles are drawn one at a time, each uniformly on the part of (-pi/2, pi/2)
    that still leaves the remaining angles room to reach ``target``.  This keeps
    the acceptance rate at 1 where naive rejection collapses for n >= 5.
    """
    if target is None:
        target = critical_phase(n)
    if not -n * np.pi / 2 <= target < n * np.pi / 2:
        raise ValueError("target must lie in [-n pi/2, n pi/2)")
    half = np.pi / 2
    alpha = np.empty((size, n))
    acc = np.zeros(size)
    for i in range(n):
        remaining = n - i - 1
        lo = np.maximum(-half, target - acc - remaining * half)
        a = rng.uniform(lo, half)
        alpha[:, i] = a
        acc += a
    # keep strictly inside (-pi/2, pi/2) so tan stays finite
    alpha = np.clip(alpha, -half + 1e-12, half - 1e-12)
    lam = np.tan(alpha)
    return -np.sort(-lam, axis=1)
