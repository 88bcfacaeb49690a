"""Rotations of gradient graphs in C^n = R^n x R^n.

A vector of angles beta rotates each (x_i, y_i) coordinate plane by beta_i.
Applied to the graph of Du this yields, wherever the Jacobian
J = cos S + sin S D^2u is invertible, the graph of the gradient of a new
potential whose Hessian is tan(arctan D^2u - S).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import tolerances as tol
from .errors import (JacobianBoundViolated, SingularHessian, SingularJacobian,
                     SubcriticalPhase, TargetOutsideImage)
from .fields import Grid, ScalarField, gradient
from .geometry import _full_hessian
from .spectral import arctan_matrix, critical_phase, eig_sym, symmetrize

HALF_PI = np.pi / 2


def _snap_trig(beta):
    # exact zeros/ones at multiples of pi/2 keep beta* algebra exact
    beta = np.asarray(beta, dtype=float)
    c = np.cos(beta)
    s = np.sin(beta)
    q = beta / HALF_PI
    on_axis = np.abs(q - np.round(q)) < 1e-15
    k = np.round(q).astype(int) % 4
    c = np.where(on_axis, np.array([1.0, 0.0, -1.0, 0.0])[k], c)
    s = np.where(on_axis, np.array([0.0, 1.0, 0.0, -1.0])[k], s)
    return c, s


@dataclass(frozen=True)
class RotationSpec:
    """Per-plane rotation angles beta (radians)."""

    beta: tuple

    def __post_init__(self):
        b = tuple(float(a) for a in np.atleast_1d(self.beta))
        if any(abs(a) > HALF_PI + 1e-15 for a in b):
            raise ValueError("rotation angles must lie in [-pi/2, pi/2]")
        object.__setattr__(self, "beta", b)

    @classmethod
    def uniform(cls, angle: float, n: int) -> "RotationSpec":
        return cls((angle,) * n)

    @property
    def n(self) -> int:
        return len(self.beta)

    @property
    def S(self) -> np.ndarray:
        return np.diag(self.beta)

    @property
    def cos(self) -> np.ndarray:
        return _snap_trig(self.beta)[0]

    @property
    def sin(self) -> np.ndarray:
        return _snap_trig(self.beta)[1]

    @property
    def total(self) -> float:
        return float(sum(self.beta))

    def __add__(self, other: "RotationSpec") -> "RotationSpec":
        return RotationSpec(tuple(a + b for a, b in zip(self.beta, other.beta)))


def jacobian(M, spec: RotationSpec) -> np.ndarray:
    """J = cos S + sin S M (row i scaled by sin beta_i)."""
    M = np.asarray(M, dtype=float)
    return np.diag(spec.cos) + spec.sin[:, None] * M


def rotate_hessian(M, spec: RotationSpec) -> np.ndarray:
    """(-sin S + cos S M)(cos S + sin S M)^{-1}; works on stacks of matrices.

    Raises
    ------
    SingularJacobian
        If the smallest singular value of J drops to ``SINGULAR_JACOBIAN``.
    """
    M = np.asarray(M, dtype=float)
    Jm = jacobian(M, spec)
    smin = np.linalg.svd(Jm, compute_uv=False)[..., -1]
    if np.any(smin <= tol.SINGULAR_JACOBIAN):
        raise SingularJacobian(f"min singular value of J is {np.min(smin):.3e}")
    Jbar = -np.diag(spec.sin) + spec.cos[:, None] * M
    # Jbar J^{-1} = (J^{-T} Jbar^T)^T
    return np.swapaxes(np.linalg.solve(np.swapaxes(Jm, -1, -2), np.swapaxes(Jbar, -1, -2)), -1, -2)


def phase_shift_verifiable(M, spec: RotationSpec) -> bool:
    """True if arctan M - S has all eigenvalues strictly inside (-pi/2, pi/2).

    Outside that range the rotated Hessian still exists but arctan of it
    differs from arctan M - S by a multiple of pi in some eigen-direction.
    """
    A = arctan_matrix(M) - np.diag(spec.beta)
    lam = eig_sym(A).lam
    return bool(np.all(np.abs(lam) < HALF_PI - 1e-12))


def beta_star(n: int) -> RotationSpec:
    """(pi/2, ..., pi/2, -pi/2)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return RotationSpec((HALF_PI,) * (n - 1) + (-HALF_PI,))


def beta_star_eigen_inversion(M) -> np.ndarray:
    """Eigenvalues of the beta*-rotated Hessian, i.e. {-1/lam_i}, sorted descending."""
    lam = eig_sym(M).lam
    if np.any(np.abs(lam) <= tol.SINGULAR_JACOBIAN):
        raise SingularHessian(f"eigenvalue {lam[np.argmin(np.abs(lam))]:.3e} too close to 0")
    return np.sort(-1.0 / lam)[::-1]


def beta_star_matrix(M) -> np.ndarray:
    """-I* M^{-1} I* with I* = diag(1, ..., 1, -1)."""
    M = np.asarray(M, dtype=float)
    n = M.shape[-1]
    Istar = np.ones(n)
    Istar[-1] = -1
    return -Istar[:, None] * np.linalg.inv(M) * Istar[None, :]


@dataclass(frozen=True)
class LewyYuan:
    """delta = inf theta - (n-2) pi/2 and sigma = cot(delta/n)."""

    delta: float
    sigma: float
    convex: bool

    def rotation(self, n: int) -> RotationSpec:
        return RotationSpec.uniform(self.delta / n, n)


def lewy_yuan_sigma(theta, n: int, grid: Grid | None = None) -> LewyYuan:
    """delta and sigma for a phase (a PhaseSpec with a grid, or the number inf theta).

    ``sigma`` is ``inf`` when delta vanishes; ``convex`` flags delta >= pi/2,
    where u is already convex and no rotation is needed.
    """
    if hasattr(theta, "bounds"):
        if grid is None:
            raise ValueError("a grid is required to take inf of a phase field")
        inf_theta = theta.bounds(grid)[0]
    else:
        inf_theta = float(np.min(theta))
    delta = inf_theta - critical_phase(n)
    if delta < -tol.CRITICAL_PHASE:
        raise SubcriticalPhase(f"inf theta is {-delta:.3e} below the critical value")
    if abs(delta) <= tol.CRITICAL_PHASE:
        return LewyYuan(0.0, np.inf, False)
    return LewyYuan(float(delta), float(1.0 / np.tan(delta / n)), bool(delta >= HALF_PI))


def downward_rotation(inf_theta: float, n: int) -> RotationSpec:
    """Uniform rotation by delta/n, taking inf of the phase to (n-2) pi/2."""
    ly = lewy_yuan_sigma(inf_theta, n)
    return ly.rotation(n)


@dataclass
class RotatedGraph:
    """Forward images of a sampled graph plus Du-bar resampled on a target grid.

    ``source_of_target[idx]`` is the source point mapped onto target node idx.
    """

    source_grid: Grid
    spec: RotationSpec
    xbar: np.ndarray
    ybar: np.ndarray
    target_grid: Grid
    ubar_gradient: ScalarField
    source_of_target: np.ndarray
    jacobian_min: float

    def ubar_hessian(self) -> np.ndarray:
        """Second-order differences of the resampled gradient."""
        g = self.target_grid
        D = self.ubar_gradient.values
        H = np.stack([np.stack(np.gradient(D[..., i], *g.h, edge_order=2), axis=-1) for i in range(g.n)], axis=-2)
        return symmetrize(0.5 * (H + np.swapaxes(H, -1, -2)))


class _InverseMap:
    def __init__(self, grid: Grid, xbar: np.ndarray, Jm: np.ndarray):
        self.grid = grid
        self.fx = RegularGridInterpolator(grid.axes, xbar, method="linear")
        self.fJ = RegularGridInterpolator(grid.axes, Jm.reshape(grid.shape + (-1,)), method="linear")
        c = grid.centre_index
        self.x0 = grid.points[c]
        self.X0 = xbar[c]
        self.J0 = Jm[c]
        self.lo = np.array(grid.lo)
        self.hi = np.array(grid.hi)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        n = self.grid.n
        X = np.atleast_2d(X)
        x = self.x0 + np.linalg.solve(self.J0, (X - self.X0).T).T
        x = np.clip(x, self.lo, self.hi)
        for _ in range(tol.INVERSE_LOOKUP_MAXITER):
            r = self.fx(x) - X
            if np.max(np.abs(r)) <= tol.INVERSE_LOOKUP:
                return x
            Jx = self.fJ(x).reshape(-1, n, n)
            x = np.clip(x - np.linalg.solve(Jx, r[..., None])[..., 0], self.lo, self.hi)
        r = np.max(np.abs(self.fx(x) - X), axis=-1)
        bad = r > tol.INVERSE_LOOKUP
        if np.any(bad):
            raise TargetOutsideImage(f"{int(bad.sum())} target nodes are not in the image (worst miss {r.max():.2e})")
        return x


def inscribed_target_grid(source: Grid, xbar: np.ndarray, resolution=None) -> Grid:
    """Largest axis box whose faces stay inside the image of the source faces."""
    n = source.n
    lo, hi = [], []
    for ax in range(n):
        first = np.take(xbar[..., ax], 0, axis=ax)
        last = np.take(xbar[..., ax], -1, axis=ax)
        lo.append(float(first.max()))
        hi.append(float(last.min()))
    lo, hi = np.array(lo), np.array(hi)
    pad = 1e-9 * (hi - lo)
    res = source.resolution if resolution is None else resolution
    return Grid(tuple(lo + pad), tuple(hi - pad), res)


def rotate_graph(u: ScalarField, spec: RotationSpec, target_grid: Grid | None = None) -> RotatedGraph:
    """Rotate the graph of Du and resample Du-bar on ``target_grid``.

    The Jacobian must satisfy J >= (1/3) I in the sense of its symmetric
    part at every node; this is what makes x-bar invertible and the
    fixed-point inverse lookup contractive.
    """
    g = u.grid
    if spec.n != g.n:
        raise ValueError("rotation and grid dimensions differ")
    x = g.points
    Du = gradient(u)
    M = _full_hessian(u)
    c, s = spec.cos, spec.sin
    xbar = c * x + s * Du
    ybar = -s * x + c * Du
    Jm = np.diag(c) + s[:, None] * M
    jmin = float(np.min(np.linalg.eigvalsh(0.5 * (Jm + np.swapaxes(Jm, -1, -2)))))
    if jmin < tol.JACOBIAN_LOWER:
        raise JacobianBoundViolated(f"Jacobian lower bound {jmin:.4f} < {tol.JACOBIAN_LOWER:.4f}")
    if target_grid is None:
        target_grid = inscribed_target_grid(g, xbar)
    inv = _InverseMap(g, xbar, Jm)
    X = target_grid.points.reshape(-1, g.n)
    src = inv(X)
    fy = RegularGridInterpolator(g.axes, ybar, method="linear")
    yb = fy(src).reshape(target_grid.shape + (g.n,))
    return RotatedGraph(g, spec, xbar, ybar, target_grid, ScalarField(target_grid, yb),
                        src.reshape(target_grid.shape + (g.n,)), jmin)
