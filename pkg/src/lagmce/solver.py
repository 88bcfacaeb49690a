"""Damped Newton with phase continuation for tr(arctan D^2u) = theta on a box.

The discrete operator uses the centred second-order Hessian stencil at
interior nodes; boundary nodes carry the Dirichlet data.  Because that
stencil is linear in u, the Newton matrix sum_ij a^{ij} D_ij with
a = (I + (D^2u)^2)^{-1} is the exact derivative of the discrete residual.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import tolerances as T
from .errors import (ContinuationStalled, LinearSolveStalled, LineSearchFailed,
                     PhaseOutOfRange, SubcriticalPhase)
from .fields import Grid, MatrixField, ScalarField, gradient, hessian
from .phase import PhaseSpec
from .spectral import critical_phase

log = logging.getLogger(__name__)


# ------------------------------------------------------------------ problem


@dataclass
class DirichletProblem:
    """tr(arctan D^2u) = theta in the box, u = psi on its faces.

    ``psi`` is a ScalarField on the same grid (only face values are read)
    or a callable on points.
    """

    grid: Grid
    theta: PhaseSpec
    psi: object
    Lambda: float | None = None

    def __post_init__(self):
        if self.theta.n != self.grid.n:
            raise ValueError("phase and grid dimensions differ")
        if callable(self.psi) and not isinstance(self.psi, ScalarField):
            self.psi = ScalarField.from_function(self.grid, self.psi)
        if self.psi.grid != self.grid:
            raise ValueError("boundary data lives on a different grid")
        if self.Lambda is None:
            self.Lambda = self.theta.lipschitz(self.grid)

    @property
    def theta_values(self) -> np.ndarray:
        return self.theta.on_grid(self.grid)

    def validate(self) -> None:
        n = self.grid.n
        th = self.theta_values
        lo, hi = float(th.min()), float(th.max())
        if lo < critical_phase(n) - T.CRITICAL_PHASE:
            raise SubcriticalPhase(f"inf theta = {lo:.6g} is below (n-2)pi/2 = {critical_phase(n):.6g}")
        if hi >= n * np.pi / 2:
            raise PhaseOutOfRange(f"sup theta = {hi:.6g} reaches n pi/2")


@dataclass
class SolveOptions:
    tol: float = T.SOLVE_TOL
    max_newton: int = 50
    dt0: float = T.CONTINUATION_DT0
    dt_min: float = T.CONTINUATION_DT_MIN
    composed: bool = False


@dataclass
class SolveResult:
    u: ScalarField
    residual_sup: float
    newton_iters: int
    continuation_steps: int
    hessian_sup_half: float
    gradient_sup: float
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "residual_sup": self.residual_sup,
            "newton_iters": self.newton_iters,
            "continuation_steps": self.continuation_steps,
            "hessian_sup_half": self.hessian_sup_half,
            "gradient_sup": self.gradient_sup,
            "history": self.history,
        }


# ---------------------------------------------------------------- operators


def _phase_of(M: np.ndarray) -> np.ndarray:
    lam = np.linalg.eigvalsh(M)
    return np.arctan(lam).sum(axis=-1)


def _theta_at(u: ScalarField, theta, composed: bool) -> np.ndarray:
    if isinstance(theta, PhaseSpec):
        pts = gradient(u) if composed else u.grid.points
        return theta.value(pts)
    return np.broadcast_to(np.asarray(theta, dtype=float), u.grid.shape)


def residual(u: ScalarField, theta, composed: bool = False) -> ScalarField:
    """tr(arctan D^2u) - theta at interior nodes, zero on the faces.

    ``theta`` is a PhaseSpec, a nodal array or a number.  With ``composed``
    the phase is read at Du instead of x (experimental).
    """
    g = u.grid
    H = hessian(u)
    out = np.zeros(g.shape)
    inner = H.valid
    out[inner] = _phase_of(H.values[inner]) - _theta_at(u, theta, composed)[inner]
    return ScalarField(g, out)


def linearize(u: ScalarField) -> MatrixField:
    """a = (I + (D^2u)^2)^{-1} at interior nodes."""
    g = u.grid
    H = hessian(u)
    a = np.full(H.values.shape, np.nan)
    M = H.values[H.valid]
    a[H.valid] = np.linalg.inv(np.eye(g.n) + M @ M)
    return MatrixField(g, a, H.valid)


class _Numbering:
    """Interior unknowns numbered in C order."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.mask = grid.interior(1)
        self.index = np.full(grid.shape, -1, dtype=np.int64)
        self.count = int(self.mask.sum())
        self.index[self.mask] = np.arange(self.count)
        self.nodes = np.argwhere(self.mask)

    def neighbour(self, offset) -> np.ndarray:
        idx = self.nodes + np.asarray(offset)
        return self.index[tuple(idx.T)]


def assemble(a: MatrixField, drift: np.ndarray | None = None) -> sp.csr_matrix:
    """Sparse matrix of w -> sum a^{ij} D_ij w (- drift . Dw) on interior nodes, w = 0 on faces."""
    g = a.grid
    num = _Numbering(g)
    n, h = g.n, g.h
    coef = a.values[num.mask]
    rows, cols, vals = [], [], []
    me = np.arange(num.count)

    def add(offset, weight):
        nb = num.neighbour(offset)
        keep = nb >= 0
        rows.append(me[keep])
        cols.append(nb[keep])
        vals.append(weight[keep])

    diag = np.zeros(num.count)
    for i in range(n):
        e = np.zeros(n, dtype=int)
        e[i] = 1
        w = coef[:, i, i] / h[i] ** 2
        add(e, w)
        add(-e, w)
        diag -= 2 * w
        if drift is not None:
            b = drift[num.mask][:, i] / (2 * h[i])
            add(e, -b)
            add(-e, b)
        for j in range(i + 1, n):
            f = np.zeros(n, dtype=int)
            f[j] = 1
            w = 2 * coef[:, i, j] / (4 * h[i] * h[j])
            add(e + f, w)
            add(-e - f, w)
            add(e - f, -w)
            add(-e + f, -w)
    rows.append(me)
    cols.append(me)
    vals.append(diag)
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(num.count, num.count))
    return A.tocsr()


def pcg(A, b: np.ndarray, rtol: float = T.CG_RTOL, maxiter: int | None = None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients for symmetric positive definite A."""
    d = A.diagonal()
    if np.any(d <= 0):
        raise LinearSolveStalled("preconditioner needs a positive diagonal")
    maxiter = 10 * b.size if maxiter is None else maxiter
    x = np.zeros_like(b)
    r = b.copy()
    z = r / d
    p = z.copy()
    rz = r @ z
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return x
    for _ in range(maxiter):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= rtol * bnorm:
            return x
        z = r / d
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise LinearSolveStalled(f"CG did not reach rtol={rtol} in {maxiter} iterations")


def harmonic_extension(grid: Grid, boundary_values: np.ndarray) -> np.ndarray:
    """Discrete harmonic function with the given face values (CG on -Laplacian)."""
    num = _Numbering(grid)
    eye = MatrixField(grid, np.broadcast_to(np.eye(grid.n), grid.shape + (grid.n, grid.n)).copy())
    A = -assemble(eye)
    g = np.where(num.mask, 0.0, boundary_values)
    # move the known face values to the right-hand side
    rhs = np.zeros(grid.shape)
    h = grid.h
    for i in range(grid.n):
        rhs += (np.roll(g, -1, axis=i) + np.roll(g, 1, axis=i)) / h[i] ** 2
    x = pcg(A.tocsr(), rhs[num.mask])
    out = g.copy()
    out[num.mask] = x
    return out


def _sup(F: ScalarField) -> float:
    return float(np.max(np.abs(F.values)))


def newton_step(u: ScalarField, theta, composed: bool = False):
    """One damped Newton step.

    Returns ``(u_next, linear_residual, step_length)``.  The linear system is
    solved by sparse LU; the line search halves s from 1 until the sup-norm
    residual satisfies the Armijo condition.
    """
    g = u.grid
    F = residual(u, theta, composed)
    f0 = _sup(F)
    a = linearize(u)
    if not np.all(np.linalg.eigvalsh(a.values[a.valid]) > 0):
        raise LinearSolveStalled("coefficient field lost positivity")
    drift = None
    if composed and isinstance(theta, PhaseSpec):
        drift = theta.grad(gradient(u))
    A = assemble(a, drift)
    num = _Numbering(g)
    rhs = -F.values[num.mask]
    try:
        w_int = spla.splu(A.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise LinearSolveStalled(str(exc)) from exc
    lin_res = float(np.max(np.abs(A @ w_int - rhs))) if rhs.size else 0.0
    w = np.zeros(g.shape)
    w[num.mask] = w_int
    s = 1.0
    for _ in range(T.ARMIJO_MAX_HALVINGS + 1):
        trial = ScalarField(g, u.values + s * w)
        if _sup(residual(trial, theta, composed)) <= (1 - T.ARMIJO_C * s) * f0:
            return trial, lin_res, s
        s *= 0.5
    raise LineSearchFailed(f"no Armijo step down to s={2 * s:.1e} (residual {f0:.3e})")


def _newton(u: ScalarField, theta, opts: SolveOptions):
    for k in range(opts.max_newton + 1):
        F = _sup(residual(u, theta, opts.composed))
        if F <= opts.tol:
            return u, k, F
        if k == opts.max_newton:
            break
        u, _, _ = newton_step(u, theta, opts.composed)
    raise LineSearchFailed(f"Newton did not converge in {opts.max_newton} iterations (residual {F:.3e})")


def initial_guess(problem: DirichletProblem, theta_const: float) -> ScalarField:
    """Quadratic with constant phase theta_const plus a harmonic correction of the face data."""
    g = problem.grid
    x = g.points - g.centre
    q = 0.5 * np.tan(theta_const / g.n) * np.sum(x * x, axis=-1)
    corr = harmonic_extension(g, problem.psi.values - q)
    return ScalarField(g, q + corr)


def _half_domain(grid: Grid) -> np.ndarray:
    half = 0.25 * (np.array(grid.hi) - np.array(grid.lo))
    inside = np.all(np.abs(grid.points - grid.centre) <= half + 1e-12, axis=-1)
    return inside & grid.interior(1)


def hessian_sup_half(u: ScalarField) -> float:
    """sup |D^2u| (spectral norm) over the concentric half-size box."""
    H = hessian(u).values[_half_domain(u.grid)]
    return float(np.max(np.abs(np.linalg.eigvalsh(H))))


def solve(problem: DirichletProblem, opts: SolveOptions | None = None) -> SolveResult:
    """Continuation from the constant phase sup theta to theta."""
    opts = opts or SolveOptions()
    problem.validate()
    g = problem.grid
    th = problem.theta_values
    top = float(th.max())
    u = initial_guess(problem, top)
    history = []
    u, iters, F = _newton(u, top, opts)
    history.append({"t": 0.0, "newton": iters, "residual": F})
    total = iters
    steps = 0
    t, dt = 0.0, opts.dt0
    if np.ptp(th) > 0:
        while t < 1.0:
            t_next = min(1.0, t + dt)
            target = (1 - t_next) * top + t_next * th
            try:
                u_next, iters, F = _newton(u, target, opts)
            except (LineSearchFailed, LinearSolveStalled) as exc:
                dt *= 0.5
                log.debug("continuation t=%.4g failed (%s); dt -> %.3g", t_next, exc, dt)
                if dt < opts.dt_min:
                    raise ContinuationStalled(f"step {dt:.2e} below {opts.dt_min:.0e} at t={t:.4f}") from exc
                continue
            u, t = u_next, t_next
            steps += 1
            total += iters
            history.append({"t": t, "newton": iters, "residual": F})
            dt = min(2 * dt, opts.dt0)
    res = residual(u, problem.theta, opts.composed)
    Du = gradient(u)
    return SolveResult(
        u=u,
        residual_sup=_sup(res),
        newton_iters=total,
        continuation_steps=steps,
        hessian_sup_half=hessian_sup_half(u),
        gradient_sup=float(np.max(np.linalg.norm(Du, axis=-1))),
        history=history,
    )


# ------------------------------------------------------------------- scans


def scan_phase(n: int, Lambda: float, seed: int = 0) -> PhaseSpec:
    """theta0 + Lambda sin(pi k.x + phi)/pi clipped at the critical value.

    theta0 sits a quarter turn above critical; the profile has Lipschitz
    constant exactly 1, so the phase has Lipschitz constant Lambda.
    """
    rng = np.random.default_rng(seed)
    k = rng.normal(size=n)
    k /= np.linalg.norm(k)
    phi = rng.uniform(0, 2 * np.pi)
    crit = critical_phase(n)
    theta0 = crit + np.pi / 2

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.maximum(theta0 + Lambda * np.sin(np.pi * (x @ k) + phi) / np.pi, crit)

    def grad(x):
        x = np.asarray(x, dtype=float)
        raw = theta0 + Lambda * np.sin(np.pi * (x @ k) + phi) / np.pi
        d = Lambda * np.cos(np.pi * (x @ k) + phi)
        return np.where((raw > crit)[..., None], d[..., None] * k, 0.0)

    return PhaseSpec(n, "callable", value, grad, label=f"scan(Lambda={Lambda}, seed={seed})")


def hessian_scan(Lambda_list, kappa_target: float = 1.0, resolutions=(33, 65, 129), n: int = 2,
                 seed: int = 0, half_width: float = 1.0, opts: SolveOptions | None = None) -> list:
    """Solve the seeded scan family per Lambda and resolution.

    Boundary data is the quadratic whose gradient reaches ``kappa_target`` at
    the box corners.  Each row holds the solve statistics; rows of the finest
    resolution also carry ``drift`` relative to the next coarser one.
    A failed solve yields a row with ``error`` set instead of raising.
    """
    a = kappa_target / (np.sqrt(n) * half_width)
    rows = []
    for Lam in Lambda_list:
        theta = scan_phase(n, float(Lam), seed)
        prev = None
        for res in resolutions:
            grid = Grid.cube(n, res, half_width)
            row = {"Lambda": float(Lam), "resolution": int(res)}
            try:
                prob = DirichletProblem(grid, theta, lambda x: 0.5 * a * np.sum(x * x, axis=-1))
                out = solve(prob, opts)
                row.update(hessian_sup_half=out.hessian_sup_half, gradient_sup=out.gradient_sup,
                           residual_sup=out.residual_sup, newton_iters=out.newton_iters,
                           lipschitz=prob.Lambda)
                if prev is not None:
                    row["drift"] = abs(out.hessian_sup_half - prev) / prev
                prev = out.hessian_sup_half
            except Exception as exc:  # noqa: BLE001 - rows are flagged, not fatal
                row["error"] = f"{type(exc).__name__}: {exc}"
                prev = None
            rows.append(row)
    return rows


def sharpness_rows(eps_list, n: int = 2, phi: str = "log2") -> list:
    """Origin Hessian and sup |D theta_eps| of the radial counterexamples."""
    from .counterexample import blowup_table, build_family

    fam = build_family(phi, n, max(eps_list))
    return [{"eps": r.eps, "hessian_origin": -r.min_eig_origin, "lipschitz": r.sup_dtheta}
            for r in blowup_table(fam, eps_list)]
