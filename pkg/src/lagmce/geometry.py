"""Geometry of the gradient graph L = {(x, Du(x))} in R^{2n}.

Pointwise quantities (metric, volume element, Jordan angles, adapted frames,
second fundamental form, mean curvature) come from :func:`geometry_at`.  The
remaining functions evaluate both sides of the Jacobi-type identities and
inequalities satisfied by log v_m, always by two independent routes so that
one can check the other.

Potentials passed to the pointwise routines must provide ``hess(x)``,
``d3(x)`` and (for second derivatives of the phase) ``d4(x)`` accepting points
of shape ``(..., n)``; :class:`~lagmce.fields.PolynomialTestFunction` does.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import tolerances as tol
from .errors import ConstraintViolated, DegenerateSpectrum, EigGapTooSmall
from .fields import Grid, ScalarField, gradient
from .spectral import Spectrum, eig_sym, eigen_derivative, sigma_all


@dataclass(frozen=True)
class GraphGeometry:
    """Pointwise geometry of a Lagrangian graph.

    Frames are stored as rows: ``e[i]`` and ``nu[i]`` are vectors in R^{2n}.
    ``h[i, j, k]`` is the second fundamental form in the (e, nu) frame and
    ``H`` the mean curvature vector.  ``flagged`` is set when the spectrum has
    a near-tie, in which case the frame is one arbitrary eigenbasis.
    """

    x: np.ndarray
    Du: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    v: float
    spectrum: Spectrum
    jordan: np.ndarray
    e: np.ndarray
    nu: np.ndarray
    h: np.ndarray
    H: np.ndarray
    flagged: bool = False

    @property
    def lam(self) -> np.ndarray:
        return self.spectrum.lam

    @property
    def gamma(self) -> np.ndarray:
        return self.spectrum.gamma


def J(w: np.ndarray) -> np.ndarray:
    """Complex structure on R^{2n}: E_i -> E_{n+i}, E_{n+i} -> -E_i."""
    w = np.asarray(w, dtype=float)
    n = w.shape[-1] // 2
    return np.concatenate([-w[..., n:], w[..., :n]], axis=-1)


def frames(sp: Spectrum):
    """Tangent frame e_i and normal frame nu_i (rows) from an eigen-decomposition."""
    lam, gam = sp.lam, sp.gamma
    r = 1.0 / np.sqrt(1.0 + lam**2)
    cols = np.swapaxes(gam, -1, -2)  # row i = gamma_i
    e = np.concatenate([cols, lam[..., :, None] * cols], axis=-1) * r[..., :, None]
    nu = np.concatenate([-lam[..., :, None] * cols, cols], axis=-1) * r[..., :, None]
    return e, nu


def second_fundamental_form(sp: Spectrum, D3u) -> np.ndarray:
    s = 1.0 + sp.lam**2
    w = 1.0 / np.sqrt(s)
    g = sp.gamma
    h = np.einsum("...abc,...ai,...bj,...ck->...ijk", D3u, g, g, g)
    return h * w[..., :, None, None] * w[..., None, :, None] * w[..., None, None, :]


def geometry_at(Du, D2u, D3u, x=None) -> GraphGeometry:
    """Assemble :class:`GraphGeometry` from derivatives of u at one point."""
    D2u = np.asarray(D2u, dtype=float)
    n = D2u.shape[-1]
    D3u = np.asarray(D3u, dtype=float)
    if D3u.shape != (n, n, n):
        raise ValueError(f"D3u must have shape {(n, n, n)}")
    sp = eig_sym(D2u)
    g = np.eye(n) + D2u @ D2u
    ginv = np.linalg.inv(g)
    v = float(np.sqrt(np.linalg.det(g)))
    e, nu = frames(sp)
    h = second_fundamental_form(sp, D3u)
    trace_h = np.einsum("iik->k", h)
    H = trace_h @ nu
    flagged = bool(sp.gap <= tol.DEGENERATE_GAP)
    x = np.zeros(n) if x is None else np.asarray(x, dtype=float)
    return GraphGeometry(x, np.asarray(Du, dtype=float), g, ginv, v, sp, np.arctan(sp.lam),
                         e, nu, h, H, flagged)


def geometry_of(u, x) -> GraphGeometry:
    x = np.asarray(x, dtype=float)
    return geometry_at(u.grad(x), u.hess(x), u.d3(x), x=x)


# ------------------------------------------------------------------ phase


def phase_derivatives(u, x):
    """Exact Dtheta and D^2theta for theta = tr arctan D^2u.

    Uses theta_k = g^{ij} u_ijk and differentiates once more with
    d(g^{-1}) = -g^{-1} (dM M + M dM) g^{-1}.
    """
    x = np.asarray(x, dtype=float)
    M = u.hess(x)
    C = u.d3(x)
    Q = u.d4(x)
    n = M.shape[-1]
    gi = np.linalg.inv(np.eye(n) + M @ M)
    th1 = np.einsum("ij,ijk->k", gi, C)
    dg = np.einsum("ial,aj->ijl", C, M) + np.einsum("ia,ajl->ijl", M, C)
    dgi = -np.einsum("ia,abl,bj->ijl", gi, dg, gi)
    th2 = np.einsum("ij,ijkl->kl", gi, Q) + np.einsum("ijl,ijk->kl", dgi, C)
    return th1, 0.5 * (th2 + th2.T)


def _fd_gradient(fn, x, step):
    """Fourth-order central differences of a vectorised scalar function."""
    n = x.shape[-1]
    offs = np.array([-2, -1, 1, 2])
    wts = np.array([1, -8, 8, -1]) / (12.0 * step)
    pts = x + step * offs[:, None, None] * np.eye(n)[None, :, :]
    vals = fn(pts)  # (4, n)
    return wts @ vals


def theta_gradient_fd(u, x, step=None) -> np.ndarray:
    """Independent oracle for Dtheta: differences of the phase itself."""
    x = np.asarray(x, dtype=float)
    if step is None:
        step = tol.FD_STEP * (1 + np.linalg.norm(x))

    def theta(p):
        return np.sum(np.arctan(eig_sym(u.hess(p)).lam), axis=-1)

    a = _fd_gradient(theta, x, step)
    b = _fd_gradient(theta, x, step / 2)
    return (16 * b - a) / 15


# -------------------------------------------------------- Laplace-Beltrami


def _lb_once(u, f, x, step):
    n = x.shape[-1]
    offs = np.array([-2.0, -1.0, 1.0, 2.0])
    wts = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * step)
    eye = np.eye(n)
    outer = x + step * offs[:, None, None] * eye[None, :, :]  # (4, n_i, n)
    inner = outer[..., None, None, :] + step * offs[:, None, None] * eye[None, :, :]  # (4,n,4,n,n)
    fv = np.asarray(f(inner))  # (4, n, 4, n)
    df = np.einsum("a,oiaj->oij", wts, fv)  # gradient of f at each outer point
    M = u.hess(outer)  # (4, n, n, n)
    g = np.eye(n) + M @ M
    v = np.sqrt(np.linalg.det(g))
    F = v[..., None] * np.linalg.solve(g, df[..., None])[..., 0]  # (4, n, n)
    div = sum(wts @ F[:, i, i] for i in range(n))
    M0 = u.hess(x)
    v0 = np.sqrt(np.linalg.det(np.eye(n) + M0 @ M0))
    return div / v0


def laplace_beltrami(u, f, x, step=None) -> float:
    """Delta_L f = v^{-1} d_i (v g^{ij} d_j f) at x, for f a function on the base.

    Both derivatives are fourth-order central differences with the inner
    expression evaluated exactly from u; one Richardson step removes the
    leading error term.
    """
    x = np.asarray(x, dtype=float)
    if step is None:
        step = tol.FD_STEP * (1 + np.linalg.norm(x))
    a = _lb_once(u, f, x, step)
    b = _lb_once(u, f, x, step / 2)
    return float((16 * b - a) / 15)


def laplace_beltrami_grid(u: ScalarField, f: ScalarField) -> np.ndarray:
    """Second-order grid version; NaN within two nodes of the boundary."""
    g = u.grid
    Du = gradient(u)
    M = np.stack([np.stack(np.gradient(Du[..., i], *g.h, edge_order=2), axis=-1) for i in range(g.n)], axis=-2)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    G = np.eye(g.n) + M @ M
    v = np.sqrt(np.linalg.det(G))
    df = gradient(f)
    F = v[..., None] * np.linalg.solve(G, df[..., None])[..., 0]
    div = sum(np.gradient(F[..., i], g.h[i], axis=i, edge_order=2) for i in range(g.n))
    out = div / v
    out[~g.interior(2)] = np.nan
    return out


def log_vm(u, m: int):
    """The function x -> log v_m(x) = sum_{i<=m} log sqrt(1 + lam_i^2)."""
    def fn(x):
        lam = eig_sym(u.hess(x)).lam
        return 0.5 * np.sum(np.log1p(lam[..., :m] ** 2), axis=-1)
    return fn


def position_laplacian(u, x) -> np.ndarray:
    """Delta_L of the position vector: normal part of (0, Dtheta)."""
    geo = geometry_of(u, x)
    th1, _ = phase_derivatives(u, x)
    w = np.concatenate([np.zeros_like(th1), th1])
    return (geo.nu @ w) @ geo.nu


# --------------------------------------------------------- mean curvature


def mean_curvature_residual(geo: GraphGeometry, Dtheta) -> float:
    """|H - J grad^L theta| with the right side built frame-free.

    grad^L theta = (a, M a) with a = g^{-1} Dtheta, so J of it is (-M a, a).
    """
    M = geo.gamma @ np.diag(geo.lam) @ geo.gamma.T
    a = geo.ginv @ np.asarray(Dtheta, dtype=float)
    rhs = np.concatenate([-M @ a, a])
    return float(np.linalg.norm(geo.H - rhs))


def mean_curvature_check(u, x, theta_grad=None) -> float:
    """Residual of H = J grad^L theta at x; Dtheta by default from differences of theta."""
    x = np.asarray(x, dtype=float)
    geo = geometry_of(u, x)
    Dth = theta_gradient_fd(u, x) if theta_grad is None else theta_grad
    return mean_curvature_residual(geo, Dth)


# ------------------------------------------------------------ Jacobi terms


def _check_m(n, m, allow_n=False):
    top = n if allow_n else n - 1
    if not 1 <= m <= top:
        raise ValueError(f"m={m} outside 1..{top}")


def jacobi_rhs(lam, h, th_g, th_gg, m: int) -> float:
    """Right side of the Delta_L log v_m identity, grouped by index pattern.

    Indices are 0-based internally; ``m`` counts the top eigenvalues.  The
    gradient-coupling term runs over every direction k.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    _check_m(n, m, allow_n=True)
    s = 1 + lam**2
    top = range(m)
    r = 0.0
    for k in top:
        r += s[k] * h[k, k, k] ** 2
    for i in top:
        for k in top:
            if i != k:
                r += (3 + lam[i] ** 2 + 2 * lam[i] * lam[k]) * h[i, i, k] ** 2
    for k in top:
        for l in range(m, n):
            r += 2 * lam[k] * (1 + lam[k] * lam[l]) / (lam[k] - lam[l]) * h[l, l, k] ** 2
    for l in top:
        for k in range(m, n):
            r += (3 * lam[l] - lam[k] + lam[l] ** 2 * (lam[l] + lam[k])) / (lam[l] - lam[k]) * h[l, l, k] ** 2
    for i, j, k in itertools.combinations(range(n), 3):
        L_i, L_j, L_k = lam[i], lam[j], lam[k]
        if k < m:
            c = 3 + L_i * L_j + L_j * L_k + L_k * L_i
        elif j < m:
            c = (1 + L_i * L_j + L_i * L_k + L_j * L_k
                 + L_i * (1 + L_k**2) / (L_i - L_k) + L_j * (1 + L_k**2) / (L_j - L_k))
        elif i < m:
            c = L_i * (L_j + L_k + (1 + L_j**2) / (L_i - L_j) + (1 + L_k**2) / (L_i - L_k))
        else:
            continue
        r += 2 * c * h[i, j, k] ** 2
    dlog = grad_log_vm(lam, h, m)
    r += sum(lam[i] / s[i] * th_gg[i, i] for i in top)
    r -= sum(lam[k] / s[k] * th_g[k] * dlog[k] for k in range(n))
    return float(r)


def jacobi_rhs_compact(lam, h, th_g, th_gg, m: int) -> float:
    """Same quantity as :func:`jacobi_rhs` in an ungrouped form (cross-check)."""
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    s = 1 + lam**2
    r = 0.0
    for a in range(m):
        r += (1 - lam[a] ** 2) * np.sum(h[a, a, :] ** 2)
        r += lam[a] * np.sum((lam[:, None] + lam[None, :]) * h[a] ** 2)
        for c in range(n):
            if c != a:
                r += 2 * lam[a] * s[c] / (lam[a] - lam[c]) * np.sum(h[a, c, :] ** 2)
        r += lam[a] / s[a] * th_gg[a, a]
    dlog = grad_log_vm(lam, h, m)
    r -= np.sum(lam / s * th_g * dlog)
    return float(r)


def jacobi_rhs_literal(lam, h, th_g, th_gg, m: int) -> float:
    """The identity exactly as usually printed, kept as a diagnostic.

    Differs from :func:`jacobi_rhs` in one denominator of the mixed triple
    group and in the index ranges of two sums.  It does not match the left
    side in general.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    s = 1 + lam**2
    top = range(m)
    r = 0.0
    for k in top:
        r += s[k] * h[k, k, k] ** 2
    for i in top:
        for k in top:
            if i != k:
                r += (3 + lam[i] ** 2 + 2 * lam[i] * lam[k]) * h[i, i, k] ** 2
    for k in top:
        for l in range(m, n):
            r += 2 * lam[k] * (1 + lam[k] * lam[l]) / (lam[k] - lam[l]) * h[l, l, k] ** 2
    for l in top:
        for k in range(m, n):
            r += (3 * lam[l] - lam[k] + lam[l] ** 2 * (lam[l] + lam[k])) / (lam[l] - lam[k]) * h[l, l, k] ** 2
    for i, j, k in itertools.combinations(range(n), 3):
        L_i, L_j, L_k = lam[i], lam[j], lam[k]
        if k < m - 1:
            c = 3 + L_i * L_j + L_j * L_k + L_k * L_i
        elif j < m and k >= m:
            c = (1 + L_i * L_j + L_i * L_k + L_j * L_k
                 + L_i * (1 + L_k**2) / (L_i - L_k) + L_j * (1 + L_k**2) / (L_j - L_k))
        elif i < m <= j:
            c = L_i * (L_j + L_k + (1 + L_j**2) / (L_i - L_j) + (1 + L_k**2) / (L_j - L_k))
        else:
            continue
        r += 2 * c * h[i, j, k] ** 2
    dlog = grad_log_vm(lam, h, m)
    r += sum(lam[i] / s[i] * th_gg[i, i] for i in top)
    r -= sum(lam[i] / s[i] * th_g[i] * dlog[i] for i in top)
    return float(r)


def n2_rhs(lam, h, th_g, th_gg) -> float:
    """Five-term form for n = 2, m = 1, plus the coupling along gamma_2."""
    l1, l2 = lam
    s1, s2 = 1 + l1**2, 1 + l2**2
    dlog = grad_log_vm(lam, h, 1)
    return float(
        s1 * h[0, 0, 0] ** 2
        + 2 * l1 * (1 + l1 * l2) / (l1 - l2) * h[0, 1, 1] ** 2
        + (3 * l1 - l2 + l1**2 * (l1 + l2)) / (l1 - l2) * h[0, 0, 1] ** 2
        + l1 / s1 * th_gg[0, 0]
        - l1 / s1 * th_g[0] * dlog[0]
        - l2 / s2 * th_g[1] * dlog[1]
    )


def grad_log_vm(lam, h, m: int) -> np.ndarray:
    """D_{gamma_k} log v_m for every k."""
    lam = np.asarray(lam, dtype=float)
    s = 1 + lam**2
    top = np.arange(m)
    return np.sqrt(s) * (lam[:m] @ h[top, top, :])


def grad_log_vm_sq(lam, h, m: int) -> float:
    """|grad^L log v_m|^2 = sum_k (sum_{a<=m} lam_a h_aak)^2."""
    lam = np.asarray(lam, dtype=float)
    s = 1 + lam**2
    return float(np.sum(grad_log_vm(lam, h, m) ** 2 / s))


def T_values(lam, h, m: int) -> np.ndarray:
    """T_k for every k: the per-direction groupings used in the constrained estimate."""
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    s = 1 + lam**2
    T = np.zeros(n)
    for k in range(n):
        if k < m:
            t = s[k] * h[k, k, k] ** 2
            t += sum((3 + lam[i] ** 2 + 2 * lam[i] * lam[k]) * h[i, i, k] ** 2 for i in range(m) if i != k)
            t += sum(2 * lam[k] * (1 + lam[k] * lam[l]) / (lam[k] - lam[l]) * h[l, l, k] ** 2 for l in range(m, n))
        else:
            t = sum((3 * lam[i] - lam[k] + lam[i] ** 2 * (lam[i] + lam[k])) / (lam[i] - lam[k]) * h[i, i, k] ** 2
                    for i in range(m))
        T[k] = t
    return T


def T_margins(lam, h, th_g, m: int) -> np.ndarray:
    """Per-k margins of the two lower bounds on T_k (nonnegative when they hold).

    k > m: T_k - 1/2 sum_{i<=m} (1+lam_i^2) h_iik^2.
    k <= m: T_k - 1/7 sum_i lam_i^2 h_iik^2 + 21 theta_{gamma_k}^2.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    s = 1 + lam**2
    T = T_values(lam, h, m)
    diag = h[np.arange(n), np.arange(n), :]  # [i, k] = h_iik
    out = np.empty(n)
    for k in range(n):
        if k < m:
            out[k] = T[k] - np.sum(lam**2 * diag[:, k] ** 2) / 7 + 21 * th_g[k] ** 2
        else:
            out[k] = T[k] - 0.5 * np.sum(s[:m] * diag[:m, k] ** 2)
    return out


def divergence_pieces(geo: GraphGeometry) -> np.ndarray:
    """P[l, k] = sum_j d_j(lam_l v gamma_jl gamma_kl / (1 + lam_l^2)) via h."""
    lam, gam, h, v = geo.lam, geo.gamma, geo.h, geo.v
    n = lam.size
    s = 1 + lam**2
    rs = np.sqrt(s)
    P = np.zeros((n, n))
    for l in range(n):
        a = (1 - lam[l] ** 2) / rs[l] * v * h[l, l, l]
        b = lam[l] * v / rs[l] * sum(s[i] / (lam[l] - lam[i]) * h[i, i, l] for i in range(n) if i != l)
        c = lam[l] * v / rs[l] * np.sum(lam * h[np.arange(n), np.arange(n), l])
        P[l] = (a + b + c) * gam[:, l]
        for i in range(n):
            if i != l:
                P[l] += lam[l] * v / (lam[l] - lam[i]) * rs[i] * h[l, l, i] * gam[:, i]
    return P


def divergence_pieces_direct(u, x) -> np.ndarray:
    """Same as :func:`divergence_pieces` by the chain rule through eigen-derivatives."""
    x = np.asarray(x, dtype=float)
    M = u.hess(x)
    C = u.d3(x)
    sp = eig_sym(M)
    lam, gam = sp.lam, sp.gamma
    n = lam.size
    s = 1 + lam**2
    v = np.prod(np.sqrt(s))
    phi = lam / s
    dphi = (1 - lam**2) / s**2
    P = np.zeros((n, n))
    for j in range(n):
        dlam, dgam = eigen_derivative(sp, C[:, :, j])
        dv = v * np.sum(lam * dlam / s)
        for l in range(n):
            P[l] += (dphi[l] * dlam[l] * v * gam[j, l] * gam[:, l]
                     + phi[l] * dv * gam[j, l] * gam[:, l]
                     + phi[l] * v * dgam[j, l] * gam[:, l]
                     + phi[l] * v * gam[j, l] * dgam[:, l])
    return P


def divergence_identity_residual(u, l: int, k: int, x) -> float:
    """|direct - formula| for entry (l, k) (0-based) of the divergence pieces."""
    x = np.asarray(x, dtype=float)
    geo = geometry_of(u, x)
    if geo.spectrum.gap <= tol.DEGENERATE_GAP:
        raise DegenerateSpectrum(f"eigenvalue gap {geo.spectrum.gap:.3e}")
    return float(abs(divergence_pieces_direct(u, x)[l, k] - divergence_pieces(geo)[l, k]))


def divergence_term(geo: GraphGeometry, th1, th2, m: int) -> float:
    """v^{-1} sum_{i<=m} sum_{j,k} d_j(lam_i theta_k v gamma_ji gamma_ki / (1+lam_i^2))."""
    lam, gam = geo.lam, geo.gamma
    s = 1 + lam**2
    th_gg = gam.T @ th2 @ gam
    P = divergence_pieces(geo)
    return float(sum(lam[i] / s[i] * th_gg[i, i] for i in range(m)) + np.sum(P[:m] @ th1) / geo.v)


@dataclass
class JacobiReport:
    point: np.ndarray
    m: int
    lam: np.ndarray
    lhs: float
    rhs_identity: float
    rhs_literal: float
    Tk: np.ndarray
    gradient_term: float
    divergence_term: float
    extra: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs_identity)

    def to_dict(self) -> dict:
        return {
            "point": self.point, "m": self.m, "lambda": self.lam, "lhs": self.lhs,
            "rhs_identity": self.rhs_identity, "rhs_literal": self.rhs_literal,
            "residual": self.residual, "Tk": self.Tk, "gradient_term": self.gradient_term,
            "divergence_term": self.divergence_term, **self.extra,
        }


def _eigen_theta(geo, th1, th2):
    gam = geo.gamma
    return gam.T @ th1, gam.T @ th2 @ gam


def jacobi_identity_report(u, m: int, x, theta_hessian=None, step=None) -> JacobiReport:
    """Both sides of the Delta_L log v_m identity at x.

    The left side is a numerical Laplace-Beltrami of log v_m; the right side
    is assembled from h, lambda and phase derivatives.  ``theta_hessian``
    overrides the exact D^2 theta (useful only for diagnostics).
    """
    x = np.asarray(x, dtype=float)
    geo = geometry_of(u, x)
    n = geo.lam.size
    _check_m(n, m, allow_n=True)
    if m < n and geo.lam[m - 1] - geo.lam[m] <= tol.IDENTITY_GAP:
        raise EigGapTooSmall(f"lam_m - lam_(m+1) = {geo.lam[m - 1] - geo.lam[m]:.3e}")
    th1, th2 = phase_derivatives(u, x)
    if theta_hessian is not None:
        th2 = np.asarray(theta_hessian, dtype=float)
    th_g, th_gg = _eigen_theta(geo, th1, th2)
    if step is None:
        # log v_m is smooth only on a scale ~ gap / |D^3u|
        gap = geo.lam[m - 1] - geo.lam[m] if m < n else np.inf
        reach = 10 * gap / (1 + np.max(np.abs(u.d3(x))))
        step = tol.FD_STEP * (1 + np.linalg.norm(x)) * min(1.0, reach)
    lhs = laplace_beltrami(u, log_vm(u, m), x, step=step)
    extra = {}
    if n == 2 and m == 1:
        extra["rhs_n2"] = n2_rhs(geo.lam, geo.h, th_g, th_gg)
    return JacobiReport(
        point=x, m=m, lam=geo.lam, lhs=lhs,
        rhs_identity=jacobi_rhs(geo.lam, geo.h, th_g, th_gg, m),
        rhs_literal=jacobi_rhs_literal(geo.lam, geo.h, th_g, th_gg, m),
        Tk=T_values(geo.lam, geo.h, min(m, n)),
        gradient_term=grad_log_vm_sq(geo.lam, geo.h, m),
        divergence_term=divergence_term(geo, th1, th2, m) if geo.spectrum.gap > tol.DEGENERATE_GAP else np.nan,
        extra=extra,
    )


def check_jacobi_constraints(lam, m: int) -> None:
    if not (lam[m - 1] / 2 >= lam[m] >= 1):
        raise ConstraintViolated(
            f"need lam_m/2 >= lam_(m+1) >= 1, got lam_m={lam[m - 1]:.6g}, lam_(m+1)={lam[m]:.6g}")


def check_full_constraints(lam, tau: float) -> None:
    n = lam.size
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    if not (lam[n - 2] >= 2 * n * n / tau and lam[n - 1] >= -1 / tau):
        raise ConstraintViolated(
            f"need lam_(n-1) >= 2n^2/tau and lam_n >= -1/tau, got {lam[n - 2]:.6g}, {lam[n - 1]:.6g}")


def jacobi_inequality_margin(u, m: int, x, delta: float, Lambda: float | None = None,
                             tau: float | None = None) -> float:
    """lhs - rhs of the constrained Jacobi inequality for log v_m at x.

    With ``tau`` given, checks the full-volume variant (m = n, log v) under
    lam_{n-1} >= 2n^2/tau and lam_n >= -1/tau instead.  The Laplacian of
    log v_m is taken from the identity (exact for polynomial u).
    """
    x = np.asarray(x, dtype=float)
    geo = geometry_of(u, x)
    n = geo.lam.size
    if tau is None:
        _check_m(n, m)
        check_jacobi_constraints(geo.lam, m)
    else:
        m = n
        check_full_constraints(geo.lam, tau)
    if geo.spectrum.gap <= tol.DEGENERATE_GAP:
        raise DegenerateSpectrum(f"eigenvalue gap {geo.spectrum.gap:.3e}")
    th1, th2 = phase_derivatives(u, x)
    if Lambda is None:
        Lambda = float(np.linalg.norm(th1))
    th_g, th_gg = _eigen_theta(geo, th1, th2)
    lap = jacobi_rhs(geo.lam, geo.h, th_g, th_gg, m)
    grad2 = grad_log_vm_sq(geo.lam, geo.h, m)
    div = divergence_term(geo, th1, th2, m)
    return float(lap - delta * grad2 - div + Lambda**2 / delta)


def full_divergence(geo: GraphGeometry, th1, th2) -> float:
    """v^{-1} sum d_j(v g^{ij} u_ik theta_k) through the mean curvature route."""
    lam = geo.lam
    s = 1 + lam**2
    th_g, th_gg = _eigen_theta(geo, th1, th2)
    trace_h = np.einsum("iij->j", geo.h)
    return float(np.sum(trace_h * th_g / np.sqrt(s)) + np.sum(lam / s * np.diag(th_gg)))


# ------------------------------------------------------------ algebra/area


def vlai_sides(lam, theta=None):
    """Both sides of sum_i v/(1+lam_i^2) = cos(theta) A - sin(theta) B."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if theta is None:
        theta = np.sum(np.arctan(lam), axis=-1)
    s = 1 + lam**2
    v = np.prod(np.sqrt(s), axis=-1)
    lhs = np.sum(v[..., None] / s, axis=-1)
    sig = sigma_all(lam)
    A = sum((-1) ** k * (n - 2 * k) * sig[..., 2 * k] for k in range(n) if 2 * k + 1 <= n)
    B = sum((-1) ** k * (n - 2 * k + 1) * sig[..., 2 * k - 1] for k in range(1, n + 1) if 2 * k <= n)
    rhs = np.cos(theta) * A - np.sin(theta) * B
    return lhs, rhs


def vlai_check(spectrum, theta=None):
    """Relative residual |lhs - rhs| / lhs of the volume-element identity."""
    lam = spectrum.lam if isinstance(spectrum, Spectrum) else spectrum
    lhs, rhs = vlai_sides(lam, theta)
    out = np.abs(lhs - rhs) / np.abs(lhs)
    return float(out) if np.ndim(out) == 0 else out


def _full_hessian(u: ScalarField) -> np.ndarray:
    # nested second-order gradients: defined up to the boundary, exact on quadratics
    g = u.grid
    Du = gradient(u)
    M = np.stack([np.stack(np.gradient(Du[..., i], *g.h, edge_order=2), axis=-1) for i in range(g.n)], axis=-2)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def volume_element(u: ScalarField) -> np.ndarray:
    M = _full_hessian(u)
    return np.sqrt(np.linalg.det(np.eye(u.grid.n) + M @ M))


def graph_area(u: ScalarField, region=None) -> float:
    """Area of the gradient graph over an axis-aligned box of grid nodes.

    ``region`` is ``(lo, hi)``; it must lie inside the grid and its corners are
    snapped to nodes.  Cells are integrated with the corner-averaged rule, so
    constant integrands are exact.
    """
    g = u.grid
    v = volume_element(u)
    if region is None:
        lo, hi = np.array(g.lo), np.array(g.hi)
    else:
        lo, hi = (np.asarray(a, dtype=float) for a in region)
    if np.any(lo < np.array(g.lo) - 1e-12) or np.any(hi > np.array(g.hi) + 1e-12) or np.any(hi <= lo):
        raise ValueError("region out of bounds")
    weights = np.ones(())
    sl = []
    for ax in range(g.n):
        i0 = int(round((lo[ax] - g.lo[ax]) / g.h[ax]))
        i1 = int(round((hi[ax] - g.lo[ax]) / g.h[ax]))
        w = np.full(i1 - i0 + 1, g.h[ax])
        w[0] = w[-1] = g.h[ax] / 2
        weights = np.multiply.outer(weights, w)
        sl.append(slice(i0, i1 + 1))
    return float(np.sum(v[tuple(sl)] * weights))
