"""Radial non-convex solutions whose phase stays critical or supercritical.

Given a positive phi on (0, 2] that blows up at 0, the construction produces
a smooth minorant phi_*, a profile Phi, a profile f and, for every eps, a
radial potential u_eps with

* eigenvalues 1/(r f_eps(r)) (n - 1 times) and -1/Phi_eps(r) (once),
* phase theta_eps >= (n - 2) pi / 2 and |D theta_eps| <= phi(r + eps),
* most negative eigenvalue -1/Phi(eps) at the origin, unbounded as eps -> 0.

All one-dimensional integrals are tabulated once on a dense geometric mesh
and evaluated between mesh nodes by cubic Hermite interpolation using the
exact derivative of each integral.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from . import tolerances as tol
from .errors import PhiNonpositive, PhiNotDiverging
from .spectral import critical_phase

T_MIN = 1e-12
T_MAX = 2.0
MESH_RATIO = 1.002
_WINDOW = np.geomspace(0.5, 2.0, 17)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
_BUMP = _GL_W * np.exp(-1.0 / (1.0 - _GL_X**2))
_BUMP /= _BUMP.sum()
_GL20_X, _GL20_W = np.polynomial.legendre.leggauss(20)


def phi_default(t):
    """1/t."""
    return 1.0 / np.asarray(t, dtype=float)


def phi_log2(t):
    """1 + log^2(t/2)."""
    t = np.asarray(t, dtype=float)
    return 1.0 + np.log(t / 2.0) ** 2


PHI_FAMILIES = {"default": phi_default, "log2": phi_log2}


def make_phi_star(phi):
    """Smooth positive minorant of phi.

    First take the infimum of phi over the window [t/2, min(2t, 2)], then
    average that envelope against a bump supported on [3t/4, 5t/4] and halve.
    Every point of the averaging range has t inside its window, so the
    envelope there is at most phi(t) and the result is at most phi(t)/2.
    """
    def envelope(t):
        t = np.asarray(t, dtype=float)
        s = np.minimum(t[..., None] * _WINDOW, T_MAX)
        return np.min(phi(s), axis=-1)

    def phi_star(t):
        t = np.asarray(t, dtype=float)
        pts = t[..., None] * (1.0 + 0.25 * _GL_X)
        return 0.5 * envelope(pts) @ _BUMP

    return phi_star


def _log_branch_Phi(t):
    t = np.asarray(t, dtype=float)
    return t * (1.0 + np.log(2.0 / t))


def _check_phi(phi):
    probe = np.geomspace(T_MIN, T_MAX, 400)
    vals = np.asarray(phi(probe), dtype=float)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise PhiNonpositive("phi must be finite and positive on (0, 2]")
    tail = np.asarray(phi(10.0 ** -np.arange(3, 13, dtype=float)), dtype=float)
    if not (np.all(np.diff(tail) > 0) and tail[-1] >= 4 * tail[0]):
        raise PhiNotDiverging("phi does not grow without bound as t -> 0")


@dataclass
class CounterexampleFamily:
    """Tabulated data of the construction for one phi and dimension n."""

    n: int
    phi: object
    phi_star: object
    c: float
    eps: float
    t_log: float
    kinks: np.ndarray
    _Phi: CubicHermiteSpline = field(repr=False)
    _G: CubicHermiteSpline = field(repr=False)
    _K: CubicHermiteSpline = field(repr=False)
    G_log: float = 0.0
    name: str = "custom"

    # ------------------------------------------------------------ profiles
    def psi(self, t):
        """Integrand of Phi: min(phi_*/2, |log(t/2)|)."""
        t = np.asarray(t, dtype=float)
        return np.minimum(0.5 * self.phi_star(t), np.abs(np.log(t / 2.0)))

    def Phi(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t <= self.t_log, _log_branch_Phi(np.maximum(t, 1e-300)), self._Phi(np.maximum(t, T_MIN)))
        return np.where(t <= 0, 0.0, out)

    def G(self, t):
        """int_t^2 ds / Phi(s)."""
        t = np.asarray(t, dtype=float)
        tl = max(self.t_log, T_MIN)
        closed = self.G_log + np.log1p(np.log(2.0 / np.maximum(t, 1e-300))) - np.log1p(np.log(2.0 / tl))
        return np.where(t < tl, closed, self._G(np.maximum(t, tl)))

    def inv_f(self, t):
        return self.c + self.G(t)

    def f(self, t):
        return 1.0 / self.inv_f(t)

    def df(self, t):
        """f' = f^2 / Phi."""
        return self.f(t) ** 2 / self.Phi(t)

    def K(self, t):
        """int_{T_MIN}^t (c + G(s)) ds."""
        return self._K(np.asarray(t, dtype=float))

    # --------------------------------------------------------- u_eps views
    def with_eps(self, eps: float) -> "CounterexampleFamily":
        lo, hi = tol.EPS_RANGE
        if not lo <= eps <= hi:
            raise ValueError(f"eps={eps} outside [{lo}, {hi}]")
        return replace(self, eps=float(eps))

    def radial_eigenvalues(self, r):
        """(tangential, radial) eigenvalues at radius r; tangential is inf at r = 0."""
        r = np.asarray(r, dtype=float)
        t = self.eps + r
        with np.errstate(divide="ignore"):
            tang = np.where(r > 0, 1.0 / (r * self.f(t)), np.inf)
        return tang, -1.0 / self.Phi(t)

    def theta_radial(self, r):
        r = np.asarray(r, dtype=float)
        t = self.eps + r
        return critical_phase(self.n) + np.arctan(self.Phi(t)) - (self.n - 1) * np.arctan(r * self.f(t))

    def dtheta_radial(self, r):
        """d theta_eps / dr (the gradient is this times x/|x|)."""
        r = np.asarray(r, dtype=float)
        t = self.eps + r
        f = self.f(t)
        Ph = self.Phi(t)
        fp = f * f / Ph
        return self.psi(t) / (1 + Ph**2) - (self.n - 1) * (f + r * fp) / (1 + (r * f) ** 2)

    def u_radial(self, r):
        r = np.asarray(r, dtype=float)
        return self.K(self.eps + r) - self.K(self.eps)


def _eval_phi_star_mesh(phi_star, lo, hi, order=20):
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return mid[:, None] + half[:, None] * _GL20_X[None, :order], half


def _cumulative(integrand, nodes):
    """Integrals of integrand over consecutive mesh intervals (Gauss-Legendre 20)."""
    lo, hi = nodes[:-1], nodes[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * _GL20_X[None, :]
    return half * (integrand(pts) @ _GL20_W)


def _build_mesh(psi_gap):
    base = np.exp(np.arange(np.log(T_MIN), np.log(T_MAX), np.log(MESH_RATIO)))
    base = np.append(base, T_MAX)
    g = psi_gap(base)
    kinks = []
    for i in np.nonzero(np.sign(g[:-1]) != np.sign(g[1:]))[0]:
        kinks.append(brentq(psi_gap, base[i], base[i + 1], xtol=1e-15, rtol=1e-15))
    kinks = np.array(kinks)
    nodes = np.unique(np.concatenate([base, kinks]))
    # drop nodes that nearly coincide with a kink
    keep = np.ones(nodes.size, dtype=bool)
    d = np.diff(nodes)
    keep[1:] &= d > 1e-9 * nodes[1:]
    return nodes[keep], kinks, g[0] >= 0


def _tables(phi, phi_star, c=None):
    def psi(t):
        return np.minimum(0.5 * phi_star(t), np.abs(np.log(t / 2.0)))

    def gap(t):
        return 0.5 * phi_star(t) - np.abs(np.log(np.asarray(t) / 2.0))

    nodes, kinks, log_at_zero = _build_mesh(gap)
    t_log = float(kinks[0]) if (log_at_zero and kinks.size) else (T_MAX if log_at_zero else 0.0)
    # Phi on nodes
    Phi0 = _log_branch_Phi(nodes[0]) if log_at_zero else nodes[0] * float(psi(np.array([nodes[0]]))[0])
    Phi_nodes = Phi0 + np.concatenate([[0.0], np.cumsum(_cumulative(psi, nodes))])
    if log_at_zero:
        on_log = nodes <= t_log
        Phi_nodes[on_log] = _log_branch_Phi(nodes[on_log])
        # re-anchor the tail on the exact value at the branch point
        j = np.searchsorted(nodes, t_log, side="right") - 1
        tail = np.concatenate([[0.0], np.cumsum(_cumulative(psi, nodes[j:]))])
        Phi_nodes[j:] = _log_branch_Phi(nodes[j]) + tail
    Phi_spl = CubicHermiteSpline(nodes, Phi_nodes, psi(nodes))

    def inv_Phi(t):
        return 1.0 / Phi_spl(t)

    pieces = _cumulative(inv_Phi, nodes)
    G_nodes = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    G_spl = CubicHermiteSpline(nodes, G_nodes, -1.0 / Phi_nodes)
    tl = max(t_log, T_MIN)
    G_log = float(G_spl(tl)) if tl > nodes[0] else float(G_nodes[0])
    return nodes, kinks, t_log, Phi_spl, G_spl, G_log


def _K_spline(nodes, c, G_spl):
    def integrand(t):
        return c + G_spl(t)
    K_nodes = np.concatenate([[0.0], np.cumsum(_cumulative(integrand, nodes))])
    return CubicHermiteSpline(nodes, K_nodes, c + G_spl(nodes))


def _c_conditions(fam: CounterexampleFamily, n_samples: int = 10_000) -> bool:
    n = fam.n
    lo, hi = tol.EPS_RANGE
    t = np.geomspace(lo, 1.0 + hi, n_samples)
    f = fam.f(t)
    Ph = fam.Phi(t)
    fp = f * f / Ph
    # worst case over eps: the radius can be as large as t itself
    cond_a = np.all(f + t * fp <= fam.phi_star(t) / (2 * (n - 1)))
    cond_b = np.all(Ph >= (n - 1) * t * f)
    cond_c = np.all(np.arctan(Ph) >= (n - 1) * np.arctan(t * f))
    return bool(cond_a and cond_b and cond_c)


def build_family(phi="log2", n: int = 2, eps: float = 0.1) -> CounterexampleFamily:
    """Tabulate phi_*, Phi, f and choose c.

    ``phi`` is a vectorised callable on (0, 2] or a family name ("default",
    "log2").  c starts at 2n / inf phi_* and doubles until the sufficient
    conditions for the phase bounds hold on a 10^4-point sample.
    """
    name = "custom"
    if isinstance(phi, str):
        name = phi
        phi = PHI_FAMILIES[phi]
    if n < 2:
        raise ValueError("n must be at least 2")
    _check_phi(phi)
    phi_star = make_phi_star(phi)
    nodes, kinks, t_log, Phi_spl, G_spl, G_log = _tables(phi, phi_star)
    inf_star = float(np.min(phi_star(nodes)))
    c = 2 * n / inf_star
    for _ in range(60):
        fam = CounterexampleFamily(n, phi, phi_star, c, eps, t_log, kinks, Phi_spl, G_spl,
                                   _K_spline(nodes, c, G_spl), G_log, name)
        if _c_conditions(fam):
            return fam.with_eps(eps)
        c *= 2
    raise RuntimeError("could not find an admissible constant c")


# ----------------------------------------------------------------- points


def eval_u_eps(fam: CounterexampleFamily, x):
    """u_eps, Du_eps and the Hessian eigenvalues (descending) at points x.

    At the origin the tangential eigenvalue is +inf: u_eps has a conical tip
    there because Du_eps has length 1/f(eps) > 0 in every direction.
    """
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r > 1 + 1e-12):
        raise ValueError("points must lie in the closed unit ball")
    u = fam.u_radial(r)
    f = fam.f(fam.eps + r)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(r[..., None] > 0, x / r[..., None], 0.0)
    Du = unit / f[..., None]
    tang, rad = fam.radial_eigenvalues(r)
    lam = np.concatenate([np.repeat(tang[..., None], fam.n - 1, axis=-1), rad[..., None]], axis=-1)
    return u, Du, lam


def eval_theta_eps(fam: CounterexampleFamily, x):
    """theta_eps and |D theta_eps| at points x (radial limit at the origin)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    return fam.theta_radial(r), np.abs(fam.dtheta_radial(r))


def hessian_closed_form(fam: CounterexampleFamily, x) -> np.ndarray:
    """D^2 u_eps from the radial formula (x != 0)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    tang, rad = fam.radial_eigenvalues(r)
    P = x[..., :, None] * x[..., None, :] / (r**2)[..., None, None]
    n = x.shape[-1]
    return tang[..., None, None] * (np.eye(n) - P) + rad[..., None, None] * P


@dataclass
class BlowupRow:
    eps: float
    min_eig_origin: float
    sup_dtheta: float
    inf_phase_margin: float

    def to_dict(self):
        return {"eps": self.eps, "min_eig_origin": self.min_eig_origin,
                "sup_dtheta": self.sup_dtheta, "inf_phase_margin": self.inf_phase_margin}


def blowup_table(fam: CounterexampleFamily, eps_list, samples: int = 2001) -> list:
    """One row per eps (which must be decreasing) on a radial sample of [0, 1]."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be strictly decreasing")
    r = np.linspace(0.0, 1.0, samples)
    rows = []
    for e in eps_list:
        fe = fam.with_eps(e)
        th = fe.theta_radial(r)
        rows.append(BlowupRow(e, float(-1.0 / fe.Phi(e)), float(np.max(np.abs(fe.dtheta_radial(r)))),
                              float(np.min(th) - critical_phase(fam.n))))
    return rows


def radial_profile(fam: CounterexampleFamily, samples: int = 201) -> dict:
    """Columns r, lambda_min, lambda_tangential, theta, |D theta|, phi(r + eps)."""
    r = np.linspace(0.0, 1.0, samples)
    tang, rad = fam.radial_eigenvalues(r)
    return {
        "r": r, "lambda_min": rad, "lambda_tangential": tang,
        "theta": fam.theta_radial(r), "dtheta": np.abs(fam.dtheta_radial(r)),
        "phi": fam.phi(r + fam.eps),
    }


def divergence_threshold(fam: CounterexampleFamily, bound: float) -> float:
    """Largest t with 1/f(t) >= bound, using the closed form on the log branch.

    Returns 0.0 if the threshold underflows double precision.
    """
    tl = max(fam.t_log, T_MIN)
    if fam.inv_f(tl) >= bound:
        return float(brentq(lambda t: fam.inv_f(t) - bound, tl, T_MAX)) if fam.inv_f(T_MAX) < bound else T_MAX
    # on the log branch: c + G_log + log1p(log(2/t)) - log1p(log(2/tl)) = bound
    a = bound - fam.c - fam.G_log + np.log1p(np.log(2.0 / tl))
    with np.errstate(over="ignore"):
        L = np.expm1(a)
        t = 2.0 * np.exp(-L) if np.isfinite(L) else 0.0
    return float(t)
