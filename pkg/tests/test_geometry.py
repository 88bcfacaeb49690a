import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from lagmce.errors import ConstraintViolated, EigGapTooSmall
from lagmce.fields import Grid, PolynomialTestFunction, ScalarField
from lagmce.geometry import (geometry_at, geometry_of, graph_area, jacobi_identity_report,
                             jacobi_inequality_margin, laplace_beltrami, jacobi_rhs, jacobi_rhs_compact,
                             mean_curvature_check, phase_derivatives, position_laplacian,
                             theta_gradient_fd, vlai_check, vlai_sides, volume_element)
from lagmce.spectral import eig_sym

seeds = st.integers(0, 2**32 - 1)


def _probe(seed, n, gap=1e-2):
    rng = np.random.default_rng(seed)
    u = PolynomialTestFunction.random(n, 4, rng, scale=0.5, min_degree=2)
    x = rng.uniform(-0.5, 0.5, n)
    assume(eig_sym(u.hess(x)).gap > gap)
    return u, x


def _mean_curvature_embedding(u, x):
    """H as the normal part of g^{ij} F_ij for F(x) = (x, Du(x)); no eigenframes."""
    n = x.size
    M, C = u.hess(x), u.d3(x)
    T = np.vstack([np.eye(n), M])  # columns span the tangent space
    g = T.T @ T
    F2 = np.concatenate([np.zeros((n, n, n)), np.moveaxis(C, -1, 0)], axis=0)  # F_ij in R^{2n}
    acc = np.einsum("ij,aij->a", np.linalg.inv(g), F2)
    P = T @ np.linalg.solve(g, T.T)
    return acc - P @ acc


def test_curve_curvature_n1():
    # graph of u' in the plane: signed curvature u'''/(1+u''^2)^{3/2}
    u = PolynomialTestFunction(1, {(3,): 0.5, (2,): 0.7})
    x = np.array([0.4])
    geo = geometry_of(u, x)
    upp, uppp = 1.4 + 3 * 0.4, 3.0
    assert geo.v == pytest.approx(np.sqrt(1 + upp**2))
    assert geo.jordan[0] == pytest.approx(np.arctan(upp))
    assert abs(geo.h[0, 0, 0]) == pytest.approx(uppp / (1 + upp**2) ** 1.5, rel=1e-12)
    assert np.linalg.norm(geo.H) == pytest.approx(uppp / (1 + upp**2) ** 1.5, rel=1e-12)


def test_flat_graph_has_no_curvature():
    geo = geometry_at(np.zeros(3), np.diag([1.0, 2.0, -1.0]), np.zeros((3, 3, 3)))
    assert np.all(geo.h == 0)
    assert np.all(geo.H == 0)
    assert geo.v == pytest.approx(np.sqrt(2 * 5 * 2))


@given(seeds, st.sampled_from([2, 3]))
def test_mean_curvature_vector_matches_embedding(seed, n):
    u, x = _probe(seed, n)
    geo = geometry_of(u, x)
    assert np.allclose(geo.H, _mean_curvature_embedding(u, x), atol=1e-10)


@given(seeds, st.sampled_from([2, 3]))
def test_frames_orthonormal(seed, n):
    u, x = _probe(seed, n)
    geo = geometry_of(u, x)
    E = np.vstack([geo.e, geo.nu])
    assert np.allclose(E @ E.T, np.eye(2 * n), atol=1e-12)
    assert np.allclose(geo.h, np.transpose(geo.h, (1, 0, 2)), atol=1e-12)
    assert np.allclose(geo.h, np.transpose(geo.h, (0, 2, 1)), atol=1e-12)


@given(seeds, st.sampled_from([2, 3]))
def test_phase_derivatives_against_differences(seed, n):
    u, x = _probe(seed, n)
    th1, th2 = phase_derivatives(u, x)
    assert np.allclose(th1, theta_gradient_fd(u, x), atol=1e-8)
    h = 1e-5
    e = np.eye(n)
    fd2 = np.stack([(phase_derivatives(u, x + h * e[i])[0] - phase_derivatives(u, x - h * e[i])[0]) / (2 * h)
                    for i in range(n)])
    assert np.allclose(th2, fd2, atol=1e-6)


@given(seeds)
def test_mean_curvature_identity(seed):
    u, x = _probe(seed, 3)
    assert mean_curvature_check(u, x) <= 1e-7


@given(seeds)
def test_laplacian_of_coordinates_is_mean_curvature(seed):
    u, x = _probe(seed, 2)
    geo = geometry_of(u, x)
    for i in range(2):
        lap = laplace_beltrami(u, lambda p, i=i: p[..., i], x)
        assert lap == pytest.approx(geo.H[i], abs=1e-7)
    assert np.allclose(position_laplacian(u, x), geo.H, atol=1e-10)


@given(seeds, st.sampled_from([2, 3]))
def test_jacobi_identity(seed, n):
    u, x = _probe(seed, n)
    for m in range(1, n):
        rep = jacobi_identity_report(u, m, x)
        assert rep.residual <= 1e-6
        if n == 2:
            assert abs(rep.lhs - rep.extra["rhs_n2"]) <= 1e-6


@given(seeds, st.integers(2, 5))
def test_identity_groupings_agree(seed, n):
    rng = np.random.default_rng(seed)
    lam = np.sort(rng.standard_normal(n) * 3)[::-1]
    h = rng.standard_normal((n, n, n))
    h = sum(np.transpose(h, p) for p in [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]) / 6
    th_g = rng.standard_normal(n)
    th_gg = rng.standard_normal((n, n))
    th_gg = th_gg + th_gg.T
    for m in range(1, n):
        a = jacobi_rhs(lam, h, th_g, th_gg, m)
        b = jacobi_rhs_compact(lam, h, th_g, th_gg, m)
        assert a == pytest.approx(b, rel=1e-10, abs=1e-10)


def test_jacobi_identity_rejects_tied_eigenvalues():
    u = PolynomialTestFunction(2, {(2, 0): 0.5, (0, 2): 0.5, (3, 0): 0.1})
    with pytest.raises(EigGapTooSmall):
        jacobi_identity_report(u, 1, np.zeros(2))


def test_jacobi_inequality_checks_constraints():
    u = PolynomialTestFunction(3, {(2, 0, 0): 0.5, (0, 2, 0): 0.5, (0, 0, 2): 0.5})
    with pytest.raises(ConstraintViolated):
        jacobi_inequality_margin(u, 1, np.zeros(3), delta=0.5)


@given(st.lists(st.floats(-30, 30), min_size=1, max_size=6))
def test_volume_identity(lam):
    lam = np.array(lam)
    assert vlai_check(lam) <= 1e-9


def test_volume_identity_trivial():
    lhs, rhs = vlai_sides(np.zeros(4))
    assert lhs == 4.0 and rhs == 4.0
    lhs, rhs = vlai_sides(np.array([1.0]))
    assert lhs == pytest.approx(1 / np.sqrt(2))
    assert rhs == pytest.approx(1 / np.sqrt(2))


def test_graph_area_of_quadratic():
    A = np.array([[2.0, 0.5], [0.5, -1.0]])
    g = Grid.cube(2, 17)
    u = ScalarField(g, 0.5 * np.einsum("...i,ij,...j->...", g.points, A, g.points))
    expect = np.sqrt(np.linalg.det(np.eye(2) + A @ A))
    assert np.allclose(volume_element(u), expect)
    assert graph_area(u) == pytest.approx(4 * expect)
    assert graph_area(u, ((-0.5, -0.5), (0.5, 0.5))) == pytest.approx(expect)
    with pytest.raises(ValueError):
        graph_area(u, ((-2, 0), (0, 1)))
