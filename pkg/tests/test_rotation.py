import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from lagmce.errors import JacobianBoundViolated, SingularHessian, SingularJacobian, SubcriticalPhase
from lagmce.fields import Grid, ScalarField
from lagmce.rotation import (RotationSpec, beta_star, beta_star_eigen_inversion, beta_star_matrix,
                             downward_rotation, lewy_yuan_sigma, phase_shift_verifiable, rotate_graph,
                             rotate_hessian)
from lagmce.spectral import arctan_matrix, critical_phase

sym3 = arrays(float, (3, 3), elements=st.floats(-5, 5)).map(lambda A: 0.5 * (A + A.T))


@pytest.mark.parametrize("kappa,beta", [(1.0, 0.3), (4.0, np.pi / 4), (-0.5, -0.2)])
def test_uniform_rotation_of_scalar_hessian(kappa, beta):
    Mb = rotate_hessian(kappa * np.eye(2), RotationSpec.uniform(beta, 2))
    assert np.allclose(Mb, np.tan(np.arctan(kappa) - beta) * np.eye(2), atol=1e-14)


def test_zero_rotation_is_identity():
    M = np.array([[1.0, 2.0], [2.0, -3.0]])
    assert np.allclose(rotate_hessian(M, RotationSpec((0.0, 0.0))), M)


@given(sym3, st.floats(-1.2, 1.2))
def test_uniform_rotation_matrix_identity(M, beta):
    spec = RotationSpec.uniform(beta, 3)
    assume(phase_shift_verifiable(M, spec))
    J = np.cos(beta) * np.eye(3) + np.sin(beta) * M
    assume(np.linalg.svd(J, compute_uv=False)[-1] > 1e-3)
    Mb = rotate_hessian(M, spec)
    assert np.allclose(arctan_matrix(0.5 * (Mb + Mb.T)), arctan_matrix(M) - beta * np.eye(3), atol=1e-9)


@given(sym3, arrays(float, 3, elements=st.floats(-1.2, 1.2)))
def test_rotation_shifts_phase(M, beta):
    spec = RotationSpec(tuple(beta))
    assume(phase_shift_verifiable(M, spec))
    J = np.diag(np.cos(beta)) + np.sin(beta)[:, None] * M
    assume(np.linalg.svd(J, compute_uv=False)[-1] > 1e-3)
    Mb = rotate_hessian(M, spec)
    assert np.allclose(Mb, Mb.T, atol=1e-8 * (1 + np.abs(Mb).max()))
    got = np.sum(np.arctan(np.linalg.eigvalsh(0.5 * (Mb + Mb.T))))
    assert got == pytest.approx(np.trace(arctan_matrix(M)) - beta.sum(), abs=1e-9)


@given(sym3)
def test_beta_star_inverts_spectrum(M):
    lam = np.linalg.eigvalsh(M)
    assume(np.min(np.abs(lam)) > 1e-2)
    Mb = rotate_hessian(M, beta_star(3))
    assert np.allclose(np.sort(np.linalg.eigvalsh(Mb)), np.sort(-1 / lam), atol=1e-9)
    assert np.allclose(Mb, beta_star_matrix(M), atol=1e-9)
    assert np.allclose(beta_star_eigen_inversion(M), np.sort(-1 / lam)[::-1])


def test_beta_star_values():
    assert beta_star(3).beta == (np.pi / 2, np.pi / 2, -np.pi / 2)
    assert beta_star(2).cos.tolist() == [0.0, 0.0]
    with pytest.raises(ValueError):
        beta_star(1)
    with pytest.raises(SingularHessian):
        beta_star_eigen_inversion(np.diag([1.0, 0.0]))


def test_singular_jacobian():
    with pytest.raises(SingularJacobian):
        rotate_hessian(-np.eye(2), RotationSpec.uniform(np.pi / 4, 2))


def test_spec_validation_and_addition():
    with pytest.raises(ValueError):
        RotationSpec((2.0,))
    s = RotationSpec((0.1, 0.2)) + RotationSpec((0.3, -0.1))
    assert s.beta == pytest.approx((0.4, 0.1))
    assert s.total == pytest.approx(0.5)


def test_lewy_yuan_sigma():
    ly = lewy_yuan_sigma(critical_phase(3) + 0.6, 3)
    assert ly.delta == pytest.approx(0.6)
    assert ly.sigma == pytest.approx(1 / np.tan(0.2))
    assert not ly.convex
    assert lewy_yuan_sigma(critical_phase(2), 2).sigma == np.inf
    assert lewy_yuan_sigma(critical_phase(2) + 2.0, 2).convex
    with pytest.raises(SubcriticalPhase):
        lewy_yuan_sigma(critical_phase(3) - 0.1, 3)
    assert downward_rotation(critical_phase(3) + 0.6, 3).beta == pytest.approx((0.2,) * 3)


@pytest.mark.parametrize("kappa", [0.5, 2.0])
def test_rotate_graph_of_quadratic(kappa):
    g = Grid.cube(2, 17)
    u = ScalarField(g, 0.5 * kappa * np.sum(g.points**2, axis=-1))
    spec = RotationSpec.uniform(0.3, 2)
    rg = rotate_graph(u, spec)
    slope = np.tan(np.arctan(kappa) - 0.3)
    assert np.allclose(rg.ubar_gradient.values, slope * rg.target_grid.points, atol=1e-9)
    H = rg.ubar_hessian()
    assert np.allclose(H, slope * np.eye(2), atol=1e-8)
    assert rg.jacobian_min == pytest.approx(np.cos(0.3) + np.sin(0.3) * kappa)


def test_rotate_graph_rejects_weak_jacobian():
    g = Grid.cube(2, 9)
    u = ScalarField(g, -2.0 * np.sum(g.points**2, axis=-1))
    with pytest.raises(JacobianBoundViolated):
        rotate_graph(u, RotationSpec.uniform(0.5, 2))
