import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from lagmce.errors import DegenerateSpectrum, PhaseOutOfRange
from lagmce.spectral import (PhaseRegime, arctan_matrix, classify_phase, critical_phase, dsigma_k, eig_sym,
                             eigen_derivative, phase, sample_supercritical, sigma_all, sigma_k, symmetrize,
                             tan_matrix)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def sym_matrices(n):
    return arrays(float, (n, n), elements=st.floats(-10, 10, allow_nan=False)).map(lambda A: 0.5 * (A + A.T))


def _sigma_sympy(lam, k):
    t = sympy.Symbol("t")
    poly = sympy.expand(sympy.prod([1 + sympy.Rational(repr(float(x))) * t for x in lam]))
    return float(poly.coeff(t, k))


@pytest.mark.parametrize("lam", [[3.0, -1.0, 2.0], [0.5, 0.25, -4.0, 7.0], [1.0, 1.0, 1.0, 1.0, 1.0]])
def test_sigma_matches_polynomial_expansion(lam):
    for k in range(len(lam) + 1):
        assert sigma_k(np.array(lam), k) == pytest.approx(_sigma_sympy(lam, k), rel=1e-13, abs=1e-13)


def test_sigma_trivial_values():
    lam = np.array([2.0, 3.0])
    assert sigma_k(lam, 0) == 1.0
    assert sigma_k(lam, 1) == 5.0
    assert sigma_k(lam, 2) == 6.0
    with pytest.raises(ValueError):
        sigma_k(lam, 3)


@given(arrays(float, 4, elements=finite), st.integers(1, 4), st.integers(0, 3))
def test_dsigma_is_partial_derivative(lam, k, i):
    h = 1e-4 * (1 + abs(lam[i]))
    lp, lm = lam.copy(), lam.copy()
    lp[i] += h
    lm[i] -= h
    fd = (sigma_k(lp, k) - sigma_k(lm, k)) / (2 * h)
    # sigma_k is affine in each lambda_i, so the centred difference is exact up to rounding
    scale = 1 + np.max(np.abs(sigma_all(np.abs(lam) + 1)))
    assert abs(dsigma_k(lam, k, i) - fd) <= 1e-8 * scale


def test_dsigma_bad_index():
    with pytest.raises(IndexError):
        dsigma_k(np.ones(3), 1, 3)


@given(sym_matrices(4))
def test_eig_sym_matches_lapack(M):
    sp = eig_sym(M)
    assert np.allclose(sp.lam, np.linalg.eigvalsh(M)[::-1], atol=1e-10 * (1 + np.abs(M).max()))
    assert np.allclose(sp.gamma.T @ sp.gamma, np.eye(4), atol=1e-12)
    assert np.allclose(M @ sp.gamma, sp.gamma * sp.lam, atol=1e-9 * (1 + np.abs(M).max()))
    assert np.all(np.diff(sp.lam) <= 0)


def test_eig_sym_batched_and_deterministic(rng):
    A = rng.standard_normal((50, 3, 3))
    M = A + np.swapaxes(A, 1, 2)
    sp = eig_sym(M)
    assert sp.lam.shape == (50, 3)
    again = eig_sym(M)
    assert np.array_equal(sp.gamma, again.gamma)
    big = np.argmax(np.abs(sp.gamma), axis=1)
    assert np.all(np.take_along_axis(sp.gamma, big[:, None, :], axis=1) > 0)


def test_eig_sym_rejects_non_square():
    with pytest.raises(ValueError):
        eig_sym(np.zeros((2, 3)))


def test_symmetrize_reads_upper_triangle():
    M = np.array([[1.0, 2.0], [99.0, 3.0]])
    assert np.array_equal(symmetrize(M), [[1.0, 2.0], [2.0, 3.0]])


@given(sym_matrices(3))
def test_arctan_tan_roundtrip(M):
    A = arctan_matrix(M)
    assert np.allclose(np.linalg.eigvalsh(A), np.sort(np.arctan(np.linalg.eigvalsh(M))), atol=1e-10)
    assert np.allclose(tan_matrix(A), M, atol=1e-7 * (1 + np.abs(M).max()) ** 2)
    assert np.trace(A) == pytest.approx(phase(eig_sym(M)), abs=1e-10)


def test_phase_trivial():
    assert phase(np.array([1.0, 1.0])) == pytest.approx(np.pi / 2)
    assert phase(np.array([0.0, 0.0, 0.0])) == 0.0


def test_classify_phase():
    assert critical_phase(3) == pytest.approx(np.pi / 2)
    assert classify_phase(np.pi / 2, 3).regime is PhaseRegime.CRITICAL
    assert classify_phase(2.0, 3).regime is PhaseRegime.SUPERCRITICAL
    assert classify_phase(-2.0, 3).regime is PhaseRegime.SUPERCRITICAL
    assert classify_phase(1.0, 3).regime is PhaseRegime.SUBCRITICAL
    with pytest.raises(PhaseOutOfRange):
        classify_phase(3 * np.pi / 2, 3)


@given(sym_matrices(3), sym_matrices(3))
def test_eigen_derivative_first_order(M, dM):
    sp = eig_sym(M)
    if np.min(sp.gap) < 0.5:
        with pytest.raises(DegenerateSpectrum) if np.min(sp.gap) <= 1e-8 else _null():
            eigen_derivative(M, dM)
        return
    dlam, dg = eigen_derivative(M, dM)
    h = 1e-6
    fd = (eig_sym(M + h * dM).lam - eig_sym(M - h * dM).lam) / (2 * h)
    assert np.allclose(dlam, fd, atol=1e-5 * (1 + np.abs(dM).max()) ** 2)


class _null:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def test_eigen_derivative_degenerate():
    with pytest.raises(DegenerateSpectrum):
        eigen_derivative(np.eye(2), np.ones((2, 2)))


@pytest.mark.parametrize("n", [2, 3, 5, 6])
def test_sample_supercritical_is_supercritical(n):
    lam = sample_supercritical(n, 5000, np.random.default_rng(n))
    assert np.all(np.arctan(lam).sum(axis=1) >= critical_phase(n) - 1e-9)
    assert np.all(np.diff(lam, axis=1) <= 0)
