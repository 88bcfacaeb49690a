import numpy as np
import pytest
import scipy.sparse.linalg as spla

from lagmce.errors import ContinuationStalled, LinearSolveStalled, PhaseOutOfRange, SubcriticalPhase
from lagmce.fields import Grid, MatrixField, ScalarField
from lagmce.phase import PhaseSpec
from lagmce.solver import (DirichletProblem, SolveOptions, assemble, harmonic_extension, hessian_scan,
                           hessian_sup_half, linearize, newton_step, pcg, residual, scan_phase,
                           sharpness_rows, solve)
from lagmce.spectral import critical_phase


def _quad(a):
    return lambda x: 0.5 * a * np.sum(x * x, axis=-1)


def test_residual_of_exact_quadratic():
    g = Grid.cube(2, 9)
    u = ScalarField.from_function(g, _quad(1.0))
    F = residual(u, np.pi / 2)
    assert np.max(np.abs(F.values)) < 1e-14


def test_linearize_values():
    g = Grid.cube(2, 9)
    u = ScalarField.from_function(g, _quad(2.0))
    a = linearize(u)
    assert np.allclose(a.values[a.valid], np.eye(2) / 5)


def _stencil(a, w, h):
    """sum a_ij D_ij w on interior nodes by array slicing (2-D, constant a)."""
    c = slice(1, -1)
    dxx = (w[2:, c] - 2 * w[c, c] + w[:-2, c]) / h[0] ** 2
    dyy = (w[c, 2:] - 2 * w[c, c] + w[c, :-2]) / h[1] ** 2
    dxy = (w[2:, 2:] - w[2:, :-2] - w[:-2, 2:] + w[:-2, :-2]) / (4 * h[0] * h[1])
    return a[0, 0] * dxx + 2 * a[0, 1] * dxy + a[1, 1] * dyy


def test_assemble_matches_slice_stencil(rng):
    g = Grid((-1, -1), (1, 2), (7, 9))
    B = rng.standard_normal((2, 2))
    coef = B @ B.T + np.eye(2)
    A = assemble(MatrixField(g, np.broadcast_to(coef, g.shape + (2, 2)).copy()))
    inner = g.interior(1)
    w = np.where(inner, rng.standard_normal(g.shape), 0.0)
    assert A.shape == (35, 35)
    assert np.allclose(A @ w[inner], _stencil(coef, w, g.h).ravel())
    drift = np.broadcast_to([0.5, -1.0], g.shape + (2,)).copy()
    Ad = assemble(MatrixField(g, np.broadcast_to(coef, g.shape + (2, 2)).copy()), drift)
    Dw = np.stack([(w[2:, 1:-1] - w[:-2, 1:-1]) / (2 * g.h[0]), (w[1:-1, 2:] - w[1:-1, :-2]) / (2 * g.h[1])], -1)
    assert np.allclose(Ad @ w[inner], (_stencil(coef, w, g.h) - Dw @ [0.5, -1.0]).ravel())


def test_pcg_matches_direct(rng):
    g = Grid.cube(2, 17)
    eye = MatrixField(g, np.broadcast_to(np.eye(2), g.shape + (2, 2)).copy())
    A = -assemble(eye)
    b = rng.standard_normal(A.shape[0])
    assert np.allclose(pcg(A, b), spla.spsolve(A.tocsc(), b), atol=1e-8)
    assert np.all(pcg(A, np.zeros_like(b)) == 0)
    with pytest.raises(LinearSolveStalled):
        pcg(A, b, maxiter=2)
    with pytest.raises(LinearSolveStalled):
        pcg(assemble(eye), b)


def test_harmonic_extension_exact_on_harmonic_quadratic():
    g = Grid((-1, -1), (1, 1), (11, 11))
    h = g.points[..., 0] ** 2 - g.points[..., 1] ** 2 + 0.5 * g.points[..., 0] * g.points[..., 1]
    assert np.allclose(harmonic_extension(g, h), h, atol=1e-9)


def test_newton_step_reduces_residual():
    g = Grid.cube(2, 17)
    u = ScalarField.from_function(g, lambda x: _quad(1.0)(x) + 0.05 * np.sin(3 * x[..., 0]) * (1 - x[..., 1] ** 2))
    before = np.max(np.abs(residual(u, 1.3).values))
    u2, lin, s = newton_step(u, 1.3)
    assert np.max(np.abs(residual(u2, 1.3).values)) < before
    assert lin < 1e-10
    assert 0 < s <= 1


@pytest.mark.parametrize("res", [9, 33])
def test_constant_phase_quadratic_recovered(res):
    g = Grid.cube(2, res)
    out = solve(DirichletProblem(g, PhaseSpec.constant(np.pi / 2, 2), _quad(1.0)))
    assert np.max(np.abs(out.u.values - _quad(1.0)(g.points))) <= 1e-9
    assert out.residual_sup <= 1e-9
    assert out.hessian_sup_half == pytest.approx(1.0)
    assert set(out.to_dict()) >= {"residual_sup", "newton_iters", "history"}


def test_three_dimensional_quadratic():
    g = Grid.cube(3, 9)
    out = solve(DirichletProblem(g, PhaseSpec.constant(3 * np.arctan(2.0), 3), _quad(2.0)))
    assert np.max(np.abs(out.u.values - _quad(2.0)(g.points))) <= 1e-9


def test_manufactured_solution_converges():
    def ustar(x):
        return 0.5 * np.sum(x * x, -1) + 0.05 * np.sum(x**4, -1)

    def thstar(x):
        return np.sum(np.arctan(1 + 0.6 * x**2), axis=-1)

    th = PhaseSpec.from_callable(thstar, 2)
    errs = []
    for res in (17, 33):
        g = Grid.cube(2, res)
        out = solve(DirichletProblem(g, th, ustar))
        errs.append(np.max(np.abs(out.u.values - ustar(g.points))))
    assert 3.2 <= errs[0] / errs[1] <= 4.8


def test_bracketing_small_grid():
    th = PhaseSpec.expression("1.2 + 0.3*sin(2*x1)*cos(x2)", 2)
    psi = lambda x: 0.3 * x[..., 0] ** 2 + 0.6 * x[..., 1] ** 2  # noqa: E731
    g = Grid.cube(2, 17)
    lo, hi = th.bounds(g)
    u = solve(DirichletProblem(g, th, psi)).u.values
    uh = solve(DirichletProblem(g, PhaseSpec.constant(hi, 2), psi)).u.values
    ul = solve(DirichletProblem(g, PhaseSpec.constant(lo, 2), psi)).u.values
    assert np.all(uh <= u + 1e-7)
    assert np.all(u <= ul + 1e-7)


def test_problem_validation():
    g = Grid.cube(3, 9)
    with pytest.raises(SubcriticalPhase):
        DirichletProblem(g, PhaseSpec.constant(1.0, 3), _quad(1.0)).validate()
    with pytest.raises(PhaseOutOfRange):
        DirichletProblem(g, PhaseSpec.constant(3 * np.pi / 2, 3), _quad(1.0)).validate()
    with pytest.raises(ValueError):
        DirichletProblem(g, PhaseSpec.constant(2.0, 2), _quad(1.0))


def test_continuation_stall_is_reported():
    g = Grid.cube(2, 9)
    th = PhaseSpec.expression("1.5 + 0.5*x1", 2)
    # boundary data matching sup theta makes the start exact; every later step needs >1 iteration
    opts = SolveOptions(max_newton=1, dt0=0.5, dt_min=0.2)
    with pytest.raises(ContinuationStalled):
        solve(DirichletProblem(g, th, _quad(np.tan(1.0))), opts)


@pytest.mark.parametrize("Lambda", [0.0, 1.0, 5.0])
def test_scan_phase_properties(Lambda):
    g = Grid.cube(2, 65)
    th = scan_phase(2, Lambda, seed=3)
    v = th.on_grid(g)
    assert v.min() >= critical_phase(2)
    assert th.lipschitz(g) <= Lambda + 1e-12
    assert th.lipschitz(g) >= 0.9 * Lambda


def test_hessian_scan_rows():
    rows = hessian_scan([0.0, 0.5], resolutions=(9, 17))
    assert [r["resolution"] for r in rows] == [9, 17, 9, 17]
    assert "drift" in rows[1] and "drift" not in rows[0]
    assert all(r["residual_sup"] <= 1e-9 and "error" not in r for r in rows)
    assert rows[0]["lipschitz"] == 0.0


def test_hessian_sup_half_of_quadratic():
    g = Grid.cube(2, 9)
    u = ScalarField.from_function(g, lambda x: x[..., 0] ** 2 - 0.5 * x[..., 1] ** 2)
    assert hessian_sup_half(u) == pytest.approx(2.0)


def test_sharpness_rows_grow():
    rows = sharpness_rows([0.2, 0.05])
    assert rows[1]["hessian_origin"] > rows[0]["hessian_origin"]
