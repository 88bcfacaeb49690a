import numpy as np
import pytest

from lagmce.errors import FieldFormatError
from lagmce.fields import Grid, ScalarField
from lagmce.phase import Expression, PhaseSpec
from lagmce.spectral import PhaseRegime


def test_expression_value_and_gradient():
    e = Expression("x1**2 * sin(x2)", 2)
    x = np.array([[0.5, 1.0], [1.0, -0.3]])
    assert np.allclose(e(x), x[:, 0] ** 2 * np.sin(x[:, 1]))
    assert np.allclose(e.grad(x), np.stack([2 * x[:, 0] * np.sin(x[:, 1]), x[:, 0] ** 2 * np.cos(x[:, 1])], -1))


def test_expression_constant_broadcasts():
    assert Expression("2", 3)(np.zeros((4, 3))).shape == (4,)


@pytest.mark.parametrize("text", ["x1 +* 2", "x1 + y"])
def test_expression_errors(text):
    with pytest.raises(FieldFormatError):
        Expression(text, 2)


def test_constant_phase():
    g = Grid.cube(3, 5)
    p = PhaseSpec.constant(2.0, 3)
    assert p.bounds(g) == (2.0, 2.0)
    assert p.lipschitz(g) == 0.0
    assert p.classify(g).regime is PhaseRegime.SUPERCRITICAL
    assert p.delta(g) == pytest.approx(2.0 - np.pi / 2)


def test_expression_phase_lipschitz():
    g = Grid.cube(2, 33)
    p = PhaseSpec.expression("1 + 0.5*sin(x1)", 2)
    assert p.lipschitz(g) == pytest.approx(0.5)


def test_callable_phase_fd_gradient():
    p = PhaseSpec.from_callable(lambda x: np.sum(x**3, axis=-1), 2)
    x = np.array([0.3, -0.7])
    assert np.allclose(p.grad(x), 3 * x**2, atol=1e-8)


def test_sampled_phase_interpolates_linear_exactly():
    g = Grid.cube(2, 9)
    f = ScalarField(g, 1 + 0.2 * g.points[..., 0] - 0.1 * g.points[..., 1])
    p = PhaseSpec.sampled(f)
    x = np.array([[0.13, -0.41]])
    assert p.value(x)[0] == pytest.approx(1 + 0.026 + 0.041)
    assert np.allclose(p.grad(x), [[0.2, -0.1]])
