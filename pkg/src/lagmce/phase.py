"""Prescribed phase functions and closed-form expressions over the domain."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy
from scipy.interpolate import RegularGridInterpolator

from .errors import DimensionMismatch, FieldFormatError
from .fields import Grid, ScalarField, gradient
from .spectral import PhaseClass, classify_phase, critical_phase


class Expression:
    """A scalar closed form in variables ``x1 .. xn`` with its exact gradient."""

    def __init__(self, text: str, n: int):
        self.text = text
        self.n = n
        syms = sympy.symbols(f"x1:{n + 1}")
        try:
            expr = sympy.sympify(text, locals={str(s): s for s in syms})
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise FieldFormatError(f"cannot parse expression {text!r}: {exc}") from exc
        extra = expr.free_symbols - set(syms)
        if extra:
            raise FieldFormatError(f"expression uses unknown symbols {sorted(map(str, extra))}")
        self._f = sympy.lambdify(syms, expr, "numpy")
        self._g = [sympy.lambdify(syms, sympy.diff(expr, s), "numpy") for s in syms]

    def _call(self, fn, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise DimensionMismatch(f"expected {self.n} coordinates")
        out = fn(*np.moveaxis(x, -1, 0))
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()

    def __call__(self, x):
        return self._call(self._f, x)

    def grad(self, x):
        return np.stack([self._call(g, x) for g in self._g], axis=-1)


@dataclass
class PhaseSpec:
    """The right-hand side theta of tr(arctan D^2 u) = theta.

    Build with :meth:`constant`, :meth:`expression`, :meth:`sampled` or
    :meth:`from_callable`.  ``value`` and ``grad`` accept points of shape
    ``(..., n)``.
    """

    n: int
    kind: str
    _value: object
    _grad: object
    label: str = ""

    @classmethod
    def constant(cls, theta: float, n: int) -> "PhaseSpec":
        t = float(theta)
        return cls(n, "constant",
                   lambda x: np.full(np.shape(x)[:-1], t),
                   lambda x: np.zeros(np.shape(x)),
                   label=repr(t))

    @classmethod
    def expression(cls, text: str, n: int) -> "PhaseSpec":
        e = Expression(text, n)
        return cls(n, "expr", e, e.grad, label=text)

    @classmethod
    def from_callable(cls, fn, n: int, grad=None, label: str = "callable") -> "PhaseSpec":
        if grad is None:
            def grad(x, _f=fn):
                x = np.asarray(x, dtype=float)
                h = 1e-6
                out = np.empty(x.shape)
                for i in range(n):
                    e = np.zeros(n)
                    e[i] = h
                    out[..., i] = (_f(x + e) - _f(x - e)) / (2 * h)
                return out
        return cls(n, "callable", fn, grad, label=label)

    @classmethod
    def sampled(cls, f: ScalarField) -> "PhaseSpec":
        g = f.grid
        interp = RegularGridInterpolator(g.axes, f.values, method="linear")
        dvals = gradient(f)
        dinterp = [RegularGridInterpolator(g.axes, dvals[..., i], method="linear") for i in range(g.n)]

        def value(x):
            x = np.asarray(x, dtype=float)
            return interp(x.reshape(-1, g.n)).reshape(x.shape[:-1])

        def grad(x):
            x = np.asarray(x, dtype=float)
            flat = x.reshape(-1, g.n)
            return np.stack([d(flat) for d in dinterp], axis=-1).reshape(x.shape)

        return cls(g.n, "csv", value, grad, label="sampled")

    def value(self, x) -> np.ndarray:
        return np.asarray(self._value(x), dtype=float)

    def grad(self, x) -> np.ndarray:
        return np.asarray(self._grad(x), dtype=float)

    def on_grid(self, grid: Grid) -> np.ndarray:
        return self.value(grid.points)

    def bounds(self, grid: Grid) -> tuple:
        v = self.on_grid(grid)
        return float(v.min()), float(v.max())

    def lipschitz(self, grid: Grid) -> float:
        """Estimate of sup |D theta| from nodal gradients."""
        return float(np.max(np.linalg.norm(self.grad(grid.points), axis=-1)))

    def classify(self, grid: Grid) -> PhaseClass:
        """Class of inf theta over the grid (the binding value for the estimates)."""
        lo, _ = self.bounds(grid)
        return classify_phase(lo, self.n)

    def delta(self, grid: Grid) -> float:
        """inf theta - (n-2) pi / 2."""
        return self.bounds(grid)[0] - critical_phase(self.n)
