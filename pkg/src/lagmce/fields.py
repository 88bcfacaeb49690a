"""Structured grids, fields on them, finite-difference stencils and field I/O."""
from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, FieldFormatError

MIN_RESOLUTION = 5


@dataclass(frozen=True)
class Grid:
    """Axis-aligned box ``[lo, hi]`` with ``resolution`` nodes per axis.

    Resolutions must be odd so the box centre is a node.
    """

    lo: tuple
    hi: tuple
    resolution: tuple

    def __post_init__(self):
        lo = tuple(float(a) for a in np.atleast_1d(self.lo))
        hi = tuple(float(a) for a in np.atleast_1d(self.hi))
        res = np.atleast_1d(self.resolution)
        if res.size == 1:
            res = np.repeat(res, len(lo))
        res = tuple(int(r) for r in res)
        if not (len(lo) == len(hi) == len(res)):
            raise DimensionMismatch("lo, hi and resolution must have equal length")
        if not 1 <= len(lo) <= 8:
            raise ValueError(f"unsupported dimension {len(lo)}")
        for a, b, r in zip(lo, hi, res):
            if not b > a:
                raise ValueError(f"empty interval [{a}, {b}]")
            if r < MIN_RESOLUTION or r % 2 == 0:
                raise ValueError(f"resolution {r} must be odd and >= {MIN_RESOLUTION}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "resolution", res)

    @classmethod
    def cube(cls, n: int, resolution: int, half_width: float = 1.0) -> "Grid":
        return cls((-half_width,) * n, (half_width,) * n, (resolution,) * n)

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple:
        return self.resolution

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def h(self) -> np.ndarray:
        return (np.array(self.hi) - np.array(self.lo)) / (np.array(self.resolution) - 1)

    @property
    def axes(self) -> list:
        return [lo + np.arange(r) * h for lo, r, h in zip(self.lo, self.resolution, self.h)]

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(*resolution, n)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def interior(self, margin: int = 1) -> np.ndarray:
        """Boolean mask of nodes at least ``margin`` nodes from every face."""
        mask = np.ones(self.shape, dtype=bool)
        for ax, r in enumerate(self.resolution):
            sl = [slice(None)] * self.n
            sl[ax] = np.r_[0:margin, r - margin:r]
            mask[tuple(sl)] = False
        return mask

    def boundary(self) -> np.ndarray:
        return ~self.interior(1)

    @property
    def centre(self) -> np.ndarray:
        return 0.5 * (np.array(self.lo) + np.array(self.hi))

    @property
    def centre_index(self) -> tuple:
        return tuple(r // 2 for r in self.resolution)

    def refined(self) -> "Grid":
        """Same box with the spacing halved."""
        return Grid(self.lo, self.hi, tuple(2 * r - 1 for r in self.resolution))


@dataclass(frozen=True)
class ScalarField:
    """Nodal values on a grid; a trailing axis holds vector components if present."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[: self.grid.n] != self.grid.shape:
            raise DimensionMismatch(f"values shape {v.shape} does not start with grid shape {self.grid.shape}")
        if v.ndim > self.grid.n + 1:
            raise DimensionMismatch("at most one trailing component axis is supported")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def components(self) -> int:
        return 1 if self.values.ndim == self.grid.n else self.values.shape[-1]

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        return cls(grid, fn(grid.points))


@dataclass(frozen=True)
class MatrixField:
    """One symmetric matrix per node; entries are NaN where ``valid`` is False."""

    grid: Grid
    values: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.grid.n
        if self.values.shape != self.grid.shape + (n, n):
            raise DimensionMismatch(f"matrix field shape {self.values.shape}")
        if self.valid is None:
            object.__setattr__(self, "valid", np.all(np.isfinite(self.values), axis=(-1, -2)))


def _require(f: ScalarField, margin: int):
    need = 2 * margin + 1
    if min(f.grid.resolution) < max(MIN_RESOLUTION, need):
        raise ValueError(f"resolution too small for stencil (need >= {max(MIN_RESOLUTION, need)})")


def _shift(a: np.ndarray, axis: int, k: int) -> np.ndarray:
    # periodic roll; wrapped entries only land on masked boundary nodes
    return np.roll(a, -k, axis=axis)


def gradient(f: ScalarField) -> np.ndarray:
    """Second-order gradient, one-sided at the faces. Shape ``(*grid.shape, n)``."""
    _require(f, 1)
    g = f.grid
    if f.components != 1:
        raise DimensionMismatch("gradient expects a scalar field")
    parts = np.gradient(f.values, *g.h, edge_order=2)
    if g.n == 1:
        parts = [parts]
    return np.stack(parts, axis=-1)


def hessian(f: ScalarField) -> MatrixField:
    """Centred second differences; boundary nodes are NaN."""
    _require(f, 1)
    g = f.grid
    u = f.values
    n, h = g.n, g.h
    H = np.empty(g.shape + (n, n))
    for i in range(n):
        H[..., i, i] = (_shift(u, i, 1) - 2 * u + _shift(u, i, -1)) / h[i] ** 2
        for j in range(i + 1, n):
            c = (
                _shift(_shift(u, i, 1), j, 1)
                - _shift(_shift(u, i, 1), j, -1)
                - _shift(_shift(u, i, -1), j, 1)
                + _shift(_shift(u, i, -1), j, -1)
            ) / (4 * h[i] * h[j])
            H[..., i, j] = c
            H[..., j, i] = c
    H[g.boundary()] = np.nan
    return MatrixField(g, H, g.interior(1))


def _d1(u, ax, h):
    return (_shift(u, ax, 1) - _shift(u, ax, -1)) / (2 * h)


def _d2(u, ax, h):
    return (_shift(u, ax, 1) - 2 * u + _shift(u, ax, -1)) / h**2


def third_derivatives(f: ScalarField) -> np.ndarray:
    """Rank-3 derivative tensor; NaN within two nodes of the boundary.

    Pure terms use the five-point stencil, mixed terms compose centred
    differences.  Each independent component is computed once and copied to
    every index permutation, so the result is exactly symmetric.
    """
    _require(f, 2)
    g = f.grid
    n, h = g.n, g.h
    u = f.values
    T = np.empty(g.shape + (n, n, n))
    for idx in itertools.combinations_with_replacement(range(n), 3):
        i, j, k = idx
        if i == j == k:
            val = (_shift(u, i, 2) - 2 * _shift(u, i, 1) + 2 * _shift(u, i, -1) - _shift(u, i, -2)) / (2 * h[i] ** 3)
        elif i == j:
            val = _d1(_d2(u, i, h[i]), k, h[k])
        elif j == k:
            val = _d1(_d2(u, j, h[j]), i, h[i])
        else:
            val = _d1(_d1(_d1(u, i, h[i]), j, h[j]), k, h[k])
        for p in set(itertools.permutations(idx)):
            T[(...,) + p] = val
    T[~g.interior(2)] = np.nan
    return T


class PolynomialTestFunction:
    """Polynomial in n variables with exact derivatives of every order.

    Parameters
    ----------
    n : int
        Number of variables.
    coeffs : dict
        Maps exponent tuples (length n, total degree <= 6) to coefficients.
    """

    MAX_DEGREE = 6

    def __init__(self, n: int, coeffs: dict):
        self.n = int(n)
        clean = {}
        for e, c in coeffs.items():
            e = tuple(int(a) for a in e)
            if len(e) != self.n or min(e) < 0:
                raise ValueError(f"bad exponent {e}")
            if sum(e) > self.MAX_DEGREE:
                raise ValueError(f"degree {sum(e)} exceeds {self.MAX_DEGREE}")
            if c != 0:
                clean[e] = clean.get(e, 0.0) + float(c)
        self.coeffs = clean
        if clean:
            self._E = np.array(list(clean.keys()), dtype=int)
            self._c = np.array(list(clean.values()))
        else:
            self._E = np.zeros((0, self.n), dtype=int)
            self._c = np.zeros(0)
        self._cache = {}

    @property
    def degree(self) -> int:
        return int(self._E.sum(axis=1).max()) if len(self._c) else 0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise DimensionMismatch(f"points have {x.shape[-1]} coordinates, expected {self.n}")
        if not len(self._c):
            return np.zeros(x.shape[:-1])
        mono = np.prod(x[..., None, :] ** self._E, axis=-1)
        return mono @ self._c

    def partial(self, alpha) -> "PolynomialTestFunction":
        """Exact partial derivative for the multi-index ``alpha``."""
        alpha = tuple(int(a) for a in alpha)
        key = alpha
        if key not in self._cache:
            out = {}
            for e, c in self.coeffs.items():
                if all(a <= b for a, b in zip(alpha, e)):
                    fac = 1.0
                    for a, b in zip(alpha, e):
                        fac *= math.perm(b, a)
                    ne = tuple(b - a for a, b in zip(alpha, e))
                    out[ne] = out.get(ne, 0.0) + c * fac
            self._cache[key] = PolynomialTestFunction(self.n, out)
        return self._cache[key]

    def derivative_tensor(self, x, order: int) -> np.ndarray:
        """All order-``order`` partials at ``x``, shape ``x.shape[:-1] + (n,)*order``."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (self.n,) * order)
        for idx in itertools.combinations_with_replacement(range(self.n), order):
            alpha = np.bincount(np.array(idx, dtype=int), minlength=self.n)
            val = self.partial(alpha)(x)
            for p in set(itertools.permutations(idx)):
                out[(...,) + p] = val
        return out

    def grad(self, x):
        return self.derivative_tensor(x, 1)

    def hess(self, x):
        return self.derivative_tensor(x, 2)

    def d3(self, x):
        return self.derivative_tensor(x, 3)

    def d4(self, x):
        return self.derivative_tensor(x, 4)

    def sample(self, grid: Grid) -> ScalarField:
        return ScalarField(grid, self(grid.points))

    def __add__(self, other: "PolynomialTestFunction") -> "PolynomialTestFunction":
        c = dict(self.coeffs)
        for e, v in other.coeffs.items():
            c[e] = c.get(e, 0.0) + v
        return PolynomialTestFunction(self.n, c)

    @classmethod
    def random(cls, n: int, degree: int, rng: np.random.Generator, scale: float = 1.0,
               min_degree: int = 0) -> "PolynomialTestFunction":
        coeffs = {}
        for d in range(min_degree, degree + 1):
            for idx in itertools.combinations_with_replacement(range(n), d):
                e = tuple(np.bincount(np.array(idx, dtype=int), minlength=n))
                coeffs[e] = scale * rng.standard_normal()
        return cls(n, coeffs)

    @classmethod
    def from_taylor(cls, *tensors) -> "PolynomialTestFunction":
        """Polynomial whose derivative tensors at 0 are ``tensors[0]`` (order 1), ...

        ``tensors[k]`` must be symmetric of order ``k + 1``; pass ``None`` to skip
        an order.  The order-0 value is zero.
        """
        n = None
        coeffs = {}
        for k, T in enumerate(tensors, start=1):
            if T is None:
                continue
            T = np.asarray(T, dtype=float)
            n = T.shape[0]
            for idx in itertools.combinations_with_replacement(range(n), k):
                e = np.bincount(np.array(idx, dtype=int), minlength=n)
                mult = math.factorial(k) / np.prod([math.factorial(a) for a in e])
                coeffs[tuple(e)] = coeffs.get(tuple(e), 0.0) + T[idx] * mult / math.factorial(k)
        if n is None:
            raise ValueError("need at least one tensor")
        return cls(n, coeffs)


# ---------------------------------------------------------------- CSV / JSON

_HEADER = re.compile(r"#\s*n=(\d+)\s+resolution=([\d,]+)\s+lo=(\S+)\s+hi=(\S+)")


def _fmt_list(xs) -> str:
    return ",".join(repr(float(x)) if not float(x).is_integer() else str(int(x)) for x in xs)


def write_field(path, f: ScalarField) -> None:
    """CSV: one header comment, then one row per node (coordinates, value(s))."""
    g = f.grid
    res = g.resolution
    rs = str(res[0]) if len(set(res)) == 1 else ",".join(map(str, res))
    pts = g.points.reshape(-1, g.n)
    vals = f.values.reshape(g.size, -1)
    with open(path, "w") as fh:
        fh.write(f"# n={g.n} resolution={rs} lo={_fmt_list(g.lo)} hi={_fmt_list(g.hi)}\n")
        np.savetxt(fh, np.hstack([pts, vals]), delimiter=",", fmt="%.17g")


def read_header(path) -> Grid:
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            m = _HEADER.match(line.strip())
            if m:
                n = int(m.group(1))
                res = [int(r) for r in m.group(2).split(",")]
                lo = [float(a) for a in m.group(3).split(",")]
                hi = [float(a) for a in m.group(4).split(",")]
                if len(res) == 1:
                    res = res * n
                if not (len(lo) == len(hi) == len(res) == n):
                    raise DimensionMismatch("header lists do not match n")
                return Grid(tuple(lo), tuple(hi), tuple(res))
    raise FieldFormatError(f"{path}: missing or malformed grid header")


def read_field(path) -> ScalarField:
    grid = read_header(path)
    try:
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except ValueError as exc:
        raise DimensionMismatch(f"{path}: ragged rows ({exc})") from exc
    if data.shape[0] != grid.size:
        raise DimensionMismatch(f"{path}: {data.shape[0]} rows, grid has {grid.size} nodes")
    ncomp = data.shape[1] - grid.n
    if ncomp < 1:
        raise DimensionMismatch(f"{path}: expected at least {grid.n + 1} columns, got {data.shape[1]}")
    vals = data[:, grid.n:]
    vals = vals.reshape(grid.shape) if ncomp == 1 else vals.reshape(grid.shape + (ncomp,))
    return ScalarField(grid, vals)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    if hasattr(obj, "value") and hasattr(obj, "name"):  # enums
        return obj.value
    return obj


def dumps_report(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_report(path, obj) -> None:
    """Deterministic JSON (sorted keys); non-finite floats become strings."""
    Path(path).write_text(dumps_report(obj))


_CONFIG_BLOCKS = {"domain", "resolution", "phase", "boundary", "solver"}


def read_config(path) -> dict:
    """Load and validate a problem configuration.

    Required blocks: ``domain`` (``lo``, ``hi``), ``resolution``, ``phase``
    (``kind`` in constant/expr/csv) and ``boundary`` (``kind`` in expr/csv).
    ``solver`` is optional.
    """
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FieldFormatError(f"{path}: invalid JSON ({exc})") from exc
    return validate_config(cfg)


def validate_config(cfg) -> dict:
    if not isinstance(cfg, dict):
        raise FieldFormatError("config must be a JSON object")
    unknown = set(cfg) - _CONFIG_BLOCKS
    if unknown:
        raise FieldFormatError(f"unknown config keys: {sorted(unknown)}")
    for key in ("domain", "resolution", "phase", "boundary"):
        if key not in cfg:
            raise FieldFormatError(f"config missing '{key}' block")
    dom = cfg["domain"]
    if not isinstance(dom, dict) or "lo" not in dom or "hi" not in dom:
        raise FieldFormatError("domain needs 'lo' and 'hi'")
    if len(dom["lo"]) != len(dom["hi"]):
        raise DimensionMismatch("domain lo/hi lengths differ")
    res = cfg["resolution"]
    if isinstance(res, int):
        res = [res] * len(dom["lo"])
    if len(res) != len(dom["lo"]):
        raise DimensionMismatch("resolution length differs from domain dimension")
    cfg["resolution"] = list(res)
    ph = cfg["phase"]
    if not isinstance(ph, dict) or ph.get("kind") not in ("constant", "expr", "csv"):
        raise FieldFormatError("phase.kind must be constant, expr or csv")
    need = {"constant": "value", "expr": "expr", "csv": "path"}[ph["kind"]]
    if need not in ph:
        raise FieldFormatError(f"phase of kind {ph['kind']} needs '{need}'")
    bd = cfg["boundary"]
    if not isinstance(bd, dict) or bd.get("kind") not in ("expr", "csv"):
        raise FieldFormatError("boundary.kind must be expr or csv")
    need = {"expr": "expr", "csv": "path"}[bd["kind"]]
    if need not in bd:
        raise FieldFormatError(f"boundary of kind {bd['kind']} needs '{need}'")
    solver = cfg.setdefault("solver", {})
    allowed = {"tol", "max_newton", "dt0", "dt_min"}
    bad = set(solver) - allowed
    if bad:
        raise FieldFormatError(f"unknown solver keys: {sorted(bad)}")
    return cfg
