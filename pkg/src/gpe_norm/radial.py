"""Radial discretization of R^N on a uniform grid over [0, L].

Node weights integrate f(r) * omega_{N-1} r^{N-1} on [0, L].  The interior is
the trapezoid rule; the end r = L carries a Gregory correction and the origin
carries the analytic Euler-Maclaurin term for even integrands, so smooth
radial integrands are integrated to fourth order.

Gradients are taken by a fourth-order staggered difference onto cell
midpoints, with even reflection at r = 0 (f'(0) = 0) and odd reflection at
r = L (Dirichlet).  The stiffness matrix K = G^T diag(wt) G therefore gives
||grad f||^2 = f^T K f exactly, which keeps energies and their discrete
gradients consistent.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.special import gamma as gamma_fn

# Gregory end weights (fourth order), listed from the boundary node inward.
_GREGORY = np.array([95 / 288, 317 / 240, 23 / 30, 793 / 720, 157 / 160])


class GridError(ValueError):
    pass


class TailWarning(UserWarning):
    pass


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere in R^N (2 for N = 1)."""
    return float(2 * np.pi ** (N / 2) / gamma_fn(N / 2))


def ball_volume(N: int, L: float) -> float:
    return sphere_area(N) * L**N / N


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Uniform radial grid with quadrature and derivative operators."""

    N: int
    L: float
    M: int
    r: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return self.L / (self.M - 1)

    @property
    def omega(self) -> float:
        return sphere_area(self.N)

    @cached_property
    def midpoints(self) -> np.ndarray:
        return self.r[:-1] + 0.5 * self.h

    @cached_property
    def grad_op(self) -> sp.csr_matrix:
        """Sparse (M-1) x M map from nodal values to f' at cell midpoints."""
        M, h = self.M, self.h
        rows, cols, vals = [], [], []
        stencil = ((1, 27.0), (0, -27.0), (2, -1.0), (-1, 1.0))
        for i in range(M - 1):
            for off, c in stencil:
                j, v = i + off, c / (24 * h)
                if j < 0:
                    j = -j
                elif j > M - 1:
                    j, v = 2 * (M - 1) - j, -v
                rows.append(i)
                cols.append(j)
                vals.append(v)
        return sp.csr_matrix((vals, (rows, cols)), shape=(M - 1, M))

    @cached_property
    def mid_weights(self) -> np.ndarray:
        return self.omega * self.midpoints ** (self.N - 1) * self.h

    @cached_property
    def stiffness(self) -> sp.csc_matrix:
        """K with f^T K f = ||grad f||_2^2 for fields vanishing at r = L."""
        G = self.grad_op
        return (G.T @ sp.diags(self.mid_weights) @ G).tocsc()

    @cached_property
    def stiffness_inner(self) -> sp.csc_matrix:
        """K restricted to the free nodes 0..M-2 (Dirichlet at L)."""
        n = self.M - 1
        return self.stiffness[:n, :n].tocsc()

    def integrate(self, values) -> float:
        return float(np.dot(self.w, values))

    def same_as(self, other: "RadialGrid") -> bool:
        return self is other or (
            self.N == other.N and self.M == other.M and self.L == other.L
        )

    def volume(self) -> float:
        return float(self.w.sum())


def make_grid(N: int, L: float, M: int) -> RadialGrid:
    """Uniform grid on [0, L] with M nodes for radial functions on R^N."""
    if int(N) != N or N not in (1, 2, 3, 4):
        raise GridError(f"dimension N must be in {{1,2,3,4}}, got {N}")
    if not np.isfinite(L) or L <= 0:
        raise GridError(f"radius L must be positive, got {L}")
    if int(M) != M or M < 64:
        raise GridError(f"node count M must be an integer >= 64, got {M}")
    N, M, L = int(N), int(M), float(L)
    r = np.linspace(0.0, L, M)
    h = r[1]
    c = np.ones(M)
    c[0] = 0.5
    c[-5:] = _GREGORY[::-1]
    om = sphere_area(N)
    w = om * h * c * r ** (N - 1)
    # Euler-Maclaurin origin terms for even integrands.  For N = 4 the
    # h^4 term is moved to node 1 so every weight stays nonnegative.
    if N == 2:
        w[0] += om * h * h / 12
    elif N == 4:
        w[1] -= om * h**4 / 120
    r.setflags(write=False)
    w.setflags(write=False)
    return RadialGrid(N, L, M, r, w)


@dataclass(frozen=True, eq=False)
class RadialField:
    grid: RadialGrid
    values: np.ndarray
    nonnegative: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.M,):
            raise GridError(f"field has {vals.shape} values, grid has {self.grid.M}")
        if self.nonnegative and np.any(vals < 0):
            raise GridError("field flagged nonnegative has negative values")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: RadialGrid, fn, nonnegative=False) -> "RadialField":
        return cls(grid, np.asarray(fn(grid.r), dtype=float), nonnegative)

    def __add__(self, other):
        _check_same(self.grid, other.grid)
        return RadialField(self.grid, self.values + other.values)

    def __mul__(self, c: float):
        return RadialField(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def tail(self) -> float:
        """|f(L)| relative to max|f|, the truncation monitor."""
        top = np.max(np.abs(self.values))
        return 0.0 if top == 0 else float(abs(self.values[-1]) / top)


@dataclass(frozen=True, eq=False)
class FieldPair:
    u: RadialField
    v: RadialField

    def __post_init__(self):
        _check_same(self.u.grid, self.v.grid)

    @property
    def grid(self) -> RadialGrid:
        return self.u.grid

    @classmethod
    def from_arrays(cls, grid, u, v) -> "FieldPair":
        return cls(RadialField(grid, u), RadialField(grid, v))


def _check_same(g1: RadialGrid, g2: RadialGrid):
    if not g1.same_as(g2):
        raise GridError("fields live on different grids")


def _finite(f: RadialField):
    if not np.all(np.isfinite(f.values)):
        raise FloatingPointError("field contains non-finite values")


def grad_sq(f: RadialField) -> float:
    """||grad f||_2^2."""
    _finite(f)
    g = f.grid
    d = g.grad_op @ f.values
    return float(np.dot(g.mid_weights, d * d))


def norms(f: RadialField, s: float = 2.0, mode: str = "lp") -> float:
    """Return ||f||_s^s (mode 'lp') or ||grad f||_2^2 (mode 'grad')."""
    if mode == "grad":
        return grad_sq(f)
    if mode != "lp":
        raise ValueError(f"unknown norm mode {mode!r}")
    if s < 1:
        raise ValueError("exponent must be >= 1")
    _finite(f)
    return f.grid.integrate(np.abs(f.values) ** s)


def mass(f: RadialField) -> float:
    return norms(f, 2.0)


def _spline(f: RadialField) -> CubicSpline:
    # clamped f'(0) = 0 matches the even extension of a radial function
    return CubicSpline(f.grid.r, f.values, bc_type=((1, 0.0), "not-a-knot"))


def _eval_spline(f: RadialField, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    inside = x <= f.grid.L * (1 + 1e-14)
    out[inside] = _spline(f)(np.minimum(x[inside], f.grid.L))
    return out


def dilate(t: float, f: RadialField, tail_tol: float = 1e-8) -> RadialField:
    """Mass-preserving dilation (t * f)(r) = t^{N/2} f(t r)."""
    if not t > 0:
        raise ValueError("dilation factor must be positive")
    if t == 1.0:
        return RadialField(f.grid, f.values.copy(), f.nonnegative)
    g = f.grid
    if f.tail() > tail_tol:
        warnings.warn(f"field not decayed at r = L (tail {f.tail():.2e})", TailWarning)
    vals = t ** (g.N / 2) * _eval_spline(f, t * g.r)
    if t < 1:
        # support of f now extends to L / t; monitor what is cut off
        top = np.max(np.abs(vals)) or 1.0
        cut = abs(f.values[int(np.searchsorted(g.r, t * g.L))]) * t ** (g.N / 2) / top
        if cut > tail_tol:
            warnings.warn(f"dilation pushes support past L (cut {cut:.2e})", TailWarning)
        vals[-1] = 0.0 if abs(vals[-1]) < tail_tol * top else vals[-1]
    if f.nonnegative:
        vals = np.maximum(vals, 0.0)
    return RadialField(g, vals, f.nonnegative)


def dilate_pair(t: float, pair: FieldPair) -> FieldPair:
    return FieldPair(dilate(t, pair.u), dilate(t, pair.v))


def resample(f: RadialField, grid2: RadialGrid) -> RadialField:
    """Cubic interpolation onto grid2; zero beyond the source radius."""
    if grid2.N != f.grid.N:
        raise GridError("resample requires grids of the same dimension")
    if grid2.same_as(f.grid):
        return RadialField(grid2, f.values.copy(), f.nonnegative)
    vals = _eval_spline(f, np.asarray(grid2.r, dtype=float))
    if f.nonnegative:
        vals = np.maximum(vals, 0.0)
    return RadialField(grid2, vals, f.nonnegative)
