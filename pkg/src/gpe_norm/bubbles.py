"""Truncated Aubin-Talenti bubbles and the critical-case level bound.

The bubble U_n concentrates at scale 1/n, far below the spacing of a
typical radial grid, so every integral that involves U_n is evaluated with
a composite Gauss-Legendre rule on geometrically refined panels of [0, 2].
Smooth base profiles are interpolated onto those nodes by cubic splines.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from .errors import RegimeError
from .functionals import (ConstantsTable, ProblemParams, critical_exponent,
                          default_constants)
from .radial import RadialField, RadialGrid, sphere_area


def bubble_constant(N: int) -> float:
    """A_N = [N(N-2)]^{(N-2)/4}."""
    return (N * (N - 2)) ** ((N - 2) / 4)


def bubble_profile(N: int, n: float, r) -> np.ndarray:
    """U_n(r): Aubin-Talenti core on [0,1), linear cutoff on [1,2), zero beyond."""
    r = np.asarray(r, dtype=float)
    A = bubble_constant(N)
    e = (N - 2) / 2
    edge = A * (n / (1 + n * n)) ** e
    out = np.zeros_like(r)
    core = r < 1
    out[core] = A * (n / (1 + (n * r[core]) ** 2)) ** e
    ramp = (r >= 1) & (r < 2)
    out[ramp] = edge * (2 - r[ramp])
    return out


def bubble_derivative(N: int, n: float, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    A = bubble_constant(N)
    e = (N - 2) / 2
    out = np.zeros_like(r)
    core = r < 1
    rc = r[core]
    out[core] = -A * (N - 2) * n ** (e + 2) * rc * (1 + (n * rc) ** 2) ** (-N / 2)
    ramp = (r >= 1) & (r < 2)
    out[ramp] = -A * (n / (1 + n * n)) ** e
    return out


def xi(N: int, n: float) -> float:
    """xi(n) = int_0^n s^{N-1} (1+s^2)^{-(N-2)} ds in closed form."""
    if N == 3:
        return n - math.atan(n)
    if N == 4:
        w = 1 + n * n
        return 0.5 * (math.log(w) + 1 / w - 1)
    raise RegimeError("bubbles are defined for N in {3, 4}")


def refined_rule(n: float, order: int = 16, panels_per_decade: int = 12):
    """Nodes and radial weights (including omega r^{N-1} later) on [0, 2].

    Panels are geometric on [0, 1] down to 1/(64 n), then [1, 2] is split
    at 1.5.  Breakpoints sit on the kinks of U_n at r = 1 and r = 2.
    """
    lo = 1.0 / (64.0 * n)
    decades = math.log10(1.0 / lo)
    k = max(int(math.ceil(decades * panels_per_decade)), 4)
    br = np.concatenate([[0.0], np.geomspace(lo, 1.0, k + 1), [1.5, 2.0]])
    xg, wg = np.polynomial.legendre.leggauss(order)
    a, b = br[:-1, None], br[1:, None]
    x = (0.5 * (b - a) * xg + 0.5 * (a + b)).ravel()
    w = (0.5 * (b - a) * wg).ravel()
    return x, w


@dataclass
class BubbleFamily:
    N: int
    n_values: list
    A_N: float
    profiles: dict
    table: dict = field(default_factory=dict)

    def to_dict(self):
        return {"N": self.N, "n_values": list(self.n_values), "A_N": self.A_N,
                "table": {str(k): v for k, v in self.table.items()}}


def _bubble_norms(N: int, n: float, order: int):
    x, w = refined_rule(n, order)
    om = sphere_area(N)
    wr = om * w * x ** (N - 1)
    U = bubble_profile(N, n, x)
    dU = bubble_derivative(N, n, x)
    ts = critical_exponent(N)
    return {"mass": float(wr @ U ** 2), "grad": float(wr @ dU ** 2),
            "crit": float(wr @ U ** ts)}


def build_bubbles(N: int, n_values, grid: RadialGrid, tol: float = 1e-3) -> BubbleFamily:
    """Bubble profiles on the grid and their norms by refined quadrature.

    The quadrature error is estimated by halving the Gauss order; the
    family is rejected if that estimate exceeds tol relative.
    """
    if N not in (3, 4):
        raise RegimeError("bubbles are defined for N in {3, 4}")
    if grid.N != N:
        raise ValueError("grid dimension does not match N")
    if grid.L < 2:
        raise ValueError("grid must cover the bubble support [0, 2]")
    ns = sorted(int(n) for n in n_values)
    if not ns or ns[0] < 1 or len(set(ns)) != len(ns):
        raise ValueError("n_values must be distinct positive integers")
    profiles, table = {}, {}
    for n in ns:
        fine = _bubble_norms(N, n, 16)
        coarse = _bubble_norms(N, n, 8)
        err = max(abs(fine[k] - coarse[k]) / abs(fine[k]) for k in fine)
        if err > tol:
            raise ValueError(f"quadrature error {err:.2e} too large for n={n}")
        table[n] = {**fine, "xi": xi(N, n), "quad_error": err}
        profiles[n] = RadialField(grid, bubble_profile(N, n, grid.r), True)
    return BubbleFamily(N, ns, bubble_constant(N), profiles, table)


def _loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass
class AsymptoticsReport:
    grad_rate: float
    crit_rate: float
    mass_rate: float
    xi_slope: float
    grad_limit: float
    crit_limit: float
    mass_ratio_spread: float
    xi_ratio_spread: float
    fit_n: list

    def to_dict(self):
        return dict(self.__dict__)


def _monotone_tail(ns, dev):
    """Largest suffix of n values with strictly decreasing positive deviations."""
    keep = [len(ns) - 1]
    for i in range(len(ns) - 2, -1, -1):
        if dev[i] > dev[keep[-1]] > 0:
            keep.append(i)
        else:
            break
    return sorted(keep)


def bubble_asymptotics(family: BubbleFamily, constants: ConstantsTable | None = None,
                       n_fit: int = 3) -> AsymptoticsReport:
    """Fitted decay rates of the bubble norm deviations over the largest n.

    Fits use the largest n_fit values.  If a deviation stops decreasing
    (quadrature noise floor) the fit range is truncated to the monotone tail.
    """
    N = family.N
    c = constants or default_constants()
    SN = c.sobolev(N) ** (N / 2)
    ns = np.array(family.n_values[-n_fit:], dtype=float)
    if len(ns) < 2:
        raise ValueError("need at least two n values")
    tab = [family.table[int(n)] for n in ns]
    gdev = np.array([abs(t["grad"] - SN) for t in tab])
    cdev = np.array([abs(t["crit"] - SN) for t in tab])
    mass = np.array([t["mass"] for t in tab])
    xis = np.array([t["xi"] for t in tab])

    def rate(dev):
        idx = _monotone_tail(ns, dev)
        if len(idx) < 2:
            return float("nan")
        return _loglog_slope(ns[idx], dev[idx])

    ratio = mass / (xis / ns ** 2)
    norm_xi = xis / (ns if N == 3 else np.log(1 + ns ** 2))
    return AsymptoticsReport(
        grad_rate=rate(gdev), crit_rate=rate(cdev), mass_rate=_loglog_slope(ns, mass),
        xi_slope=_loglog_slope(ns, xis), grad_limit=float(tab[-1]["grad"]),
        crit_limit=float(tab[-1]["crit"]),
        mass_ratio_spread=float(ratio.max() / ratio.min() - 1),
        xi_ratio_spread=float(norm_xi.max() / norm_xi.min() - 1),
        fit_n=[int(n) for n in ns])


# ------------------------------------------------------------- test curves

def t_star(params: ProblemParams) -> float:
    """Maximizer of the limit curve in closed form."""
    N, al, be, nu = params.N, params.alpha, params.beta, params.nu
    return (nu ** (-(N - 2) / 4) * al ** ((4 - (N - 2) * al) / 8)
            * be ** (-(N - 2) * be / 8))


def t_star_bisect(params: ProblemParams) -> float:
    """Root of (1/alpha) t - nu (beta/alpha)^{beta/2} t^{2*-1} on (0, inf)."""
    al, be, nu = params.alpha, params.beta, params.nu
    ts = critical_exponent(params.N)
    c = nu * (be / al) ** (be / 2)
    g = lambda t: t / al - c * t ** (ts - 1)
    hi = 1.0
    while g(hi) > 0:
        hi *= 2
    lo = hi / 2
    while g(lo) <= 0:
        lo /= 2
    return brentq(g, lo, hi, xtol=1e-15, rtol=1e-15)


def limit_curve(params: ProblemParams, constants: ConstantsTable, t) -> np.ndarray:
    """S^{N/2}[(2*/(2 alpha)) t^2 - nu (beta/alpha)^{beta/2} t^{2*}]."""
    N, al, be, nu = params.N, params.alpha, params.beta, params.nu
    ts = critical_exponent(N)
    SN = constants.sobolev(N) ** (N / 2)
    t = np.asarray(t, dtype=float)
    return SN * (ts / (2 * al) * t ** 2 - nu * (be / al) ** (be / 2) * t ** ts)


def bound_gap(params: ProblemParams, constants: ConstantsTable) -> float:
    """(2/(N-2)) nu^{-(N-2)/2} alpha^{-(N-2)alpha/4} beta^{-(N-2)beta/4} S^{N/2}."""
    N, al, be, nu = params.N, params.alpha, params.beta, params.nu
    SN = constants.sobolev(N) ** (N / 2)
    return (2 / (N - 2) * nu ** (-(N - 2) / 2) * al ** (-(N - 2) * al / 4)
            * be ** (-(N - 2) * be / 4) * SN)


class _CurveEvaluator:
    """Energy of the normalized pair (Phi_{n,t}, Psi_{n,t}).

    Integrals split as grid values of the base over [0, L] plus a correction
    on [0, 2] that compares the perturbed and unperturbed integrands on the
    same refined nodes, so the t = 0 value reproduces the base energy.
    """

    def __init__(self, pair, params: ProblemParams, n: int, base_norms):
        g = pair.grid
        P = params
        self.P, self.n = P, n
        N = P.N
        x, w = refined_rule(n)
        self.wr = sphere_area(N) * w * x ** (N - 1)
        su = CubicSpline(g.r, pair.u.values, bc_type=((1, 0.0), "not-a-knot"))
        sv = CubicSpline(g.r, pair.v.values, bc_type=((1, 0.0), "not-a-knot"))
        self.u, self.du = su(x), su(x, 1)
        self.v, self.dv = sv(x), sv(x, 1)
        self.U = bubble_profile(N, n, x)
        self.dU = bubble_derivative(N, n, x)
        self.Ku, self.Kv, self.Mu, self.Mv, self.A, self.B, self.C = base_norms
        self.c = math.sqrt(P.beta / P.alpha)
        wr = self.wr
        self.uU = wr @ (self.u * self.U)
        self.vU = wr @ (self.v * self.U)
        self.duU = wr @ (self.du * self.dU)
        self.dvU = wr @ (self.dv * self.dU)
        self.UU = wr @ self.U ** 2
        self.dUU = wr @ self.dU ** 2
        self.A0 = wr @ self.u ** P.p
        self.B0 = wr @ self.v ** P.q
        self.C0 = wr @ (self.u ** P.alpha * self.v ** P.beta)

    def parts(self, t: float):
        P, wr, c = self.P, self.wr, self.c
        f = self.u + t * self.U
        g = self.v + c * t * self.U
        mu_ = self.Mu + 2 * t * self.uU + t * t * self.UU
        mv = self.Mv + 2 * c * t * self.vU + c * c * t * t * self.UU
        Ku = self.Ku + 2 * t * self.duU + t * t * self.dUU
        Kv = self.Kv + 2 * c * t * self.dvU + c * c * t * t * self.dUU
        A = self.A + (wr @ f ** P.p - self.A0)
        B = self.B + (wr @ g ** P.q - self.B0)
        C = self.C + (wr @ (f ** P.alpha * g ** P.beta) - self.C0)
        return mu_, mv, Ku, Kv, A, B, C

    def __call__(self, t: float) -> float:
        P = self.P
        mu_, mv, Ku, Kv, A, B, C = self.parts(t)
        s1 = math.sqrt(P.a / mu_)
        s2 = math.sqrt(P.b / mv)
        return (0.5 * (s1 * s1 * Ku + s2 * s2 * Kv) - P.mu1 / P.p * s1 ** P.p * A
                - P.mu2 / P.q * s2 ** P.q * B - P.nu * s1 ** P.alpha * s2 ** P.beta * C)


def _base_norms(pair, params):
    from .radial import grad_sq, norms

    P = params
    u, v = pair.u, pair.v
    g = pair.grid
    C = g.integrate(np.abs(u.values) ** P.alpha * np.abs(v.values) ** P.beta)
    return (grad_sq(u), grad_sq(v), norms(u, 2), norms(v, 2), norms(u, P.p),
            norms(v, P.q), C)


@dataclass
class BubbleCurve:
    n: int
    t: np.ndarray
    H: np.ndarray
    t_n: float
    H_max: float
    H0: float

    def to_dict(self):
        return {"n": self.n, "t": self.t.tolist(), "H": self.H.tolist(), "t_n": self.t_n,
                "H_max": self.H_max, "H0": self.H0}


def endpoint_T(params: ProblemParams, constants: ConstantsTable, m_ab: float) -> float:
    """Doubling from 2 until the limit curve drops below 2 m(a,b) - m(a,b)."""
    T = 2.0
    while m_ab + float(limit_curve(params, constants, T)) >= 2 * m_ab:
        T *= 2
        if T > 1e6:
            raise ValueError("no endpoint T with H below 2 m(a,b)")
    return T


def bubble_curve(base, family: BubbleFamily, params: ProblemParams, t_grid=None,
                 constants: ConstantsTable | None = None) -> list:
    """H_n(t) on t_grid and its maximizer t_n for every n of the family."""
    c = constants or default_constants()
    if not params.critical:
        raise RegimeError("bubble curves are defined in the Sobolev critical regime")
    if base.kind != "local_min" or base.kkt_residual > 1e-6:
        raise ValueError("base is not a converged local minimizer")
    pair = base.pair
    if pair.grid.N != family.N:
        raise ValueError("family dimension does not match the base")
    bn = _base_norms(pair, params)
    if t_grid is None:
        T = endpoint_T(params, c, base.energy)
        t_grid = np.linspace(0.0, T, 81)
    t_grid = np.asarray(t_grid, dtype=float)
    out = []
    for n in family.n_values:
        H = _CurveEvaluator(pair, params, n, bn)
        vals = np.array([H(t) for t in t_grid])
        k = int(np.argmax(vals))
        lo = t_grid[max(k - 1, 0)]
        hi = t_grid[min(k + 1, len(t_grid) - 1)]
        res = minimize_scalar(lambda t: -H(t), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10 * max(hi, 1.0)})
        tn, Hn = float(res.x), float(-res.fun)
        if vals[k] > Hn:
            tn, Hn = float(t_grid[k]), float(vals[k])
        out.append(BubbleCurve(n, t_grid, vals, tn, Hn, float(H(0.0))))
    return out


@dataclass
class LevelBoundReport:
    bound: float
    gap: float
    margins: list
    n_values: list
    positive_at_largest: bool
    monotone_from: int | None

    def to_dict(self):
        return dict(self.__dict__)


def level_bound_check(base, family: BubbleFamily, params: ProblemParams,
                      constants: ConstantsTable | None = None, curves=None) -> LevelBoundReport:
    """Signed margins bound - H_n(t_n) against m(a,b) + bound_gap."""
    c = constants or default_constants()
    curves = curves or bubble_curve(base, family, params, constants=c)
    gap = bound_gap(params, c)
    bound = base.energy + gap
    margins = [bound - cv.H_max for cv in curves]
    ns = [cv.n for cv in curves]
    start = None
    for i in range(len(margins)):
        tail = margins[i:]
        if len(tail) >= 2 and all(b > a for a, b in zip(tail, tail[1:])):
            start = ns[i]
            break
    return LevelBoundReport(bound, gap, margins, ns, bool(margins[-1] > 0), start)
