"""Closed-form threshold geometry of the lower bound h(t) of the energy.

For (u, v) in D_a x D_b with t = (|grad u|^2 + |grad v|^2)^{1/2},
I(u, v) >= h(t) = t^2/2 - D1 t^gp - D2 t^gq - nu E t^gr, where E = S^{-2*/2}
in the Sobolev critical regime and E = D3 otherwise.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import StructuralFailure
from .functionals import (ConstantsTable, ProblemParams, classify, default_constants,
                          fiber, fiber_critical_points, norm_tuple)
from .radial import FieldPair, RadialField, RadialGrid, make_grid, norms

_BISECT_ITERS = 200


class Coefficients(NamedTuple):
    D1: float
    D2: float
    D3: float | None  # only in the subcritical regime


def coefficients(params: ProblemParams, constants: ConstantsTable | None = None) -> Coefficients:
    c = constants or default_constants()
    P = params
    gp, gq = P.gamma_p, P.gamma_q
    D1 = P.mu1 / P.p * c.gn(P.N, P.p) * P.a ** ((P.p - gp) / 2)
    D2 = P.mu2 / P.q * c.gn(P.N, P.q) * P.b ** ((P.q - gq) / 2)
    if P.critical:
        return Coefficients(D1, D2, None)
    r, gr = P.r, P.gamma_r
    D3 = ((max(P.alpha, P.beta) / r) ** (gr / 2) * c.gn(P.N, r)
          * P.a ** (P.alpha * (r - gr) / (2 * r)) * P.b ** (P.beta * (r - gr) / (2 * r)))
    return Coefficients(D1, D2, D3)


def coupling_coefficient(params, constants=None, coef: Coefficients | None = None) -> float:
    """E in the coupling term nu E t^gr of h."""
    c = constants or default_constants()
    if params.critical:
        return c.sobolev(params.N) ** (-params.two_star / 2)
    coef = coef or coefficients(params, c)
    return coef.D3


@dataclass
class HFunction:
    D1: float
    D2: float
    E: float
    nu: float
    gp: float
    gq: float
    gr: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return 0.5 * t**2 - self.D1 * t**self.gp - self.D2 * t**self.gq - self.nu * self.E * t**self.gr

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        return (t - self.gp * self.D1 * t ** (self.gp - 1) - self.gq * self.D2 * t ** (self.gq - 1)
                - self.gr * self.nu * self.E * t ** (self.gr - 1))

    def deriv_over_t(self, t):
        t = np.asarray(t, dtype=float)
        return (1 - self.gp * self.D1 * t ** (self.gp - 2) - self.gq * self.D2 * t ** (self.gq - 2)
                - self.gr * self.nu * self.E * t ** (self.gr - 2))

    def second(self, t):
        return (1 - self.gp * (self.gp - 1) * self.D1 * t ** (self.gp - 2)
                - self.gq * (self.gq - 1) * self.D2 * t ** (self.gq - 2)
                - self.gr * (self.gr - 1) * self.nu * self.E * t ** (self.gr - 2))


def h_function(params: ProblemParams, constants=None) -> HFunction:
    c = constants or default_constants()
    coef = coefficients(params, c)
    E = coupling_coefficient(params, c, coef)
    return HFunction(coef.D1, coef.D2, E, params.nu, params.gamma_p, params.gamma_q, params.gamma_r)


def _bisect_log(fn, lo, hi):
    """Bisection in log t for a sign change of fn on [lo, hi]."""
    flo = fn(lo)
    x0, x1 = math.log(lo), math.log(hi)
    for _ in range(_BISECT_ITERS):
        xm = 0.5 * (x0 + x1)
        fm = fn(math.exp(xm))
        if fm == 0:
            return math.exp(xm)
        if (fm > 0) == (flo > 0):
            x0, flo = xm, fm
        else:
            x1 = xm
        if x1 - x0 < 1e-15:
            break
    return math.exp(0.5 * (x0 + x1))


def _sign_changes(fn, lo=1e-20, hi=1e20, n=4000):
    ts = np.logspace(math.log10(lo), math.log10(hi), n)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        vals = fn(ts)
    s = np.sign(vals)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    return [_bisect_log(lambda x: float(fn(x)), ts[i], ts[i + 1]) for i in idx]


@dataclass
class GeometryReport:
    regime: str
    D1: float
    D2: float
    D3: float | None
    coupling_coef: float
    T_ab: float
    T_tilde_ab: float
    alpha1: float | None
    alpha1_as_printed: float | None
    c0: float | None
    feasible: bool
    h_crit_points: list = field(default_factory=list)  # (t, h(t), curvature sign)
    zeros: list = field(default_factory=list)
    R0: float | None = None
    R1: float | None = None
    R: float | None = None
    k0: float | None = None
    tbar: float | None = None
    sbar: float | None = None
    R1_bound: float | None = None
    structure_ok: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _alpha1(params: ProblemParams, constants) -> tuple[float, float]:
    """Sufficient bound on T_ab for the two-critical-point geometry.

    Writing the sufficient condition as X T1 + Y T2 < 2 - gp with
    T_ab = T1 + T2 gives the gate T_ab < (2 - gp) / max(X, Y).  The second
    value returned uses min(X, Y) instead; it is reported for comparison
    only since it does not imply the geometry.
    """
    P = params
    N, gp, gq, ts = P.N, P.gamma_p, P.gamma_q, P.two_star
    Cp, Cq = constants.gn(N, P.p), constants.gn(N, P.q)
    S = constants.sobolev(N)
    base = 2 * Cp * (gq - gp) / (P.p * (gq - 2))
    X = Cq * gq * (gq - gp) / P.q * base ** ((gq - 2) / (2 - gp))
    Y = ts * S ** (-ts / 2) * (ts - gp) * base ** ((ts - 2) / (2 - gp))
    return (2 - gp) / max(X, Y), (2 - gp) / min(X, Y)


def threshold_T(params: ProblemParams) -> float:
    P = params
    x = P.mu1 * P.a ** ((P.p - P.gamma_p) / 2)
    return (P.mu2 * P.b ** ((P.q - P.gamma_q) / 2) * x ** ((P.gamma_q - 2) / (2 - P.gamma_p))
            + P.nu * x ** ((P.two_star - 2) / (2 - P.gamma_p)) if P.N >= 3 else math.nan)


def threshold_T_tilde(params: ProblemParams) -> float:
    P = params
    gp, gq, gr, r = P.gamma_p, P.gamma_q, P.gamma(P.r), P.r
    cpl = P.a ** (P.alpha * (1 - gr / r)) * P.b ** (P.beta * (1 - gr / r)) * P.nu
    A = P.mu1 * P.a ** (P.p - gp)
    B = P.mu2 * P.b ** (P.q - gq)
    if abs(r - P.pbar) < 1e-12:
        return min(cpl, A ** (1 / (2 - gp)) * B ** (1 / (gq - 2)))
    if r < P.pbar:
        return cpl * B ** ((2 - gr) / (gq - 2)) + A * B ** ((2 - gp) / (gq - 2))
    return cpl * A ** ((gr - 2) / (2 - gp)) + B * A ** ((gq - 2) / (2 - gp))


def thresholds(params: ProblemParams, constants=None, c0: float = math.inf):
    """(T_ab, T_tilde_ab, alpha1, feasible) for the formula gate.

    Critical regime: feasible iff T_ab < alpha1.  Subcritical regime: the
    constant c0 is a configurable surrogate (default +inf), and h_profile
    additionally requires the two-critical-point structure of h itself.
    """
    c = constants or default_constants()
    T = threshold_T(params)
    Tt = threshold_T_tilde(params)
    if params.critical:
        a1, _ = _alpha1(params, c)
        return T, Tt, a1, bool(T < a1)
    return T, Tt, None, bool(Tt < c0)


def h_profile(params: ProblemParams, constants=None, c0: float = math.inf,
              strict: bool = False) -> GeometryReport:
    """Critical points, zeros R0 < R1, R and k0 = h(R) of the lower bound h."""
    c = constants or default_constants()
    coef = coefficients(params, c)
    h = h_function(params, c)
    T, Tt, a1, gate = thresholds(params, c, c0)
    a1_printed = _alpha1(params, c)[1] if params.critical else None
    rep = GeometryReport(
        regime=params.regime, D1=coef.D1, D2=coef.D2, D3=coef.D3, coupling_coef=h.E,
        T_ab=T, T_tilde_ab=Tt, alpha1=a1, alpha1_as_printed=a1_printed,
        c0=None if params.critical else c0, feasible=False,
    )
    crit = _sign_changes(h.deriv_over_t)
    rep.h_crit_points = [(t, float(h(t)), int(np.sign(h.second(t)))) for t in crit]
    rep.zeros = _sign_changes(lambda t: h(t) / t**2)
    if params.critical:
        rep.R1_bound = (c.sobolev(params.N) ** (params.two_star / 2) / (2 * params.nu)) ** (
            1 / (params.two_star - 2))
    # diagnostics from the alpha1 derivation
    gp, gq, gr = h.gp, h.gq, h.gr
    rep.sbar = (2 * h.D1 * (gq - gp) / (gq - 2)) ** (1 / (2 - gp))
    g = lambda t: (2 - gp) - h.D2 * gq * (gq - gp) * t ** (gq - 2) - gr * h.nu * h.E * (gr - gp) * t ** (gr - 2)
    tb = _sign_changes(g)
    rep.tbar = tb[0] if len(tb) == 1 else None

    pts = rep.h_crit_points
    structure = (len(pts) == 2 and pts[0][2] > 0 and pts[1][2] < 0
                 and pts[0][1] < 0 and pts[1][1] > 0)
    if structure:
        (tmin, _, _), (tmax, _, _) = pts
        hi = tmax * 2
        while h(hi) > 0:
            hi *= 2
        rep.R0 = _bisect_log(lambda t: float(h(t)), tmin, tmax)
        rep.R1 = _bisect_log(lambda t: float(h(t)), tmax, hi)
        rep.R = 0.5 * (rep.R0 + rep.R1)
        rep.k0 = float(h(rep.R))
    rep.structure_ok = bool(structure)
    rep.feasible = bool(gate and structure) if not params.critical else bool(gate)
    if strict and params.critical and gate and not structure:
        raise StructuralFailure("T_ab < alpha1 but h lacks the two-critical-point shape",
                                {"crit": pts})
    return rep


def h_root_residuals(params, report: GeometryReport, constants=None) -> tuple[float, float]:
    h = h_function(params, constants)
    scale = 0.5 * report.R1**2
    return abs(float(h(report.R0))) / scale, abs(float(h(report.R1))) / scale


def h_sign_check(params, report: GeometryReport, constants=None, n=200) -> bool:
    """h > 0 on (R0, R1) and h <= 0 outside, sampled at n points each."""
    h = h_function(params, constants)
    R0, R1 = report.R0, report.R1
    inside = np.linspace(R0, R1, n + 2)[1:-1]
    below = np.linspace(R0 * 1e-3, R0, n, endpoint=False)
    above = np.linspace(R1, 10 * R1, n + 1)[1:]
    tol = 1e-12 * R1**2
    return bool(np.all(h(inside) > 0) and np.all(h(below) <= tol) and np.all(h(above) <= tol))


def max_feasible_a(params: ProblemParams, constants=None, lo=1e-12, hi=1e6) -> float:
    """Largest a with T_ab < alpha1 (critical regime), by bisection in log a."""
    c = constants or default_constants()
    a1 = _alpha1(params, c)[0]
    f = lambda a: threshold_T(params.replace(a=a)) - a1
    if f(lo) >= 0:
        return 0.0
    if f(hi) < 0:
        return hi
    return _bisect_log(f, lo, hi)


# ------------------------------------------------------------ Monte Carlo

def random_mixture(grid: RadialGrid, rng: np.random.Generator, n_terms=3,
                   width=(0.3, 4.0)) -> np.ndarray:
    """Positive sum of gaussians with random widths and weights."""
    r = grid.r
    out = np.zeros_like(r)
    for _ in range(n_terms):
        s = math.exp(rng.uniform(math.log(width[0]), math.log(width[1])))
        out += rng.uniform(0.2, 1.0) * np.exp(-(r / s) ** 2)
    out[-1] = 0.0
    return out


def random_pair(grid, rng, a, b, full_mass=False) -> FieldPair:
    u = random_mixture(grid, rng)
    v = random_mixture(grid, rng)
    ma = a if full_mass else a * rng.uniform(0.05, 1.0)
    mb = b if full_mass else b * rng.uniform(0.05, 1.0)
    u *= math.sqrt(ma / grid.integrate(u * u))
    v *= math.sqrt(mb / grid.integrate(v * v))
    return FieldPair(RadialField(grid, u, True), RadialField(grid, v, True))


def p0_empty_scan(params: ProblemParams, constants=None, n_samples: int = 500,
                  grid: RadialGrid | None = None, seed: int = 0, full_mass=False):
    """Monte Carlo surrogate for emptiness of the degenerate set P^0.

    Each sample pair in D_a x D_b contributes min |Phi''|/K over its fiber
    critical points; a sample whose fiber map does not have both critical
    points contributes 0, since the two critical points can only disappear
    through a degenerate one.  Returns (empty, worst margin).
    """
    if n_samples <= 0:
        return True, math.inf
    grid = grid or make_grid(params.N, 20.0, 1024)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    worst = math.inf
    for _ in range(n_samples):
        pair = random_pair(grid, rng, params.a, params.b, full_mass)
        nt = norm_tuple(pair, params)
        roots = fiber_critical_points(nt, params)
        if len(roots) > 2:
            raise StructuralFailure("fiber map with more than two critical points",
                                    {"roots": roots})
        if len(roots) < 2:
            worst = 0.0
            continue
        m = min(abs(fiber(nt, params, t)[2]) for t in roots) / nt.K
        worst = min(worst, m)
    return bool(worst > 1e-6), worst


# ---------------------------------------------------------------- Z_{a,b}

def minus_level(nt, params) -> float | None:
    """Phi at the fiber maximum t_(u,v), or None if there is none."""
    roots = fiber_critical_points(nt, params)
    best = None
    for t in roots:
        phi, _, d2 = fiber(nt, params, t)
        if d2 < 0:
            best = (t, phi)
    return best


def estimate_Z(params: ProblemParams, pool: Sequence[FieldPair], steps: int = 100,
               tau: float = 0.2) -> float:
    """Upper bound for inf over P^- of I by descent from each pool member.

    J(w) = max_t Phi_w(t) is dilation invariant and equals I at the P^-
    projection of w, so descending J on the product of spheres composes the
    descent with the re-projection.  By the envelope theorem the gradient of
    J is the gradient of Phi_w(t) at fixed t = t_w.
    """
    if len(pool) == 0:
        raise ValueError("estimate_Z needs a nonempty pool")
    from .solvers import Discretization

    best = math.inf
    for pair in pool:
        disc = Discretization(pair.grid, params)
        x = disc.pack(pair)
        masses = disc.masses(x)
        val = disc.minus_level(x)
        if val is None:
            continue
        t, J = val
        for _ in range(steps):
            g = disc.fiber_gradient(x, t)
            d = disc.tangent_precond(x, g)
            step = tau
            while step > 1e-8:
                y = disc.renormalize(x - step * d, masses)
                cand = disc.minus_level(y)
                if cand is not None and cand[1] < J - 1e-4 * step * float(g @ d):
                    x, (t, J) = y, cand
                    break
                step *= 0.5
            else:
                break
        best = min(best, J)
    return best
