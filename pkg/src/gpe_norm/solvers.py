"""Constrained solvers for the coupled system.

(A) local minimizer of I on V_R within D_a x D_b (ball constraints), and
(B) a mountain-pass critical point on the product of spheres T(a, b), found
by a climbing string and polished by Newton on the KKT system.

All solvers work on packed vectors x = [u_0..u_{n-1}, v_0..v_{n-1}] of the
free nodes (the value at r = L is fixed to zero).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .errors import SolverFailure
from .functionals import (ConstantsTable, NormTuple, ProblemParams, classify,
                          default_constants, fiber, fiber_critical_points)
from .geometry import GeometryReport, h_profile
from .radial import FieldPair, RadialField, RadialGrid, dilate, make_grid
from .scalar import ScalarGroundState, _power, auto_radius, scalar_ground_state

_FLOOR = 1e-12  # relative floor for |u|^{e} with e < 0 in Jacobians


class Discretization:
    """Discrete energy, gradient and Hessian of I on a fixed grid."""

    def __init__(self, grid: RadialGrid, params: ProblemParams, shift: float = 1.0):
        self.grid, self.params = grid, params
        self.n = grid.M - 1
        self.K = grid.stiffness_inner
        self.w = grid.w[: self.n]
        self.set_shift(shift)

    def set_shift(self, shift: float):
        self.shift = float(shift)
        self._solve = spla.factorized((self.K + sp.diags(self.shift * self.w)).tocsc())

    # packing
    def pack(self, pair: FieldPair) -> np.ndarray:
        return np.concatenate([pair.u.values[: self.n], pair.v.values[: self.n]])

    def split(self, x):
        return x[: self.n], x[self.n:]

    def unpack(self, x, nonnegative=False) -> FieldPair:
        u, v = self.split(x)
        pad = lambda y: np.concatenate([np.maximum(y, 0) if nonnegative else y, [0.0]])
        return FieldPair(RadialField(self.grid, pad(u), nonnegative),
                         RadialField(self.grid, pad(v), nonnegative))

    # integrals
    def masses(self, x):
        u, v = self.split(x)
        return float(self.w @ (u * u)), float(self.w @ (v * v))

    def norms(self, x) -> NormTuple:
        P, w = self.params, self.w
        u, v = self.split(x)
        au, av = np.abs(u), np.abs(v)
        return NormTuple(float(u @ (self.K @ u) + v @ (self.K @ v)), float(w @ au**P.p),
                         float(w @ av**P.q), float(w @ (au**P.alpha * av**P.beta)))

    def energy(self, x) -> float:
        K, A, B, C = self.norms(x)
        P = self.params
        return 0.5 * K - P.mu1 / P.p * A - P.mu2 / P.q * B - P.nu * C

    def fiber_gradient(self, x, t: float = 1.0):
        """Gradient in x of Phi_x(t) at fixed t (t = 1 gives grad I)."""
        P, w = self.params, self.w
        u, v = self.split(x)
        au, av = np.abs(u), np.abs(v)
        cu = _power(u, P.alpha - 2) * u
        cv = _power(v, P.beta - 2) * v
        tc = t**P.gamma_r
        gu = t * t * (self.K @ u) - P.mu1 * t**P.gamma_p * w * au ** (P.p - 2) * u \
            - P.nu * P.alpha * tc * w * cu * av**P.beta
        gv = t * t * (self.K @ v) - P.mu2 * t**P.gamma_q * w * av ** (P.q - 2) * v \
            - P.nu * P.beta * tc * w * au**P.alpha * cv
        return np.concatenate([gu, gv])

    def gradient(self, x):
        return self.fiber_gradient(x, 1.0)

    def multipliers(self, x):
        g = self.gradient(x)
        u, v = self.split(x)
        gu, gv = self.split(g)
        mu_, mv = self.masses(x)
        if mu_ <= 0 or mv <= 0:
            raise ValueError("multipliers need both components nonzero")
        return float(-(u @ gu) / mu_), float(-(v @ gv) / mv)

    def residual_fields(self, x, lam):
        """Strong-form Euler-Lagrange residuals at nodes with positive weight."""
        g = self.gradient(x)
        u, v = self.split(x)
        gu, gv = self.split(g)
        ok = self.w > 0
        ru, rv = np.zeros(self.n), np.zeros(self.n)
        ru[ok] = (gu[ok] + lam[0] * self.w[ok] * u[ok]) / self.w[ok]
        rv[ok] = (gv[ok] + lam[1] * self.w[ok] * v[ok]) / self.w[ok]
        return ru, rv

    def kkt_residual(self, x, lam=None) -> float:
        lam = self.multipliers(x) if lam is None else lam
        ru, rv = self.residual_fields(x, lam)
        u, v = self.split(x)
        return max(np.max(np.abs(ru)) / max(np.max(np.abs(u)), 1e-300),
                   np.max(np.abs(rv)) / max(np.max(np.abs(v)), 1e-300))

    # metric helpers
    def precond(self, g):
        gu, gv = self.split(g)
        return np.concatenate([self._solve(gu), self._solve(gv)])

    def tangent_precond(self, x, g):
        """Preconditioned gradient projected on the tangent of the spheres."""
        d = self.precond(g)
        u, v = self.split(x)
        du, dv = self.split(d)
        out = []
        for y, dy in ((u, du), (v, dv)):
            wy = self.w * y
            py = self._solve(wy)
            den = wy @ py
            out.append(dy - (wy @ dy) / den * py if den > 0 else dy)
        return np.concatenate(out)

    def ball_direction(self, x, g, caps, rtol=1e-10):
        """Preconditioned descent direction respecting saturated mass caps.

        A component sitting on its cap whose free step would push the mass
        outward is replaced by its tangent projection.
        """
        d = self.precond(g)
        u, v = self.split(x)
        du, dv = self.split(d)
        m = self.masses(x)
        out = []
        for y, dy, mi, cap in ((u, du, m[0], caps[0]), (v, dv, m[1], caps[1])):
            wy = self.w * y
            if mi >= cap * (1 - rtol) and wy @ dy < 0:
                py = self._solve(wy)
                dy = dy - (wy @ dy) / (wy @ py) * py
            out.append(dy)
        return np.concatenate(out)

    def l2_metric(self, d) -> float:
        return float(np.concatenate([self.w, self.w]) @ (d * d))

    def metric(self, d) -> float:
        du, dv = self.split(d)
        Mop = self.K + sp.diags(self.shift * self.w)
        return float(du @ (Mop @ du) + dv @ (Mop @ dv))

    def renormalize(self, x, masses):
        u, v = self.split(x)
        mu_, mv = self.masses(x)
        return np.concatenate([u * math.sqrt(masses[0] / mu_), v * math.sqrt(masses[1] / mv)])

    def ball_project(self, x, caps):
        """Metric projection onto the nonnegative cone, then onto the balls."""
        x = np.maximum(x, 0.0)
        u, v = self.split(x)
        mu_, mv = self.masses(x)
        if mu_ > caps[0]:
            u = u * math.sqrt(caps[0] / mu_)
        if mv > caps[1]:
            v = v * math.sqrt(caps[1] / mv)
        return np.concatenate([u, v])

    def minus_level(self, x):
        nt = self.norms(x)
        best = None
        for t in fiber_critical_points(nt, self.params):
            phi, _, d2 = fiber(nt, self.params, t)
            if d2 < 0:
                best = (t, phi)
        return best

    # Newton on the KKT system
    def hessian(self, x):
        P, w = self.params, self.w
        u, v = self.split(x)
        au = np.maximum(np.abs(u), _FLOOR * np.max(np.abs(u)))
        av = np.maximum(np.abs(v), _FLOOR * np.max(np.abs(v)))
        su, sv = np.sign(u), np.sign(v)
        Huu = self.K + sp.diags(-P.mu1 * (P.p - 1) * w * au ** (P.p - 2)
                                - P.nu * P.alpha * (P.alpha - 1) * w * au ** (P.alpha - 2) * av**P.beta)
        Hvv = self.K + sp.diags(-P.mu2 * (P.q - 1) * w * av ** (P.q - 2)
                                - P.nu * P.beta * (P.beta - 1) * w * au**P.alpha * av ** (P.beta - 2))
        Huv = sp.diags(-P.nu * P.alpha * P.beta * w * au ** (P.alpha - 1) * su
                       * av ** (P.beta - 1) * sv)
        return Huu, Huv, Hvv

    def newton_kkt(self, x, masses, active=(True, True), lam=None, tol=1e-13,
                   maxit=60):
        """Newton for grad I + lam W x = 0 with masses fixed on active parts."""
        n, w = self.n, self.w
        lam = list(self.multipliers(x) if lam is None else lam)
        lam = [lam[i] if active[i] else 0.0 for i in (0, 1)]
        x = x.copy()

        def system(x, lam):
            g = self.gradient(x)
            u, v = self.split(x)
            F = [g[:n] + lam[0] * w * u, g[n:] + lam[1] * w * v]
            c = [0.5 * (w @ (u * u) - masses[0]), 0.5 * (w @ (v * v) - masses[1])]
            return np.concatenate(F + [np.array([c[i]]) for i in (0, 1) if active[i]])

        F = system(x, lam)
        hist = []
        for it in range(maxit):
            u, v = self.split(x)
            Huu, Huv, Hvv = self.hessian(x)
            Wd = sp.diags(w)
            blocks = [[Huu + lam[0] * Wd, Huv], [Huv, Hvv + lam[1] * Wd]]
            cols = []
            for i, y in ((0, u), (1, v)):
                if active[i]:
                    c = np.zeros(2 * n)
                    c[i * n:(i + 1) * n] = w * y
                    cols.append(c)
            A = sp.bmat(blocks).tocsc()
            if cols:
                Cm = sp.csc_matrix(np.array(cols).T)
                A = sp.bmat([[A, Cm], [Cm.T, None]]).tocsc()
            d = spla.spsolve(A, -F)
            step, merit = 1.0, np.linalg.norm(F)
            while True:
                xn = x + step * d[: 2 * n]
                ln = list(lam)
                k = 2 * n
                for i in (0, 1):
                    if active[i]:
                        ln[i] = lam[i] + step * d[k]
                        k += 1
                Fn = system(xn, ln)
                if np.linalg.norm(Fn) < merit or step < 1e-3:
                    break
                step *= 0.5
            x, lam, F = xn, ln, Fn
            rel = np.max(np.abs(step * d[: 2 * n])) / np.max(np.abs(x))
            hist.append(rel)
            if rel < tol or (len(hist) > 1 and rel < 1e-9 and rel > 0.1 * hist[-2]):
                return x, tuple(lam), it + 1
        raise SolverFailure("KKT Newton did not converge", {"history": hist})


@dataclass
class SolutionRecord:
    pair: FieldPair
    lambda1: float
    lambda2: float
    energy: float
    pohozaev_residual: float
    mass_u: float
    mass_v: float
    classification: str
    grad_norm_sq: float
    iterations: int
    wall_time: float
    kind: str
    kkt_residual: float = 0.0
    flags: dict = field(default_factory=dict)
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        keys = ("lambda1", "lambda2", "energy", "pohozaev_residual", "mass_u", "mass_v",
                "classification", "grad_norm_sq", "iterations", "kind", "kkt_residual", "flags")
        return {k: getattr(self, k) for k in keys}


# Pohozaev membership tolerance for converged records (relative to the gradient norm)
RECORD_TOL = 1e-5


def _record(disc: Discretization, x, lam, kind, iterations, t0, history=()) -> SolutionRecord:
    from .functionals import pohozaev

    pair = disc.unpack(x)
    nt = disc.norms(x)
    mu_, mv = disc.masses(x)
    return SolutionRecord(
        pair=pair, lambda1=float(lam[0]), lambda2=float(lam[1]), energy=disc.energy(x),
        pohozaev_residual=pohozaev(nt, disc.params), mass_u=mu_, mass_v=mv,
        classification=classify(nt, disc.params, RECORD_TOL).classification, grad_norm_sq=nt.K,
        iterations=iterations, wall_time=time.perf_counter() - t0, kind=kind,
        kkt_residual=float(disc.kkt_residual(x, lam)), history=list(history),
    )


def default_grid(params: ProblemParams, M: int = 4096, min_L: float = 20.0,
                 max_L: float = 400.0) -> RadialGrid:
    """Grid wide enough for the scalar p-state of mass a (slowest decay)."""
    lam = scalar_ground_state(params.p, params.mu1, params.a, params.N).lam
    return make_grid(params.N, float(np.clip(auto_radius(lam, 25.0), min_L, max_L)), M)


def _gaussian(grid, sigma, mass_):
    g = np.exp(-0.5 * (grid.r / sigma) ** 2)
    g[-1] = 0.0
    return g * math.sqrt(mass_ / grid.integrate(g * g))


def default_init(params, grid, geometry: GeometryReport) -> FieldPair:
    """Gaussians at masses (a, b), wide enough that |grad|^2 < R0^2 / 4."""
    N, a, b = params.N, params.a, params.b
    sig = math.sqrt(N * (a + b) / (2 * 0.25 * geometry.R0**2))
    sig = max(sig, 0.1 * grid.L / 3)
    sig = min(sig, grid.L / 6)
    return FieldPair(RadialField(grid, _gaussian(grid, sig, a), True),
                     RadialField(grid, _gaussian(grid, sig, b), True))


def _active(disc, x, caps, rtol=1e-10):
    m = disc.masses(x)
    return tuple(m[i] >= caps[i] * (1 - rtol) for i in (0, 1))


def _ball_residual(disc, x, caps) -> float:
    """KKT residual on D_a x D_b: free components carry a zero multiplier."""
    act = _active(disc, x, caps)
    lam = disc.multipliers(x)
    return disc.kkt_residual(x, tuple(lam[i] if act[i] else 0.0 for i in (0, 1)))


def local_minimize(params: ProblemParams, constants: ConstantsTable | None = None,
                   geometry: GeometryReport | None = None, init: FieldPair | None = None,
                   grid: RadialGrid | None = None, tol: float = 1e-8,
                   switch_tol: float = 1e-3, max_iter: int = 20000) -> SolutionRecord:
    """Local minimizer of I on V_R by ball-projected preconditioned descent.

    A descent step on I is followed by rescaling a component only if its
    mass exceeds the cap.  Once both masses are saturated and the KKT
    residual is below switch_tol, the point is polished by Newton on the
    KKT system with the saturated masses.
    """
    t0 = time.perf_counter()
    constants = constants or default_constants()
    geometry = geometry or h_profile(params, constants)
    if not geometry.feasible or geometry.R0 is None:
        raise SolverFailure("geometry infeasible: no V_R well for the local minimizer")
    if init is None:
        grid = grid or default_grid(params)
        init = default_init(params, grid, geometry)
    grid = init.grid
    R2 = geometry.R**2
    caps = (params.a, params.b)
    lam_a = scalar_ground_state(params.p, params.mu1, params.a, params.N).lam
    disc = Discretization(grid, params, shift=max(lam_a, 1e-8))
    x = disc.pack(init)
    if np.any(x < 0):
        raise ValueError("initial pair must be nonnegative")
    x = disc.ball_project(x, caps)
    E = disc.energy(x)
    history = [E]
    if disc.norms(x).K > R2:
        raise SolverFailure("initial pair lies outside V_R", {"K": disc.norms(x).K, "R2": R2})
    tau, restarted, it = 1.0, False, 0
    for it in range(1, max_iter + 1):
        g = disc.gradient(x)
        d = disc.ball_direction(x, g, caps)
        while True:
            y = disc.ball_project(x - tau * d, caps)
            Ey = disc.energy(y)
            if Ey <= E and disc.norms(y).K <= R2:
                break
            tau *= 0.5
            if tau < 1e-14:
                raise SolverFailure("descent stalled at the V_R barrier or by backtracking",
                                    {"iteration": it, "energy": E,
                                     "residual": _ball_residual(disc, x, caps),
                                     "masses": disc.masses(x)})
        x, E = y, Ey
        history.append(E)
        tau = min(2 * tau, 50.0)
        top = np.max(np.abs(x))
        if np.min(x) < -1e-10 * top:
            if restarted:
                raise SolverFailure("negative lobe reappeared after restart")
            x, restarted = np.abs(x), True
            E = disc.energy(x)
        res = _ball_residual(disc, x, caps)
        if res < switch_tol:
            break
        if it >= 400 and history[-400] - E <= 1e-14 * max(1.0, abs(E)):
            raise SolverFailure("descent stagnated before the Newton switch",
                                {"iteration": it, "energy": E, "residual": res,
                                 "masses": disc.masses(x), "multipliers": disc.multipliers(x)})
    else:
        raise SolverFailure("local minimization did not reach the Newton switch",
                            {"iterations": max_iter, "energy": E})
    active = _active(disc, x, caps)
    xn, lam, nit = disc.newton_kkt(x, caps, active)
    En = disc.energy(xn)
    if En > E + 1e-8 * abs(E) or disc.norms(xn).K > R2:
        raise SolverFailure("Newton polish left the local well", {"E_flow": E, "E_newton": En})
    if np.min(xn) < -1e-10 * np.max(np.abs(xn)):
        raise SolverFailure("polished minimizer has a sign change")
    xn = np.where(xn < 0, 0.0, xn)
    rec = _record(disc, xn, lam, "local_min", it + nit, t0, history)
    rec.flags.update(within_R0=bool(geometry.R0 is not None and rec.grad_norm_sq <= geometry.R0**2),
                     active=list(active), restarted=restarted)
    lam_min = min(lam)
    rec.flags["decay_lengths"] = (grid.L * math.sqrt(lam_min)) if lam_min > 0 else 0.0
    return rec


def extract_multipliers(pair: FieldPair, params: ProblemParams):
    """(lambda1, lambda2, residual_u, residual_v) from the displayed quotients."""
    disc = Discretization(pair.grid, params)
    x = disc.pack(pair)
    mu_, mv = disc.masses(x)
    if mu_ <= 0 or mv <= 0:
        raise ValueError("zero-mass component")
    lam = disc.multipliers(x)
    ru, rv = disc.residual_fields(x, lam)
    grid = pair.grid
    return (lam[0], lam[1], RadialField(grid, np.append(ru, 0.0)),
            RadialField(grid, np.append(rv, 0.0)))


def multiplier_single(pair: FieldPair, params: ProblemParams, component: str = "u"):
    """Multiplier and residual of one component when the other may vanish."""
    disc = Discretization(pair.grid, params)
    x = disc.pack(pair)
    g = disc.gradient(x)
    u, v = disc.split(x)
    gu, gv = disc.split(g)
    y, gy = (u, gu) if component == "u" else (v, gv)
    lam = float(-(y @ gy) / (disc.w @ (y * y)))
    ok = disc.w > 0
    res = np.zeros(disc.n)
    res[ok] = (gy[ok] + lam * disc.w[ok] * y[ok]) / disc.w[ok]
    return lam, res


# ----------------------------------------------------------- mountain pass

@dataclass
class PathState:
    nodes: list
    energies: list
    climbing_index: int
    converged: bool
    T: float = 1.0
    iterations: int = 0

    def to_dict(self):
        return {"energies": self.energies, "climbing_index": self.climbing_index,
                "converged": self.converged, "T": self.T, "iterations": self.iterations,
                "K": len(self.nodes)}


def _reparam(disc, X, masses, lo, hi):
    """Equal-arclength redistribution of X[lo..hi] with endpoints fixed."""
    seg = X[lo: hi + 1]
    if len(seg) < 3:
        return X
    # L2 chords: bounded on the mass spheres, so nodes are not swallowed by
    # the concentrating end of the path as they are in the H1 metric
    dl = np.array([math.sqrt(disc.l2_metric(seg[i + 1] - seg[i])) for i in range(len(seg) - 1)])
    s = np.concatenate([[0.0], np.cumsum(dl)])
    if s[-1] <= 0:
        return X
    s /= s[-1]
    keep = np.concatenate([[True], np.diff(s) > 1e-14])
    spline = CubicSpline(s[keep], seg[keep], axis=0)
    new = spline(np.linspace(0, 1, len(seg)))
    for i in range(1, len(seg) - 1):
        new[i] = disc.renormalize(np.maximum(new[i], 0.0), masses)
    X = X.copy()
    X[lo + 1: hi] = new[1:-1]
    return X


def _truncate(disc, X, energies, level, masses, c=None):
    """Cut the path at the first node past the maximum with energy below level.

    That node is itself an admissible endpoint, and the nodes are spread
    again over the shortened path by linear interpolation in the L2 chord
    length.  Nodes beyond it only keep collapsing toward the grid scale.
    """
    K = len(X)
    top = int(np.argmax(energies)) if c is None else c
    below = [j for j in range(top + 1, K) if energies[j] < level]
    if not below or below[0] >= K - 1:
        return X, c
    j = below[0]
    seg = X[: j + 1]
    dl = np.array([math.sqrt(disc.l2_metric(seg[i + 1] - seg[i])) for i in range(j)])
    s = np.concatenate([[0.0], np.cumsum(dl)])
    s /= s[-1]
    t = np.linspace(0, 1, K)
    idx = np.clip(np.searchsorted(s, t, side="right") - 1, 0, j - 1)
    th = ((t - s[idx]) / np.maximum(s[idx + 1] - s[idx], 1e-300))[:, None]
    new = (1 - th) * seg[idx] + th * seg[idx + 1]
    new[0], new[-1] = X[0], X[j]
    for i in range(1, K - 1):
        new[i] = disc.renormalize(np.maximum(new[i], 0.0), masses)
    if c is not None:
        c = int(np.clip(np.searchsorted(t, s[min(c, j)]), 1, K - 2))
    return new, c


def _tangent(disc, X, k):
    t = X[k + 1] - X[k - 1]
    nrm = math.sqrt(disc.metric(t))
    return t / nrm if nrm > 0 else t


def _climb_step(disc, X, k, d, steps, masses):
    """Climbing-image update, step bounded by half the smaller neighbor gap."""
    tv = _tangent(disc, X, k)
    du, dv = disc.split(tv)
    Mt = np.concatenate([disc.K @ du + disc.shift * disc.w * du,
                         disc.K @ dv + disc.shift * disc.w * dv])
    d = d - 2 * (d @ Mt) * tv
    gap = min(disc.metric(X[k] - X[k - 1]), disc.metric(X[k + 1] - X[k]))
    r0 = disc.kkt_residual(X[k])
    while steps[k] > 1e-12:
        y = disc.renormalize(np.maximum(X[k] - steps[k] * d, 0.0), masses)
        if disc.metric(y - X[k]) <= 0.25 * gap and disc.kkt_residual(y) <= 2 * r0:
            steps[k] = min(1.5 * steps[k], 1.0)
            return y
        steps[k] *= 0.5
    return X[k]


def _try_polish(disc, x, masses, level):
    """Newton on the KKT system; accepted only on a P_minus point near level."""
    try:
        xs, lam, nit = disc.newton_kkt(x, masses, (True, True))
    except SolverFailure:
        return None
    if np.min(xs) < -1e-10 * np.max(np.abs(xs)):
        return None
    E = disc.energy(xs)
    if abs(E - level) > 0.05 * max(abs(level), 1e-12):
        return None
    if classify(disc.norms(xs), disc.params, RECORD_TOL).classification != "P_minus":
        return None
    return xs, lam, nit


def mountain_pass(params: ProblemParams, constants: ConstantsTable | None,
                  geometry: GeometryReport, base: SolutionRecord, K: int = 32,
                  tau: float = 0.3, tol: float = 1e-6, max_iter: int = 3000,
                  reparam_every: int = 10, climb_after: int = 200,
                  newton_switch: float = 1e-3):
    """Climbing-string search for the mountain-pass solution on T(a, b)."""
    t0 = time.perf_counter()
    if K < 16:
        raise ValueError("string needs at least 16 nodes")
    grid = base.pair.grid
    masses = (params.a, params.b)
    disc = Discretization(grid, params, shift=max(min(base.lambda1, base.lambda2), 1e-8))
    x0 = disc.renormalize(disc.pack(base.pair), masses)
    m_ab = disc.energy(x0)
    nt = disc.norms(x0)
    T = 2.0
    while fiber(nt, params, T)[0] >= 2 * m_ab:
        T *= 2
        if T > 1e4:
            raise SolverFailure("no dilation endpoint with energy below 2 m(a,b)")
    ts = np.geomspace(1.0, T, K)
    X = np.empty((K, 2 * disc.n))
    X[0] = x0
    for k in range(1, K):
        pk = FieldPair(dilate(ts[k], base.pair.u), dilate(ts[k], base.pair.v))
        X[k] = disc.renormalize(np.maximum(disc.pack(pk), 0.0), masses)
    if disc.energy(X[-1]) >= 2 * m_ab:
        raise SolverFailure("endpoint energy not below 2 m(a,b) after discretization")

    energies = np.array([disc.energy(x) for x in X])
    steps = np.full(K, tau)
    climbing, c, converged, it = False, int(np.argmax(energies)), False, 0
    res, polished = math.inf, None
    for it in range(1, max_iter + 1):
        for k in range(1, K - 1):
            g = disc.gradient(X[k])
            d = disc.tangent_precond(X[k], g)
            if climbing and k == c:
                X[k] = _climb_step(disc, X, k, d, steps, masses)
                continue
            # plain nodes: energy non-increasing, displacement well below the node gap
            gap = min(disc.metric(X[k] - X[k - 1]), disc.metric(X[k + 1] - X[k]))
            while steps[k] > 1e-12:
                y = disc.renormalize(np.maximum(X[k] - steps[k] * d, 0.0), masses)
                Ey = disc.energy(y)
                if Ey <= energies[k] and disc.metric(y - X[k]) <= 0.01 * gap:
                    X[k], energies[k] = y, Ey
                    steps[k] = min(1.5 * steps[k], tau)
                    break
                steps[k] *= 0.5
        if it % reparam_every == 0:
            energies = np.array([disc.energy(x) for x in X])
            X, c = _truncate(disc, X, energies, 2 * m_ab, masses, c if climbing else None)
            if climbing:
                X = _reparam(disc, X, masses, 0, c)
                X = _reparam(disc, X, masses, c, K - 1)
            else:
                X = _reparam(disc, X, masses, 0, K - 1)
        energies = np.array([disc.energy(x) for x in X])
        if not climbing and it >= climb_after:
            climbing, c = True, int(np.argmax(energies))
        if energies.max() <= energies[0] + 1e-12 * abs(energies[0]):
            raise SolverFailure("path collapsed onto the base energy")
        if climbing:
            res = disc.kkt_residual(X[c])
            if res <= tol:
                converged = True
                break
            if it % reparam_every == 0 and (res <= newton_switch or it % (5 * reparam_every) == 0):
                polished = _try_polish(disc, X[c], masses, energies[c])
                if polished is not None:
                    break
    if not climbing:
        c = int(np.argmax(energies))
    path = PathState([disc.unpack(x, True) for x in X], energies.tolist(), c, converged, T, it)
    if polished is None:
        polished = _try_polish(disc, X[c], masses, energies[c])
    if polished is None:
        raise SolverFailure("Newton polish of the climbing image failed",
                            {"string_residual": res, "iterations": it})
    xs, lam, nit = polished
    if np.min(xs) < -1e-10 * np.max(np.abs(xs)):
        raise SolverFailure("mountain-pass point has a sign change")
    xs = np.where(xs < 0, 0.0, xs)
    rec = _record(disc, xs, lam, "mountain_pass", it + nit, t0)
    rec.flags.update(string_converged=converged, string_residual=float(res),
                     start_grad_norm_sq=base.grad_norm_sq,
                     rho_exceeded=bool(geometry.R is not None and
                                       math.sqrt(base.grad_norm_sq) >= min(geometry.R, math.sqrt(2 * geometry.k0))))
    return rec, path


# ------------------------------------------------------ semitrivial gaps

@dataclass
class GapCurve:
    side: str
    s: np.ndarray
    energy: np.ndarray
    level: float
    exponent: float | None
    quad_coef: float | None
    drops_below: bool

    def to_dict(self):
        return {"side": self.side, "s": self.s.tolist(), "energy": self.energy.tolist(),
                "level": self.level, "exponent": self.exponent, "quad_coef": self.quad_coef,
                "drops_below": self.drops_below}


def semitrivial_gap_test(params: ProblemParams, scalar_state: ScalarGroundState,
                         probe: RadialField, side: str, s_grid: Sequence[float],
                         fit_range=(1e-4, 1e-2)) -> GapCurve:
    """Energy along s -> projection of (u, s h) (u_side) or (s h, v) (v_side).

    u_side projects onto P^+ through the fiber minimum, v_side onto P^-
    through the fiber maximum.  All integrals are polynomial or power laws
    in s, so each point is exact given the grid integrals.
    """
    from .radial import grad_sq, norms

    P = params
    g = probe.grid
    hm = norms(probe, 2.0)
    if abs(hm - 1) > 1e-10:
        raise ValueError("probe must satisfy |h|_2 = 1")
    z = scalar_state.profile
    if not z.grid.same_as(g):
        raise ValueError("probe and scalar state must share the grid")
    s_arr = np.asarray(s_grid, dtype=float)
    budget = math.sqrt(P.b if side == "u_side" else P.a)
    if np.any(s_arr < 0) or np.any(s_arr > budget * (1 + 1e-12)):
        raise ValueError("s values must lie in [0, sqrt(mass budget)]")
    Gz, Gh = grad_sq(z), grad_sq(probe)
    hv, zv = np.abs(probe.values), np.abs(z.values)
    if side == "u_side":
        Az, Bh = norms(z, P.p), norms(probe, P.q)
        Cc = g.integrate(zv**P.alpha * hv**P.beta)
        tup = lambda s: NormTuple(Gz + s * s * Gh, Az, s**P.q * Bh, s**P.beta * Cc)
        pick, exp_ = "min", P.beta
    elif side == "v_side":
        Ah, Bz = norms(probe, P.p), norms(z, P.q)
        Cc = g.integrate(hv**P.alpha * zv**P.beta)
        tup = lambda s: NormTuple(Gz + s * s * Gh, s**P.p * Ah, Bz, s**P.alpha * Cc)
        pick, exp_ = "max", P.alpha
    else:
        raise ValueError("side must be 'u_side' or 'v_side'")

    def projected(s):
        nt = tup(s)
        vals = []
        for t in fiber_critical_points(nt, P, t_min=1e-3, t_max=1e3):
            phi, _, d2 = fiber(nt, P, t)
            if (d2 > 0) == (pick == "min"):
                vals.append(phi)
        if not vals:
            raise SolverFailure(f"no fiber {pick} for s={s}")
        return vals[0]

    level = projected(0.0)
    E = np.array([projected(s) for s in s_arr])
    sel = (s_arr >= fit_range[0]) & (s_arr <= fit_range[1]) & (s_arr > 0)
    exponent = quad = None
    drop = level - E
    if np.count_nonzero(sel) >= 3 and np.all(drop[sel] > 0):
        exponent = float(np.polyfit(np.log(s_arr[sel]), np.log(drop[sel]), 1)[0])
    if np.count_nonzero(sel) >= 3:
        # (E - level) / s^2 -> quadratic coefficient; linear extrapolation in s
        yy = (E[sel] - level) / s_arr[sel] ** 2
        quad = float(np.polyfit(s_arr[sel], yy, 1)[1])
    small = s_arr[(s_arr > 0)]
    drops = bool(np.any(E[(s_arr > 0) & (s_arr <= (small.min() * 10 if small.size else 0))] < level))
    return GapCurve(side, s_arr, E, level, exponent, quad, drops)
