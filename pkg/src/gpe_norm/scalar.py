"""Scalar normalized problem -Delta u + lambda u = mu |u|^{eta-2} u, |u|_2^2 = a.

The canonical soliton U_eta (lambda = mu = 1) is computed once per grid and
every normalized ground state is obtained from it by the two-parameter
rescaling u(x) = lambda^{1/(eta-2)} mu^{-1/(eta-2)} U(sqrt(lambda) x).
Rescaling is done exactly on the discrete level: U is solved on a grid of
radius sqrt(lambda) L with the same node count, so node i maps to node i.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverFailure
from .functionals import critical_exponent, gamma_exp
from .radial import RadialField, RadialGrid, grad_sq, make_grid, norms, resample

DEFAULT_L, DEFAULT_M = 40.0, 4096
_REF_L, _REF_M = 30.0, 3001


MIN_SCALED_RADIUS = 10.0


def auto_radius(lam: float, decay_lengths: float = 30.0) -> float:
    """Radius holding decay_lengths e-foldings of exp(-sqrt(lam) r)."""
    return decay_lengths / math.sqrt(lam)


def _check_eta(eta: float, N: int, allow_pbar=True):
    ts = critical_exponent(N)
    if not 2 < eta < ts:
        raise ValueError(f"need 2 < eta < 2* = {ts}, got {eta}")
    if not allow_pbar and abs(eta - (2 + 4 / N)) < 1e-12:
        raise ValueError("eta equals the mass-critical exponent 2+4/N")


def _power(f, e):
    """|f|^e computed without 0^negative."""
    a = np.abs(f)
    if e >= 0:
        return a**e
    out = np.zeros_like(a)
    nz = a > 0
    out[nz] = a[nz] ** e
    return out


def _newton_done(d, x, tol, hist, floor=1e-9):
    """Converged, or stalled at the round-off floor of the linear solves."""
    step = np.max(np.abs(d)) / max(np.max(np.abs(x)), 1e-300)
    hist.append(step)
    if step <= tol:
        return True
    return len(hist) > 1 and step <= floor and step > 0.1 * hist[-2]


def _newton_soliton(grid: RadialGrid, eta: float, f0: np.ndarray,
                    tol=1e-13, maxit=60) -> np.ndarray:
    """Newton for K f + W (f - |f|^{eta-2} f) = 0 on the free nodes."""
    n = grid.M - 1
    K, w = grid.stiffness_inner, grid.w[:n]
    f = f0[:n].copy()
    hist = []
    for _ in range(maxit):
        F = K @ f + w * (f - _power(f, eta - 2) * f)
        J = K + sp.diags(w * (1 - (eta - 1) * _power(f, eta - 2)))
        d = spla.spsolve(J.tocsc(), -F)
        f += d
        if _newton_done(d, f, tol, hist):
            break
    else:
        raise SolverFailure("Newton iteration for the soliton did not converge")
    out = np.zeros(grid.M)
    out[:n] = f
    return out


def _petviashvili(grid: RadialGrid, eta: float, f0: np.ndarray,
                  tol=1e-10, maxit=2000) -> np.ndarray:
    """Normalized fixed-point iteration f <- S^g (K+W)^{-1} W f^{eta-1}.

    The stabilizing factor S = <f,(K+W)f> / <f,W f^{eta-1}> equals 1 at a
    solution; the exponent g = (eta-1)/(eta-2) removes the unstable
    direction of the plain fixed-point map.
    """
    n = grid.M - 1
    w = grid.w[:n]
    Lop = (grid.stiffness_inner + sp.diags(w)).tocsc()
    solve = spla.factorized(Lop)
    g = (eta - 1) / (eta - 2)
    f = f0[:n].copy()
    for _ in range(maxit):
        Nf = w * _power(f, eta - 2) * f
        S = (f @ (Lop @ f)) / (f @ Nf)
        f_new = S**g * solve(Nf)
        if np.max(np.abs(f_new - f)) <= tol * np.max(np.abs(f_new)):
            f = f_new
            break
        f = f_new
    else:
        raise SolverFailure("normalized fixed-point iteration did not converge")
    out = np.zeros(grid.M)
    out[:n] = f
    return out


def pde_residual(u: np.ndarray, grid: RadialGrid, lam: float, mu: float, eta: float) -> float:
    """Sup-norm of -Delta u + lam u - mu |u|^{eta-2} u over nodes with weight."""
    n = grid.M - 1
    w = grid.w[:n]
    R = grid.stiffness_inner @ u[:n] + w * (lam * u[:n] - mu * _power(u[:n], eta - 2) * u[:n])
    ok = w > 0
    return float(np.max(np.abs(R[ok] / w[ok])))


def _gaussian_guess(grid, eta):
    amp = (eta / 2) ** (1 / (eta - 2))
    return amp * np.exp(-grid.r**2 / 2) * (grid.r < grid.L)


def _solve_soliton(grid: RadialGrid, eta: float, guess=None) -> np.ndarray:
    if guess is None:
        guess = _petviashvili(grid, eta, _gaussian_guess(grid, eta))
    f = _newton_soliton(grid, eta, guess)
    top = np.max(f)
    if np.min(f) < -1e-10 * top:
        raise SolverFailure("negative lobe in the soliton profile")
    return np.maximum(f, 0.0)


@lru_cache(maxsize=64)
def _soliton_cached(N, L, M, eta):
    grid = make_grid(N, L, M)
    return grid, _solve_soliton(grid, eta)


def canonical_soliton(eta: float, N: int, grid: RadialGrid | None = None) -> RadialField:
    """Positive radial solution of -Delta U + U = U^{eta-1}."""
    _check_eta(eta, N)
    if grid is None:
        grid = make_grid(N, _REF_L, _REF_M)
    g, vals = _soliton_cached(grid.N, grid.L, grid.M, float(eta))
    res = pde_residual(vals, g, 1.0, 1.0, eta)
    if res > 1e-8 * np.max(vals):
        raise SolverFailure(f"soliton residual {res:.2e} too large")
    return RadialField(grid, vals.copy(), nonnegative=True)


@dataclass
class ScalarGroundState:
    profile: RadialField
    lam: float
    mass: float
    energy: float
    eta: float
    mu: float
    residual: float
    canonical: RadialField | None = field(default=None, repr=False)

    @property
    def grad_sq(self) -> float:
        return grad_sq(self.profile)

    def pohozaev(self) -> float:
        N = self.profile.grid.N
        return self.grad_sq - self.mu * gamma_exp(N, self.eta) / self.eta * norms(self.profile, self.eta)


def scalar_energy(u: RadialField, eta: float, mu: float) -> float:
    return 0.5 * grad_sq(u) - mu / eta * norms(u, eta)


def _bisect_log_lambda(eta, mu, a, N, mass_U, lo=-30.0, hi=30.0):
    e = 2 / (eta - 2) - N / 2

    def F(x):
        return e * x - 2 / (eta - 2) * math.log(mu) + math.log(mass_U) - math.log(a)

    flo, fhi = F(lo), F(hi)
    if flo * fhi > 0:
        raise SolverFailure("mass equation has no root with log(lambda) in [-30, 30]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (fhi > 0):
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def scalar_ground_state(eta: float, mu: float, a: float, N: int,
                        grid: RadialGrid | None = None) -> ScalarGroundState:
    """Normalized ground state (lambda_a, u_a) with |u_a|_2^2 = a."""
    _check_eta(eta, N, allow_pbar=False)
    if not (mu > 0 and a > 0):
        raise ValueError("mu and a must be positive")
    ref = canonical_soliton(eta, N)
    mass_U = norms(ref, 2.0)
    lam = math.exp(_bisect_log_lambda(eta, mu, a, N, mass_U))
    if grid is None:
        grid = make_grid(N, auto_radius(lam), DEFAULT_M)
    if math.sqrt(lam) * grid.L < MIN_SCALED_RADIUS:
        raise SolverFailure(
            f"grid radius {grid.L:g} too small for lambda={lam:.3g}; "
            f"need L >= {MIN_SCALED_RADIUS / math.sqrt(lam):.3g}")
    U_vals = None
    for _ in range(8):
        g2 = make_grid(N, math.sqrt(lam) * grid.L, grid.M)
        guess = resample(ref, g2).values if U_vals is None else U_vals
        U_vals = _solve_soliton(g2, eta, guess)
        mass_U = g2.integrate(U_vals**2)
        lam_new = math.exp(_bisect_log_lambda(eta, mu, a, N, mass_U))
        done = abs(lam_new - lam) <= 1e-14 * lam
        lam = lam_new
        if done:
            break
    g2 = make_grid(N, math.sqrt(lam) * grid.L, grid.M)
    U_vals = _solve_soliton(g2, eta, U_vals)
    canon = RadialField(g2, U_vals, nonnegative=True)
    amp = (lam / mu) ** (1 / (eta - 2))
    u = RadialField(grid, amp * U_vals, nonnegative=True)
    if canon.values[-2] > 1e-8 * canon.values[0]:
        warnings.warn("ground state not decayed at r = L; enlarge the grid radius")
    return ScalarGroundState(
        profile=u, lam=lam, mass=a, energy=scalar_energy(u, eta, mu), eta=eta, mu=mu,
        residual=pde_residual(u.values, grid, lam, mu, eta), canonical=canon,
    )


def newton_normalized(grid: RadialGrid, eta: float, mu: float, a: float,
                      u0: np.ndarray, lam0: float, tol=1e-13, maxit=60):
    """Newton on (u, lambda) for the equation plus the mass constraint."""
    n = grid.M - 1
    K, w = grid.stiffness_inner, grid.w[:n]
    u, lam = u0[:n].copy(), float(lam0)
    hist = []
    for _ in range(maxit):
        F = K @ u + w * (lam * u - mu * _power(u, eta - 2) * u)
        c = 0.5 * (w @ (u * u) - a)
        J = K + sp.diags(w * (lam - mu * (eta - 1) * _power(u, eta - 2)))
        col = (w * u)[:, None]
        A = sp.bmat([[J, sp.csc_matrix(col)], [sp.csc_matrix(col.T), None]]).tocsc()
        d = spla.spsolve(A, -np.concatenate([F, [c]]))
        u += d[:n]
        lam += d[n]
        if _newton_done(d[:n], u, tol, hist) and abs(d[n]) <= 1e-8 * abs(lam):
            break
    else:
        raise SolverFailure("Newton polish for the normalized state did not converge")
    out = np.zeros(grid.M)
    out[:n] = u
    return out, lam


def flow_ground_state(eta: float, mu: float, a: float, grid: RadialGrid,
                      init: np.ndarray | None = None, tau0: float = 1e-3,
                      max_iter: int = 20000, polish: bool = True) -> ScalarGroundState:
    """Minimize the scalar energy on the sphere |u|^2 = a by gradient flow.

    Backward-Euler normalized gradient flow with energy-monotone step
    control, optionally finished by Newton on (u, lambda).  Only meaningful
    for eta < 2 + 4/N, where the constrained minimum exists.
    """
    N = grid.N
    _check_eta(eta, N, allow_pbar=False)
    if eta > 2 + 4 / N:
        raise ValueError("the sphere minimum exists only for eta < 2 + 4/N")
    n = grid.M - 1
    K, w = grid.stiffness_inner, grid.w[:n]
    u = (np.exp(-grid.r**2 / 8) if init is None else np.asarray(init, float))[:n].copy()
    u *= math.sqrt(a / (w @ (u * u)))

    def E(x):
        return 0.5 * x @ (K @ x) - mu / eta * (w @ _power(x, eta))

    e_old, tau = E(u), tau0
    for it in range(max_iter):
        rhs = w * (u + tau * mu * _power(u, eta - 2) * u)
        u_new = spla.spsolve((sp.diags(w) + tau * K).tocsc(), rhs)
        u_new *= math.sqrt(a / (w @ (u_new * u_new)))
        e_new = E(u_new)
        if e_new > e_old + 1e-15 * abs(e_old):
            tau *= 0.5
            if tau < 1e-12:
                break
            continue
        du = np.max(np.abs(u_new - u))
        u, dE, e_old = u_new, e_old - e_new, e_new
        tau = min(tau * 1.5, 10.0)
        if dE < 1e-12 * max(1.0, abs(e_new)) and du < 1e-8 * np.max(np.abs(u)):
            break
    full = np.zeros(grid.M)
    full[:n] = u
    lam = float((-(u @ (K @ u)) + mu * (w @ _power(u, eta))) / a)
    if polish:
        full, lam = newton_normalized(grid, eta, mu, a, full, lam)
    full = np.abs(full)
    prof = RadialField(grid, full, nonnegative=True)
    return ScalarGroundState(prof, lam, a, scalar_energy(prof, eta, mu), eta, mu,
                             pde_residual(full, grid, lam, mu, eta))


# ------------------------------------------------------------ nu thresholds

@dataclass
class NuThreshold:
    value: float                 # whole-space estimate (0 when analytic)
    analytic: bool               # True for N <= 2
    value_grid: float            # 1/2 smallest eigenvalue on the given grid
    eigenfunction: RadialField   # minimizer on the given grid, |h|_2 = 1
    trend: list                  # (L, value on [0, L]) pairs
    up_value: float | None = None  # same quantity from the U_eta-based formula
    iterations: int = 0


def weighted_rayleigh_min(grid: RadialGrid, weight: np.ndarray,
                          tol=1e-13, maxit=2000):
    """Smallest eigenpair of K h = lam diag(W weight) h.

    Shift-invert Lanczos at sigma = 0, i.e. inverse iteration accelerated
    on its Krylov space; plain inverse iteration is the fallback.
    """
    if np.any(weight < 0) or not np.any(weight > 0):
        raise ValueError("weight must be nonnegative and not identically zero")
    n = grid.M - 1
    K = grid.stiffness_inner.tocsc()
    B = grid.w[:n] * weight[:n]
    solve = spla.factorized(K)
    # eigenvalues of K^{-1} B are 1/lam; the largest gives the smallest lam
    op = spla.LinearOperator((n, n), matvec=lambda x: solve(B * x), dtype=float)
    h0 = np.exp(-grid.r[:n] ** 2 / (0.04 * grid.L**2)) + 1e-3
    it = 0
    try:
        vals, vecs = spla.eigs(op, k=1, which="LM", v0=h0, tol=tol, maxiter=maxit)
        h = np.real(vecs[:, 0])
        it = 1
    except spla.ArpackNoConvergence:
        h = h0
        lam_old = np.inf
        for it in range(1, maxit + 1):
            h = solve(B * h)
            h /= math.sqrt(h @ (B * h))
            lam = h @ (K @ h)
            if abs(lam - lam_old) <= tol * lam:
                break
            lam_old = lam
        else:
            raise SolverFailure("inverse iteration did not converge")
    h = np.abs(h) / math.sqrt(np.abs(h) @ (B * np.abs(h)))
    lam = float(h @ (K @ h))
    out = np.zeros(grid.M)
    out[:n] = h
    return lam, out, it


def _extend(grid: RadialGrid, factor: int) -> RadialGrid:
    return make_grid(grid.N, factor * grid.L, factor * (grid.M - 1) + 1)


def nu_threshold(mu: float, eta: float, mass: float, N: int, weight_exp: float,
                 grid: RadialGrid | None = None, with_up: bool = True) -> NuThreshold:
    """nu = 1/2 inf |grad h|^2 / int z^weight_exp h^2, z the normalized ground state.

    The value on a truncated ball is biased upward by the Dirichlet
    condition at L; in N >= 3 the minimizer is harmonic outside the support
    of z, so the bias decays like L^{-(N-2)} and is removed by one
    Richardson step from [0, L] and [0, 2L].  For N <= 2 the whole-space
    infimum is 0 and the finite-domain values are reported as a trend.
    """
    if grid is None:
        grid = scalar_ground_state(eta, mu, mass, N).profile.grid

    def on(g):
        z = scalar_ground_state(eta, mu, mass, N, g).profile.values
        lam, h, it = weighted_rayleigh_min(g, z**weight_exp)
        return 0.5 * lam, h, it

    val, h, it = on(grid)
    hf = RadialField(grid, h, nonnegative=True)
    hf = hf * (1 / math.sqrt(norms(hf, 2.0)))
    if N <= 2:
        trend = [(grid.L, val)] + [(k * grid.L, on(_extend(grid, k))[0]) for k in (2, 4)]
        return NuThreshold(0.0, True, val, hf, trend, None, it)
    val2 = on(_extend(grid, 2))[0]
    k = 2.0 ** (N - 2)
    est = (k * val2 - val) / (k - 1)
    up = _nu_from_soliton(mu, eta, mass, N, weight_exp) if with_up else None
    return NuThreshold(est, False, val, hf, [(grid.L, val), (2 * grid.L, val2)], up, it)


def _nu_from_soliton(mu, eta, mass, N, alpha, L=_REF_L, M=_REF_M) -> float:
    """Same threshold through U_eta and explicit powers of mu, |U|_2 and mass."""
    def inf_on(g):
        U = canonical_soliton(eta, N, g)
        return weighted_rayleigh_min(g, U.values**alpha)[0], norms(U, 2.0)

    g = make_grid(N, L, M)
    q1, mU = inf_on(g)
    q2, _ = inf_on(_extend(g, 2))
    k = 2.0 ** (N - 2)
    Q = (k * q2 - q1) / (k - 1)
    d = N * (eta - 2) - 4
    return 0.5 * mu ** ((alpha * N - 4) / d) * math.sqrt(mU) ** (4 * (eta - 2 - alpha) / d) \
        * mass ** (-2 * (eta - 2 - alpha) / d) * Q
