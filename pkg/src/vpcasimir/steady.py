"""
Spherical steady states by shooting on the radial Poisson equation.

With ``y(r) = E0 - U0(r)`` the steady state ``f0 = q(E0 - E, L)`` turns the
Poisson equation into the autonomous radial ODE

    y'' + (2/r) y' = -4 pi rho(r, y),     y(0) = kappa,  y'(0) = 0,

integrated outward until ``y`` hits zero at the support radius ``R``. Outside
the support the potential is exactly ``-M/r``, which fixes ``E0 = -M/R``.
Units are those with G = 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import minimize_scalar
from scipy.special import beta

from .casimir import CasimirModel, alpha, c_alpha
from .errors import DomainError, NumericalError

__all__ = [
    "SteadyState",
    "velocity_moments",
    "rho_of_y",
    "polytrope_rho_constant",
    "shoot",
    "solve_for_mass",
    "EmdenFowlerTrace",
    "emden_fowler_orbit",
    "orbit_alignment",
]

N_PROFILE = 2048


# ---------------------------------------------------------------------------
# velocity-space moments of f0 at fixed (r, y)


def polytrope_rho_constant(mu: float) -> float:
    """``c_mu`` in ``rho = c_mu * y_+**(mu + 3/2)`` for ``Q = f**(1+1/mu)``."""
    k = (mu / (mu + 1.0)) ** mu
    return 2.0 ** 2.5 * np.pi * k * beta(1.5, mu + 1.0)


def _polytrope_moments(mu, y):
    k = (mu / (mu + 1.0)) ** mu
    yp = np.maximum(y, 0.0)
    rho = 2.0 ** 2.5 * np.pi * k * beta(1.5, mu + 1.0) * yp ** (mu + 1.5)
    # Q(f0) = k**(1+1/mu) w**(mu+1) with w = y - v^2/2
    cas = k ** (1.0 + 1.0 / mu) * 2.0 ** 2.5 * np.pi * beta(1.5, mu + 2.0) * yp ** (mu + 2.5)
    kin = 0.5 * k * 4.0 * np.pi * 2.0 ** 1.5 * beta(2.5, mu + 1.0) * yp ** (mu + 2.5)
    return rho, cas, kin


@lru_cache(maxsize=8)
def _tanh_sinh_01(h: float, tmax: float = 3.2):
    """Tanh-sinh nodes on [0, 1] as (x, 1 - x, weights)."""
    tau = np.arange(-tmax, tmax + 0.5 * h, h)
    s = 0.5 * np.pi * np.sinh(tau)
    x = 1.0 / (1.0 + np.exp(-2.0 * s))
    xc = 1.0 / (1.0 + np.exp(2.0 * s))
    w = h * 0.25 * np.pi * np.cosh(tau) / np.cosh(s) ** 2
    return x, xc, w


def _mixed_moments_ts(model, r, y, h=1.0 / 6):
    """Moments by a tensor tanh-sinh rule in (t, u) coordinates.

    ``v_r = sqrt(2y) t`` and ``v_T**2 = 2y (1 - t**2) u`` map the velocity
    support onto the unit square; the algebraic endpoint behaviour of
    ``q`` near the support edge is handled by the double-exponential rule.
    """
    r, y = np.broadcast_arrays(np.asarray(r, float), np.asarray(y, float))
    shape = r.shape
    r, y = r.ravel(), y.ravel()
    rho = np.zeros(r.shape)
    cas = np.zeros(r.shape)
    kin = np.zeros(r.shape)
    pos = y > 0
    if not pos.any():
        return rho.reshape(shape), cas.reshape(shape), kin.reshape(shape)
    x, xc, w = _tanh_sinh_01(h)
    T, U = np.meshgrid(x, x, indexing="ij")
    Tc = np.meshgrid(xc, xc, indexing="ij")
    one_m_t2 = Tc[0] * (1.0 + T)
    one_m_u = Tc[1]
    W = np.outer(w, w)
    rp, yp = r[pos][:, None, None], y[pos][:, None, None]
    e = yp * one_m_t2 * one_m_u
    s = 2.0 * yp * one_m_t2 * U
    L = rp ** 2 * s
    f = model.q(e, L)
    jac = 2.0 * np.pi * np.sqrt(2.0 * yp) * 2.0 * yp * one_m_t2 * W
    v2 = 2.0 * yp * T ** 2 + s
    rho[pos] = np.sum(jac * f, axis=(1, 2))
    cas[pos] = np.sum(jac * model.Q(f, L), axis=(1, 2))
    kin[pos] = np.sum(jac * 0.5 * v2 * f, axis=(1, 2))
    return rho.reshape(shape), cas.reshape(shape), kin.reshape(shape)


def _mixed_rho_quad(model, r, y, epsrel=1e-11):
    """Iterated adaptive Gauss-Kronrod: rho = 2 pi int_0^vmax dv_r int_0^smax q ds."""
    if y <= 0:
        return 0.0
    vmax = np.sqrt(2.0 * y)

    def inner(vr):
        smax = 2.0 * y - vr * vr
        if smax <= 0:
            return 0.0
        g = lambda s: model.q_scalar(y - 0.5 * vr * vr - 0.5 * s, r * r * s)
        return quad(g, 0.0, smax, epsabs=0.0, epsrel=epsrel, limit=200)[0]

    val, _ = quad(inner, 0.0, vmax, epsabs=0.0, epsrel=epsrel, limit=200)
    return 2.0 * np.pi * val


def velocity_moments(model: CasimirModel, r, y):
    """Return ``(rho, casimir density, kinetic density)`` of ``f0`` at radius ``r``.

    The three are ``int q dv``, ``int Q(q, L) dv`` and ``int |v|^2 q / 2 dv`` with
    ``q = q(y - |v|^2/2, L)``.
    """
    if model.kind == "polytrope":
        rho, cas, kin = _polytrope_moments(model.exponents[0], np.asarray(y, float))
        shape = np.broadcast(np.asarray(r), np.asarray(y)).shape
        return (np.broadcast_to(rho, shape), np.broadcast_to(cas, shape),
                np.broadcast_to(kin, shape))
    return _mixed_moments_ts(model, r, y)


def rho_of_y(model: CasimirModel, r, y, method: str = "auto"):
    """Mass density ``rho0`` at radius ``r`` where ``E0 - U0 = y``.

    Parameters
    ----------
    method : {'auto', 'closed', 'tanh-sinh', 'quad'}
        ``'auto'`` uses the closed form for polytropes and the tanh-sinh rule
        otherwise. ``'quad'`` (mixed models, scalar input only) runs nested
        adaptive Gauss-Kronrod and is the slow high-accuracy path.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("radius must be nonnegative")
    if method == "quad":
        if model.kind == "polytrope":
            method = "closed"
        else:
            vec = np.vectorize(lambda rr, yy: _mixed_rho_quad(model, rr, yy))
            return vec(r, np.asarray(y, float))
    if method in ("auto", "closed") and model.kind == "polytrope":
        return velocity_moments(model, r, y)[0]
    if method == "closed":
        raise DomainError("closed-form density exists only for polytropes")
    return _mixed_moments_ts(model, r, y)[0]


# ---------------------------------------------------------------------------
# steady state


@dataclass
class SteadyState:
    """Radial profiles of a spherically symmetric steady state.

    ``y_profile`` is ``E0 - U0`` on ``r_grid`` (0 to 2R); ``m_profile`` is the
    enclosed mass. Energies are the exact radial integrals accumulated
    along the shot, ``D_value = casimir + kinetic - field_energy``.
    """

    model: CasimirModel
    kappa: float
    r_grid: np.ndarray
    y_profile: np.ndarray
    rho_profile: np.ndarray
    m_profile: np.ndarray
    E0: float
    M: float
    R: float
    D_value: float
    casimir: float = np.nan
    kinetic: float = np.nan
    field_energy: float = np.nan
    _spline: Optional[CubicHermiteSpline] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for name in ("r_grid", "y_profile", "rho_profile", "m_profile"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    # -- interpolation ----------------------------------------------------

    def _interior(self):
        if self._spline is None:
            r = self.r_grid
            inside = r < self.R
            rk = np.append(r[inside], self.R)
            yk = np.append(self.y_profile[inside], 0.0)
            mk = np.append(self.m_profile[inside], self.M)
            with np.errstate(divide="ignore", invalid="ignore"):
                dk = np.where(rk > 0, -mk / rk ** 2, 0.0)
            self._spline = CubicHermiteSpline(rk, yk, dk)
        return self._spline

    def y(self, r):
        """``E0 - U0(r)``; exact ``E0 + M/r`` outside the support."""
        r = np.abs(np.asarray(r, dtype=float))
        with np.errstate(divide="ignore"):
            out = np.where(r >= self.R, self.E0 + self.M / np.maximum(r, self.R), 0.0)
        inside = r < self.R
        if np.any(inside):
            out = np.where(inside, self._interior()(np.minimum(r, self.R)), out)
        return out

    def U(self, r):
        return self.E0 - self.y(r)

    def m(self, r):
        """Enclosed mass ``m0(r) = r**2 U0'(r)``."""
        r = np.abs(np.asarray(r, dtype=float))
        inside = r < self.R
        out = np.full(r.shape, self.M)
        if np.any(inside):
            rr = np.minimum(r, self.R)
            out = np.where(inside, -rr ** 2 * self._interior()(rr, 1), out)
        return out

    def rho(self, r):
        r = np.asarray(r, dtype=float)
        yr = self.y(r)
        return np.where(r < self.R, rho_of_y(self.model, r, np.maximum(yr, 0.0)), 0.0)

    def f0(self, r, vr, L):
        """Phase-space density ``q(E0 - E, L)`` at ``(r, v_r, L)``."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            e = self.y(r) - 0.5 * np.asarray(vr) ** 2 - 0.5 * np.asarray(L) / r ** 2
        e = np.where(np.isfinite(e), e, -1.0)
        return self.model.q(e, L)

    # -- derived quantities -----------------------------------------------

    @property
    def T_dyn(self) -> float:
        return 2.0 * np.pi * np.sqrt(self.R ** 3 / self.M)

    @property
    def L_max(self) -> float:
        """Largest angular momentum on the support, ``max_r 2 r**2 y(r)``."""
        r = self.r_grid[self.r_grid < self.R]
        return float(np.max(2.0 * r ** 2 * self.y_profile[: r.size]))

    @property
    def v_max(self) -> float:
        return float(np.sqrt(2.0 * self.kappa))

    @property
    def f_max(self) -> float:
        return float(self.model.q(self.kappa, 0.0))

    @property
    def R0(self) -> float:
        """Concentration radius ``-M**2 / (C_alpha D_M)``."""
        return -self.M ** 2 / (c_alpha(alpha(self.model)) * self.D_value)

    @property
    def virial_residual(self) -> float:
        """Relative residual of ``2 K - (1/8pi) int |grad U0|^2 = 0``."""
        return (2.0 * self.kinetic - self.field_energy) / self.field_energy

    def euler_lagrange_residual(self, n=2000, seed=0) -> float:
        """Largest ``|dQ(f0) - (y - |v|^2/2)|`` over random points where ``f0 > 0``."""
        rng = np.random.default_rng(seed)
        r = rng.uniform(0.0, self.R, n)
        yr = self.y(r)
        vr = rng.uniform(-1, 1, n) * np.sqrt(2 * np.maximum(yr, 0))
        L = rng.uniform(0, 1, n) * 2 * r ** 2 * np.maximum(yr - 0.5 * vr ** 2, 0)
        e = yr - 0.5 * vr ** 2 - 0.5 * L / r ** 2
        keep = e > 0
        f = self.model.q(e[keep], L[keep])
        return float(np.max(np.abs(self.model.dQ(f, L[keep]) - e[keep])))


def shoot(model: CasimirModel, kappa: float, rtol: float = 1e-12, n_grid: int = N_PROFILE,
          r_max_factor: float = 1e4) -> SteadyState:
    """Integrate the radial equation from the center with ``y(0) = kappa``.

    Raises
    ------
    NumericalError
        If ``y`` does not reach zero before ``r_max_factor`` central length
        scales (unbounded support).
    """
    kappa = float(kappa)
    if not kappa > 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    rho_c, cas_c, kin_c = (float(v) for v in velocity_moments(model, 0.0, kappa))
    a = 1.0 / np.sqrt(4.0 * np.pi * rho_c / kappa)
    r0 = 1e-6 * a

    # series start y = kappa - (2 pi/3) rho_c r^2
    s0 = [
        kappa - (2.0 * np.pi / 3.0) * rho_c * r0 ** 2,
        -(4.0 * np.pi / 3.0) * rho_c * r0,
        (4.0 * np.pi / 3.0) * r0 ** 3 * cas_c,
        (4.0 * np.pi / 3.0) * r0 ** 3 * kin_c,
        0.5 * (4.0 * np.pi * rho_c / 3.0) ** 2 * r0 ** 5 / 5.0,
    ]

    def rhs(r, s):
        y, p = s[0], s[1]
        rho, cas, kin = velocity_moments(model, r, y)
        rho, cas, kin = float(rho), float(cas), float(kin)
        return [p, -4.0 * np.pi * rho - 2.0 * p / r, 4.0 * np.pi * r * r * cas,
                4.0 * np.pi * r * r * kin, 0.5 * r * r * p * p]

    def edge(r, s):
        return s[0]

    edge.terminal = True
    edge.direction = -1

    e_scale = rho_c * a ** 3 * kappa
    atol = np.array([kappa, kappa / a, e_scale, e_scale, e_scale]) * 1e-15
    sol = solve_ivp(rhs, (r0, r_max_factor * a), s0, method="RK45", rtol=rtol, atol=atol,
                    events=edge, dense_output=True)
    if sol.status != 1 or len(sol.t_events[0]) == 0:
        raise NumericalError("y never crossed zero: unbounded support", kappa=kappa,
                             r_end=float(sol.t[-1]), y_end=float(sol.y[0, -1]))
    R = float(sol.t_events[0][0])
    # the event root finder has an absolute tolerance of a few 1e-16, too
    # coarse for tiny supports; polish with Newton on the dense output
    for _ in range(3):
        yR, pR = sol.sol(R)[:2]
        if pR >= 0:
            break
        R -= float(yR / pR)
    sR = sol.sol(R)
    M = -R * R * float(sR[1])
    E0 = -M / R
    cas, kin = float(sR[2]), float(sR[3])
    fe = float(sR[4]) + 0.5 * M * M / R

    r = np.linspace(0.0, 2.0 * R, n_grid)
    y = np.empty_like(r)
    p = np.empty_like(r)
    core = r < r0
    y[core] = kappa - (2.0 * np.pi / 3.0) * rho_c * r[core] ** 2
    p[core] = -(4.0 * np.pi / 3.0) * rho_c * r[core]
    mid = (r >= r0) & (r < R)
    dense = sol.sol(r[mid])
    y[mid], p[mid] = dense[0], dense[1]
    out = r >= R
    y[out] = E0 + M / r[out]
    p[out] = -M / r[out] ** 2
    m = -r * r * p
    m[out] = M
    rho = np.where(y > 0, rho_of_y(model, r, np.maximum(y, 0.0)), 0.0)
    return SteadyState(model, kappa, r, y, rho, m, E0, M, R, cas + kin - fe, cas, kin, fe)


def solve_for_mass(model: CasimirModel, M_target: float, kappa0: float = 1.0, rtol: float = 1e-8,
                   max_iter: int = 60, **shoot_kw) -> SteadyState:
    """Secant iteration on ``log kappa -> log M(kappa)`` until ``|M - M_target| <= rtol M_target``."""
    M_target = float(M_target)
    if not M_target > 0:
        raise DomainError(f"target mass must be positive, got {M_target}")
    samples = []

    def F(x):
        st = shoot(model, np.exp(x), **shoot_kw)
        samples.append((float(np.exp(x)), st.M))
        return np.log(st.M / M_target), st

    x0 = np.log(kappa0)
    f0, st = F(x0)
    if abs(np.expm1(f0)) <= rtol:
        return st
    # homology slope d log M / d log kappa = (3 - n)/2 for polytropes
    slope = (1.5 - model.exponents[0]) / 2.0 if model.kind == "polytrope" else 0.25
    x1 = x0 - f0 / slope
    for _ in range(max_iter):
        f1, st = F(x1)
        if abs(np.expm1(f1)) <= rtol:
            return st
        if f1 == f0:
            break
        slope = (f1 - f0) / (x1 - x0)
        if not slope > 0:
            break
        x0, f0 = x1, f1
        x1 = x1 - f1 / slope
    raise NumericalError("mass matching failed (non-monotone kappa -> M curve?)",
                         samples=sorted(samples))


# ---------------------------------------------------------------------------
# Emden-Fowler orbit


@dataclass
class EmdenFowlerTrace:
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray


def emden_fowler_orbit(state: SteadyState, r_lo: float = 1e-3, r_hi: float = 0.95) -> EmdenFowlerTrace:
    """Autonomous-plane image ``(u(t), v(t))``, ``t = ln r``, of a polytropic profile.

    ``u = -r phi**n / phi'`` and ``v = -r phi' / phi`` with ``phi = E0 - U0`` and
    ``n = mu + 3/2``; sampled on the profile nodes with ``r_lo R < r < r_hi R``.
    """
    if state.model.kind != "polytrope":
        raise DomainError("the Emden-Fowler reduction applies to polytropes only")
    n = state.model.exponents[0] + 1.5
    r = state.r_grid
    sel = (r > r_lo * state.R) & (r < r_hi * state.R)
    r = r[sel]
    phi = state.y_profile[sel]
    dphi = -state.m_profile[sel] / r ** 2
    return EmdenFowlerTrace(np.log(r), -r * phi ** n / dphi, -r * dphi / phi)


def orbit_alignment(a: EmdenFowlerTrace, b: EmdenFowlerTrace, guess: Optional[float] = None,
                    window: float = 0.1, n_scan: int = 400):
    """Best ``t``-shift ``s`` aligning ``b(t + s)`` with ``a(t)``.

    Without a ``guess`` the whole range of overlapping shifts is scanned
    first. Returns ``(s, sup deviation)``; the deviation is the sup over
    the overlap of ``max(|du|/max|u|, |dv|/max|v|)``.
    """
    from scipy.interpolate import CubicSpline

    su, sv = CubicSpline(b.t, b.u), CubicSpline(b.t, b.v)
    us, vs = np.max(np.abs(a.u)), np.max(np.abs(a.v))

    def dev(s):
        tt = a.t + s
        ok = (tt >= b.t[0]) & (tt <= b.t[-1])
        # demand half of a's range in the overlap so short overlaps cannot win
        if ok.sum() < max(10, a.t.size // 2):
            return np.inf
        return max(np.max(np.abs(su(tt[ok]) - a.u[ok])) / us,
                   np.max(np.abs(sv(tt[ok]) - a.v[ok])) / vs)

    if guess is None:
        shifts = np.linspace(b.t[0] - a.t[-1], b.t[-1] - a.t[0], n_scan)
        devs = np.array([dev(s) for s in shifts])
        guess = float(shifts[int(np.argmin(devs))])
        window = 2.0 * (shifts[1] - shifts[0])
    res = minimize_scalar(dev, bounds=(guess - window, guess + window), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x), float(res.fun)
