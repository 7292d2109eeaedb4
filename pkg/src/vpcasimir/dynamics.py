"""
Spherically symmetric shell code for the Vlasov-Poisson flow.

Each particle is a spherical shell with radius ``r``, radial velocity ``v_r``
and squared angular momentum ``L``. It carries a phase-space volume ``vol``
and the value ``f_val`` of the distribution function, which is constant along
characteristics; its mass is ``w = f_val * vol``. The radial equations are

    dr/dt = v_r,    dv_r/dt = L / r**3 - m(r) / r**2,

with ``m(r)`` the mass of the other shells inside ``r`` (ties broken by
particle index). Time stepping is kick-drift-kick leapfrog; shells that
pass through the center are reflected.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Union

import numpy as np
from numba import njit

from .casimir import CasimirModel
from .errors import DomainError, NumericalError
from .functional import DiagnosticRecord, GridDensity, shell_field
from .steady import SteadyState

__all__ = [
    "ParticleEnsemble",
    "VelocityScale",
    "Rescale",
    "sample_steady",
    "enclosed_mass",
    "gravity",
    "acceleration",
    "step",
    "perturb",
    "deposit",
    "ensemble_record",
    "ExperimentResult",
    "run_experiment",
    "baseline_of",
    "corollary_terms",
    "corollary_C1",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Shell particles; ``L``, ``w``, ``f_val`` and ``vol`` never change in time."""

    r: np.ndarray
    vr: np.ndarray
    L: np.ndarray
    w: np.ndarray
    f_val: np.ndarray
    vol: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        for name in ("r", "vr", "L", "w", "f_val", "vol"):
            arr = getattr(self, name)
            if not (isinstance(arr, np.ndarray) and not arr.flags.writeable):
                object.__setattr__(self, name, _frozen(arr))
        n = self.r.size
        if any(getattr(self, k).shape != (n,) for k in ("vr", "L", "w", "f_val", "vol")):
            raise DomainError("particle arrays must be one-dimensional and of equal length")

    @property
    def N(self) -> int:
        return self.r.size

    @property
    def M(self) -> float:
        return float(np.sum(self.w))

    def moved(self, r, vr, time) -> "ParticleEnsemble":
        return ParticleEnsemble(_frozen(r), _frozen(vr), self.L, self.w, self.f_val, self.vol,
                                float(time))


# ---------------------------------------------------------------------------
# sampling


def _strata(state: SteadyState, N: int):
    # radial strata outnumber velocity strata so that m(r) is resolved
    nr = max(int(round(3.5 * N ** (1.0 / 3.0))), 8)
    k = max(int(np.ceil(np.sqrt(1.5 * N / nr))), 2)
    return nr, k, k


def sample_steady(state: SteadyState, N: int = 100_000, strata=None) -> ParticleEnsemble:
    """Deterministic stratified-midpoint sampling of ``f0``.

    The support ``r <= R`` is cut into ``nr`` radial strata; each stratum gets
    its own ``(v_r, L)`` box just covering the local support, split into
    ``nv x nL`` cells. Every cell whose midpoint has ``f0 > 0`` becomes a
    particle with ``w = f0 * 4 pi**2 dr dv_r dL``; volumes are rescaled so the
    total mass is exactly ``M``. Without explicit ``strata`` the resolution is
    raised until at least ``N`` particles result.
    """
    N = int(N)
    if N < 1000:
        raise DomainError("sample_steady needs N >= 1000")
    if strata is None:
        nr, nv, nL = _strata(state, N)
        auto = True
    else:
        nr, nv, nL = (int(s) for s in strata)
        auto = False
    while True:
        ens = _sample(state, nr, nv, nL)
        if not auto or ens.N >= N:
            return ens
        nv += 1
        nL += 1


def _sample(state, nr, nv, nL):
    R = state.R
    re = np.linspace(0.0, R, nr + 1)
    rc = 0.5 * (re[1:] + re[:-1])
    dr = np.diff(re)
    # local support box: v_r^2 <= 2 y(r_lo), L <= max over the stratum of 2 r^2 y(r)
    y_lo = np.maximum(state.y(re[:-1]), 0.0)
    probe = re[:-1, None] + dr[:, None] * np.linspace(0.0, 1.0, 9)[None, :]
    Lcap = np.max(2.0 * probe ** 2 * np.maximum(state.y(probe), 0.0), axis=1)
    V = np.sqrt(2.0 * y_lo)
    t = (np.arange(nv) + 0.5) / nv
    s = (np.arange(nL) + 0.5) / nL
    r = np.repeat(rc, nv * nL)
    shape = (nr, nv, nL)
    vr = np.broadcast_to(V[:, None, None] * (2.0 * t[None, :, None] - 1.0), shape).ravel()
    L = np.broadcast_to(Lcap[:, None, None] * s[None, None, :], shape).ravel()
    vol = np.repeat(4.0 * np.pi ** 2 * dr * (2.0 * V / nv) * (Lcap / nL), nv * nL)
    f = state.f0(r, vr, L)
    keep = f > 0
    if not keep.any():
        raise DomainError("no stratum intersects the support of f0")
    r, vr, L, f, vol = r[keep], vr[keep], L[keep], f[keep], vol[keep]
    vol = vol * (state.M / np.sum(f * vol))
    w = f * vol
    w = w * (state.M / np.sum(w))
    return ParticleEnsemble(r, vr, L, w, f, vol, 0.0)


# ---------------------------------------------------------------------------
# forces and stepping


def _order(r):
    """Sort order by radius with ties broken by particle index."""
    order = np.argsort(r)
    rs = r[order]
    if np.any(rs[1:] == rs[:-1]):
        order = np.lexsort((np.arange(r.size), r))
    return order


def enclosed_mass(r, w):
    """Mass of the other particles inside each ``r_i``; equal radii count by index order."""
    order = _order(r)
    ws = w[order]
    excl = np.cumsum(ws)
    excl -= ws
    out = np.empty_like(excl)
    out[order] = excl
    return out


def gravity(r, w, self_gravity=True, external=None, frozen=None):
    """Gravitational part ``-m(r)/r**2`` of the radial acceleration.

    ``frozen`` (a steady state) replaces the self-consistent ``m(r)`` by the
    steady profile; ``external`` adds a fixed central point mass.
    """
    if frozen is not None:
        m = frozen.m(r)
    elif self_gravity:
        m = enclosed_mass(r, w)
    else:
        m = np.zeros_like(r)
    if external is not None:
        m = m + float(external)
    return -m / r ** 2


def acceleration(r, L, w, self_gravity=True, external=None, frozen=None):
    """Radial acceleration ``L/r**3 - m(r)/r**2``."""
    return L / r ** 3 + gravity(r, w, self_gravity, external, frozen)


def _check_finite(r, vr, t):
    # a non-finite radius propagates into vr through the force, so one reduction suffices
    if np.isfinite(np.sum(vr)):
        return
    bad = ~(np.isfinite(r) & np.isfinite(vr))
    i = int(np.nonzero(bad)[0][0])
    raise NumericalError(f"non-finite state for particle {i} at t={t}", index=i,
                         r=float(r[i]), vr=float(vr[i]))


def _drift(r, vr, sqrtL, dt):
    """Free motion in the orbital plane for time ``dt``, returned as ``(r, v_r)``.

    The centrifugal term is integrated exactly this way and ``L`` is
    conserved; for ``L = 0`` a passage through the center comes out as the
    reflection ``r -> -r, v_r -> -v_r``.
    """
    vt = sqrtL / r
    x = r + dt * vr
    y = dt * vt
    r_new = np.sqrt(x * x + y * y)
    vr_new = x * vr
    vr_new += y * vt
    if r_new.min() > 0:
        vr_new /= r_new
    else:
        ok = r_new > 0
        vr_new = np.where(ok, vr_new / np.where(ok, r_new, 1.0), vr)
    return r_new, vr_new


@njit(cache=True, error_model="numpy")
def _self_gravity_sorted(order, r, w, a):
    """``a_i = -m_excl(r_i)/r_i**2`` along a radius order; returns False if radii tie."""
    cum = 0.0
    prev = -1.0
    distinct = True
    for k in range(order.size):
        i = order[k]
        ri = r[i]
        if ri == prev:
            distinct = False
        prev = ri
        a[i] = -cum / (ri * ri)
        cum += w[i]
    return distinct


@njit(cache=True, error_model="numpy")
def _kick_drift(r, vr, a, sqrtL, dt, first):
    """Closing half kick of the previous step (unless ``first``), opening half kick, drift."""
    h = 0.5 * dt
    for i in range(r.size):
        v = vr[i] + (h * a[i] if first else dt * a[i])
        vt = sqrtL[i] / r[i]
        x = r[i] + dt * v
        y = dt * vt
        rn = np.sqrt(x * x + y * y)
        if rn > 0:
            vr[i] = (x * v + y * vt) / rn
        else:
            vr[i] = v
        r[i] = rn


def _self_gravity(r, w, a):
    # tied radii need the index tie break for a deterministic result
    if not _self_gravity_sorted(np.argsort(r), r, w, a):
        _self_gravity_sorted(np.lexsort((np.arange(r.size), r)), r, w, a)
    return a


def step(ens: ParticleEnsemble, dt: float, self_gravity: bool = True, external=None,
         frozen: Optional[SteadyState] = None, n_steps: int = 1) -> ParticleEnsemble:
    """``n_steps`` kick-drift-kick leapfrog steps of size ``dt``.

    Kicks apply the gravitational acceleration ``-m(r)/r**2``; drifts are
    straight lines in the orbital plane. This is Cartesian leapfrog for the
    spherically symmetric force, written in ``(r, v_r)`` with ``L`` fixed.
    """
    if dt < 0:
        raise DomainError("dt must be nonnegative")
    if dt == 0 or n_steps == 0:
        return ens
    w = ens.w
    sqrtL = np.sqrt(ens.L)
    r = ens.r.copy()
    vr = ens.vr.copy()
    h = 0.5 * dt
    t = ens.time
    if self_gravity and frozen is None and external is None:
        # fused path: consecutive half kicks share one force evaluation
        a = _self_gravity(r, w, np.empty_like(r))
        for k in range(n_steps):
            _kick_drift(r, vr, a, sqrtL, dt, k == 0)
            _self_gravity(r, w, a)
            t += dt
            _check_finite(r, vr, t)
        vr += h * a
        _check_finite(r, vr, t)
        return ens.moved(r, vr, t)
    a = gravity(r, w, self_gravity, external, frozen)
    for _ in range(n_steps):
        vr += h * a
        r, vr = _drift(r, vr, sqrtL, dt)
        a = gravity(r, w, self_gravity, external, frozen)
        vr += h * a
        t += dt
        _check_finite(r, vr, t)
    return ens.moved(r, vr, t)


# ---------------------------------------------------------------------------
# perturbations


@dataclass(frozen=True)
class VelocityScale:
    """``v -> (1 + eps) v`` with ``f`` scaled by ``(1 + eps)**-3`` (mass neutral)."""

    eps: float


@dataclass(frozen=True)
class Rescale:
    """Image of ``a f(b x, c v)``."""

    a: float
    b: float
    c: float


def perturb(ens: ParticleEnsemble, mode: Union[VelocityScale, Rescale],
            renormalize: bool = False) -> ParticleEnsemble:
    """Perturbed ensemble; particle weights are left untouched whenever mass is preserved.

    For :class:`Rescale` with ``a b**-3 c**-3 != 1`` either ``renormalize``
    rescales ``f_val`` to restore the mass or a :class:`DomainError` is raised.
    """
    if isinstance(mode, VelocityScale):
        if abs(mode.eps) > 0.5:
            raise DomainError("velocity perturbation must satisfy |eps| <= 0.5")
        if mode.eps == 0:
            return ens
        s = 1.0 + mode.eps
        return ParticleEnsemble(ens.r, ens.vr * s, ens.L * s * s, ens.w, ens.f_val / s ** 3,
                                ens.vol * s ** 3, ens.time)
    if isinstance(mode, Rescale):
        a, b, c = float(mode.a), float(mode.b), float(mode.c)
        if not (a > 0 and b > 0 and c > 0):
            raise DomainError("rescaling factors must be positive")
        k = a / (b * c) ** 3
        vol = ens.vol / (b * c) ** 3
        if abs(k - 1.0) <= 1e-12:
            f = ens.f_val * a
        elif renormalize:
            f = ens.f_val * (a / k)
        else:
            raise DomainError(f"rescaling changes the mass by the factor {k}; "
                              "set renormalize to restore it")
        return ParticleEnsemble(ens.r / b, ens.vr / c, ens.L / (b * c) ** 2, ens.w, f, vol,
                                ens.time)
    raise DomainError(f"unknown perturbation {mode!r}")


def deposit(ens: ParticleEnsemble, grid: GridDensity) -> GridDensity:
    """Cell average of ``f`` on ``grid``: ``sum(w) / cell measure`` per cell.

    Particles outside the box are dropped.
    """
    ir = np.searchsorted(grid.r_edges, ens.r, side="right") - 1
    iv = np.searchsorted(grid.vr_edges, ens.vr, side="right") - 1
    iL = np.searchsorted(grid.L_edges, ens.L, side="right") - 1
    nr, nv, nL = grid.shape
    ok = (ir >= 0) & (ir < nr) & (iv >= 0) & (iv < nv) & (iL >= 0) & (iL < nL)
    flat = np.ravel_multi_index((ir[ok], iv[ok], iL[ok]), grid.shape)
    mass = np.bincount(flat, weights=ens.w[ok], minlength=nr * nv * nL).reshape(grid.shape)
    return grid.with_values(mass / grid.weights)


# ---------------------------------------------------------------------------
# diagnostics


def _phi(model, ens, state):
    E = 0.5 * (ens.vr ** 2 + ens.L / ens.r ** 2) + state.U(ens.r)
    return float(np.sum(ens.vol * model.Q(ens.f_val, ens.L)) + np.sum(ens.w * (E - state.E0)))


def ensemble_record(model: CasimirModel, ens: ParticleEnsemble, state: SteadyState,
                    baseline: Optional[float] = None) -> DiagnosticRecord:
    """Energies of the particle ensemble and its distance from ``state``.

    ``d`` is ``Phi(f) - Phi(f0)`` with ``Phi(f) = int Q(f) + int (E - E0) f`` and
    ``E`` built from the steady potential; ``Phi(f)`` is a particle sum and
    ``Phi(f0)`` is ``baseline`` (default: the exact steady-state value).
    ``field_dist`` uses the shell field of the particles against the exact
    steady field: ``FE_f + FE_0 + sum w U0(r_i)``.
    """
    order = np.argsort(ens.r, kind="stable")
    rs, ws = ens.r[order], ens.w[order]
    fe = shell_field(rs, ws).field_energy
    cas = float(np.sum(ens.vol * model.Q(ens.f_val, ens.L)))
    kin = float(np.sum(ens.w * 0.5 * (ens.vr ** 2 + ens.L / ens.r ** 2)))
    if baseline is None:
        baseline = (state.casimir + state.kinetic - 2.0 * state.field_energy
                    - state.E0 * state.M)
    d = _phi(model, ens, state) - baseline
    fd = fe + state.field_energy + float(np.sum(ens.w * state.U(ens.r)))
    return DiagnosticRecord(J=cas + kin, D=cas + kin - fe, kinetic=kin, casimir=cas,
                            field_energy=fe, mass=float(np.sum(ens.w)), d_dist=d,
                            field_dist=fd, time=ens.time)


def corollary_terms(model: CasimirModel, ens: ParticleEnsemble, state: SteadyState, C1: float):
    """Particle sums for the quadratic stability bound.

    Returns ``(lhs, d_local)``: ``lhs = sum_off vol Q(f) + (C1/2) sum_on vol (f - f0)**2``
    and ``d_local`` the pointwise particle sum of the ``d`` integrand, which
    dominates ``lhs`` term by term.
    """
    f0 = state.f0(ens.r, ens.vr, ens.L)
    E = 0.5 * (ens.vr ** 2 + ens.L / ens.r ** 2) + state.U(ens.r)
    Qf = model.Q(ens.f_val, ens.L)
    on = f0 > 0
    lhs = float(np.sum(ens.vol[~on] * Qf[~on]) + 0.5 * C1 * np.sum(ens.vol[on] * (ens.f_val[on] - f0[on]) ** 2))
    integrand = Qf - model.Q(f0, ens.L) + (E - state.E0) * (ens.f_val - f0)
    return lhs, float(np.sum(ens.vol * integrand))


def corollary_C1(model: CasimirModel, state: SteadyState, ens: ParticleEnsemble) -> float:
    """``inf d2Q`` over ``0 < f <= C0, 0 <= L <= C0`` with ``C0`` just above the data bounds."""
    C0 = 1.001 * max(state.f_max + state.L_max, float(np.max(ens.f_val)), float(np.max(ens.L)))
    f = np.linspace(C0 * 1e-6, C0, 2001)
    L = np.linspace(0.0, C0, 51)
    return float(np.min(model.d2Q(f[:, None], L[None, :])))


@dataclass
class ExperimentResult:
    records: List[DiagnosticRecord]
    final: ParticleEnsemble
    casimir_spread: float
    corollary: List[tuple] = field(default_factory=list)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    @property
    def D_drift(self) -> float:
        D = self.column("D")
        return float(np.max(np.abs(D - D[0])) / abs(D[0]))

    @property
    def distance(self):
        return self.column("d_dist") + self.column("field_dist")


def run_experiment(model: CasimirModel, ens: ParticleEnsemble, state: SteadyState, T_end: float,
                   dt: float, cadence: int = 100, baseline: Optional[float] = None,
                   progress=None) -> ExperimentResult:
    """Evolve ``ens`` to ``T_end`` and record diagnostics every ``cadence`` steps.

    The particle-wise Casimir ``sum vol Q(f_val, L)`` is checked to stay
    constant to 1e-13 relative.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    n_steps = int(round(T_end / dt))
    cadence = max(int(cadence), 1)
    C1 = corollary_C1(model, state, ens)
    recs = [ensemble_record(model, ens, state, baseline)]
    cor = [(ens.time,) + corollary_terms(model, ens, state, C1)]
    cur = ens
    done = 0
    while done < n_steps:
        k = min(cadence, n_steps - done)
        cur = step(cur, dt, n_steps=k)
        done += k
        recs.append(ensemble_record(model, cur, state, baseline))
        cor.append((cur.time,) + corollary_terms(model, cur, state, C1))
        if progress is not None:
            progress(done, n_steps, recs[-1])
    cas = np.array([r.casimir for r in recs])
    spread = float(np.max(np.abs(cas - cas[0])) / abs(cas[0])) if cas[0] != 0 else 0.0
    if spread > 1e-13:
        raise NumericalError("particle Casimir changed along the run", spread=spread)
    return ExperimentResult(recs, cur, spread, cor)


def baseline_of(model: CasimirModel, ens: ParticleEnsemble, state: SteadyState) -> float:
    """``Phi(f0)`` evaluated with the same particle quadrature as ``ens``."""
    return _phi(model, ens, state)
