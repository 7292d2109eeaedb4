"""
Energy-Casimir functionals on a phase-space grid.

Spherically symmetric densities are stored on a tensor grid in
``(r, v_r, L)`` where ``L = |x x v|**2``. In these coordinates the phase-space
measure is ``dx dv = 4 pi**2 dr dv_r dL``, so every cell carries the weight
``4 pi**2 dr dv_r dL`` and all integrals are midpoint sums.

Gravity is evaluated with the thin-shell model: the mass of each radial cell
sits on a shell at the cell center. Then

    U_i = -sum_j dm_j / max(r_i, r_j),
    (1/8pi) int |grad U|**2 = 1/2 sum_k m_k**2 (1/r_k - 1/r_{k+1}),

with ``m_k`` the mass up to and including shell ``k``. The field energy is an
exact quadratic form in the shell masses whose gradient is ``-U``, so the
discrete first variation of ``D`` is exactly ``dQ + |v|**2/2 + U`` per cell.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

from .casimir import CasimirModel, alpha, c_alpha
from .errors import DomainError, NumericalError

__all__ = [
    "GridDensity",
    "RadialField",
    "DiagnosticRecord",
    "GridReference",
    "Distance",
    "field_of",
    "shell_field",
    "eval_J_D",
    "discretize_steady",
    "eval_d",
    "check_interpolation",
    "interpolation_constant",
    "check_splitting",
    "split_energy",
    "lower_bound_certificate",
]

IDENTITY_RTOL = 1e-8


def _edges(name, e, lower=None):
    e = np.array(e, dtype=float)
    if e.ndim != 1 or e.size < 2 or not np.all(np.isfinite(e)):
        raise DomainError(f"{name} must be a finite 1-d array with at least two entries")
    if not np.all(np.diff(e) > 0):
        raise DomainError(f"{name} must be strictly increasing")
    if lower is not None and e[0] < lower:
        raise DomainError(f"{name} must start at or above {lower}")
    e.setflags(write=False)
    return e


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Cell-averaged phase-space density on an ``(r, v_r, L)`` tensor grid.

    Instances are immutable; :meth:`with_values` returns a new density on
    the same grid.

    Parameters
    ----------
    r_edges, vr_edges, L_edges : array_like
        Cell boundaries, strictly increasing; ``r >= 0`` and ``L >= 0``.
    values : array_like, shape (nr, nv, nL)
        Nonnegative finite cell values of ``f``.
    """

    r_edges: np.ndarray
    vr_edges: np.ndarray
    L_edges: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r_edges", _edges("r_edges", self.r_edges, 0.0))
        object.__setattr__(self, "vr_edges", _edges("vr_edges", self.vr_edges))
        object.__setattr__(self, "L_edges", _edges("L_edges", self.L_edges, 0.0))
        v = np.array(self.values, dtype=float)
        shape = (self.r_edges.size - 1, self.vr_edges.size - 1, self.L_edges.size - 1)
        if v.shape != shape:
            raise DomainError(f"values have shape {v.shape}, grid needs {shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("density values must be finite")
        if np.any(v < 0):
            i = np.unravel_index(int(np.argmin(v)), v.shape)
            raise DomainError(f"density must be nonnegative; f{i} = {v[i]}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    # -- construction -----------------------------------------------------

    @classmethod
    def box(cls, r_max, vr_max, L_max, shape, L_spacing="quadratic", r_spacing="uniform",
            r_inner=None, r_inner_frac=0.75):
        """Zero density on ``(0, r_max] x [-vr_max, vr_max] x [0, L_max]``.

        ``L_spacing='quadratic'`` places edges at ``L_max (k/n)**2`` so that
        ``sqrt(L)``, i.e. the tangential velocity at fixed radius, is
        resolved uniformly. ``r_spacing='graded'`` puts ``r_inner_frac`` of
        the radial cells uniformly on ``(0, r_inner]`` and the rest
        uniformly on ``(r_inner, r_max]``.
        """
        nr, nv, nL = (int(n) for n in shape)
        if min(nr, nv, nL) < 1:
            raise DomainError("grid shape entries must be positive")
        if r_spacing == "uniform":
            r = np.linspace(0.0, r_max, nr + 1)
        elif r_spacing == "graded":
            if r_inner is None or not 0 < r_inner < r_max:
                raise DomainError("graded radial spacing needs 0 < r_inner < r_max")
            n_in = min(max(int(round(r_inner_frac * nr)), 1), nr - 1)
            r = np.concatenate([np.linspace(0.0, r_inner, n_in + 1),
                                np.linspace(r_inner, r_max, nr - n_in + 1)[1:]])
        else:
            raise DomainError(f"unknown r_spacing {r_spacing!r}")
        vr = np.linspace(-vr_max, vr_max, nv + 1)
        if L_spacing == "quadratic":
            L = L_max * np.linspace(0.0, 1.0, nL + 1) ** 2
        elif L_spacing == "uniform":
            L = np.linspace(0.0, L_max, nL + 1)
        else:
            raise DomainError(f"unknown L_spacing {L_spacing!r}")
        return cls(r, vr, L, np.zeros((nr, nv, nL)))

    def with_values(self, values) -> "GridDensity":
        return GridDensity(self.r_edges, self.vr_edges, self.L_edges, values)

    def sample(self, fn: Callable) -> "GridDensity":
        """New density with ``fn(r, v_r, L)`` evaluated at the cell centers."""
        R, V, L = self.mesh
        return self.with_values(np.broadcast_to(fn(R, V, L), self.shape))

    def same_grid(self, other: "GridDensity") -> bool:
        return (self.shape == other.shape
                and np.array_equal(self.r_edges, other.r_edges)
                and np.array_equal(self.vr_edges, other.vr_edges)
                and np.array_equal(self.L_edges, other.L_edges))

    def restrict(self, R_split: float, inside: bool = True) -> "GridDensity":
        """``g`` times the indicator of ``r <= R_split`` (or its complement), by cell center."""
        keep = self.r <= R_split if inside else self.r > R_split
        return self.with_values(self.values * keep[:, None, None])

    # -- geometry ---------------------------------------------------------

    @property
    def shape(self):
        return self.values.shape

    @cached_property
    def r(self):
        return 0.5 * (self.r_edges[1:] + self.r_edges[:-1])

    @cached_property
    def vr(self):
        return 0.5 * (self.vr_edges[1:] + self.vr_edges[:-1])

    @cached_property
    def L(self):
        return 0.5 * (self.L_edges[1:] + self.L_edges[:-1])

    @cached_property
    def mesh(self):
        """Cell centers broadcastable to the grid shape."""
        return self.r[:, None, None], self.vr[None, :, None], self.L[None, None, :]

    @cached_property
    def weights(self):
        """Phase-space measure ``4 pi**2 dr dv_r dL`` of every cell."""
        return (4.0 * np.pi ** 2 * np.diff(self.r_edges)[:, None, None]
                * np.diff(self.vr_edges)[None, :, None] * np.diff(self.L_edges)[None, None, :])

    @cached_property
    def kinetic_density(self):
        """``|v|**2 / 2 = (v_r**2 + L/r**2) / 2`` at the cell centers."""
        R, V, L = self.mesh
        return 0.5 * (V ** 2 + L / R ** 2)

    # -- moments ----------------------------------------------------------

    @cached_property
    def shell_mass(self):
        return np.sum(self.weights * self.values, axis=(1, 2))

    @cached_property
    def mass(self) -> float:
        return float(np.sum(self.shell_mass))

    @cached_property
    def rho(self):
        """Cell-averaged spatial density ``dm_i / (4 pi r_i**2 dr_i)``."""
        return self.shell_mass / (4.0 * np.pi * self.r ** 2 * np.diff(self.r_edges))

    def mass_inside(self, R_split: float) -> float:
        """Mass of the shells with center ``r <= R_split``."""
        return float(np.sum(self.shell_mass[self.r <= R_split]))


@dataclass(frozen=True)
class RadialField:
    """Shell-model gravitational field of a radial mass distribution.

    Attributes
    ----------
    r : ndarray
        Shell radii (cell centers).
    shell_mass : ndarray
    m : ndarray
        Mass up to and including each shell.
    U : ndarray
        Potential at the shells.
    field_energy : float
        ``(1/8pi) int |grad U|**2 dx``.
    """

    r: np.ndarray
    shell_mass: np.ndarray
    m: np.ndarray
    U: np.ndarray
    field_energy: float

    @property
    def M(self) -> float:
        return float(self.m[-1]) if self.m.size else 0.0

    def enclosed(self, r):
        """Mass strictly inside radius ``r`` (shells at ``r`` count as inside)."""
        idx = np.searchsorted(self.r, np.asarray(r, float), side="right")
        return np.concatenate([[0.0], self.m])[idx]

    def potential(self, r):
        """``U(r) = -m(r)/r - sum over outer shells of dm_j / r_j``."""
        r = np.asarray(r, float)
        idx = np.searchsorted(self.r, r, side="right")
        tail = np.concatenate([np.cumsum((self.shell_mass / self.r)[::-1])[::-1], [0.0]])
        inner = np.concatenate([[0.0], self.m])[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -np.where(r > 0, inner / np.where(r > 0, r, 1.0), 0.0) - tail[idx]
        return out


def shell_field(r, dm) -> RadialField:
    """Field of shells of mass ``dm`` at strictly increasing radii ``r > 0``."""
    r = np.asarray(r, float)
    dm = np.asarray(dm, float)
    m = np.cumsum(dm)
    outer = np.concatenate([np.cumsum((dm / r)[::-1])[::-1][1:], [0.0]])
    U = -m / r - outer
    inv = 1.0 / r
    gaps = inv - np.append(inv[1:], 0.0)
    fe = 0.5 * float(np.sum(m ** 2 * gaps))
    return RadialField(r, dm, m, U, fe)


def field_of(g: GridDensity) -> RadialField:
    """Shell-model field ``(m_g, U_g, field energy)`` of a grid density."""
    return shell_field(g.r, g.shell_mass)


def _quadratic_energy(r, dm) -> float:
    """``(1/8pi) ||grad U||**2`` of a signed shell distribution."""
    inv = 1.0 / np.asarray(r, float)
    gaps = inv - np.append(inv[1:], 0.0)
    return 0.5 * float(np.sum(np.cumsum(dm) ** 2 * gaps))


# ---------------------------------------------------------------------------
# functionals

CSV_COLUMNS = ("time", "J", "D", "kinetic", "casimir", "field_energy", "mass", "d_dist",
               "field_dist")


@dataclass
class DiagnosticRecord:
    """Energy bookkeeping of one density; ``D = casimir + kinetic - field_energy``."""

    J: float
    D: float
    kinetic: float
    casimir: float
    field_energy: float
    mass: float
    d_dist: float = 0.0
    field_dist: float = 0.0
    time: float = 0.0

    @property
    def casimir_part(self) -> float:
        return self.casimir

    def as_row(self):
        return tuple(float(getattr(self, c)) for c in CSV_COLUMNS)


def eval_J_D(model: CasimirModel, g: GridDensity, time: float = 0.0) -> DiagnosticRecord:
    """Midpoint-rule ``J(f)`` and ``D(f)`` of a grid density."""
    w = g.weights
    f = g.values
    cas = float(np.sum(w * model.Q(f, g.mesh[2])))
    kin = float(np.sum(w * f * g.kinetic_density))
    fe = field_of(g).field_energy
    return DiagnosticRecord(J=cas + kin, D=cas + kin - fe, kinetic=kin, casimir=cas,
                            field_energy=fe, mass=g.mass, time=time)


# ---------------------------------------------------------------------------
# discrete reference state


@dataclass(frozen=True)
class GridReference:
    """Discrete steady state on a fixed grid.

    ``density`` satisfies ``f0 = q(E0 - |v|**2/2 - U0_i, L)`` cell by cell
    with ``U0`` the shell potential of ``f0`` itself, and has mass ``M``.
    """

    density: GridDensity
    E0: float
    field: RadialField
    record: DiagnosticRecord
    newton_iterations: int = 0

    @property
    def M(self) -> float:
        return self.density.mass

    @property
    def D_value(self) -> float:
        return self.record.D

    @cached_property
    def energy(self):
        """Particle energy ``|v|**2/2 + U0`` at the cell centers."""
        return self.density.kinetic_density + self.field.U[:, None, None]


def discretize_steady(model: CasimirModel, state, template: GridDensity, tol: float = 1e-13,
                      max_iter: int = 100) -> GridReference:
    """Discrete self-consistent steady state of mass ``state.M`` on ``template``'s grid.

    Newton's method on ``(U_1..U_n, E0)`` for ``U = U_shell[q(E0 - E)]`` and
    the mass constraint, started from the continuous profile.
    """
    g = template
    M = float(state.M)
    w, kin = g.weights, g.kinetic_density
    L = g.mesh[2]
    r = g.r
    K = 1.0 / np.maximum(r[:, None], r[None, :])
    n = r.size

    def evaluate(x):
        U, E0 = x[:n], x[n]
        e = E0 - kin - U[:, None, None]
        f = model.q(e, L)
        dm = np.sum(w * f, axis=(1, 2))
        F = np.append(U + K @ dm, (dm.sum() - M) / M)
        return F, e, f

    x = np.append(state.U(r), state.E0)
    scale = max(abs(state.E0), 1e-300)
    F, e, f = evaluate(x)
    norm = np.max(np.abs(F[:n])) / scale + abs(F[n])
    it = 0
    for it in range(1, max_iter + 1):
        s = np.sum(w * model.dq(e, L), axis=(1, 2))
        Jm = np.eye(n + 1)
        Jm[:n, :n] -= K * s[None, :]
        Jm[:n, n] = K @ s
        Jm[n, :n] = -s / M
        Jm[n, n] = s.sum() / M
        try:
            dx = np.linalg.solve(Jm, -F)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular Jacobian in the discrete steady-state solve",
                                 iteration=it) from exc
        t = 1.0
        while True:
            Fn, en, fn = evaluate(x + t * dx)
            nn = np.max(np.abs(Fn[:n])) / scale + abs(Fn[n])
            if nn < norm or t < 1e-6:
                break
            t *= 0.5
        x, F, e, f, norm = x + t * dx, Fn, en, fn, nn
        if norm <= tol:
            break
    else:
        raise NumericalError("discrete steady state did not converge", residual=norm,
                             iterations=max_iter)
    dens = g.with_values(f)
    fld = field_of(dens)
    return GridReference(dens, float(x[n]), fld, eval_J_D(model, dens), it)


# ---------------------------------------------------------------------------
# distance to the steady state


@dataclass(frozen=True)
class Distance:
    """``d(f, f0)``, the field distance and the audited energy identity."""

    d: float
    field_dist: float
    D_f: float
    D_ref: float
    identity_residual: float

    @property
    def total(self) -> float:
        return self.d + self.field_dist


_ref_cache: dict = {}


def _reference_for(model, g, ref) -> GridReference:
    if isinstance(ref, GridReference):
        if not ref.density.same_grid(g):
            raise DomainError("reference state lives on a different grid")
        return ref
    key = (id(ref), g.shape, g.r_edges.tobytes(), g.vr_edges.tobytes(), g.L_edges.tobytes())
    hit = _ref_cache.get(key)
    if hit is None or hit[0] is not ref:
        if len(_ref_cache) > 8:
            _ref_cache.clear()
        hit = (ref, discretize_steady(model, ref, g))
        _ref_cache[key] = hit
    return hit[1]


def eval_d(model: CasimirModel, g: GridDensity, ref: Union[GridReference, "object"],
           rtol: float = IDENTITY_RTOL) -> Distance:
    """Stability distance of ``g`` from a steady state.

    ``ref`` is a :class:`GridReference` on ``g``'s grid or a continuous
    steady state, which is then discretized on that grid. The identity
    ``D(f) - D(f0) = d - field_dist + E0 (M_f - M_0)`` is checked on every
    call; the last term vanishes on the constraint set.

    Raises
    ------
    DomainError
        If the reference has zero mass.
    NumericalError
        If the identity fails by more than ``rtol`` relative.
    """
    if not getattr(ref, "M", 0.0) > 0:
        raise DomainError("reference state must have positive mass")
    ref = _reference_for(model, g, ref)
    f0 = ref.density.values
    f = g.values
    w = g.weights
    L = g.mesh[2]
    dE = ref.energy - ref.E0
    integrand = model.Q(f, L) - model.Q(f0, L) + dE * (f - f0)
    d = float(np.sum(w * integrand))
    fd = _quadratic_energy(g.r, g.shell_mass - ref.density.shell_mass)
    D_f = eval_J_D(model, g).D
    D_0 = ref.record.D
    lhs = D_f - D_0
    rhs = d - fd + ref.E0 * (g.mass - ref.M)
    scale = max(abs(D_f), abs(D_0), abs(d), fd, 1e-300)
    resid = abs(lhs - rhs) / scale
    if resid > rtol:
        raise NumericalError("energy identity D(f) - D(f0) = d - field_dist violated",
                             lhs=lhs, rhs=rhs, relative=resid)
    return Distance(d, fd, D_f, D_0, resid)


# ---------------------------------------------------------------------------
# inequality checks


def interpolation_constant(mu: float) -> float:
    """Explicit constant for ``int rho**(1+1/n) <= C (int int f**(1+1/mu) + int int |v|**2 f)``.

    Holder on ``|v| <= R`` plus Chebyshev outside, optimized in ``R``,
    then Young's inequality; ``n = mu + 3/2``.
    """
    n = mu + 1.5
    a = 3.0 / (1.0 + mu)
    c_h = (4.0 * np.pi / 3.0) ** (1.0 / (1.0 + mu))
    K = (1.0 + 2.0 / a) * (a / 2.0) ** (2.0 / (a + 2.0)) * c_h ** (2.0 / (a + 2.0))
    theta = 2.0 * mu / (3.0 + 2.0 * mu)
    return K ** (1.0 + 1.0 / n) * max(theta, 1.0 - theta)


@dataclass(frozen=True)
class InterpolationCheck:
    lhs: float
    rhs: float
    C_eff: float
    C_bound: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.C_bound * self.rhs * (1 + 1e-12)


def check_interpolation(g: GridDensity, mu: float) -> InterpolationCheck:
    """Both sides of the ``rho``-interpolation bound and their ratio ``C_eff``."""
    if not mu > 0:
        raise DomainError("mu must be positive")
    n = mu + 1.5
    vol = 4.0 * np.pi * g.r ** 2 * np.diff(g.r_edges)
    lhs = float(np.sum(vol * g.rho ** (1.0 + 1.0 / n)))
    w, f = g.weights, g.values
    rhs = float(np.sum(w * f ** (1.0 + 1.0 / mu)) + np.sum(w * f * 2.0 * g.kinetic_density))
    if not np.isfinite(lhs):
        raise NumericalError("interpolation lhs is not finite", lhs=lhs)
    C_eff = lhs / rhs if rhs > 0 else 0.0
    return InterpolationCheck(lhs, rhs, C_eff, interpolation_constant(mu))


@dataclass(frozen=True)
class SplitCheck:
    lhs: float
    rhs: float
    m_inside: float
    C_alpha: float
    tol: float

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs - self.tol


def check_splitting(model: CasimirModel, g: GridDensity, D_M: float, R: float) -> SplitCheck:
    """``D(g) - D_M >= (-C_a D_M / M**2 - 1/R) m_g(R) (M - m_g(R))``.

    ``D_M`` is the minimal energy at mass ``M = mass(g)``; ``m_g(R)`` counts
    the shells with center ``r <= R``.
    """
    if not R > 0:
        raise DomainError("split radius must be positive")
    M = g.mass
    if not M > 0:
        raise DomainError("split check needs positive mass")
    ca = c_alpha(alpha(model))
    mR = g.mass_inside(R)
    lhs = eval_J_D(model, g).D - D_M
    rhs = (-ca * D_M / M ** 2 - 1.0 / R) * mR * (M - mR)
    return SplitCheck(lhs, rhs, mR, ca, 1e-10 * (abs(D_M) + 1.0))


@dataclass(frozen=True)
class SplitEnergy:
    D: float
    D_inner: float
    D_outer: float
    cross: float
    cross_bound: float
    identity_residual: float


def split_energy(model: CasimirModel, g: GridDensity, R: float) -> SplitEnergy:
    """``D(g) = D(g1) + D(g2) - (1/4pi) int grad U1 . grad U2`` for a split at ``R``.

    The cross term is bounded by ``m_g(R) (M - m_g(R)) / R``.
    """
    g1, g2 = g.restrict(R, True), g.restrict(R, False)
    D = eval_J_D(model, g).D
    D1, D2 = eval_J_D(model, g1).D, eval_J_D(model, g2).D
    lam = g1.mass
    # inner shells all lie below every outer shell, so the cross term is lam * sum dm2 / r
    cross = lam * float(np.sum(g2.shell_mass / g.r))
    bound = lam * (g.mass - lam) / R
    resid = abs(D - (D1 + D2 - cross)) / max(abs(D), abs(D1) + abs(D2) + cross, 1e-300)
    return SplitEnergy(D, D1, D2, cross, bound, resid)


@dataclass(frozen=True)
class LowerBound:
    D: float
    bound: float
    C_M: float
    R_choice: float

    @property
    def slack(self) -> float:
        return self.D - self.bound

    @property
    def holds(self) -> bool:
        return self.slack >= -1e-10 * (abs(self.D) + 1.0)


def lower_bound_certificate(model: CasimirModel, g: GridDensity) -> LowerBound:
    """Certificate ``D(g) >= J(g)/2 - C_M`` with an explicit ``C_M``.

    ``C_M`` is assembled from the interpolation constant, the field bound
    ``int |grad U|**2 <= K2 M**(1-1/n) R**((3-n)/n) int rho**(1+1/n) + 4 pi M**2/R``
    and the growth constants of the model, with ``R`` chosen so that the
    coefficient of ``J`` is exactly 1/2.
    """
    rec = eval_J_D(model, g)
    M = rec.mass
    mu1 = model.mu1
    n = mu1 + 1.5
    if M <= 0:
        return LowerBound(rec.D, 0.5 * rec.J, 0.0, np.inf)
    K2 = 3.0 * n / (3.0 - n) * (4.0 * np.pi / 3.0) ** (1.0 + 1.0 / n)
    C21 = interpolation_constant(mu1)
    cJ = max(1.0 / model.C1, 2.0)
    R = (4.0 * np.pi / (K2 * C21 * cJ * M ** (1.0 - 1.0 / n))) ** (n / (3.0 - n))
    C_M = (K2 * C21 * model.F0 ** (1.0 / mu1) * M ** (2.0 - 1.0 / n) * R ** ((3.0 - n) / n)
           / (8.0 * np.pi) + M ** 2 / (2.0 * R))
    return LowerBound(rec.D, 0.5 * rec.J - C_M, C_M, R)
