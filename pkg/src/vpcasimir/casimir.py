"""
Casimir integrands Q(f, L) for the energy-Casimir functional.

Two families are supported:

* ``polytrope``: ``Q(f, L) = f**(1 + 1/mu)``, which leads to the isotropic
  polytropes ``f0 = (E0 - E)_+**mu``.
* ``mixed``: ``Q(f, L) = f**(1 + 1/m1) psi1(L) + f**(1 + 1/m2) psi2(L)`` with
  bounded positive weights ``psi``. The inverse of ``dQ/df`` has no closed
  form here and is computed by a safeguarded Newton/bisection iteration.

All evaluators broadcast over numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError, NumericalError

__all__ = [
    "LWeight",
    "CasimirModel",
    "AssumptionCheck",
    "AssumptionReport",
    "eval_Q",
    "eval_q",
    "validate_assumptions",
    "alpha",
    "c_alpha",
]


@dataclass(frozen=True)
class LWeight:
    """Angular-momentum weight ``psi(L)``.

    ``form='constant'`` gives ``psi = c``; ``form='shifted_inverse'`` gives
    ``psi = a + b / (1 + L)``. A negative ``b`` (with ``a + b > 0``) yields an
    increasing weight, which is admissible only when both exponents of the
    mixed model are at least 1/2.
    """

    form: str = "constant"
    a: float = 1.0
    b: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if self.form == "constant":
            if not self.c > 0:
                raise DomainError(f"constant weight needs c > 0, got {self.c}")
        elif self.form == "shifted_inverse":
            if not (self.a > 0 and self.a + self.b > 0):
                raise DomainError(
                    f"shifted_inverse weight needs a > 0 and a + b > 0, got a={self.a}, b={self.b}")
        else:
            raise DomainError(f"unknown weight form {self.form!r}")

    @classmethod
    def constant(cls, c=1.0):
        return cls("constant", c=float(c))

    @classmethod
    def shifted_inverse(cls, a, b):
        return cls("shifted_inverse", a=float(a), b=float(b))

    def __call__(self, L):
        L = np.asarray(L, dtype=float)
        if self.form == "constant":
            return np.full_like(L, self.c)
        return self.a + self.b / (1.0 + L)

    @property
    def lower(self) -> float:
        if self.form == "constant":
            return self.c
        return min(self.a, self.a + self.b)

    @property
    def upper(self) -> float:
        if self.form == "constant":
            return self.c
        return max(self.a, self.a + self.b)

    @property
    def is_nonincreasing(self) -> bool:
        return self.form == "constant" or self.b >= 0

    def to_dict(self) -> dict:
        if self.form == "constant":
            return {"form": "constant", "c": self.c}
        return {"form": "shifted_inverse", "a": self.a, "b": self.b}

    @classmethod
    def from_dict(cls, d: dict) -> "LWeight":
        d = dict(d)
        form = d.pop("form", "constant")
        unknown = set(d) - {"a", "b", "c"}
        if unknown:
            raise DomainError(f"unknown weight keys {sorted(unknown)}")
        if form == "constant":
            return cls.constant(d.get("c", 1.0))
        return cls.shifted_inverse(d["a"], d["b"])


def _check_exponent(name, mu):
    if not (0.0 < mu < 1.5):
        raise DomainError(f"{name}={mu} outside the admissible range 0 < mu < 3/2")


@dataclass(frozen=True)
class CasimirModel:
    """An admissible Casimir integrand together with its assumption constants.

    Use :meth:`polytrope` or :meth:`mixed` rather than the raw constructor.

    Attributes
    ----------
    kind : {'polytrope', 'mixed'}
    exponents : tuple of float
        ``(mu,)`` for a polytrope, ``(m1, m2)`` for a mixed model.
    weights : tuple of LWeight
        Empty for a polytrope.
    mu1, mu2, mu3 : float
        Exponents for which the growth, small-f and scaling assumptions hold.
    C1, C2, F0 : float
        Constants of the growth (``f >= F0``) and small-f (``f <= F0``) bounds.
    """

    kind: str
    exponents: Tuple[float, ...]
    weights: Tuple[LWeight, ...] = ()
    mu1: float = field(default=0.0)
    mu2: float = field(default=0.0)
    mu3: float = field(default=0.0)
    C1: float = 1.0
    C2: float = 1.0
    F0: float = 1.0

    def __post_init__(self):
        if self.kind == "polytrope":
            if len(self.exponents) != 1 or self.weights:
                raise DomainError("a polytrope takes one exponent and no weights")
        elif self.kind == "mixed":
            if len(self.exponents) != 2 or len(self.weights) != 2:
                raise DomainError("a mixed model takes two exponents and two weights")
        else:
            raise DomainError(f"unknown model kind {self.kind!r}")
        for i, m in enumerate(self.exponents):
            _check_exponent(f"exponent[{i}]", m)
        for name in ("mu1", "mu2", "mu3"):
            _check_exponent(name, getattr(self, name))
        for name in ("C1", "C2", "F0"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")

    # -- constructors -----------------------------------------------------

    @classmethod
    def polytrope(cls, mu: float) -> "CasimirModel":
        mu = float(mu)
        _check_exponent("mu", mu)
        return cls("polytrope", (mu,), (), mu, mu, mu, 1.0, 1.0, 1.0)

    @classmethod
    def mixed(cls, m1: float, m2: float, psi1: LWeight, psi2: LWeight) -> "CasimirModel":
        m1, m2 = float(m1), float(m2)
        _check_exponent("mu1", m1)
        _check_exponent("mu2", m2)
        # f**p1 + f**p2 >= f**max(p) for f >= 1 and <= 2 f**min(p) for f <= 1
        lo = min(psi1.lower, psi2.lower)
        hi = psi1.upper + psi2.upper
        return cls("mixed", (m1, m2), (psi1, psi2),
                   mu1=min(m1, m2), mu2=max(m1, m2), mu3=min(m1, m2),
                   C1=lo, C2=hi, F0=1.0)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        if self.kind == "polytrope":
            return {"kind": "polytrope", "mu": self.exponents[0]}
        return {"kind": "mixed", "mu1": self.exponents[0], "mu2": self.exponents[1],
                "psi1": self.weights[0].to_dict(), "psi2": self.weights[1].to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "CasimirModel":
        d = dict(d)
        kind = d.pop("kind", "polytrope")
        allowed = {"polytrope": {"mu"}, "mixed": {"mu1", "mu2", "psi1", "psi2"}}
        if kind not in allowed:
            raise DomainError(f"unknown model kind {kind!r}")
        unknown = set(d) - allowed[kind]
        if unknown:
            raise DomainError(f"unknown model keys {sorted(unknown)}")
        if kind == "polytrope":
            return cls.polytrope(d["mu"])
        return cls.mixed(d["mu1"], d["mu2"], LWeight.from_dict(d.get("psi1", {})),
                         LWeight.from_dict(d.get("psi2", {})))

    # -- evaluation -------------------------------------------------------

    @property
    def powers(self) -> Tuple[float, ...]:
        return tuple(1.0 + 1.0 / m for m in self.exponents)

    def _terms(self, L):
        if self.kind == "polytrope":
            return [(self.powers[0], 1.0)]
        return [(p, w(L)) for p, w in zip(self.powers, self.weights)]

    def Q(self, f, L=0.0):
        f = np.asarray(f, dtype=float)
        out = 0.0
        for p, w in self._terms(L):
            out = out + w * f ** p
        return out + np.zeros(np.broadcast(f, np.asarray(L)).shape)

    def dQ(self, f, L=0.0):
        f = np.asarray(f, dtype=float)
        out = 0.0
        for p, w in self._terms(L):
            out = out + w * p * f ** (p - 1.0)
        return out + np.zeros(np.broadcast(f, np.asarray(L)).shape)

    def d2Q(self, f, L=0.0):
        f = np.asarray(f, dtype=float)
        out = 0.0
        with np.errstate(divide="ignore"):
            for p, w in self._terms(L):
                out = out + w * p * (p - 1.0) * f ** (p - 2.0)
        return out + np.zeros(np.broadcast(f, np.asarray(L)).shape)

    def q(self, e, L=0.0):
        """Inverse of ``dQ(., L)`` extended by zero for ``e <= 0``."""
        e = np.asarray(e, dtype=float)
        L = np.asarray(L, dtype=float)
        if self.kind == "polytrope":
            mu = self.exponents[0]
            return np.maximum(e * (mu / (mu + 1.0)), 0.0) ** mu
        e, L = np.broadcast_arrays(e, L)
        out = np.zeros(e.shape)
        pos = e > 0
        if np.any(pos):
            out[pos] = _invert_mixed(self, e[pos], L[pos])
        return out

    def q_scalar(self, e: float, L: float = 0.0) -> float:
        """Scalar fast path of :meth:`q` using plain floats."""
        if e <= 0.0:
            return 0.0
        if self.kind == "polytrope":
            mu = self.exponents[0]
            return (e * mu / (mu + 1.0)) ** mu
        b1, b2 = 1.0 / self.exponents[0], 1.0 / self.exponents[1]
        c1 = float(self.weights[0](L)) * (1.0 + b1)
        c2 = float(self.weights[1](L)) * (1.0 + b2)
        le = math.log(e)
        s = min((le - math.log(c1)) / b1, (le - math.log(c2)) / b2)
        lo = min((le - math.log(2 * c1)) / b1, (le - math.log(2 * c2)) / b2)
        for _ in range(60):
            t1, t2 = c1 * math.exp(b1 * s), c2 * math.exp(b2 * s)
            step = (math.log(t1 + t2) - le) * (t1 + t2) / (b1 * t1 + b2 * t2)
            s_new = max(s - step, lo)
            if abs(s_new - s) <= 2.5e-14 * max(1.0, abs(s)):
                return math.exp(s_new)
            s = s_new
        raise NumericalError("scalar inverse of dQ did not converge", e=e, L=L, s=s)

    def dq(self, e, L=0.0):
        """Derivative of ``q`` with respect to ``e`` (zero for ``e <= 0``)."""
        e = np.asarray(e, dtype=float)
        f = self.q(e, L)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(e > 0, 1.0 / self.d2Q(np.where(f > 0, f, 1.0), L), 0.0)
        return out


def _invert_mixed(model, e, L, rtol=1e-13, max_iter=60):
    """Solve dQ(f, L) = e for f > 0, elementwise.

    In ``s = log f`` the map ``s -> log dQ(e**s)`` is a log-sum-exp of linear
    functions, hence convex and increasing. Newton started from the upper
    bound ``min_k (e / c_k)**mu_k`` therefore decreases monotonically onto
    the root, with ``max_k (e / (2 c_k))**mu_k`` as a guaranteed lower bound.
    """
    beta = np.array([1.0 / m for m in model.exponents])
    c = [w(L) * (1.0 + b) for w, b in zip(model.weights, beta)]
    log_e = np.log(e)
    hi = np.min([(log_e - np.log(ck)) / b for ck, b in zip(c, beta)], axis=0)
    lo = np.min([(log_e - np.log(2.0 * ck)) / b for ck, b in zip(c, beta)], axis=0)
    s = hi.copy()
    for _ in range(max_iter):
        terms = [ck * np.exp(b * s) for ck, b in zip(c, beta)]
        tot = terms[0] + terms[1]
        g = np.log(tot) - log_e
        slope = (beta[0] * terms[0] + beta[1] * terms[1]) / tot
        step = g / slope
        s_new = np.maximum(s - step, lo)
        if np.all(np.abs(s_new - s) <= 0.25 * rtol * np.maximum(1.0, np.abs(s))) or np.all(np.abs(g) <= 0.5 * rtol):
            s = s_new
            break
        s = s_new
    else:
        raise NumericalError("inverse of dQ did not converge", lo=np.exp(lo), hi=np.exp(hi), e=e)
    f = np.exp(s)
    if not np.all(np.isfinite(f)):
        raise NumericalError("inverse of dQ produced non-finite values", lo=np.exp(lo), hi=np.exp(hi), e=e)
    return f


def _nonneg(name, a):
    a = np.asarray(a, dtype=float)
    if np.any(a < 0) or np.any(~np.isfinite(a)):
        raise DomainError(f"{name} must be finite and nonnegative")
    return a


def eval_Q(model: CasimirModel, f, L=0.0):
    """Casimir energy density ``Q(f, L)``; raises :class:`DomainError` for negative input."""
    return model.Q(_nonneg("f", f), _nonneg("L", L))


def eval_q(model: CasimirModel, e, L=0.0):
    """Distribution value ``q(e, L)`` solving ``dQ(q, L) = e`` (zero for ``e <= 0``)."""
    return model.q(e, _nonneg("L", L))


# ---------------------------------------------------------------------------
# assumption checks


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: Dict[str, AssumptionCheck]
    C3: float
    C4: float

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def __getitem__(self, name) -> AssumptionCheck:
        return self.checks[name]

    def __str__(self):
        rows = [f"{c.name:4s} {'PASS' if c.passed else 'FAIL'} margin={c.margin:.3e} {c.detail}"
                for c in self.checks.values()]
        rows.append(f"empirical C3={self.C3:.6g} C4={self.C4:.6g}")
        return "\n".join(rows)


def validate_assumptions(model: CasimirModel, f_values=None, L_values=None, lambdas=None,
                         tol=1e-12) -> AssumptionReport:
    """Check the five structural assumptions on ``Q`` pointwise on a probe grid.

    Margins are relative: the smallest value of ``lhs/rhs - 1`` (or the
    analogous normalized slack) over the grid, so a negative margin
    beyond ``-tol`` marks a violation.
    """
    f = np.logspace(-6, 3, 61) if f_values is None else np.asarray(f_values, float)
    L = np.concatenate([[0.0], np.logspace(-3, 3, 31)]) if L_values is None else np.asarray(L_values, float)
    lam = np.linspace(0.01, 1.0, 34) if lambdas is None else np.asarray(lambdas, float)
    F, LL = np.meshgrid(f, L, indexing="ij")
    Qv = model.Q(F, LL)
    checks = {}

    big = F >= model.F0
    p1 = 1 + 1 / model.mu1
    m = np.min(Qv[big] / (model.C1 * F[big] ** p1) - 1) if big.any() else np.inf
    checks["Q1"] = AssumptionCheck("Q1", bool(m >= -tol), float(m))

    small = F <= model.F0
    p2 = 1 + 1 / model.mu2
    m = np.min(1 - Qv[small] / (model.C2 * F[small] ** p2)) if small.any() else np.inf
    checks["Q2"] = AssumptionCheck("Q2", bool(m >= -tol), float(m))

    p3 = 1 + 1 / model.mu3
    lhs = model.Q(lam[:, None, None] * F, LL)
    rhs = lam[:, None, None] ** p3 * Qv
    m_scale = float(np.min((lhs - rhs) / np.where(Qv > 0, Qv, 1.0)))
    ok = m_scale >= -tol
    detail = ""
    m_mono = np.inf
    if model.mu3 < 0.5:
        order = np.argsort(L)
        Qs = Qv[:, order]
        rise = np.diff(Qs, axis=1) / np.where(Qs[:, :-1] > 0, Qs[:, :-1], 1.0)
        m_mono = float(-np.max(rise))
        if m_mono < -tol:
            ok = False
            detail = "Q(f, .) not decreasing in L although mu3 < 1/2"
    checks["Q3"] = AssumptionCheck("Q3", bool(ok), float(min(m_scale, m_mono)), detail)

    d2 = model.d2Q(F, LL)
    d1_0 = np.max(np.abs(model.dQ(np.zeros_like(L), L)))
    q0 = np.max(np.abs(model.Q(np.zeros_like(L), L)))
    ok = bool(np.all(d2 > 0) and d1_0 == 0.0 and q0 == 0.0)
    checks["Q4"] = AssumptionCheck("Q4", ok, float(np.min(d2)),
                                   "" if ok else f"dQ(0)={d1_0:.3e} Q(0)={q0:.3e}")

    lam5 = np.linspace(0.5, 2.0, 31)
    ratio = model.d2Q(lam5[:, None, None] * F, LL) / d2
    C3, C4 = float(np.min(ratio)), float(np.max(ratio))
    ok = bool(np.isfinite(C3) and np.isfinite(C4) and C3 > 0)
    checks["Q5"] = AssumptionCheck("Q5", ok, C3, f"lambda in [0.5, 2]: C3={C3:.4g}, C4={C4:.4g}")
    return AssumptionReport(checks, C3, C4)


# ---------------------------------------------------------------------------
# scaling constants


def alpha(model: CasimirModel) -> float:
    """Exponent in the mass-scaling inequality ``D_{M1} >= (M1/M2)**(1+alpha) D_{M2}``."""
    mu3 = model.mu3
    if mu3 < 0.5:
        return 4.0 / (3.0 - 2.0 * mu3)
    return 2.0


def _split_ratio(x, a):
    # [1 - (1-x)**(1+a) - x**(1+a)] / [x (1-x)], written to avoid cancellation at small x
    p = 1.0 + a
    num = -np.expm1(p * np.log1p(-x)) - x ** p
    return num / (x * (1.0 - x))


def c_alpha(a: float, n_grid: int = 20001) -> float:
    """Largest ``C`` with ``(1-x)**(1+a) + x**(1+a) - 1 <= -C x (1-x)`` on [0, 1].

    The ratio is symmetric about x = 1/2, so only (0, 1/2] is scanned; the
    endpoint limit ``1 + a`` is included explicitly.
    """
    a = float(a)
    if not a > 0:
        raise DomainError(f"alpha must be positive, got {a}")
    x = np.linspace(0.0, 0.5, n_grid)[1:]
    g = _split_ratio(x, a)
    k = int(np.argmin(g))
    best = min(float(g[k]), 1.0 + a)
    lo = x[max(k - 1, 0)] if k > 0 else x[0] * 1e-3
    hi = x[min(k + 1, len(x) - 1)]
    if hi > lo:
        res = minimize_scalar(lambda t: _split_ratio(t, a), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-14})
        best = min(best, float(res.fun))
    return best
