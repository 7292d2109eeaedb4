"""
Acceptance criteria 1-12. Each check records a PASS/FAIL line that is
printed in the terminal summary; the test then asserts the same verdict.
"""
import math

import numpy as np
import pytest
from scipy.integrate import quad

from oracles import lane_emden_rk4, polytrope_reference
from vpcasimir.casimir import CasimirModel, alpha, c_alpha
from vpcasimir.dynamics import (VelocityScale, baseline_of, perturb, run_experiment,
                                sample_steady)
from vpcasimir.functional import (GridDensity, check_splitting, discretize_steady, eval_d)
from vpcasimir.minimize import GridSpec, MinimizeConfig, build_grid, mass_scan, normalize_mass, run
from vpcasimir.steady import solve_for_mass

MUS = (0.5, 1.0, 1.4)
MASSES = (0.5, 1.0, 2.0)


@pytest.fixture(scope="module")
def scans():
    return {mu: mass_scan(CasimirModel.polytrope(mu), MASSES, slack=1e-6) for mu in MUS}


def test_negativity(scans, acceptance):
    worst = max(float(np.max(s.D)) for s in scans.values())
    ok = acceptance.record(1, worst < 0, f"max D_M over 9 states = {worst:.6g}")
    assert ok


def test_scaling_law(scans, acceptance):
    margins = [p[2] - p[3] for s in scans.values() for p in s.pairs if p[0] != p[1]]
    ok = all(s.scaling_ok for s in scans.values())
    acceptance.record(2, ok, f"{len(margins)} ordered pairs, min margin {min(margins):.6g}")
    assert ok


@pytest.fixture(scope="module")
def minimized():
    model = CasimirModel.polytrope(1.0)
    st = solve_for_mass(model, 1.0)
    out = {}
    for n in (64, 96):
        cfg = MinimizeConfig(grid_spec=GridSpec(shape=(n, n, n)))
        out[n] = run(model, cfg, 1.0, st)
    return model, st, out


def test_cross_method_agreement(minimized, acceptance):
    _, st, res = minimized
    err = {n: abs(r.D - st.D_value) / abs(st.D_value) for n, r in res.items()}
    ok = err[64] <= 1e-2 and err[96] <= 0.5 * err[64]
    acceptance.record(3, ok, f"rel. error 64^3 {err[64]:.3e}, 96^3 {err[96]:.3e}")
    assert ok


def test_euler_lagrange_form(minimized, acceptance):
    _, _, res = minimized
    el = res[64].el
    ok = el.passes(1e-2, 1e-3)
    acceptance.record(4, ok, f"sup on support {el.sup_support:.3e}, min off support "
                             f"{el.min_off_support:.3e}, |E0| {abs(el.E0_est):.4g}")
    assert ok


def exterior_mismatch(st):
    """Largest relative gap between ``E0``, ``-M/R`` and the potential built from the density.

    ``U0(0) = -4 pi int r rho dr`` and ``E0 = U0(0) + y(0)``; outside ``R``
    the potential is compared with ``-M/r``.
    """
    R = st.R
    inner, _ = quad(lambda s: 4 * np.pi * s * R * R * st.rho(s * R), 0, 1, epsabs=0,
                    epsrel=1e-13, limit=500)
    gaps = [abs(st.E0 + st.M / R), abs(st.kappa - inner - st.E0)]
    r = R * np.linspace(1.0, 4.0, 31)
    gaps.append(float(np.max(np.abs(st.U(r) + st.M / r))))
    return max(gaps) / abs(st.E0)


def test_exterior_identity(scans, acceptance):
    worst = max(exterior_mismatch(s) for sc in scans.values() for s in sc.states)
    ok = acceptance.record(5, worst <= 1e-8, f"max relative exterior mismatch {worst:.2e} "
                                             f"over 9 states")
    assert ok


def test_lane_emden_oracle(acceptance):
    # independent fixed-step RK4 at two step sizes; the finer one is the reference
    xi_fine, _ = lane_emden_rk4(2.5, h=1e-4)
    xi_coarse, _ = lane_emden_rk4(2.5, h=2e-4)
    assert abs(xi_fine - xi_coarse) / xi_fine <= 1e-8
    ref = polytrope_reference(1.0, 1.0, h=1e-4)
    st = solve_for_mass(CasimirModel.polytrope(1.0), 1.0)
    rel = abs(st.R - ref["R"]) / ref["R"]
    ok = acceptance.record(6, rel <= 1e-6, f"xi1 = {xi_fine:.10f}, R = {st.R:.12g}, "
                                            f"reference {ref['R']:.12g}, rel. {rel:.2e}")
    assert ok


@pytest.fixture(scope="module")
def distances():
    model = CasimirModel.polytrope(1.0)
    st = solve_for_mass(model, 1.0)
    ref = discretize_steady(model, st, build_grid(GridSpec((32, 32, 32)), st))
    rng = np.random.default_rng(2024)
    out = []
    for k in range(100):
        if k % 2:
            # far from the steady state: sparse random cells
            v = rng.random(ref.density.shape) * (rng.random(ref.density.shape) > 0.8)
        else:
            # near it: multiplicative noise of amplitude 1e-4 to 0.3 on the steady state
            amp = 10 ** rng.uniform(-4, math.log10(0.3))
            v = ref.density.values * (1 + amp * rng.standard_normal(ref.density.shape)).clip(0)
        out.append(eval_d(model, normalize_mass(ref.density.with_values(v), st.M), ref))
    return ref, out


def test_distance_nonnegative(distances, acceptance):
    ref, ds = distances
    scale = abs(ref.D_value) + 1.0
    worst = min(d.d for d in ds) / scale
    ok = acceptance.record(7, worst >= -1e-10, f"min d / scale over {len(ds)} densities "
                                               f"= {worst:.3e}")
    assert ok


def test_identity_audit(distances, acceptance):
    _, ds = distances
    worst = max(d.identity_residual for d in ds)
    ok = acceptance.record(8, worst <= 1e-8, f"max identity residual {worst:.2e} "
                                             f"over {len(ds)} calls")
    assert ok


def test_splitting_and_concentration(minimized, acceptance):
    model, st, res = minimized
    M = st.M
    D_M = st.D_value
    R0 = -M ** 2 / (c_alpha(alpha(model)) * D_M)
    g0 = GridDensity.box(1.0, 6.0, 1.0, (40, 24, 24))
    R, V, L = g0.mesh
    worst = math.inf
    for lam in (0.1, 0.5, 0.9):
        inner = (R <= 0.3) & (V ** 2 + L / R ** 2 <= 4.0)
        outer = (R > 0.6) & (V ** 2 + L / R ** 2 <= 1.0)
        gi = normalize_mass(g0.with_values(inner.astype(float)), lam * M)
        go = normalize_mass(g0.with_values(outer.astype(float)), (1 - lam) * M)
        g = g0.with_values(gi.values + go.values)
        for Rs in (0.3, 0.45, 0.6):
            chk = check_splitting(model, g, D_M, Rs)
            worst = min(worst, chk.lhs - chk.rhs)
    outside = max(r.mass_outside(R0) for r in res.values())
    ok = worst >= 0 and outside <= 1e-6 * M
    acceptance.record(9, ok, f"min splitting margin {worst:.4g}, mass outside R0={R0:.4g}: "
                             f"{outside:.1e}")
    assert ok


@pytest.fixture(scope="module")
def experiments():
    model = CasimirModel.polytrope(1.0)
    st = solve_for_mass(model, 1.0)
    ens = sample_steady(st, 100_000)
    base = baseline_of(model, ens, st)
    dt, T = 1e-3 * st.T_dyn, 20 * st.T_dyn
    out = {}
    for eps in (0.0, 0.01, 0.4):
        e = perturb(ens, VelocityScale(eps))
        out[eps] = run_experiment(model, e, st, T, dt, cadence=100, baseline=base)
    return out


@pytest.mark.slow
def test_casimir_transport(experiments, acceptance):
    worst = max(r.casimir_spread for r in experiments.values())
    ok = acceptance.record(10, worst <= 1e-13, f"max Casimir spread over 3 runs {worst:.1e}")
    assert ok


@pytest.mark.slow
def test_energy_casimir_drift(experiments, acceptance):
    drift = experiments[0.0].D_drift
    ok = acceptance.record(11, drift <= 5e-3, f"unperturbed D drift {drift:.3e} over 20 T_dyn")
    assert ok


def _envelope(res):
    dist = res.distance
    return float(dist.max() / dist[0])


@pytest.mark.slow
def test_small_perturbation_stays_bounded(experiments, acceptance):
    ratio = _envelope(experiments[0.01])
    ok = acceptance.record(11, ratio <= 5.0, f"eps=0.01 max/initial of d + field_dist "
                                             f"{ratio:.3f} (bound 5)")
    assert ok


@pytest.mark.slow
def test_large_perturbation_contrast(experiments, acceptance):
    ratio = _envelope(experiments[0.4])
    ok = acceptance.record(11, ratio > 5.0, f"eps=0.4 contrast ratio {ratio:.3f} (exceeds 5)")
    assert ok


def test_c_alpha_closed_forms(acceptance):
    e1, e2 = abs(c_alpha(1.0) - 2.0), abs(c_alpha(2.0) - 3.0)
    ok = acceptance.record(12, max(e1, e2) <= 1e-9, f"|c(1)-2| = {e1:.1e}, |c(2)-3| = {e2:.1e}")
    assert ok
