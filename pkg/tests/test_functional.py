import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vpcasimir.casimir import CasimirModel, alpha, c_alpha
from vpcasimir.errors import DomainError
from vpcasimir.functional import (CSV_COLUMNS, GridDensity, check_interpolation,
                                  check_splitting, discretize_steady, eval_d, eval_J_D,
                                  field_of, interpolation_constant, lower_bound_certificate,
                                  shell_field, split_energy)
from vpcasimir.minimize import normalize_mass


def brute_potential(r, dm):
    return -np.array([np.sum(dm / np.maximum(ri, r)) for ri in r])


def random_density(grid, rng, M, sparsity=0.5):
    v = rng.random(grid.shape) * (rng.random(grid.shape) > sparsity)
    return normalize_mass(grid.with_values(v), M)


def test_grid_validation():
    with pytest.raises(DomainError):
        GridDensity([0, 1, 2], [-1, 1], [0, 1], [[[1.0]], [[-1e-3]]])
    with pytest.raises(DomainError):
        GridDensity([0, 1], [-1, 1], [0, 1], [[[np.nan]]])
    with pytest.raises(DomainError):
        GridDensity([0, 2, 1], [-1, 1], [0, 1], np.ones((2, 1, 1)))
    with pytest.raises(DomainError):
        GridDensity([0, 1], [-1, 1], [0, 1], np.ones((2, 1, 1)))
    g = GridDensity([0, 1], [-1, 1], [0, 1], [[[1.0]]])
    with pytest.raises(ValueError):
        g.values[0, 0, 0] = 2.0


def test_cell_measure_integrates_phase_space_volume():
    # 4 pi**2 dr dv_r dL integrates to the 6-d volume of {r <= 1, |v| <= 1} when the box covers it
    g = GridDensity.box(1.0, 1.0, 1.0, (200, 200, 200), L_spacing="uniform")
    R, V, L = g.mesh
    inside = (V ** 2 + L / R ** 2 <= 1.0)
    vol = float(np.sum(g.weights * inside))
    exact = (4 * np.pi / 3) ** 2
    assert vol == pytest.approx(exact, rel=2e-2)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(1e-3, 10.0), min_size=1, max_size=30, unique=True),
       st.data())
def test_shell_field_matches_pair_sum(radii, data):
    r = np.sort(np.array(radii))
    dm = np.array(data.draw(st.lists(st.floats(0.0, 5.0), min_size=r.size, max_size=r.size)))
    fld = shell_field(r, dm)
    assert np.allclose(fld.U, brute_potential(r, dm), rtol=1e-12, atol=1e-12)
    assert fld.field_energy == pytest.approx(-0.5 * np.sum(dm * fld.U), rel=1e-10, abs=1e-12)
    assert fld.field_energy >= 0


def test_field_energy_gradient_is_minus_potential(rng):
    r = np.sort(rng.uniform(0.1, 2.0, 12))
    dm = rng.random(12)
    fld = shell_field(r, dm)
    h = 1e-6
    for i in range(r.size):
        e = np.zeros_like(dm)
        e[i] = h
        grad = (shell_field(r, dm + e).field_energy - shell_field(r, dm - e).field_energy) / (2 * h)
        assert grad == pytest.approx(-fld.U[i], rel=1e-7)


def test_potential_off_nodes(rng):
    r = np.sort(rng.uniform(0.1, 2.0, 8))
    dm = rng.random(8)
    fld = shell_field(r, dm)
    assert np.allclose(fld.potential(r), fld.U, rtol=1e-13)
    x = 3.0
    assert fld.potential(x) == pytest.approx(-dm.sum() / x)
    assert fld.enclosed(0.05) == 0.0


def test_J_D_bookkeeping(poly1, ref24):
    g = ref24.density
    rec = eval_J_D(poly1, g)
    assert rec.D == pytest.approx(rec.casimir + rec.kinetic - rec.field_energy)
    assert rec.J == pytest.approx(rec.casimir + rec.kinetic)
    assert rec.mass == pytest.approx(float(np.sum(g.weights * g.values)))
    assert len(rec.as_row()) == len(CSV_COLUMNS)


def test_discrete_steady_state_is_self_consistent(poly1, state1, ref24):
    g = ref24.density
    assert g.mass == pytest.approx(state1.M, rel=1e-12)
    f_again = poly1.q(ref24.E0 - ref24.energy, g.mesh[2])
    assert np.allclose(f_again, g.values, rtol=1e-10, atol=1e-14 * g.values.max())
    # coarse 24**3 grid: a few percent discretization error
    assert ref24.D_value == pytest.approx(state1.D_value, rel=0.1)


def test_distance_of_reference_is_zero(poly1, ref24):
    dist = eval_d(poly1, ref24.density, ref24)
    assert abs(dist.d) <= 1e-12 * abs(ref24.D_value)
    assert dist.field_dist <= 1e-20


def test_distance_accepts_continuous_state(poly1, state1, grid24, ref24, rng):
    g = random_density(grid24, rng, state1.M)
    a = eval_d(poly1, g, ref24)
    b = eval_d(poly1, g, state1)
    assert a.d == pytest.approx(b.d, rel=1e-9)


def test_distance_errors(poly1, state1, grid24, ref24):
    other = GridDensity.box(1.0, 1.0, 1.0, (4, 4, 4))
    with pytest.raises(DomainError):
        eval_d(poly1, other.with_values(np.ones((4, 4, 4))), ref24)

    class Empty:
        M = 0.0

    with pytest.raises(DomainError):
        eval_d(poly1, grid24, Empty())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 0.95))
def test_distance_nonnegative_and_identity(seed, sparsity):
    # module fixtures are not available to hypothesis; rebuild once per process
    model, ref = _cached_reference()
    g = random_density(ref.density, np.random.default_rng(seed), ref.M, sparsity)
    dist = eval_d(model, g, ref)
    scale = abs(ref.D_value) + 1.0
    assert dist.d >= -1e-10 * scale
    assert dist.identity_residual <= 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-0.3, 0.3))
def test_distance_nonnegative_near_reference(seed, amp):
    model, ref = _cached_reference()
    rng = np.random.default_rng(seed)
    v = ref.density.values * (1 + amp * rng.standard_normal(ref.density.shape)).clip(0)
    g = normalize_mass(ref.density.with_values(v), ref.M)
    dist = eval_d(model, g, ref)
    assert dist.d >= -1e-10 * (abs(ref.D_value) + 1.0)
    assert dist.d >= dist.field_dist - 1e-10 * (abs(ref.D_value) + 1.0)


_CACHE = {}


def _cached_reference():
    if not _CACHE:
        from vpcasimir.minimize import GridSpec, build_grid
        from vpcasimir.steady import solve_for_mass
        model = CasimirModel.polytrope(1.0)
        stt = solve_for_mass(model, 1.0)
        _CACHE["v"] = (model, discretize_steady(model, stt, build_grid(GridSpec((24, 24, 24)), stt)))
    return _CACHE["v"]


def test_interpolation_constant_values():
    # the bound is finite and grows as mu -> 0 (Holder exponent degenerates)
    assert np.isfinite(interpolation_constant(1.0))
    assert interpolation_constant(0.1) > interpolation_constant(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.3, 0.5, 1.0, 1.4]),
       st.floats(1e-3, 1e3))
def test_interpolation_bound_holds(seed, mu, mass):
    model, ref = _cached_reference()
    g = random_density(ref.density, np.random.default_rng(seed), mass, 0.7)
    chk = check_interpolation(g, mu)
    assert chk.holds
    assert chk.C_eff <= chk.C_bound


def test_splitting_inequality_on_split_densities(poly1, rng):
    M = 1.0
    g0 = GridDensity.box(1.0, 6.0, 1.0, (40, 24, 24))
    from vpcasimir.steady import solve_for_mass
    D_M = solve_for_mass(poly1, M).D_value
    ca = c_alpha(alpha(poly1))
    R0 = -M ** 2 / (ca * D_M)
    for lam in (0.1, 0.5, 0.9):
        R, V, L = g0.mesh
        inner = (R <= 0.3) & (V ** 2 + L / R ** 2 <= 4.0)
        outer = (R > 0.6) & (V ** 2 + L / R ** 2 <= 1.0)
        gi = normalize_mass(g0.with_values(inner.astype(float)), lam * M)
        go = normalize_mass(g0.with_values(outer.astype(float)), (1 - lam) * M)
        g = g0.with_values(gi.values + go.values)
        for Rs in (0.3, 0.45, 0.6):
            chk = check_splitting(poly1, g, D_M, Rs)
            assert chk.holds, (lam, Rs, chk)
            assert chk.m_inside == pytest.approx(lam * M)
    assert R0 > 0


def test_split_energy_identity(poly1, ref24):
    g = ref24.density
    for R in (0.3 * g.r[-1], 0.6 * g.r[-1]):
        se = split_energy(poly1, g, R)
        assert se.identity_residual <= 1e-12
        assert 0 <= se.cross <= se.cross_bound * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 10.0))
def test_lower_bound_certificate(seed, mass):
    model, ref = _cached_reference()
    g = random_density(ref.density, np.random.default_rng(seed), mass, 0.5)
    lb = lower_bound_certificate(model, g)
    assert lb.holds
    assert lb.C_M > 0


def test_coarse_grid_steady_state_fails_loudly(poly1, state1):
    # with a handful of radial cells the shell model has no state near the continuous one
    from vpcasimir.errors import NumericalError
    from vpcasimir.minimize import GridSpec, build_grid
    with pytest.raises(NumericalError) as info:
        discretize_steady(poly1, state1, build_grid(GridSpec((8, 8, 8)), state1), max_iter=20)
    assert "residual" in info.value.state


def test_restrict_partitions_mass(ref24):
    g = ref24.density
    R = g.r[g.r.size // 3]
    assert g.restrict(R).mass + g.restrict(R, False).mass == pytest.approx(g.mass)
    assert g.mass_inside(R) == pytest.approx(g.restrict(R).mass)


def test_distance_positive_off_reference(poly1, ref24, rng):
    g0 = ref24.density
    # a uniform scaling is undone by the mass renormalization
    same = normalize_mass(g0.with_values(1.01 * g0.values), ref24.M)
    assert abs(eval_d(poly1, same, ref24).d) <= 1e-12 * abs(ref24.D_value)
    bumped = g0.values * (1 + 0.01 * rng.standard_normal(g0.shape)).clip(0)
    g = normalize_mass(g0.with_values(bumped), ref24.M)
    assert eval_d(poly1, g, ref24).d > 0
