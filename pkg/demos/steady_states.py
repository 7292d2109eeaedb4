"""
Polytropic and mixed steady states.

Shoots the radial equation for several exponents and masses, prints the
energy bookkeeping, then shows that equal-exponent polytropes of different
mass are one Emden-Fowler orbit shifted in ``ln r``.

    python demos/steady_states.py
"""
import numpy as np

from vpcasimir.casimir import CasimirModel, LWeight, alpha, c_alpha
from vpcasimir.steady import emden_fowler_orbit, orbit_alignment, solve_for_mass


def table():
    print(f"{'mu':>5} {'M':>5} {'kappa':>14} {'R':>14} {'E0':>14} {'D':>14} {'virial':>9}")
    for mu in (0.5, 1.0, 1.4):
        for M in (0.5, 1.0, 2.0):
            st = solve_for_mass(CasimirModel.polytrope(mu), M)
            print(f"{mu:5.2f} {M:5.2f} {st.kappa:14.6g} {st.R:14.6g} {st.E0:14.6g} "
                  f"{st.D_value:14.6g} {st.virial_residual:9.1e}")


def concentration_radius():
    # every minimizer of mass M lives inside R0 = -M**2 / (C_alpha D_M)
    model = CasimirModel.polytrope(1.0)
    st = solve_for_mass(model, 1.0)
    R0 = -st.M ** 2 / (c_alpha(alpha(model)) * st.D_value)
    print(f"\nmu=1, M=1: support R = {st.R:.5f}, concentration radius R0 = {R0:.5f}")


def mixed_state():
    model = CasimirModel.mixed(0.8, 1.2, LWeight.constant(1.0), LWeight.shifted_inverse(1.0, 1.0))
    st = solve_for_mass(model, 1.0)
    r = np.linspace(0, st.R, 6)
    print("\nmixed exponents (0.8, 1.2), M = 1")
    print("  r    ", " ".join(f"{x:9.4f}" for x in r))
    print("  rho  ", " ".join(f"{x:9.4g}" for x in st.rho(r)))


def orbits():
    model = CasimirModel.polytrope(1.0)
    a = emden_fowler_orbit(solve_for_mass(model, 1.0))
    b = emden_fowler_orbit(solve_for_mass(model, 4.0))
    shift, dev = orbit_alignment(a, b)
    # kappa grows as M**4 for n = 5/2, and r scales as kappa**(-3/4)
    print(f"\nln r shift between M=1 and M=4: {shift:.6f} (homology {-3 * np.log(4):.6f}), "
          f"max (u, v) deviation {dev:.1e}")


if __name__ == "__main__":
    table()
    concentration_radius()
    mixed_state()
    orbits()
