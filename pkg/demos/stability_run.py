"""
Shell-code evolution of a sampled steady state under velocity perturbations.

Samples the mu = 1 polytrope, scales all velocities by ``1 + eps`` and
follows ``D`` and the distance ``d + field_dist`` to the steady state. A
small perturbation keeps the distance within a bounded band; a large one
drives a strong breathing oscillation.

    python demos/stability_run.py [N] [T_end in T_dyn]    # default 20000, 5
"""
import sys

import numpy as np

from vpcasimir.casimir import CasimirModel
from vpcasimir.dynamics import (VelocityScale, baseline_of, perturb, run_experiment,
                                sample_steady)
from vpcasimir.steady import solve_for_mass


def main(N=20000, T_end=5.0):
    model = CasimirModel.polytrope(1.0)
    st = solve_for_mass(model, 1.0)
    ens = sample_steady(st, N)
    base = baseline_of(model, ens, st)
    dt = 1e-3 * st.T_dyn
    print(f"N = {ens.N}, T_dyn = {st.T_dyn:.5f}, dt = 1e-3 T_dyn, T_end = {T_end} T_dyn")
    for eps in (0.0, 0.01, 0.1, 0.4):
        res = run_experiment(model, perturb(ens, VelocityScale(eps)), st, T_end * st.T_dyn,
                             dt, cadence=100, baseline=base)
        dist = res.distance
        ratio = dist.max() / dist[0]
        print(f"eps {eps:4.2f}: D drift {res.D_drift:.2e}, distance {dist[0]:.3e} -> "
              f"max {dist.max():.3e} (x{ratio:.2f}), Casimir spread {res.casimir_spread:.0e}")
        if eps == 0.4:
            t = res.column("time") / st.T_dyn
            k = np.argmax(dist)
            print(f"          largest excursion at t = {t[k]:.2f} T_dyn")


if __name__ == "__main__":
    args = sys.argv[1:]
    main(int(args[0]) if args else 20000, float(args[1]) if len(args) > 1 else 5.0)
