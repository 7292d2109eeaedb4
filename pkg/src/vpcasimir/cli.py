"""
Command-line front end.

    vpcasimir <steady|minimize|evolve|verify|scan> [--config FILE] [--out DIR]
              [--threads N] [--seed N] [--input FILE]

The run configuration is a TOML file with a ``[model]`` block and one block
per subcommand; unknown keys are rejected. Exit codes: 0 success, 1 a
``verify`` row failed, 2 invalid input or configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import tomli

from . import __version__
from .casimir import CasimirModel, alpha, c_alpha
from .dynamics import (VelocityScale, baseline_of, perturb, run_experiment, sample_steady)
from .errors import DomainError, NumericalError
from .functional import (GridDensity, check_interpolation, check_splitting, discretize_steady,
                         eval_J_D, interpolation_constant, lower_bound_certificate)
from .io import (config_hash, read_grid, read_steady, write_diagnostics, write_grid,
                 write_snapshot, write_steady, write_table)
from .minimize import (GridSpec, MinimizeConfig, Random, ScaledSteady, TopHat, build_grid,
                       mass_scan, run, scaling_factors, rescale)
from .steady import solve_for_mass

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3

DEFAULTS: Dict[str, Dict[str, object]] = {
    "model": {"kind": "polytrope", "mu": 1.0},
    "steady": {"M": 1.0},
    "minimize": {"M": 1.0, "step_size": 0.5, "max_iters": 2000, "stall_tol": 1e-13,
                 "init": "tophat"},
    "grid": {"shape": [64, 64, 64], "r_box_factor": 1.5, "v_margin": 1.05, "L_margin": 1.05,
             "L_spacing": "quadratic", "r_spacing": "uniform"},
    # times in units of the dynamical time of the steady state
    "evolve": {"M": 1.0, "N": 100000, "eps": 0.0, "T_end": 20.0, "dt": 1e-3, "cadence": 100,
               "baseline": "sample"},
    "scan": {"masses": [0.5, 1.0, 2.0], "slack": 1e-6},
    "verify": {"input": "", "scale_mass": 2.0},
}
TOP_LEVEL = {"seed": 0, "threads": 1}
INIT_KINDS = ("tophat", "random", "steady")


class ConfigError(DomainError):
    pass


# ---------------------------------------------------------------------------
# configuration


def load_config(path: Optional[str], overrides: Dict[str, object]) -> Dict[str, object]:
    """Defaults merged with the TOML file and flag overrides; unknown keys raise ConfigError."""
    cfg: Dict[str, object] = copy.deepcopy(DEFAULTS)
    cfg.update(TOP_LEVEL)
    user: Dict[str, object] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                user = tomli.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for key, val in user.items():
        if key in TOP_LEVEL:
            cfg[key] = val
        elif key == "model":
            # model keys are validated by CasimirModel.from_dict
            if not isinstance(val, dict):
                raise ConfigError("[model] must be a table")
            cfg["model"] = dict(val)
        elif key in DEFAULTS:
            if not isinstance(val, dict):
                raise ConfigError(f"[{key}] must be a table")
            unknown = set(val) - set(DEFAULTS[key])
            if unknown:
                raise ConfigError(f"unknown keys in [{key}]: {sorted(unknown)}")
            cfg[key].update(val)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    if not isinstance(cfg["threads"], int) or cfg["threads"] < 1:
        raise ConfigError("threads must be a positive integer")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    return cfg


def model_of(cfg) -> CasimirModel:
    try:
        return CasimirModel.from_dict(cfg["model"])
    except KeyError as exc:
        raise ConfigError(f"[model] is missing {exc}") from None


def _positive(block, key, cfg):
    v = cfg[block][key]
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
        raise ConfigError(f"[{block}] {key} must be a positive number, got {v!r}")
    return float(v)


def grid_spec_of(cfg) -> GridSpec:
    g = cfg["grid"]
    return GridSpec(tuple(int(n) for n in g["shape"]), float(g["r_box_factor"]),
                    float(g["v_margin"]), float(g["L_margin"]), g["L_spacing"], g["r_spacing"])


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_steady(cfg, out: Path) -> int:
    model = model_of(cfg)
    st = solve_for_mass(model, _positive("steady", "M", cfg))
    write_steady(out / "steady.txt", st, config_hash(cfg))
    print("M R E0 D virial_residual")
    print(f"{st.M:.17g} {st.R:.17g} {st.E0:.17g} {st.D_value:.17g} {st.virial_residual:.3e}")
    return EXIT_OK


def cmd_minimize(cfg, out: Path) -> int:
    model = model_of(cfg)
    block = cfg["minimize"]
    M = _positive("minimize", "M", cfg)
    init = block["init"]
    if init not in INIT_KINDS:
        raise ConfigError(f"[minimize] init must be one of {INIT_KINDS}")
    init_spec = {"tophat": TopHat(), "random": Random(cfg["seed"]), "steady": ScaledSteady()}
    mc = MinimizeConfig(float(block["step_size"]), int(block["max_iters"]),
                        float(block["stall_tol"]), grid_spec_of(cfg), init_spec[init])
    res = run(model, mc, M)
    h = config_hash(cfg)
    write_table(out / "trace.csv", res.TRACE_COLUMNS, res.trace.tolist(), h)
    write_grid(out / "density.txt", res.density, model, M, h)
    print(f"status={res.status} iterations={int(res.trace[-1, 0])} D={res.D:.17g} "
          f"D_steady={res.reference.D_value:.17g} EL_sup={res.el.sup_support:.3e}")
    return EXIT_OK


def cmd_evolve(cfg, out: Path) -> int:
    model = model_of(cfg)
    block = cfg["evolve"]
    st = solve_for_mass(model, _positive("evolve", "M", cfg))
    ens = sample_steady(st, int(block["N"]))
    base = block["baseline"]
    if base not in ("sample", "continuous"):
        raise ConfigError("[evolve] baseline must be 'sample' or 'continuous'")
    baseline = baseline_of(model, ens, st) if base == "sample" else None
    ens = perturb(ens, VelocityScale(float(block["eps"])))
    T = _positive("evolve", "T_end", cfg) * st.T_dyn
    dt = _positive("evolve", "dt", cfg) * st.T_dyn
    h = config_hash(cfg)
    write_snapshot(out / "snapshot_initial.csv", ens, h)
    res = run_experiment(model, ens, st, T, dt, int(block["cadence"]), baseline)
    write_diagnostics(out / "diagnostics.csv", res.records, h)
    write_snapshot(out / "snapshot_final.csv", res.final, h)
    write_table(out / "corollary.csv", ("time", "lhs", "d_local"), res.corollary, h)
    D = res.column("D")
    dist = res.distance
    print(f"steps={int(round(T / dt))} D0={D[0]:.17g} D_drift={res.D_drift:.3e} "
          f"dist0={dist[0]:.6e} dist_max={dist.max():.6e} casimir_spread={res.casimir_spread:.1e}")
    return EXIT_OK


def cmd_scan(cfg, out: Path) -> int:
    model = model_of(cfg)
    masses = sorted(float(m) for m in cfg["scan"]["masses"])
    res = mass_scan(model, masses, threads=cfg["threads"], slack=float(cfg["scan"]["slack"]))
    rows = []
    for i, m in enumerate(res.masses):
        # verdict: this mass against every larger one in the scan
        ok = all(p[4] for p in res.pairs if p[0] == i)
        rows.append((m, res.D[i], res.R0[i], "PASS" if ok else "FAIL"))
    write_table(out / "scan.csv", ("M", "D_M", "R0", "scaling"), rows, config_hash(cfg),
                header=[("alpha", format(res.alpha, ".17g"))])
    for r in rows:
        print(f"M={r[0]:g} D_M={r[1]:.10g} R0={r[2]:.6g} scaling={r[3]}")
    return EXIT_OK if res.scaling_ok and res.all_negative else EXIT_FAIL


def verify_rows(model: CasimirModel, g: GridDensity, M: float, scale_mass: float = 2.0):
    """Inequality report rows ``(name, lhs, rhs, margin, ok)`` for a grid density.

    ``D_M`` is the energy of the self-consistent steady state discretized on
    the grid of ``g``.
    """
    st = solve_for_mass(model, M)
    ref = discretize_steady(model, st, g)
    D_M = ref.D_value
    a = alpha(model)
    ca = c_alpha(a)
    tol = 1e-10 * (abs(D_M) + 1.0)
    rows = []

    def row(name, lhs, rhs, sense="<="):
        margin = rhs - lhs if sense == "<=" else lhs - rhs
        rows.append((name, lhs, rhs, margin, bool(margin >= -tol)))

    ic = check_interpolation(g, model.mu1)
    row("interpolation", ic.lhs, ic.C_bound * ic.rhs)
    lb = lower_bound_certificate(model, g)
    row("lower_bound", lb.D, lb.bound, ">=")
    # scaling: D of the rescaled density against m**(1+alpha) D(g); equality for exact scalings
    fa, fb, fc = scaling_factors(model, scale_mass)
    D_g = eval_J_D(model, g).D
    row("scaling", eval_J_D(model, rescale(g, fa, fb, fc)).D, scale_mass ** (1 + a) * D_g)
    R0 = -M ** 2 / (ca * D_M)
    sc = check_splitting(model, g, D_M, 0.5 * st.R)
    row("splitting", sc.lhs, sc.rhs, ">=")
    row("R0", R0, R0, ">=")
    outside = float(np.sum(g.shell_mass[g.r > R0]))
    row("support_in_R0", outside, 1e-6 * M)
    row("negativity", D_M, 0.0)
    return rows


def cmd_verify(cfg, out: Path) -> int:
    src = cfg["verify"]["input"]
    if not src:
        raise ConfigError("verify needs an input file ([verify] input or --input)")
    path = Path(src)
    if not path.exists():
        raise ConfigError(f"input file not found: {path}")
    with open(path) as fh:
        tag = fh.readline().strip()
    if tag.startswith("format=vpcasimir-grid"):
        g, meta = read_grid(path)
        model = meta.get("model") or model_of(cfg)
        M = float(meta.get("M", g.mass))
    elif tag.startswith("format=vpcasimir-steady"):
        st = read_steady(path)
        model, M = st.model, st.M
        g = build_grid(grid_spec_of(cfg), st).sample(st.f0)
        g = g.with_values(g.values * (M / g.mass))
    else:
        raise ConfigError(f"{path}: not a steady-state or grid-density file")
    rows = verify_rows(model, g, M, float(cfg["verify"]["scale_mass"]))
    write_table(out / "verify.csv", ("check", "lhs", "rhs", "margin", "verdict"),
                [(n, l, r, m, "PASS" if ok else "FAIL") for n, l, r, m, ok in rows],
                config_hash(cfg))
    print(f"{'check':<16}{'lhs':>24}{'rhs':>24}{'margin':>24}  verdict")
    for n, l, r, m, ok in rows:
        print(f"{n:<16}{l:>24.15g}{r:>24.15g}{m:>24.6e}  {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if all(r[4] for r in rows) else EXIT_FAIL


COMMANDS = {"steady": cmd_steady, "minimize": cmd_minimize, "evolve": cmd_evolve,
            "verify": cmd_verify, "scan": cmd_scan}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vpcasimir", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--threads", type=int, help="worker threads for mass scans")
    p.add_argument("--seed", type=int, help="seed for random initial densities")
    p.add_argument("--input", help="input file for verify (overrides [verify] input)")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, {"threads": args.threads, "seed": args.seed})
        if args.input is not None:
            cfg["verify"]["input"] = args.input
        return COMMANDS[args.command](cfg, _out(args))
    except NumericalError as exc:
        print(f"numerical failure in {args.command}: {exc}", file=sys.stderr)
        for k, v in exc.state.items():
            print(f"  {k}: {v}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, OSError, TypeError, ValueError) as exc:
        print(f"invalid input for {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
