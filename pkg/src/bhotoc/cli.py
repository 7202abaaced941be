"""Command-line front end.

    bhotoc <command> [--config PATH] [--seed U64] [--samples N] [--dt F]
                     [--workers K] [--out DIR] [--weyl-corrected BOOL]

Flags override the config file, which overrides built-in defaults.  Every
run writes its CSV files and ``manifest.yaml`` (the resolved config, code
version and results) into the output directory; rerunning with
``--config DIR/manifest.yaml`` reproduces the CSV files byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 validation-suite failure.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import __version__
from .classical import FlowConfig, FlowError, lyapunov
from .config import COMMANDS, ConfigError, dump, load_yaml, parse_bool, resolve
from .families import family_count
from .model import BasisError, BoseHubbardParams, build_basis, build_observable
from .observables import Observable
from .otoc import EstimatorError, ProfileConfig, cinf, classical_otoc, fmt, write_csv
from .quantum import (PropagationError, PropagatorConfig, coherent_from_occupations,
                      fock_state, quantum_otoc)
from .sampling import SamplerSpec, SamplingError, sample
from .sections import poincare, stroboscopic

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4


# -- config -> objects --------------------------------------------------------

def system_params(cfg) -> BoseHubbardParams:
    s = cfg["system"]
    if s["L"] is None:
        raise ConfigError("system.L is required")
    E = None if s["E"] is None else tuple(float(e) for e in s["E"])
    return BoseHubbardParams(L=int(s["L"]), U=float(s["U"]), J=float(s["J"]), E=E,
                             delta=float(s["delta"]), omega=float(s["omega"]))


def _occupations(cfg, L):
    occ = cfg["state"]["occupations"]
    if occ is None:
        raise ConfigError("state.occupations is required")
    if len(occ) != L:
        raise ConfigError(f"state.occupations has {len(occ)} entries for L={L}")
    return [float(n) for n in occ]


def sampler(cfg, L) -> SamplerSpec:
    st = cfg["state"]
    seed = int(cfg["numerics"]["seed"])
    occ = _occupations(cfg, L)
    if st["kind"] == "coherent":
        return SamplerSpec.coherent(occ, st["phases"], seed=seed)
    if st["kind"] == "fock":
        return SamplerSpec.fock_ring(occ, seed=seed)
    raise ConfigError(f"state.kind must be 'coherent' or 'fock', got {st['kind']!r}")


def initial_point(cfg, L) -> np.ndarray:
    """Explicit ``state.point`` or sample 0 of the state's Wigner sampler."""
    pt = cfg["state"]["point"]
    if pt is not None:
        x = np.asarray(pt, dtype=float)
        if x.shape != (2 * L,):
            raise ConfigError(f"state.point must have 2L={2 * L} entries")
        return x
    return sample(sampler(cfg, L), 1).points[0]


def flow_config(cfg) -> FlowConfig:
    n = cfg["numerics"]
    return FlowConfig(dt=float(n["dt"]), weyl_corrected=bool(n["weyl_corrected"]))


def time_grid(cfg) -> np.ndarray:
    spec = cfg["task"]["times"]
    if spec is None:
        raise ConfigError("task.times is required (a list or {start, stop, num})")
    if isinstance(spec, dict):
        extra = set(spec) - {"start", "stop", "num"}
        if extra or "stop" not in spec or "num" not in spec:
            raise ConfigError("task.times mapping takes start (default 0), stop and num")
        return np.linspace(float(spec.get("start", 0.0)), float(spec["stop"]), int(spec["num"]))
    return np.asarray(spec, dtype=float)


def observables(cfg, L):
    t = cfg["task"]
    if t["A"] is None or t["B"] is None:
        raise ConfigError("task.A and task.B are required")
    try:
        A, B = Observable.parse(str(t["A"])), Observable.parse(str(t["B"]))
        A.check_sites(L)
        B.check_sites(L)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return A, B


def quantum_setup(cfg, params, A, B):
    """Basis, operators and initial state; checked before any propagation."""
    st = cfg["state"]
    occ = _occupations(cfg, params.L)
    conserving = A.conserves_number and B.conserves_number
    if st["n_max"] is not None:
        basis = build_basis(params.L, n_max=int(st["n_max"]))
    elif conserving:
        N = st["N"] if st["N"] is not None else int(round(sum(occ)))
        basis = build_basis(params.L, N=int(N))
    else:
        raise ConfigError(f"observables {A}, {B} do not conserve N; set state.n_max "
                          "for a truncated basis")
    if st["kind"] == "fock":
        if any(n != int(n) for n in occ):
            raise ConfigError("Fock occupations must be integers")
        psi = fock_state(basis, [int(n) for n in occ])
    elif st["kind"] == "coherent":
        psi = coherent_from_occupations(basis, occ, st["phases"])
    else:
        raise ConfigError(f"state.kind must be 'coherent' or 'fock', got {st['kind']!r}")
    Aop = build_observable(basis, A.quantum_kind, A.site)
    Bop = build_observable(basis, B.quantum_kind, B.site)
    return psi, Aop, Bop


# -- commands -----------------------------------------------------------------

def cmd_quantum_otoc(cfg, out):
    params = system_params(cfg)
    A, B = observables(cfg, params.L)
    times = time_grid(cfg)
    psi, Aop, Bop = quantum_setup(cfg, params, A, B)
    n = cfg["numerics"]
    pcfg = PropagatorConfig(dt=float(n["dt"]), krylov_dim=int(n["krylov_dim"]),
                            norm_tol=float(n["norm_tol"]), leakage_tol=float(n["leakage_tol"]),
                            method=str(n["propagator"]))
    series = quantum_otoc(params, psi, Aop, Bop, times, pcfg)
    series.to_csv(os.path.join(out, "otoc.csv"))
    return {"files": ["otoc.csv"], "basis_dim": psi.basis.dim}


def cmd_classical_otoc(cfg, out):
    params = system_params(cfg)
    A, B = observables(cfg, params.L)
    times = time_grid(cfg)
    n = cfg["numerics"]
    series = classical_otoc(params, sampler(cfg, params.L), A, B, times, int(n["samples"]),
                            flow_config(cfg), workers=int(n["workers"]))
    series.to_csv(os.path.join(out, "otoc.csv"))
    return {"files": ["otoc.csv"], "excluded": series.meta["excluded"]}


def cmd_cinf(cfg, out):
    params = system_params(cfg)
    A, B = observables(cfg, params.L)
    t = cfg["task"]
    pcfg = ProfileConfig(n_traj=int(t["n_traj"]), horizon=float(t["T"]), burn_in=float(t["burn_in"]),
                         bins=None if t["bins"] is None else tuple(int(b) for b in t["bins"]),
                         min_count=int(t["min_count"]), gradient=str(t["gradient"]),
                         bandwidth=float(t["bandwidth"]),
                         spread=None if t["spread"] is None else float(t["spread"]),
                         max_excluded=float(t["max_excluded"]))
    n = cfg["numerics"]
    res = cinf(params, sampler(cfg, params.L), A, B, pcfg, count=int(n["samples"]),
               cfg=flow_config(cfg), workers=int(n["workers"]))
    write_csv(os.path.join(out, "profile.csv"), ("c1", "c2", "abar", "abar_err", "valid"),
              res.profile.rows())
    write_csv(os.path.join(out, "cinf.csv"), ("C_inf", "stderr", "excluded_fraction"),
              [(res.value, res.stderr, res.excluded_fraction)])
    print(f"C_inf={fmt(res.value)} stderr={fmt(res.stderr)}")
    return {"files": ["profile.csv", "cinf.csv"], "C_inf": float(res.value),
            "stderr": float(res.stderr), "excluded_fraction": float(res.excluded_fraction)}


def cmd_lyapunov(cfg, out):
    params = system_params(cfg)
    t = cfg["task"]
    x0 = initial_point(cfg, params.L)
    res = lyapunov(params, x0, float(t["T"]), float(t["renorm"]), flow_config(cfg),
                   seed=int(cfg["numerics"]["seed"]))
    write_csv(os.path.join(out, "lyapunov.csv"), ("t", "lambda_running"), zip(res.times, res.running))
    print(f"lambda={fmt(res.exponent)}")
    return {"files": ["lyapunov.csv"], "lambda": float(res.exponent)}


def _write_sections(out, pts):
    write_csv(os.path.join(out, "sections.csv"), ("x", "y", "crossing_time"), pts)


def cmd_poincare(cfg, out):
    params = system_params(cfg)
    t = cfg["task"]
    sec = poincare(params, initial_point(cfg, params.L), float(t["T"]), flow_config(cfg),
                   direction=int(t["direction"]))
    _write_sections(out, sec.points)
    if sec.empty:
        print("warning: no section crossings found", file=sys.stderr)
    return {"files": ["sections.csv"], "points": len(sec.points), "empty": sec.empty}


def cmd_strobo(cfg, out):
    params = system_params(cfg)
    pts = stroboscopic(params, initial_point(cfg, params.L), int(cfg["task"]["n_periods"]),
                       flow_config(cfg))
    _write_sections(out, pts)
    return {"files": ["sections.csv"], "points": len(pts)}


def cmd_families(cfg, out):
    t = cfg["task"]
    if t["t"] is None:
        raise ConfigError("task.t is required")
    res = family_count(str(t["hamiltonian"]), q0=float(t["q0"]), q_target=float(t["q_target"]),
                       t=float(t["t"]), p_min=float(t["p_min"]), p_max=float(t["p_max"]),
                       steps=int(t["steps"]), dt=float(cfg["numerics"]["dt"]))
    write_csv(os.path.join(out, "families.csv"), ("p0", "q_t"), zip(res.p0, res.q_t))
    print(f"families={res.families}")
    if res.unresolved.size:
        print(f"warning: {res.unresolved.size} root(s) on the grid boundary are unresolved",
              file=sys.stderr)
    return {"files": ["families.csv"], "families": int(res.families),
            "roots": [float(r) for r in res.roots], "unresolved": [float(r) for r in res.unresolved]}


def cmd_validate(cfg, out):
    from .validation import run_suite

    checks = run_suite(echo=print)
    with open(os.path.join(out, "validation.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("check", "value", "tol", "passed"))
        w.writerows((c.name, fmt(c.value), fmt(c.tol), int(c.passed)) for c in checks)
    failed = [c.name for c in checks if not c.passed]
    return {"files": ["validation.csv"], "failed": failed}


HANDLERS = {
    "quantum-otoc": cmd_quantum_otoc,
    "classical-otoc": cmd_classical_otoc,
    "cinf": cmd_cinf,
    "lyapunov": cmd_lyapunov,
    "poincare": cmd_poincare,
    "strobo": cmd_strobo,
    "families": cmd_families,
    "validate": cmd_validate,
}


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bhotoc", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--seed", type=int, metavar="U64", help="sampler seed")
    common.add_argument("--samples", type=int, metavar="N", help="Monte Carlo sample count")
    common.add_argument("--dt", type=float, metavar="F", help="integrator step (1/J)")
    common.add_argument("--workers", type=int, metavar="K", help="parallel workers, 0 = all cores")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--weyl-corrected", type=parse_bool, metavar="BOOL",
                        help="use the Weyl symbol of H (true) or the bare mean-field energy (false)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HANDLERS[name].__name__[4:].replace("_", " "))
    return parser


def _overrides(args) -> dict:
    pairs = {"numerics.seed": args.seed, "numerics.samples": args.samples, "numerics.dt": args.dt,
             "numerics.workers": args.workers, "output.dir": args.out,
             "numerics.weyl_corrected": args.weyl_corrected}
    return {k: v for k, v in pairs.items() if v is not None}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load_yaml(args.config) if args.config else {}
        cfg = resolve(args.command, raw, _overrides(args))
        if not 0 <= int(cfg["numerics"]["seed"]) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        out = cfg["output"]["dir"]
        os.makedirs(out, exist_ok=True)
        results = HANDLERS[args.command](cfg, out)
    except (ConfigError, BasisError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FlowError, PropagationError, EstimatorError, SamplingError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    with open(os.path.join(out, "manifest.yaml"), "w", encoding="utf-8") as fh:
        fh.write(dump(cfg, args.command, __version__, results))
    if args.command == "validate" and results["failed"]:
        print(f"{len(results['failed'])} check(s) failed", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
