"""Command-line workbench: runs, equilibria, classification, audits, sweeps.

Exit codes are a stable contract for CI: 0 success, 1 audit or oracle
disagreement, 2 configuration/schema error, 3 runtime integration fault.
All randomness flows from config seeds; there is no hidden entropy, so
repeated runs with the same config are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import (EQUIVALENCE_STATES, AuditCase, Tolerances,
                         build_drift_suite, build_sync_suite,
                         classify_trajectory, detect_fss, equivalence_audit)
from .diagnostics import diagnostics_report, velocity_envelope_report
from .equilibria import (brute_force_equilibria, delta_distance, delta_signature,
                         enumerate_equilibria)
from .integrator import (IntegrationError, IntegratorConfig, Trajectory, integrate,
                         random_initial_state)
from .limit_system import LimitParams, poincare_return
from .model import Ensemble, ParameterError, State, normalize_frame

EXIT_OK = 0
EXIT_DISAGREEMENT = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(Exception):
    pass


def _fail_config(msg: str):
    raise ConfigError(msg)


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}")


def _check_keys(path: str, obj: dict, where: str, allowed: set[str],
                required: set[str] = frozenset()) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{path}: {where}: unknown keys {unknown}")
    missing = sorted(required - set(obj))
    if missing:
        raise ConfigError(f"{path}: {where}: missing keys {missing}")


_INTEGRATOR_KEYS = {"dt", "T", "sample_every", "method", "abs_tol", "rel_tol", "seed"}
_TOLERANCE_KEYS = {"freq_tol", "lock_var_tol", "op_var_tol", "opss_margin",
                   "tail_fraction", "diameter_cap"}
_OUTPUT_KEYS = {"dir", "emit_trajectory", "emit_plots"}


def _parse_run_config(path: str, seed_override: int | None = None):
    data = _load_json(path)
    _check_keys(path, data, "top level",
                {"ensemble", "initial", "integrator", "tolerances", "outputs"},
                {"ensemble", "initial", "integrator"})
    try:
        ensemble = Ensemble.from_json_dict(data["ensemble"])
    except ParameterError as e:
        raise ConfigError(f"{path}: ensemble: {e}")
    ensemble, drift = normalize_frame(ensemble)
    integ = dict(data["integrator"])
    _check_keys(path, integ, "integrator", _INTEGRATOR_KEYS)
    if seed_override is not None:
        integ["seed"] = seed_override
    try:
        config = IntegratorConfig(**integ)
    except (ParameterError, TypeError) as e:
        raise ConfigError(f"{path}: integrator: {e}")
    tol_data = dict(data.get("tolerances", {}))
    _check_keys(path, tol_data, "tolerances", _TOLERANCE_KEYS)
    try:
        tol = Tolerances(**tol_data)
    except ParameterError as e:
        raise ConfigError(f"{path}: tolerances: {e}")
    init = data["initial"]
    _check_keys(path, init, "initial", {"theta", "v"}, {"theta", "v"})
    rand = random_initial_state(ensemble, config.seed)
    if init["theta"] == "random":
        theta0 = rand.theta
    else:
        theta0 = np.asarray(init["theta"], dtype=np.float64)
        if theta0.shape != (ensemble.N,):
            raise ConfigError(f"{path}: initial.theta must have length N={ensemble.N}")
    if init["v"] == "random":
        v0 = rand.v
    elif init["v"] == "zero":
        v0 = np.zeros(ensemble.n_inertial)
    else:
        v0 = np.asarray(init["v"], dtype=np.float64)
        if v0.shape != (ensemble.n_inertial,):
            raise ConfigError(
                f"{path}: initial.v must have length N-n={ensemble.n_inertial}")
    outputs = dict(data.get("outputs", {}))
    _check_keys(path, outputs, "outputs", _OUTPUT_KEYS)
    outputs.setdefault("emit_trajectory", True)
    outputs.setdefault("emit_plots", False)
    initial = State(t=0.0, theta=theta0, v=v0)
    return ensemble, drift, initial, config, tol, outputs


def _out_dir(args, outputs: dict | None = None) -> Path:
    if args.out is not None:
        d = Path(args.out)
    elif outputs and outputs.get("dir"):
        d = Path(outputs["dir"])
    else:
        d = Path(".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def cmd_simulate(args) -> int:
    ensemble, drift, initial, config, _tol, outputs = _parse_run_config(
        args.config, args.seed)
    out = _out_dir(args, outputs)
    _write_json(out / "run_echo.json", {
        "ensemble_normalized": ensemble.to_json_dict(),
        "frame_drift_rate": drift,
        "initial": {"theta": initial.theta.tolist(), "v": initial.v.tolist()},
        "integrator": {"dt": config.dt, "T": config.T,
                       "sample_every": config.sample_every,
                       "method": config.method, "abs_tol": config.abs_tol,
                       "rel_tol": config.rel_tol, "seed": config.seed},
    })
    try:
        traj = integrate(ensemble, initial, config)
    except IntegrationError as e:
        print(f"integration fault: {e}", file=sys.stderr)
        if e.trajectory is not None and outputs.get("emit_trajectory", True):
            e.trajectory.to_csv(out / "trajectory.csv")
        return EXIT_RUNTIME
    if outputs.get("emit_trajectory", True):
        traj.to_csv(out / "trajectory.csv")
    report = diagnostics_report(traj)
    report["frame_drift_rate"] = drift
    report["momentum_drift"] = float(abs(traj.M[-1] - traj.M[0]))
    report["envelope"] = velocity_envelope_report(ensemble, traj)
    report["wall_clock_s"] = traj.metadata.get("wall_clock_s")
    _write_json(out / "diagnostics.json", report)
    if outputs.get("emit_plots", False):
        plots = out / "plots"
        plots.mkdir(exist_ok=True)
        _write_columns(plots / "r.csv", ["t", "R"], [traj.t, traj.R])
        diam = np.max(traj.theta, axis=1) - np.min(traj.theta, axis=1)
        _write_columns(plots / "diameter.csv", ["t", "diameter"], [traj.t, diam])
        freqs = traj.frequencies()
        _write_columns(plots / "frequencies.csv",
                       ["t"] + [f"thdot_{j + 1}" for j in range(ensemble.N)],
                       [traj.t] + [freqs[:, j] for j in range(ensemble.N)])
    print(f"wrote {out / 'trajectory.csv' if outputs.get('emit_trajectory', True) else '(no trajectory)'} "
          f"and {out / 'diagnostics.json'}")
    return EXIT_OK


def _write_columns(path: Path, names, cols) -> None:
    arr = np.column_stack(cols)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in arr:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def cmd_equilibria(args) -> int:
    ensemble, _, _, _, _, outputs = _parse_run_config(args.config, None)
    out = _out_dir(args, outputs)
    try:
        result = enumerate_equilibria(ensemble)
    except ParameterError as e:
        _fail_config(f"{args.config}: {e}")
    payload = result.to_json_dict()
    exit_code = EXIT_OK
    if args.brute_force:
        try:
            configs = brute_force_equilibria(ensemble, args.grid)
        except ParameterError as e:
            _fail_config(f"{args.config}: {e}")
        comparison = _compare_with_oracle(result, configs)
        payload["oracle_comparison"] = comparison
        if not comparison["matched"]:
            exit_code = EXIT_DISAGREEMENT
    _write_json(out / "equilibria.json", payload)
    print(f"{len(result)} equilibrium class(es)"
          + (f"; {result.reason}" if result.reason else ""))
    for i, cls in enumerate(result.classes):
        gaps = ", ".join(f"{x:+.6f}" for x in cls.Delta)
        print(f"  [{i}] r={cls.r:.9f} residual={cls.residual:.2e} "
              f"{'degenerate ' if cls.degenerate else ''}Delta=({gaps})")
    if result.degenerate_family:
        print("  plus a degenerate zero-order-parameter family (not listed)")
    if args.brute_force:
        status = "MATCH" if payload["oracle_comparison"]["matched"] else "MISMATCH"
        print(f"oracle comparison: {status} "
              f"(enumerated {payload['oracle_comparison']['n_enumerated']}, "
              f"oracle {payload['oracle_comparison']['n_oracle']})")
    return exit_code


def _compare_with_oracle(result, configs, tol: float = 1e-6) -> dict:
    oracle_sigs = [delta_signature(psi) for psi in configs]
    pair_dists = []
    unmatched_oracle = []
    for k, sig in enumerate(oracle_sigs):
        dists = [delta_distance(sig, cls.Delta) for cls in result.classes]
        if dists and min(dists) <= tol:
            pair_dists.append(min(dists))
        else:
            unmatched_oracle.append(k)
    unmatched_classes = []
    for i, cls in enumerate(result.classes):
        dists = [delta_distance(cls.Delta, sig) for sig in oracle_sigs]
        if not dists or min(dists) > tol:
            unmatched_classes.append(i)
    matched = (len(result.classes) == len(configs)
               and not unmatched_oracle and not unmatched_classes)
    return {
        "matched": matched,
        "n_enumerated": len(result.classes),
        "n_oracle": len(configs),
        "worst_matched_distance": max(pair_dists) if pair_dists else None,
        "unmatched_oracle_roots": unmatched_oracle,
        "unmatched_classes": unmatched_classes,
        "tolerance": tol,
    }


def cmd_classify(args) -> int:
    ensemble, _, _, _config, tol, outputs = _parse_run_config(args.config, None)
    out = _out_dir(args, outputs)
    try:
        traj = Trajectory.from_csv(ensemble, args.trajectory)
    except (OSError, ValueError, ParameterError) as e:
        _fail_config(f"{args.trajectory}: {e}")
    eq = None
    try:
        eq = enumerate_equilibria(ensemble)
    except ParameterError:
        pass
    report = classify_trajectory(traj, tol, eq)
    _write_json(out / "classification.json", report.to_json_dict())
    for name, verdict in (("PSS", report.pss), ("FPLS", report.fpls),
                          ("PLS", report.pls), ("FSS", report.fss),
                          ("OPSS", report.opss)):
        print(f"  {name:5s} {verdict.value}")
    return EXIT_OK


_SYNC_SUITE_KEYS = {"mode", "n_cases", "seed", "T", "dt", "sample_every",
                    "N_range", "lambda_factor", "m_range", "d_range",
                    "omega_max_range", "tolerances"}
_DRIFT_SUITE_KEYS = {"mode", "n_cases", "seed", "T", "dt", "sample_every",
                     "omega1_range", "subcritical_range", "d_range", "m_range",
                     "tolerances"}


def _parse_suite(path: str):
    data = _load_json(path)
    if "cases" in data:
        _check_keys(path, data, "top level", {"cases", "tolerances"})
        cases = []
        for i, entry in enumerate(data["cases"]):
            where = f"cases[{i}]"
            _check_keys(path, entry, where,
                        {"ensemble", "initial", "integrator"},
                        {"ensemble", "initial", "integrator"})
            try:
                ens = Ensemble.from_json_dict(entry["ensemble"])
                cfg = IntegratorConfig(**entry["integrator"])
            except (ParameterError, TypeError) as e:
                raise ConfigError(f"{path}: {where}: {e}")
            ens, _ = normalize_frame(ens)
            init = entry["initial"]
            _check_keys(path, init, f"{where}.initial", {"theta", "v"},
                        {"theta", "v"})
            rand = random_initial_state(ens, cfg.seed)
            theta0 = (rand.theta if init["theta"] == "random"
                      else np.asarray(init["theta"], dtype=np.float64))
            if init["v"] == "random":
                v0 = rand.v
            elif init["v"] == "zero":
                v0 = np.zeros(ens.n_inertial)
            else:
                v0 = np.asarray(init["v"], dtype=np.float64)
            if theta0.shape != (ens.N,) or v0.shape != (ens.n_inertial,):
                raise ConfigError(f"{path}: {where}: initial dimensions do not "
                                  f"match the ensemble")
            cases.append(AuditCase(case_id=f"case-{i:03d}", ensemble=ens,
                                   initial=State(t=0.0, theta=theta0, v=v0),
                                   config=cfg))
        tol_data = dict(data.get("tolerances", {}))
        _check_keys(path, tol_data, "tolerances", _TOLERANCE_KEYS)
        return cases, Tolerances(**tol_data)
    mode = data.get("mode")
    if mode == "sync":
        _check_keys(path, data, "top level", _SYNC_SUITE_KEYS)
        kwargs = {k: v for k, v in data.items() if k not in ("mode", "tolerances")}
        for key in ("N_range", "m_range", "d_range", "omega_max_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        cases, tol = build_sync_suite(**kwargs)
    elif mode == "drift_n2":
        _check_keys(path, data, "top level", _DRIFT_SUITE_KEYS)
        kwargs = {k: v for k, v in data.items() if k not in ("mode", "tolerances")}
        for key in ("omega1_range", "subcritical_range", "d_range", "m_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        cases, tol = build_drift_suite(**kwargs)
    else:
        raise ConfigError(
            f"{path}: suite must supply either explicit 'cases' or "
            f"'mode' in {{'sync', 'drift_n2'}}, got {mode!r}")
    overrides = data.get("tolerances", {})
    _check_keys(path, dict(overrides), "tolerances", _TOLERANCE_KEYS)
    if overrides:
        tol_dict = {k: getattr(tol, k) for k in _TOLERANCE_KEYS}
        tol_dict.update(overrides)
        tol = Tolerances(**tol_dict)
    return cases, tol


def cmd_audit(args) -> int:
    cases, tol = _parse_suite(args.suite)
    out = _out_dir(args)
    report = equivalence_audit(cases, tol, threads=args.threads)
    _write_json(out / "audit.json", report.to_json_dict())
    print(f"{len(cases)} case(s), {len(report.flags)} disagreement flag(s), "
          f"{report.n_inconclusive} inconclusive verdict(s)")
    for row, name in zip(report.agreement_matrix, EQUIVALENCE_STATES):
        print(f"  {name:5s} " + " ".join(f"{x:4d}" for x in row))
    for flag in report.flags:
        print(f"  FLAG {flag['case_id']}: {flag['verdicts']}")
    return EXIT_OK if not report.flags else EXIT_DISAGREEMENT


def _parse_grid(text: str, what: str) -> np.ndarray:
    try:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"{what} must be 'start:stop:count', got {text!r}")
    return np.linspace(start, stop, count)


def cmd_poincare(args) -> int:
    try:
        params = LimitParams(m=args.m, d=args.d, omega=args.omega,
                             lamR=args.lamR, theta_star=args.Theta)
    except ParameterError as e:
        _fail_config(str(e))
    grid = _parse_grid(args.v0_grid, "--v0-grid")
    out = _out_dir(args)

    def one(v0):
        return poincare_return(params, float(v0), dt=args.dt,
                               max_time=args.max_time)

    try:
        if args.threads > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                rows = list(pool.map(one, grid))
        else:
            rows = [one(v0) for v0 in grid]
    except ParameterError as e:
        _fail_config(str(e))
    path = out / "poincare.csv"
    with open(path, "w", newline="\n") as fh:
        fh.write("v0,tau,P,energy_residual,exp_identity_residual,crossed\n")
        for r in rows:
            if r.crossed:
                fh.write(",".join([_fmt(r.v0), _fmt(r.tau), _fmt(r.P),
                                   _fmt(r.energy_residual),
                                   _fmt(r.exp_identity_residual), "1"]) + "\n")
            else:
                fh.write(f"{_fmt(r.v0)},,,,,0\n")
    n_crossed = sum(1 for r in rows if r.crossed)
    print(f"wrote {path}: {n_crossed}/{len(rows)} section returns "
          f"({len(rows) - n_crossed} captured)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    ensemble, _, initial, config, tol, outputs = _parse_run_config(args.config, args.seed)
    grid = _parse_grid(args.lambda_grid, "--lambda-grid")
    if np.any(grid <= 0):
        _fail_config("--lambda-grid values must be positive")
    out = _out_dir(args, outputs)

    def one(lam):
        ens = Ensemble(N=ensemble.N, n=ensemble.n, m=ensemble.m,
                       d=ensemble.d, omega=ensemble.omega, lam=float(lam))
        traj = integrate(ens, initial, config)
        i0 = int(np.searchsorted(
            traj.t, traj.t[-1] - tol.tail_fraction * (traj.t[-1] - traj.t[0])))
        return float(traj.R[i0:].mean()), detect_fss(traj, tol)

    try:
        if args.threads > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                results = list(pool.map(one, grid))
        else:
            results = [one(lam) for lam in grid]
    except IntegrationError as e:
        print(f"integration fault during sweep: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    path = out / "sweep.csv"
    with open(path, "w", newline="\n") as fh:
        fh.write("lambda,R_tail,FSS_verdict\n")
        for lam, (r_tail, verdict) in zip(grid, results):
            fh.write(f"{_fmt(lam)},{_fmt(r_tail)},{verdict.value}\n")
    print(f"wrote {path}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridkuramoto",
        description="Hybrid first/second-order Kuramoto simulation and "
                    "verification workbench")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("simulate", parents=[common],
                       help="integrate one configured run")
    p.add_argument("config", help="run config JSON")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("equilibria", parents=[common],
                       help="enumerate phase-locked classes")
    p.add_argument("config", help="run config JSON (ensemble is used)")
    p.add_argument("--brute-force", action="store_true",
                   help="cross-check against the torus-grid oracle (N <= 4)")
    p.add_argument("--grid", type=int, default=None,
                   help="oracle grid points per axis")
    p.set_defaults(func=cmd_equilibria)

    p = sub.add_parser("classify", parents=[common],
                       help="classify a stored trajectory")
    p.add_argument("trajectory", help="trajectory CSV")
    p.add_argument("config", help="run config JSON (ensemble + tolerances)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("audit", parents=[common],
                       help="equivalence audit over a suite of cases")
    p.add_argument("suite", help="suite JSON")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("poincare", parents=[common],
                       help="sweep the return map of the reduced flow")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--lamR", type=float, required=True)
    p.add_argument("--Theta", type=float, default=0.0)
    p.add_argument("--v0-grid", required=True, help="start:stop:count")
    p.add_argument("--dt", type=float, default=1e-5)
    p.add_argument("--max-time", type=float, default=200.0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_poincare)

    p = sub.add_parser("sweep", parents=[common],
                       help="coupling sweep: tail coherence vs lambda")
    p.add_argument("config", help="run config JSON")
    p.add_argument("--lambda-grid", required=True, help="start:stop:count")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except ParameterError as e:
        print(f"parameter error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as e:
        print(f"integration fault: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
