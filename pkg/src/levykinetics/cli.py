"""Config-driven command-line pipeline.

Subcommands (each takes a TOML config path):

    check-assumptions   sampled structural checks for the configured case
    estimate-constants  admissible Lyapunov constants, written as JSON
    verify-drift        certify L V <= -lambda V + C on a stratified scan
    simulate            integrate an ensemble, write trajectory CSV
    control             plan and integrate a steering control
    diagnose            two-start mixing curve, or the Gibbs oracle check

Exit codes: 0 success, 1 config validation failure, 2 runtime or
verification failure, 64 usage error, 66 unreadable config.  Every run
prints exactly one machine-parsable ``key=value`` line on stdout; details
and violation lists go to stderr.

Environment: ``LEVYKINETICS_THREADS`` caps BLAS/OpenMP threads and
``LEVYKINETICS_SEED`` supplies a default seed; the ``--threads`` and
``--seed`` flags win over both, and a seed in the config file wins over the
environment.  Thread limits are applied before numpy is first imported,
which is why all heavy imports in this module live inside functions.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 64
EXIT_NOINPUT = 66

THREADS_ENV = "LEVYKINETICS_THREADS"
SEED_ENV = "LEVYKINETICS_SEED"

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)

COMMANDS = (
    "check-assumptions",
    "estimate-constants",
    "verify-drift",
    "simulate",
    "control",
    "diagnose",
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems instead of calling sys.exit(2)."""

    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="levykinetics", description=__doc__, add_help=True)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to a TOML run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config / environment seed")
        p.add_argument("--threads", type=int, default=None,
                       help="cap BLAS/OpenMP threads (wins over the environment)")
        p.add_argument("--report", default=None, help="override the JSON report path")
        p.add_argument("--csv", default=None, help="override the CSV output path")
    return parser


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    s = str(v)
    if s == "" or any(ch in s for ch in ' "\t'):
        return _quote(s)
    return s


def _emit(command: str, status: str, **fields) -> None:
    parts = [f"command={command}", f"status={status}"]
    parts.extend(f"{k}={_fmt(v)}" for k, v in fields.items())
    print(" ".join(parts))
    sys.stdout.flush()


def _apply_thread_limit(flag_value) -> None:
    threads = flag_value
    if threads is None and THREADS_ENV in os.environ:
        threads = int(os.environ[THREADS_ENV])
    if threads is None:
        return
    if threads < 1:
        raise _UsageError(f"thread count must be >= 1, got {threads}")
    for var in _THREAD_VARS:
        os.environ[var] = str(threads)


def _resolve_seed(flag_value, cfg_seed) -> int:
    if flag_value is not None:
        return int(flag_value)
    if cfg_seed is not None:
        return int(cfg_seed)
    if SEED_ENV in os.environ:
        return int(os.environ[SEED_ENV])
    return 0


# --------------------------------------------------------------------------
# shared construction helpers (heavy imports stay inside)
# --------------------------------------------------------------------------


def _build_system(cfg):
    from .config import build_noise, build_potential
    from .dynamics import SystemSpec

    model = build_potential(cfg)
    noise = build_noise(cfg)
    system = SystemSpec(
        n_particles=cfg.n_particles,
        dim=cfg.dim,
        gamma=cfg.gamma,
        potential=model,
        noise=noise,
        scheme=cfg.scheme,
        h=cfg.h,
    )
    return model, system


def _state(cfg, model, xs, vs, default_kick: float = 0.0):
    """PhaseState from config arrays, or the documented cold-start default:
    particles spaced 1.5 apart along the first axis, velocities zero (plus a
    uniform per-component kick used by the two-start diagnostic default)."""
    import numpy as np

    from .dynamics import PhaseState

    n, d = model.n_particles, model.dim
    if xs is None:
        x = np.zeros((n, d))
        x[:, 0] = (np.arange(n) - 0.5 * (n - 1)) * 1.5
    else:
        x = np.asarray(xs, dtype=float).reshape(n, d)
    if vs is None:
        v = np.full((n, d), float(default_kick))
    else:
        v = np.asarray(vs, dtype=float).reshape(n, d)
    return PhaseState(x=x, v=v)


def _config_sampler(cfg, model, seed, tag: str):
    from .rng import RngStream
    from .sampling import make_configuration_sampler

    return make_configuration_sampler(
        model.n_particles, model.dim, RngStream(seed).child(tag)
    )


def _build_lyapunov(cfg, model, seed):
    """(LyapunovModel, constants-payload) for the configured case; Case 2
    derives its parameters from a passed kernel/confinement check."""
    import dataclasses

    from .lyapunov import LyapunovModel, derive_case2_params, estimate_case1_constants
    from .potentials import check_HV_HK
    from .rng import RngStream
    from .sampling import make_state_sampler

    min_alpha = min(cfg.alpha)
    if cfg.case == "case1":
        consts = estimate_case1_constants(
            model,
            cfg.gamma,
            _config_sampler(cfg, model, seed, "case1-constants"),
            n=cfg.estimate_samples,
            kappa=cfg.kappa,
        )
        lyap = LyapunovModel(
            potential=model, gamma=cfg.gamma, theta=cfg.theta,
            min_alpha=min_alpha, case1=consts,
        )
    else:
        report = check_HV_HK(
            model,
            _config_sampler(cfg, model, seed, "case2-check"),
            n=cfg.estimate_samples,
        )
        params = derive_case2_params(
            report,
            cfg.gamma,
            make_state_sampler(model, RngStream(seed).child("case2-constants")),
            n=cfg.estimate_samples,
        )
        lyap = LyapunovModel(
            potential=model, gamma=cfg.gamma, theta=cfg.theta,
            min_alpha=min_alpha, case2=params,
        )
    constants = dataclasses.asdict(lyap.case1 if cfg.case == "case1" else lyap.case2)
    return lyap, constants


def _report_path(cfg, args) -> str:
    return args.report if args.report else cfg.report_path


def _csv_path(cfg, args) -> str:
    return args.csv if args.csv else cfg.csv_path


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _cmd_check_assumptions(cfg, seed, args) -> int:
    from .potentials import check_HU, check_HV_HK
    from .reports import write_json_report

    from .config import build_potential

    model = build_potential(cfg)
    sampler = _config_sampler(cfg, model, seed, "assumption-check")
    if cfg.case == "case1":
        report = check_HU(model, sampler, n=cfg.estimate_samples)
    else:
        report = check_HV_HK(model, sampler, n=cfg.estimate_samples)

    path = _report_path(cfg, args)
    write_json_report(path, {
        "command": "check-assumptions",
        "case": cfg.case,
        "kind": report.kind,
        "passed": report.passed,
        "sampled_sup": report.sampled_sup,
        "constants": report.constants,
        "margins": report.margins,
        "n_samples": report.n_samples,
        "n_witnesses": len(report.witnesses),
        "notes": report.notes,
        "seed": seed,
    })
    status = "pass" if report.passed else "fail"
    _emit("check-assumptions", status, kind=report.kind,
          n_samples=report.n_samples, report=path)
    return EXIT_OK if report.passed else EXIT_RUNTIME


def _cmd_estimate_constants(cfg, seed, args) -> int:
    from .config import build_potential
    from .reports import write_json_report

    model = build_potential(cfg)
    _, constants = _build_lyapunov(cfg, model, seed)
    path = _report_path(cfg, args)
    write_json_report(path, {
        "command": "estimate-constants",
        "case": cfg.case,
        "theta": cfg.theta,
        "gamma": cfg.gamma,
        "constants": constants,
        "n_samples": cfg.estimate_samples,
        "seed": seed,
    })
    if cfg.case == "case1":
        _emit("estimate-constants", "ok", case=cfg.case, r0=constants["r0"],
              kappa=constants["kappa"], C_star=constants["C_star"], report=path)
    else:
        _emit("estimate-constants", "ok", case=cfg.case, a=constants["a"],
              b=constants["b"], C_star=constants["Cstar"], report=path)
    return EXIT_OK


def _cmd_verify_drift(cfg, seed, args) -> int:
    from .config import build_quadrature
    from .generator import verify_drift
    from .reports import write_json_report
    from .rng import RngStream
    from .sampling import drift_scan_states

    model, system = _build_system(cfg)
    lyap, constants = _build_lyapunov(cfg, model, seed)
    xs, vs = drift_scan_states(
        model,
        RngStream(seed).child("drift-scan"),
        n_states=cfg.drift_states,
        pair_floor=cfg.pair_floor,
        pair_ceiling=cfg.pair_ceiling,
    )
    report = verify_drift(lyap, system, xs, vs,
                          spec=build_quadrature(cfg), c_cap=cfg.c_cap)
    path = _report_path(cfg, args)
    write_json_report(path, {
        "command": "verify-drift",
        "case": cfg.case,
        "certified": report.certified,
        "lambda": report.lambda_,
        "C": report.C,
        "c_cap": report.c_cap,
        "n_states": len(report.values),
        "violations": list(report.violations),
        "max_generator_value": float(max(report.generator_values)),
        "max_error_bound": float(max(report.error_bounds)),
        "values": report.values,
        "generator_values": report.generator_values,
        "error_bounds": report.error_bounds,
        "constants": constants,
        "scan": report.scan,
        "seed": seed,
    })
    status = "certified" if report.certified else "failed"
    _emit("verify-drift", status, case=cfg.case, lam=report.lambda_, C=report.C,
          violations=len(report.violations), n_states=len(report.values), report=path)
    return EXIT_OK if report.certified else EXIT_RUNTIME


def _cmd_simulate(cfg, seed, args) -> int:
    import numpy as np

    from .dynamics import simulate
    from .reports import write_json_report, write_trajectory_csv

    model, system = _build_system(cfg)
    z0 = _state(cfg, model, cfg.x0, cfg.v0)
    snapshots = cfg.snapshots if cfg.snapshots else (cfg.t_final,)
    batch = simulate(system, z0, cfg.t_final, snapshots, seed,
                     n_trajectories=cfg.n_trajectories)

    csv_path = _csv_path(cfg, args)
    write_trajectory_csv(csv_path, batch)
    xs, vs = batch.xs[-1], batch.vs[-1]
    mean_v2 = float(np.mean(np.sum(vs * vs, axis=(-2, -1))))
    mean_u = float(np.mean(model.potential(xs)))
    path = _report_path(cfg, args)
    write_json_report(path, {
        "command": "simulate",
        "scheme": batch.scheme,
        "h": cfg.h,
        "t_final": cfg.t_final,
        "n_trajectories": batch.n_trajectories,
        "snapshots": list(batch.times),
        "final_mean_speed_squared": mean_v2,
        "final_mean_potential": mean_u,
        "stats": batch.stats,
        "seed": seed,
        "csv": csv_path,
    })
    _emit("simulate", "ok", scheme=batch.scheme,
          trajectories=batch.n_trajectories, snapshots=len(batch.times),
          final_mean_speed_squared=mean_v2, csv=csv_path, report=path)
    return EXIT_OK


def _cmd_control(cfg, seed, args) -> int:
    import numpy as np

    from .dynamics import integrate_controlled, synthesize_control
    from .reports import write_curve_csv, write_json_report

    model, system = _build_system(cfg)
    if cfg.control_x1 is None:
        _emit("control", "invalid", violations=1,
              detail="control.x1: target positions are required "
                     "[steering needs an explicit target state]")
        return EXIT_INVALID
    z0 = _state(cfg, model, cfg.x0, cfg.v0)
    z1 = _state(cfg, model, cfg.control_x1, cfg.control_v1)
    cp = synthesize_control(z0, z1, cfg.control_t_final, system,
                            delta_plan=cfg.delta_plan)
    endpoint = integrate_controlled(z0, cp, system)
    res_x = float(np.max(np.abs(endpoint.x - z1.x)))
    res_v = float(np.max(np.abs(endpoint.v - z1.v)))

    csv_path = _csv_path(cfg, args)
    u_norm = np.sqrt(np.sum(cp.grid_u**2, axis=(-2, -1)))
    write_curve_csv(csv_path, cp.grid_times, u_norm)
    path = _report_path(cfg, args)
    write_json_report(path, {
        "command": "control",
        "t_final": cp.t_final,
        "residual_x": res_x,
        "residual_v": res_v,
        "delta_plan": cp.delta_plan,
        "min_pair_planned": cp.min_pair_planned,
        "n_segments": len(cp.coeffs),
        "seed": seed,
        "csv": csv_path,
    })
    _emit("control", "ok", residual_x=res_x, residual_v=res_v,
          min_pair_planned=cp.min_pair_planned, delta_plan=cp.delta_plan,
          segments=len(cp.coeffs), csv=csv_path, report=path)
    return EXIT_OK


def _cmd_diagnose(cfg, seed, args) -> int:
    import numpy as np

    from .reports import write_curve_csv, write_json_report

    model, system = _build_system(cfg)
    path = _report_path(cfg, args)

    if cfg.gibbs_check:
        from .dynamics import simulate
        from .ergodicity import gibbs_oracle_check

        z0 = _state(cfg, model, cfg.x0, cfg.v0)
        snapshots = cfg.snapshots if cfg.snapshots else tuple(
            np.linspace(0.0, cfg.t_final, 101)[1:]
        )
        batch = simulate(system, z0, cfg.t_final, snapshots, seed,
                         n_trajectories=cfg.n_trajectories)
        result = gibbs_oracle_check(batch, system)
        result["command"] = "diagnose"
        result["mode"] = "gibbs"
        result["seed"] = seed
        write_json_report(path, result)
        _emit("diagnose", "ok", mode="gibbs",
              velocity_z=result["velocity_moment_z"],
              potential_z=result["potential_moment_z"], report=path)
        return EXIT_OK

    from .ergodicity import fit_decay_rate, two_start_tv_curve

    lyap, _ = _build_lyapunov(cfg, model, seed)
    z_a = _state(cfg, model, cfg.x0, cfg.v0)
    # default second start: same positions, a large uniform velocity kick —
    # energy-distant yet admissible for any interaction
    z_b = _state(cfg, model,
                 cfg.x_b if cfg.x_b is not None else z_a.x,
                 cfg.v_b, default_kick=100.0)
    curve = two_start_tv_curve(system, z_a, z_b, cfg.diagnose_times, seed,
                               cfg.n_trajectories, lyap, bins=cfg.diagnose_bins)
    # Under shared noise the ensembles can coalesce exactly; trailing zeros
    # sit at the floor and carry no rate information, so fit without them.
    live = np.nonzero(curve.values > 0.0)[0]
    n_live = int(live[-1]) + 1 if live.size else 0
    lam, r2, window = fit_decay_rate(curve.times[:n_live], curve.values[:n_live])
    decreasing = bool(np.all(np.diff(curve.values[:n_live]) < 0.0))

    csv_path = _csv_path(cfg, args)
    write_curve_csv(csv_path, curve.times, curve.values)
    write_json_report(path, {
        "command": "diagnose",
        "mode": "two-start",
        "times": curve.times,
        "values": curve.values,
        "lambda_hat": lam,
        "r_squared": r2,
        "fit_window": list(window),
        "decreasing": decreasing,
        "n_trajectories": cfg.n_trajectories,
        "seed": seed,
        "csv": csv_path,
    })
    status = "ok" if lam > 0.0 else "failed"
    _emit("diagnose", status, mode="two-start", lambda_hat=lam, r_squared=r2,
          decreasing=decreasing, csv=csv_path, report=path)
    return EXIT_OK if lam > 0.0 else EXIT_RUNTIME


_DISPATCH = {
    "check-assumptions": _cmd_check_assumptions,
    "estimate-constants": _cmd_estimate_constants,
    "verify-drift": _cmd_verify_drift,
    "simulate": _cmd_simulate,
    "control": _cmd_control,
    "diagnose": _cmd_diagnose,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("a subcommand is required")
        _apply_thread_limit(args.threads)
    except _UsageError as exc:
        _emit("none", "usage", detail=str(exc))
        print(parser.format_usage().strip(), file=sys.stderr)
        return EXIT_USAGE

    # numpy-importing modules only from here on, with thread limits applied
    from .config import load_config, validate_config

    try:
        cfg = load_config(args.config)
    except (OSError, ValueError, TypeError) as exc:
        _emit(args.command, "unreadable", detail=f"{args.config}: {exc}")
        return EXIT_NOINPUT

    try:
        seed = _resolve_seed(args.seed, cfg.seed)
    except ValueError as exc:
        _emit(args.command, "usage", detail=f"bad seed: {exc}")
        return EXIT_USAGE

    violations = validate_config(cfg)
    if violations:
        for v in violations:
            print(str(v), file=sys.stderr)
        _emit(args.command, "invalid", violations=len(violations),
              detail=str(violations[0]))
        return EXIT_INVALID

    from .errors import (
        DomainError,
        EstimationError,
        PlanningError,
        SimulationStuckError,
        UnsupportedModelError,
    )

    try:
        return _DISPATCH[args.command](cfg, seed, args)
    except (DomainError, UnsupportedModelError, EstimationError,
            PlanningError, SimulationStuckError) as exc:
        _emit(args.command, "error", detail=str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
