"""Command-line entry point: ``pnmimo <command> [options]``.

Every command writes CSV to ``--out`` (stdout by default). Exit codes:
0 success, 1 validation failed, 2 bad arguments or configuration,
3 validation run too small to be conclusive.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import experiments, montecarlo, toydmc
from .config import (
    ConfigError,
    Mode,
    SystemConfig,
    exponential_pdp,
    linear_to_db,
    load_config,
    reference_config,
    std_deg_to_variance,
    validate,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_UNDERPOWERED = 0, 1, 2, 3


def validation_config() -> SystemConfig:
    """Small system for the Monte Carlo check: 0.01 rad oscillators, 10 dB."""
    return validate(SystemConfig(M=8, K=2, L=4, N_D=16, P_D=10.0, beta=1.0, noise_variance=1.0,
                                 sigma_phi_sq=1e-4, sigma_theta_sq=1e-4,
                                 pdp=np.tile(exponential_pdp(4, 0.35), (2, 1))))


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--config", help="YAML file with SystemConfig fields")
    g.add_argument("--seed", type=int, default=0, help="master seed (unsigned 64-bit)")
    g.add_argument("--out", help="output CSV path (default stdout)")
    g.add_argument("--mode", choices=["none", "sync", "nonsync", "all"], default="all")
    g.add_argument("--snr-min", type=float, default=-20.0, help="dB")
    g.add_argument("--snr-max", type=float, default=40.0, help="dB")
    g.add_argument("--snr-step", type=float, default=2.0, help="dB")
    g.add_argument("--snr-db", type=float, help="fixed P_D/sigma^2 in dB")
    g.add_argument("--beta", type=float, help="training-to-data power ratio")
    g.add_argument("--M", type=int)
    g.add_argument("--K", type=int)
    g.add_argument("--L", type=int)
    g.add_argument("--N-D", dest="N_D", type=int)
    g.add_argument("--sigma-phi-deg", type=float, help="BS increment std in degrees")
    g.add_argument("--sigma-theta-deg", type=float, help="user increment std in degrees")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="pnmimo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("rate-vs-snr", parents=[common], help="sum-rate against P_D/sigma^2")

    p = sub.add_parser("min-snr-vs-m", parents=[common], help="required SNR against M")
    p.add_argument("--target", type=float, default=2.0, help="per-user rate in bpcu")
    p.add_argument("--m-grid", type=_int_list, default=[2**j for j in range(6, 15)])

    p = sub.add_parser("power-gap", parents=[common], help="SNR gap caused by phase noise")
    p.add_argument("--targets", type=_float_list, default=[1.0])
    p.add_argument("--m-grid", type=_int_list, default=[500, 2500])
    p.add_argument("--c", dest="constants", type=_float_list, default=list(experiments.TABLE_CONSTANTS),
                   help="oscillator constants (rad Hz)^-1, applied to both ends")

    p = sub.add_parser("rate-vs-nd", parents=[common], help="sum-rate against N_D")
    p.add_argument("--nd-max", type=int, default=5000)
    p.add_argument("--nd-step", type=int, default=50)

    p = sub.add_parser("max-rate-vs-k", parents=[common], help="best sum-rate over N_D against K")
    p.add_argument("--k-grid", type=_int_list, default=list(range(2, 31)))
    p.add_argument("--nd-bound", type=int, default=20000)

    sub.add_parser("toy-dmc", parents=[common], help="capacities of the two-branch toy channel")

    p = sub.add_parser("validate", parents=[common], help="Monte Carlo check of the closed forms")
    p.add_argument("--trials", type=int, default=200_000)
    p.add_argument("--workers", type=int, default=1)
    return parser


def resolve_config(args, default: SystemConfig) -> SystemConfig:
    """File values over ``default``, then explicit flags over both."""
    cfg = load_config(args.config, base=default) if args.config else default
    changes = {k: getattr(args, k) for k in ("M", "K", "L", "N_D", "beta") if getattr(args, k) is not None}
    if args.sigma_phi_deg is not None:
        changes["sigma_phi_sq"] = std_deg_to_variance(args.sigma_phi_deg)
    if args.sigma_theta_deg is not None:
        changes["sigma_theta_sq"] = std_deg_to_variance(args.sigma_theta_deg)
    if "L" in changes:
        cfg = cfg.with_taps(changes.pop("L"))
    if "K" in changes:
        cfg = cfg.with_users(changes.pop("K"))
    cfg = cfg.replace(**changes)
    if args.snr_db is not None:
        cfg = cfg.with_snr_db(args.snr_db)
    return validate(cfg)


def _modes(args, allowed=experiments.MODES) -> tuple:
    return tuple(m for m in allowed) if args.mode == "all" else (args.mode,)


def snr_grid(lo: float, hi: float, step: float) -> list[float]:
    if step <= 0 or hi < lo:
        raise experiments.SweepError([f"snr grid: need step > 0 and max >= min, got {lo}, {hi}, {step}"])
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [float(v) for v in np.round(lo + step * np.arange(n + 1), 12)]


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _toy_table() -> experiments.Table:
    table = experiments.Table(["mode", "capacity_bits", "argmax_p"], manifest={"command": "toy-dmc"})
    for mode in Mode:
        c, p = toydmc.capacity(mode)
        table.rows.append([mode.value, c, p])
    return table


def run_validate(args, cfg: SystemConfig) -> int:
    modes = [m for m in _modes(args, ("sync", "nonsync"))]
    reports = []
    for mode in modes:
        stats = montecarlo.run_trials(cfg, mode, args.trials, args.seed, workers=args.workers)
        reports.append(montecarlo.compare(stats, cfg, mode))
        if stats.note:
            print(f"{mode}: {stats.note}", file=sys.stderr)
    _emit(montecarlo.comparison_csv(reports, cfg, args.seed), args.out)
    for rep in reports:
        print(f"{rep.mode.value}: {'pass' if rep.passed else 'FAIL'} "
              f"({rep.fraction_within:.4f} of cells within 5 SE, max |z| {rep.max_abs_z:.2f})",
              file=sys.stderr)
        for row in rep.failing():
            print(f"  k={row.k} i={row.i} {row.quantity} z={row.z:.2f}", file=sys.stderr)
    if any(rep.underpowered for rep in reports):
        print(f"only {args.trials} trials; at least {montecarlo.MIN_TRIALS} are needed "
              "for a meaningful verdict", file=sys.stderr)
        return EXIT_UNDERPOWERED
    return EXIT_OK if all(rep.passed for rep in reports) else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    try:
        if args.command == "toy-dmc":
            _emit(_toy_table().to_csv(), args.out)
            return EXIT_OK
        if args.command == "validate":
            return run_validate(args, resolve_config(args, validation_config()))

        cfg = resolve_config(args, reference_config())
        modes = _modes(args)
        if args.command == "rate-vs-snr":
            spec = experiments.SweepSpec("snr", snr_grid(args.snr_min, args.snr_max, args.snr_step), cfg, modes)
            table = experiments.rate_vs_snr(spec)
        elif args.command == "min-snr-vs-m":
            table = experiments.min_snr_vs_m(experiments.SweepSpec("M", args.m_grid, cfg, modes), args.target)
        elif args.command == "power-gap":
            spec = experiments.SweepSpec("M", args.m_grid, cfg, modes)
            table = experiments.power_gap(spec, args.targets, args.constants)
        elif args.command == "rate-vs-nd":
            grid = list(range(args.nd_step, args.nd_max + 1, args.nd_step)) or [args.nd_max]
            table = experiments.rate_vs_nd(experiments.SweepSpec("N_D", grid, cfg, modes))
        else:
            table = experiments.max_rate_vs_k(experiments.SweepSpec("K", args.k_grid, cfg, modes), args.nd_bound)
        table.manifest["seed"] = args.seed
        table.manifest["snr_db"] = float(linear_to_db(cfg.P_D / cfg.noise_variance))
        _emit(table.to_csv(), args.out)
        return EXIT_OK
    except (ConfigError, experiments.SweepError) as exc:
        for msg in exc.errors:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
