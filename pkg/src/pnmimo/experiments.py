"""Sweeps behind the numerical results: rates vs SNR, M, N_D and K, power gaps.

Each command returns a :class:`Table` (header plus rows in a fixed order);
the CLI writes it as CSV with a one-line JSON manifest on top.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import analytic
from .config import (
    CARRIER_FREQUENCY,
    SYMBOL_INTERVAL,
    SystemConfig,
    derive_increment_variance,
    validate,
    variance_to_std_deg,
)

MODES = ("none", "sync", "nonsync")
SWEEP_VARIABLES = ("snr", "M", "N_D", "K")
TABLE_CONSTANTS = (9.4e-19, 4.7e-18, 2.35e-17)


class SweepError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    grid: tuple
    template: SystemConfig
    modes: tuple = MODES

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "modes", tuple(self.modes))
        errors = []
        if self.variable not in SWEEP_VARIABLES:
            errors.append(f"variable: must be one of {SWEEP_VARIABLES}, got {self.variable!r}")
        if not self.grid:
            errors.append("grid: must be nonempty")
        elif any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            errors.append("grid: must be strictly increasing")
        if self.variable in ("M", "N_D", "K") and any(int(g) != g or g < 1 for g in self.grid):
            errors.append(f"grid: {self.variable} values must be positive integers")
        bad = [m for m in self.modes if m not in MODES]
        if bad or not self.modes:
            errors.append(f"modes: must be a nonempty subset of {MODES}, got {list(self.modes)}")
        if errors:
            raise SweepError(errors)
        validate(self.template)


@dataclass
class Table:
    header: list[str]
    rows: list[list] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.manifest, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def column(self, name: str) -> list:
        j = self.header.index(name)
        return [r[j] for r in self.rows]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _manifest(spec: SweepSpec, command: str, **extra) -> dict:
    return {"command": command, "variable": spec.variable, "grid": list(spec.grid),
            "modes": list(spec.modes), "config": spec.template.to_dict(), **extra}


def sum_rate_for(config: SystemConfig, mode: str) -> float:
    if mode == "none":
        return analytic.no_phase_noise_sum_rate(config)
    return analytic.sum_rate(config, mode).sum_rate


def saturation_sum_rate(config: SystemConfig, mode: str) -> float:
    mode = analytic.NO_PN if mode == "none" else mode
    return sum(analytic.high_snr_limit(config, k, mode) for k in range(config.K))


def rate_vs_snr(spec: SweepSpec) -> Table:
    """Sum-rate per SNR grid point and mode; a closing ``inf`` row holds the high-SNR limit."""
    table = Table(["snr_db", "mode", "sum_rate_bpcu"], manifest=_manifest(spec, "rate-vs-snr"))
    for mode in spec.modes:
        for snr in spec.grid:
            table.rows.append([float(snr), mode, sum_rate_for(spec.template.with_snr_db(snr), mode)])
        table.rows.append([math.inf, mode, saturation_sum_rate(spec.template, mode)])
    return table


def _required(config: SystemConfig, mode: str, target: float) -> tuple[float, str]:
    try:
        return analytic.required_snr_for_rate(config, mode, target), "ok"
    except analytic.InfeasibleTargetError as exc:
        return math.nan, f"infeasible (saturation {exc.saturation:.4f} bpcu)"


def gap_db(config: SystemConfig, mode: str, target: float) -> float:
    """Required SNR of ``mode`` minus that of ideal oscillators, in dB."""
    return (analytic.required_snr_for_rate(config, mode, target)
            - analytic.required_snr_for_rate(config, "none", target))


def min_snr_vs_m(spec: SweepSpec, target: float) -> Table:
    table = Table(["M", "mode", "required_snr_db", "status"],
                  manifest=_manifest(spec, "min-snr-vs-m", target=target))
    for mode in spec.modes:
        for M in spec.grid:
            snr, status = _required(spec.template.replace(M=int(M)), mode, target)
            table.rows.append([int(M), mode, snr, status])
    return table


def accumulated_drift_deg(config: SystemConfig, sigma_sq: float) -> float:
    """Std of the phase drift over N_D + L - 1 uses, in degrees."""
    return variance_to_std_deg(sigma_sq * (config.N_D + config.L - 1))


def power_gap(spec: SweepSpec, targets=(1.0,), constants=TABLE_CONSTANTS,
              f_c: float = CARRIER_FREQUENCY, T_s: float = SYMBOL_INTERVAL) -> Table:
    """Extra SNR each phase-noise mode needs over ideal oscillators.

    One row per (target, oscillator constant, mode, M); the constant sets
    both oscillator variances.
    """
    table = Table(["target_bpcu", "c", "sigma_sqrt_nd_deg", "mode", "M", "gap_db", "status"],
                  manifest=_manifest(spec, "power-gap", targets=list(targets), constants=list(constants)))
    modes = [m for m in spec.modes if m != "none"]
    for r in targets:
        for c in constants:
            var = derive_increment_variance(f_c, T_s, c)
            base = spec.template.replace(sigma_phi_sq=var, sigma_theta_sq=var)
            drift = accumulated_drift_deg(base, var)
            for mode in modes:
                for M in spec.grid:
                    cfg = base.replace(M=int(M))
                    ref, _ = _required(cfg, "none", r)
                    snr, status = _required(cfg, mode, r)
                    table.rows.append([float(r), float(c), drift, mode, int(M), snr - ref, status])
    return table


def rate_vs_nd(spec: SweepSpec) -> Table:
    table = Table(["N_D", "mode", "sum_rate_bpcu"], manifest=_manifest(spec, "rate-vs-nd"))
    bound = int(spec.grid[-1])
    for mode in spec.modes:
        m = analytic.NO_PN if mode == "none" else mode
        curve = analytic.sum_rate_vs_data_length(spec.template, m, bound)
        for n in spec.grid:
            table.rows.append([int(n), mode, float(curve[int(n) - 1])])
    return table


def max_rate_vs_k(spec: SweepSpec, nd_bound: int) -> Table:
    table = Table(["K", "mode", "best_N_D", "max_sum_rate_bpcu"],
                  manifest=_manifest(spec, "max-rate-vs-k", nd_bound=nd_bound))
    for mode in spec.modes:
        m = analytic.NO_PN if mode == "none" else mode
        for K in spec.grid:
            best, rate = analytic.optimize_data_length(spec.template.with_users(int(K)), m, nd_bound)
            table.rows.append([int(K), mode, best, rate])
    return table


def sign_changes(values) -> int:
    """Sign changes of the discrete difference; zero steps are skipped."""
    d = np.sign(np.diff(np.asarray(values, dtype=float)))
    d = d[d != 0]
    return int(np.count_nonzero(d[1:] != d[:-1]))
