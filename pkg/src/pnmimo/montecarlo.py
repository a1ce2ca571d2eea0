"""Monte Carlo oracle for the closed-form mean and effective-noise variance.

Trials are processed in fixed-size chunks of consecutive trial ids. Each
chunk yields exact two-pass moments, and chunks are merged in id order with
the pairwise (Chan et al.) update, so results do not depend on how many
workers ran the chunks.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analytic
from .config import Mode, SystemConfig
from .linksim import desired_coefficient, run_block
from .stochastics import draw_trials

CHUNK = 500
MIN_TRIALS = 1000  # below this the 5-SE gate has too little power to mean anything
Z_PASS = 5.0
Z_MAX = 8.0
PASS_FRACTION = 0.99

# columns of the per-trial sample matrix
_FIELDS = ("A_re", "A_im", "EN_re", "EN_im", "EN_pow", "X_re", "X_im")


@dataclass
class Moments:
    """Count, mean and sum of squared deviations per cell, for each field."""

    n: int
    mean: np.ndarray  # [field, k, i]
    m2: np.ndarray

    @classmethod
    def of(cls, samples: np.ndarray) -> "Moments":
        n = samples.shape[0]
        mean = samples.mean(axis=0)
        return cls(n, mean, ((samples - mean) ** 2).sum(axis=0))

    def merge(self, other: "Moments") -> "Moments":
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.n * other.n / n)
        return Moments(n, mean, m2)

    @property
    def var(self) -> np.ndarray:
        if self.n < 2:
            return np.full_like(self.mean, np.nan)
        return self.m2 / (self.n - 1)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(self.var / self.n)


def trial_samples(config: SystemConfig, mode, master_seed: int, trials) -> dict[str, np.ndarray]:
    """Per-trial A, EN and x for the given trial ids; arrays are ``[trial, k, i]``."""
    trials = list(trials)
    draw = draw_trials(config, master_seed, trials, mode)
    _, _, x_hat = run_block(config, draw)
    A = desired_coefficient(config, draw.channel, draw.phases)
    layout = config.layout
    x = draw.symbols[..., layout.pos(config.data_indices)]
    k = np.arange(config.K)[:, None]
    EA = analytic.mean_A(config, k, config.data_indices[None, :])
    return {"A": A, "EN": x_hat - EA * x, "x": x, "x_hat": x_hat, "mean_A": EA}


def _chunk_moments(args) -> Moments:
    config, mode, seed, lo, hi = args
    s = trial_samples(config, mode, seed, range(lo, hi))
    A, EN = s["A"], s["EN"]
    # cross term conj(E[A] x) EN; split into parts so every field is real
    cross = np.conj(s["mean_A"] * s["x"]) * EN
    stacked = np.stack([A.real, A.imag, EN.real, EN.imag, np.abs(EN) ** 2,
                        cross.real, cross.imag], axis=1)
    return Moments.of(stacked)


@dataclass
class EmpiricalStats:
    """Per-(k, i) empirical moments from ``trials`` independent blocks."""

    config: SystemConfig
    mode: Mode
    master_seed: int
    requested: int
    moments: Moments
    complete: bool = True
    note: str = ""

    @property
    def trials(self) -> int:
        return self.moments.n

    def _f(self, name):
        return _FIELDS.index(name)

    @property
    def mean_A(self) -> np.ndarray:
        m = self.moments.mean
        return m[self._f("A_re")] + 1j * m[self._f("A_im")]

    @property
    def mean_A_se(self) -> np.ndarray:
        """Standard error of the real part of the mean of A."""
        return self.moments.se[self._f("A_re")]

    @property
    def mean_A_imag_se(self) -> np.ndarray:
        return self.moments.se[self._f("A_im")]

    @property
    def var_EN(self) -> np.ndarray:
        m = self.moments.mean
        return m[self._f("EN_pow")] - m[self._f("EN_re")] ** 2 - m[self._f("EN_im")] ** 2

    @property
    def var_EN_se(self) -> np.ndarray:
        return self.moments.se[self._f("EN_pow")]

    @property
    def cross(self) -> np.ndarray:
        m = self.moments.mean
        return m[self._f("X_re")] + 1j * m[self._f("X_im")]

    @property
    def cross_se(self) -> tuple[np.ndarray, np.ndarray]:
        se = self.moments.se
        return se[self._f("X_re")], se[self._f("X_im")]

    @property
    def sinr(self) -> np.ndarray:
        return self.mean_A.real**2 / self.var_EN

    @property
    def underpowered(self) -> bool:
        return self.trials < MIN_TRIALS


def run_trials(config: SystemConfig, mode, trials: int, master_seed: int,
               workers: int = 1, chunk: int = CHUNK) -> EmpiricalStats:
    """Simulate trials ``0 .. trials-1`` and accumulate per-cell moments.

    If memory runs out or the run is interrupted, the moments of the chunks
    finished so far are returned with ``complete = False``.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    mode = Mode(mode)
    bounds = [(lo, min(lo + chunk, trials)) for lo in range(0, trials, chunk)]
    jobs = [(config, mode, master_seed, lo, hi) for lo, hi in bounds]
    shape = (len(_FIELDS), config.K, config.N_D)
    acc = Moments(0, np.zeros(shape), np.zeros(shape))
    complete, note = True, ""
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for part in pool.map(_chunk_moments, jobs):
                    acc = acc.merge(part)
        else:
            for job in jobs:
                acc = acc.merge(_chunk_moments(job))
    except (MemoryError, KeyboardInterrupt) as exc:
        complete = False
        note = f"stopped after {acc.n} of {trials} trials: {type(exc).__name__}"
    if acc.n < 2:
        note = note or "fewer than 2 trials: standard errors undefined"
    return EmpiricalStats(config, mode, master_seed, trials, acc, complete, note)


@dataclass
class ComparisonRow:
    k: int
    i: int
    quantity: str
    empirical: float
    analytic: float
    se: float
    z: float


@dataclass
class Comparison:
    mode: Mode
    trials: int
    rows: list[ComparisonRow] = field(default_factory=list)
    underpowered: bool = False

    def _z(self):
        return np.array([r.z for r in self.rows], dtype=float)

    @property
    def fraction_within(self) -> float:
        z = np.abs(self._z())
        return float(np.mean(z < Z_PASS)) if z.size else math.nan

    @property
    def max_abs_z(self) -> float:
        z = np.abs(self._z())
        return float(np.max(z)) if z.size else math.nan

    def quantity_passed(self, quantity: str) -> bool:
        z = np.abs(np.array([r.z for r in self.rows if r.quantity == quantity], dtype=float))
        if z.size == 0 or np.isnan(z).any():
            return False
        return bool(np.mean(z < Z_PASS) >= PASS_FRACTION and z.max() <= Z_MAX)

    @property
    def passed(self) -> bool:
        """Each quantity separately: >= 99% of cells within 5 SE and none beyond 8 SE."""
        quantities = {r.quantity for r in self.rows}
        return bool(quantities) and all(self.quantity_passed(q) for q in quantities)

    def failing(self) -> list[ComparisonRow]:
        return [r for r in self.rows if not abs(r.z) < Z_PASS]


def _z(emp, ref, se):
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (emp - ref) / se
    # exact agreement with zero spread counts as z = 0
    return np.where((se == 0) & (emp == ref), 0.0, z)


def compare(stats: EmpiricalStats, config: SystemConfig | None = None, mode=None,
            analytic_mean=None, analytic_var=None) -> Comparison:
    """z-scores of empirical mean of A and Var(EN) against the closed forms.

    ``analytic_mean`` / ``analytic_var`` override the reference values, which
    is how the gate's power is tested.
    """
    config = config or stats.config
    mode = Mode(mode or stats.mode)
    k = np.arange(config.K)[:, None]
    i = config.data_indices[None, :]
    ref_mean = analytic.mean_A(config, k, i) if analytic_mean is None else analytic_mean
    ref_var = analytic.effective_noise_variance(config, k, i, mode) if analytic_var is None else analytic_var
    ref_mean = np.broadcast_to(ref_mean, (config.K, config.N_D))
    ref_var = np.broadcast_to(ref_var, (config.K, config.N_D))

    report = Comparison(mode=mode, trials=stats.trials, underpowered=stats.underpowered)
    cells = [
        ("mean_A", stats.mean_A.real, ref_mean, stats.mean_A_se),
        ("var_EN", stats.var_EN, ref_var, stats.var_EN_se),
    ]
    for name, emp, ref, se in cells:
        z = _z(emp, ref, se)
        for kk in range(config.K):
            for n, ii in enumerate(config.data_indices):
                report.rows.append(ComparisonRow(kk, int(ii), name, float(emp[kk, n]),
                                                 float(ref[kk, n]), float(se[kk, n]), float(z[kk, n])))
    return report


def manifest(config: SystemConfig, **extra) -> str:
    return "# " + json.dumps({"config": config.to_dict(), **extra}, sort_keys=True)


def comparison_csv(reports, config: SystemConfig, seed: int) -> str:
    """CSV of one or more comparison reports, prefixed by a manifest line."""
    reports = [reports] if isinstance(reports, Comparison) else list(reports)
    buf = io.StringIO()
    buf.write(manifest(config, seed=seed, modes=[r.mode.value for r in reports],
                       trials=[r.trials for r in reports]) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "k", "i", "quantity", "empirical", "analytic", "se", "z"])
    for rep in reports:
        for r in rep.rows:
            w.writerow([rep.mode.value, r.k, r.i, r.quantity, repr(r.empirical),
                        repr(r.analytic), repr(r.se), repr(r.z)])
    return buf.getvalue()
