"""Closed-form mean, effective-noise variance and achievable rates.

User index ``k`` is 0-based (pilot at ``t = kL``) and ``i`` is an absolute
timeline index in the data set, so the estimation-to-detection lag is
``i - kL``. Every function is vectorized over ``k`` and ``i`` by numpy
broadcasting.

``mode`` is ``Mode.SYNC``, ``Mode.NONSYNC`` or the string ``"none"``; the
latter selects the phase-noise-free baseline.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .config import Mode, SystemConfig, db_to_linear

NO_PN = "none"
LN2 = math.log(2.0)

SNR_BRACKET_DB = (-60.0, 80.0)
SNR_EXPANSION_DB = 80.0


class InfeasibleTargetError(ValueError):
    """The requested per-user rate is at or above the high-SNR saturation value."""

    def __init__(self, target: float, saturation: float, mode):
        self.target = target
        self.saturation = saturation
        self.mode = mode
        super().__init__(f"target {target} bpcu is not reachable in mode {_mode_name(mode)}: "
                         f"high-SNR saturation is {saturation:.6f} bpcu per user")


class SpecialCase(str, enum.Enum):
    UT_ONLY = "ut-only"
    BS_ONLY_SYNC = "bs-only-sync"
    BS_ONLY_NONSYNC = "bs-only-nonsync"


class Regime(str, enum.Enum):
    FINITE = "finite"
    HIGH_SNR = "high-snr"
    LARGE_ARRAY = "large-array"


def _mode_name(mode) -> str:
    return mode.value if isinstance(mode, Mode) else str(mode)


def resolve_mode(config: SystemConfig, mode=None):
    if mode is None:
        return config.mode
    if isinstance(mode, str) and mode == NO_PN:
        return NO_PN
    return Mode(mode)


def _lag(config: SystemConfig, k, i):
    k = np.asarray(k)
    i = np.asarray(i)
    data = config.layout.data
    if np.any((i < data.start) | (i >= data.stop)):
        raise ValueError(f"i must lie in the data set [{data.start}, {data.stop - 1}]")
    if np.any((k < 0) | (k >= config.K)):
        raise ValueError(f"k must lie in [0, {config.K - 1}]")
    return i - k * config.L


def _grid(config: SystemConfig):
    """Broadcastable (k, i) grid of shape (K, N_D)."""
    return np.arange(config.K)[:, None], config.data_indices[None, :]


def _tap_excess(config: SystemConfig, k):
    """sum_l sum_l' d_kl d_kl' e^{-sigma_phi^2 |l - l'|} - alpha_k^2, via expm1."""
    d = config.pdp
    sep = np.abs(np.arange(config.L)[:, None] - np.arange(config.L)[None, :])
    per_user = np.einsum("kl,km,lm->k", d, d, np.expm1(-config.sigma_phi_sq * sep))
    return per_user[np.asarray(k)]


def mean_A(config: SystemConfig, k, i):
    """Expected desired-signal coefficient; identical in both modes."""
    lag = _lag(config, k, i)
    total = config.sigma_phi_sq + config.sigma_theta_sq
    return np.sqrt(config.P_D) * config.M * config.alpha[k] * np.exp(-0.5 * total * lag)


@dataclass(frozen=True)
class VarianceKernels:
    kappa: np.ndarray
    xi: np.ndarray
    varpi: np.ndarray
    C: np.ndarray


def interference_constant(config: SystemConfig, k):
    """Phase-noise-free part of the effective noise variance for user ``k``."""
    P_D, M, s2, K = config.P_D, config.M, config.noise_variance, config.K
    a_k = config.alpha[np.asarray(k)]
    a_sum = config.alpha_sum
    return P_D * M * a_k * a_sum + s2 * M * (P_D / (config.P_p * K) * a_sum + a_k + s2 / (K * config.P_p))


def variance_kernels(config: SystemConfig, k, i) -> VarianceKernels:
    lag = _lag(config, k, i)
    a2 = config.alpha[k] ** 2
    excess = _tap_excess(config, k)
    sp, st = config.sigma_phi_sq, config.sigma_theta_sq
    # S - a^2 e^{-x} = (S - a^2) + a^2 (1 - e^{-x})
    kappa = excess - a2 * np.expm1(-(sp + st) * lag)
    xi = excess - a2 * np.expm1(-sp * lag)
    varpi = -np.exp(-sp * lag) * np.expm1(-st * lag)
    C = interference_constant(config, k) * np.ones_like(lag, dtype=float)
    return VarianceKernels(kappa=kappa, xi=xi, varpi=varpi, C=C)


def effective_noise_variance(config: SystemConfig, k, i, mode=None):
    mode = resolve_mode(config, mode)
    kern = variance_kernels(config, k, i)
    P_D, M = config.P_D, config.M
    if mode == NO_PN:
        return kern.C
    if mode is Mode.SYNC:
        return P_D * M**2 * kern.kappa + kern.C
    return P_D * M**2 * config.alpha[k] ** 2 * kern.varpi + P_D * M * kern.xi + kern.C


def signal_power(config: SystemConfig, k, i, mode=None):
    """P_D M^2 alpha_k^2 e^{-(sigma_phi^2 + sigma_theta^2)(i - kL)} (no decay for the baseline)."""
    lag = _lag(config, k, i)
    decay = 0.0 if resolve_mode(config, mode) == NO_PN else config.sigma_phi_sq + config.sigma_theta_sq
    return config.P_D * config.M**2 * config.alpha[k] ** 2 * np.exp(-decay * lag)


def sinr(config: SystemConfig, k, i, mode=None):
    if config.P_D == 0:
        return np.zeros(np.broadcast(np.asarray(k), np.asarray(i)).shape)
    return signal_power(config, k, i, mode) / effective_noise_variance(config, k, i, mode)


def rate_per_index(config: SystemConfig, k, i, mode=None):
    """Achievable rate of the i-th per-index code of user k, in bits per channel use."""
    return np.log1p(sinr(config, k, i, mode)) / LN2


def no_phase_noise_sum_rate(config: SystemConfig) -> float:
    """Sum-rate with ideal oscillators, written directly in its closed form."""
    k = np.arange(config.K)
    C = interference_constant(config, k)
    per_user = np.log1p(config.P_D * config.M**2 * config.alpha**2 / C) / LN2
    return float(config.N_D / config.N_c * per_user.sum())


@dataclass(frozen=True)
class RateReport:
    mode: object
    per_index: np.ndarray  # (K, N_D)
    per_user: np.ndarray  # (K,)
    sum_rate: float
    no_phase_noise: float


def per_user_rates(config: SystemConfig, mode=None) -> np.ndarray:
    k, i = _grid(config)
    return rate_per_index(config, k, i, mode).sum(axis=1) / config.N_c


def sum_rate(config: SystemConfig, mode=None) -> RateReport:
    mode = resolve_mode(config, mode)
    k, i = _grid(config)
    per_index = rate_per_index(config, k, i, mode)
    per_user = per_index.sum(axis=1) / config.N_c
    return RateReport(
        mode=mode,
        per_index=per_index,
        per_user=per_user,
        sum_rate=float(per_user.sum()),
        no_phase_noise=no_phase_noise_sum_rate(config),
    )


def high_snr_sinr(config: SystemConfig, k, i, mode=None):
    mode = resolve_mode(config, mode)
    lag = _lag(config, k, i)
    M = config.M
    a = config.alpha[k]
    floor = a * config.alpha_sum
    if mode == NO_PN:
        return M * a**2 / floor * np.ones_like(lag, dtype=float)
    kern = variance_kernels(config, k, i)
    num = M * a**2 * np.exp(-(config.sigma_phi_sq + config.sigma_theta_sq) * lag)
    if mode is Mode.SYNC:
        return num / (M * kern.kappa + floor)
    return num / (M * a**2 * kern.varpi + kern.xi + floor)


def high_snr_limit(config: SystemConfig, k, mode=None) -> float:
    """Per-user rate as P_D / sigma^2 grows without bound."""
    i = config.data_indices
    return float(np.log1p(high_snr_sinr(config, k, i, mode)).sum() / LN2 / config.N_c)


@dataclass(frozen=True)
class ArrayGainQuery:
    """Transmit power scaled with the array as P_D = E_u / M**eta."""

    E_u: float
    eta: float = 0.5

    def __post_init__(self):
        if not self.E_u > 0:
            raise ValueError(f"E_u must be > 0, got {self.E_u}")
        if self.eta < 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")

    def power(self, M: int) -> float:
        return self.E_u / M**self.eta


def large_array_sinr(config: SystemConfig, k, i, mode, query: ArrayGainQuery):
    """Limit of the SINR as M -> infinity under the power scaling of ``query``."""
    mode = resolve_mode(config, mode)
    lag = _lag(config, k, i)
    a = config.alpha[k]
    shape = np.broadcast(np.asarray(k), np.asarray(i)).shape
    if query.eta > 0.5:
        return np.zeros(shape)
    if mode == NO_PN:
        decay, spread = np.ones(shape), np.zeros(shape)
    else:
        kern = variance_kernels(config, k, i)
        decay = np.exp(-(config.sigma_phi_sq + config.sigma_theta_sq) * lag)
        spread = kern.kappa if mode is Mode.SYNC else a**2 * kern.varpi
    snr = query.E_u / config.noise_variance
    if query.eta < 0.5:
        with np.errstate(divide="ignore"):
            return np.where(spread > 0, a**2 * decay / np.where(spread > 0, spread, 1.0), np.inf)
    return snr * a**2 * decay / (snr * spread + 1.0 / (config.K * config.beta * snr))


def array_gain_limit(config: SystemConfig, k, mode, query: ArrayGainQuery) -> float:
    """Per-user rate as M -> infinity with P_D = E_u / M**eta.

    Positive and finite for eta = 1/2, zero for eta > 1/2.
    """
    i = config.data_indices
    return float(np.log1p(large_array_sinr(config, k, i, mode, query)).sum() / LN2 / config.N_c)


def scaled_power_rate(config: SystemConfig, k, mode, query: ArrayGainQuery) -> float:
    """Per-user rate at the config's M with P_D = E_u / M**eta."""
    cfg = config.replace(P_D=query.power(config.M))
    return float(per_user_rates(cfg, mode)[k])


def special_case_rate(config: SystemConfig, k, i, case, regime=Regime.FINITE, E_u: float | None = None):
    """Per-index rate when only one side of the link has phase noise.

    ``ut-only`` needs ``sigma_phi_sq == 0``; the ``bs-only`` cases need
    ``sigma_theta_sq == 0``. The large-array regime uses P_D = E_u / sqrt(M).
    These are written in their own normalized form and serve as a check on
    the general expressions.
    """
    case, regime = SpecialCase(case), Regime(regime)
    if case is SpecialCase.UT_ONLY and config.sigma_phi_sq != 0:
        raise ValueError("ut-only case requires sigma_phi_sq == 0")
    if case is not SpecialCase.UT_ONLY and config.sigma_theta_sq != 0:
        raise ValueError(f"{case.value} case requires sigma_theta_sq == 0")
    if regime is Regime.LARGE_ARRAY and E_u is None:
        raise ValueError("large-array regime needs E_u")

    lag = _lag(config, k, i)
    M, s2, P_D = config.M, config.noise_variance, config.P_D
    a = config.alpha[k]
    a_sum = config.alpha_sum
    kern = variance_kernels(config, k, i)
    C_norm = kern.C / (s2 * M)

    if case is SpecialCase.UT_ONLY:
        e = np.exp(-config.sigma_theta_sq * lag)
        if regime is Regime.FINITE:
            s = (P_D * M * a**2 / s2 * e) / (P_D * M / s2 * a**2 * (1 - e) + C_norm)
        elif regime is Regime.HIGH_SNR:
            s = M * a * e / (M * a * (1 - e) + a_sum)
        else:
            u = E_u / s2
            s = u * a**2 * e / (u * a**2 * (1 - e) + s2 / (config.K * config.beta * E_u))
        return np.log2(1 + s)

    e = np.exp(-config.sigma_phi_sq * lag)
    xi = kern.xi
    sync = case is SpecialCase.BS_ONLY_SYNC
    if regime is Regime.FINITE:
        spread = P_D * M / s2 * xi if sync else P_D / s2 * xi
        s = (P_D * M * a**2 / s2 * e) / (spread + C_norm)
    elif regime is Regime.HIGH_SNR:
        s = M * a**2 * e / ((M * xi if sync else xi) + a * a_sum)
    elif sync:
        u = E_u / s2
        s = u * a**2 * e / (u * xi + s2 / (config.K * config.beta * E_u))
    else:
        s = (E_u / s2) ** 2 * config.K * config.beta * a**2 * e
    return np.log2(1 + s)


def _mean_user_rate(config: SystemConfig, mode, snr_db: float) -> float:
    cfg = config.replace(P_D=float(config.noise_variance * db_to_linear(snr_db)))
    return float(per_user_rates(cfg, mode).mean())


def saturation_rate(config: SystemConfig, mode=None) -> float:
    """High-SNR limit of the per-user rate (sum-rate over K); targets at or above it are unreachable."""
    mode = resolve_mode(config, mode)
    return sum(high_snr_limit(config, k, mode) for k in range(config.K)) / config.K


def required_snr_for_rate(config: SystemConfig, mode, target: float, tol: float = 1e-6) -> float:
    """Smallest P_D / sigma^2 in dB at which the per-user rate (sum-rate over K) reaches ``target`` bpcu.

    Bisection on the dB scale over a [-60, 80] dB bracket, widened upward
    once. Returns ``-inf`` for a nonpositive target.
    """
    mode = resolve_mode(config, mode)
    if target <= 0:
        return -math.inf
    saturation = saturation_rate(config, mode)
    if target >= saturation:
        raise InfeasibleTargetError(target, saturation, mode)

    lo, hi = SNR_BRACKET_DB
    f = lambda db: _mean_user_rate(config, mode, db) - target  # noqa: E731
    while f(lo) > 0:
        lo -= SNR_EXPANSION_DB
    if f(hi) < 0:
        hi += SNR_EXPANSION_DB
        if f(hi) < 0:
            raise InfeasibleTargetError(target, saturation, mode)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = f(mid)
        if abs(r) < tol * 1e-3 or hi - lo < 1e-12:
            return mid
        if r < 0:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    if abs(f(mid)) >= tol:
        raise RuntimeError(f"bisection did not reach {tol:g} bpcu for target {target}")
    return mid


def sum_rate_vs_data_length(config: SystemConfig, mode, bound: int) -> np.ndarray:
    """Sum-rate for every N_D in 1..bound (entry ``n - 1`` holds N_D = n).

    Per-index rates do not depend on N_D, so one pass over the longest block
    plus a running sum gives every shorter block exactly.
    """
    cfg = config.replace(N_D=int(bound))
    mode = resolve_mode(cfg, mode)
    k, i = _grid(cfg)
    totals = np.cumsum(rate_per_index(cfg, k, i, mode).sum(axis=0))
    n = np.arange(1, bound + 1)
    return totals / (n + (cfg.K + 3) * cfg.L - 3)


def optimize_data_length(config: SystemConfig, mode, bound: int) -> tuple[int, float]:
    """Exact maximizer of the sum-rate over N_D in 1..bound (smallest on ties)."""
    if bound < 1:
        raise ValueError("bound must be >= 1")
    curve = sum_rate_vs_data_length(config, mode, bound)
    best = int(np.argmax(curve))
    return best + 1, float(curve[best])
