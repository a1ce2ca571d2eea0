"""System parameters, block layout and derived constants.

All powers and variances are linear; dB only appears at the CLI boundary.
User indices are 0-based, so user ``k`` sends its pilot at ``t = k * L``.
Time indices are absolute positions on the block timeline, where ``t = 0``
is the first training sample and the zero guard occupies ``-(L-1) .. -1``.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

PDP_RTOL = 1e-12

# Reference operating point of the numerical study.
CARRIER_FREQUENCY = 2e9
SYMBOL_INTERVAL = 1e-7
OSCILLATOR_CONSTANT = 4.7e-18
PDP_DECAY = 0.35


class Mode(str, enum.Enum):
    """Oscillator arrangement at the base station."""

    SYNC = "sync"
    NONSYNC = "nonsync"


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants.

    ``errors`` holds one message per violation, each starting with the
    offending field name.
    """

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def derive_increment_variance(f_c: float, T_s: float, c: float) -> float:
    """Per-symbol Wiener increment variance 4 pi^2 f_c^2 c T_s in rad^2."""
    if f_c <= 0 or T_s <= 0:
        raise ConfigError([f"f_c/T_s: must be positive, got {f_c}, {T_s}"])
    if c < 0:
        raise ConfigError([f"c: oscillator constant must be nonnegative, got {c}"])
    return 4.0 * math.pi**2 * f_c**2 * c * T_s


def std_deg_to_variance(std_deg: float) -> float:
    return math.radians(std_deg) ** 2


def variance_to_std_deg(variance: float) -> float:
    return math.degrees(math.sqrt(variance))


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(value):
    return 10.0 * np.log10(value)


@dataclass(frozen=True)
class BlockLayout:
    """Segments of one coherence block on the absolute timeline.

    Segments are half-open ``range`` objects in timeline order: guard,
    training, preamble, data, postamble.
    """

    K: int
    L: int
    N_D: int
    N_c: int
    segments: dict[str, range]

    @property
    def start(self) -> int:
        return -(self.L - 1)

    @property
    def stop(self) -> int:
        return self.N_c - self.L + 1

    @property
    def data(self) -> range:
        return self.segments["data"]

    def pos(self, t):
        """Array position of timeline index ``t``."""
        return np.asarray(t) + (self.L - 1)

    def pilot_instant(self, k: int) -> int:
        return k * self.L


def block_layout(K: int, L: int, N_D: int) -> BlockLayout:
    if min(K, L, N_D) < 1:
        raise ConfigError([f"K/L/N_D: must be >= 1, got {K}, {L}, {N_D}"])
    N_c = N_D + (K + 3) * L - 3
    d0 = (K + 1) * L - 1
    segments = {
        "guard": range(-(L - 1), 0),
        "training": range(0, K * L),
        "preamble": range(K * L, d0),
        "data": range(d0, d0 + N_D),
        "postamble": range(d0 + N_D, d0 + N_D + L - 1),
    }
    return BlockLayout(K=K, L=L, N_D=N_D, N_c=N_c, segments=segments)


def exponential_pdp(L: int, decay: float, alpha: float = 1.0) -> np.ndarray:
    """Exponentially decaying tap powers normalized to total power ``alpha``."""
    if L < 1 or alpha <= 0 or decay < 0:
        raise ConfigError([f"pdp: need L >= 1, decay >= 0, alpha > 0; got {L}, {decay}, {alpha}"])
    w = np.exp(-decay * np.arange(L))
    return alpha * w / w.sum()


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """Every scalar parameter of the uplink plus the per-user PDP.

    ``pdp`` has shape ``(K, L)``. The large-scale gains ``alpha`` are the
    row sums of ``pdp`` and are never set independently.
    """

    M: int
    K: int
    L: int
    N_D: int
    P_D: float
    beta: float
    noise_variance: float
    sigma_phi_sq: float
    sigma_theta_sq: float
    pdp: np.ndarray
    mode: Mode = Mode.SYNC

    def __post_init__(self):
        object.__setattr__(self, "pdp", np.array(self.pdp, dtype=float, ndmin=2))
        object.__setattr__(self, "mode", Mode(self.mode))

    @cached_property
    def alpha(self) -> np.ndarray:
        return self.pdp.sum(axis=1)

    @property
    def alpha_sum(self) -> float:
        return float(self.alpha.sum())

    @property
    def P_p(self) -> float:
        return self.beta * self.P_D

    @cached_property
    def layout(self) -> BlockLayout:
        return block_layout(self.K, self.L, self.N_D)

    @property
    def N_c(self) -> int:
        return self.layout.N_c

    @property
    def data_indices(self) -> np.ndarray:
        return np.arange(self.layout.data.start, self.layout.data.stop)

    @property
    def snr_db(self) -> float:
        return float(linear_to_db(self.P_D / self.noise_variance))

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def with_snr_db(self, snr_db: float) -> "SystemConfig":
        return self.replace(P_D=float(self.noise_variance * db_to_linear(snr_db)))

    def with_users(self, K: int) -> "SystemConfig":
        """Same system with ``K`` users sharing the first user's PDP."""
        if not np.allclose(self.pdp, self.pdp[0], rtol=0, atol=0):
            raise ConfigError(["pdp: changing K requires a PDP common to all users"])
        return self.replace(K=K, pdp=np.tile(self.pdp[0], (K, 1)))

    def with_taps(self, L: int, decay: float = PDP_DECAY) -> "SystemConfig":
        rows = [exponential_pdp(L, decay, a) for a in self.alpha]
        return self.replace(L=L, pdp=np.array(rows))

    def to_dict(self) -> dict[str, Any]:
        return {
            "M": self.M,
            "K": self.K,
            "L": self.L,
            "N_D": self.N_D,
            "P_D": self.P_D,
            "beta": self.beta,
            "noise_variance": self.noise_variance,
            "sigma_phi_sq": self.sigma_phi_sq,
            "sigma_theta_sq": self.sigma_theta_sq,
            "pdp": self.pdp.tolist(),
            "mode": self.mode.value,
        }


def _is_pos_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool) and v >= 1


def validate(config: SystemConfig, alpha: Any = None) -> SystemConfig:
    """Check every invariant and return the config, or raise ``ConfigError``.

    When ``alpha`` is given, the PDP rows must already sum to it within
    ``PDP_RTOL``; use :func:`renormalize` to rescale instead.
    """
    errors = []
    for name in ("M", "K", "L", "N_D"):
        if not _is_pos_int(getattr(config, name)):
            errors.append(f"{name}: must be a positive integer, got {getattr(config, name)!r}")
    for name in ("P_D", "beta", "noise_variance"):
        v = getattr(config, name)
        if not (np.isfinite(v) and v > 0):
            errors.append(f"{name}: must be finite and > 0, got {v!r}")
    for name in ("sigma_phi_sq", "sigma_theta_sq"):
        v = getattr(config, name)
        if not (np.isfinite(v) and v >= 0):
            errors.append(f"{name}: must be finite and >= 0, got {v!r}")
    pdp = config.pdp
    shape_known = _is_pos_int(config.K) and _is_pos_int(config.L)
    if shape_known and pdp.shape != (config.K, config.L):
        errors.append(f"pdp: shape must be (K, L) = ({config.K}, {config.L}), got {pdp.shape}")
    if not np.all(np.isfinite(pdp)):
        errors.append("pdp: entries must be finite")
    elif np.any(pdp < 0):
        errors.append("pdp: entries must be nonnegative")
    elif np.any(pdp.sum(axis=1) <= 0):
        errors.append("pdp: every user needs alpha_k = sum_l d_kl > 0")
    if alpha is not None and not errors:
        target = np.broadcast_to(np.asarray(alpha, dtype=float), (config.K,))
        if not np.allclose(pdp.sum(axis=1), target, rtol=PDP_RTOL, atol=0):
            errors.append(f"pdp: rows must sum to alpha={target.tolist()} within {PDP_RTOL:g} relative")
    if errors:
        raise ConfigError(errors)
    return config


def renormalize(config: SystemConfig, alpha: Any = 1.0) -> SystemConfig:
    target = np.broadcast_to(np.asarray(alpha, dtype=float), (config.K,))
    rows = config.pdp / config.pdp.sum(axis=1, keepdims=True) * target[:, None]
    return config.replace(pdp=rows)


def reference_config(
    M: int = 200,
    K: int = 10,
    L: int = 20,
    N_D: int = 1000,
    snr_db: float = 10.0,
    beta: float = 1.0,
    sigma_phi_sq: float | None = None,
    sigma_theta_sq: float | None = None,
    decay: float = PDP_DECAY,
    alpha: float = 1.0,
    mode: Mode | str = Mode.SYNC,
) -> SystemConfig:
    """Reference system: exponential PDP, equal gains, unit noise variance.

    Increment variances default to the 2 GHz / 0.1 us / 4.7e-18 oscillator.
    """
    ref = derive_increment_variance(CARRIER_FREQUENCY, SYMBOL_INTERVAL, OSCILLATOR_CONSTANT)
    cfg = SystemConfig(
        M=M,
        K=K,
        L=L,
        N_D=N_D,
        P_D=float(db_to_linear(snr_db)),
        beta=beta,
        noise_variance=1.0,
        sigma_phi_sq=ref if sigma_phi_sq is None else sigma_phi_sq,
        sigma_theta_sq=ref if sigma_theta_sq is None else sigma_theta_sq,
        pdp=np.tile(exponential_pdp(L, decay, alpha), (K, 1)),
        mode=mode,
    )
    return validate(cfg)


_FIELDS = {f.name for f in dataclasses.fields(SystemConfig)}
_OSC_FIELDS = {"f_c", "T_s", "c_phi", "c_theta"}


def config_from_mapping(data: Mapping[str, Any], base: SystemConfig | None = None) -> SystemConfig:
    """Build a validated config from plain data (a parsed config file).

    Missing fields fall back to ``base`` (the reference system by default).
    ``pdp`` may be a ``K x L`` nested list, a single row shared by all
    users, or ``{"decay": d, "alpha": a}``. The oscillator fields ``f_c``,
    ``T_s``, ``c_phi``, ``c_theta`` derive the increment variances.
    """
    unknown = set(data) - _FIELDS - _OSC_FIELDS - {"alpha", "snr_db"}
    if unknown:
        raise ConfigError([f"{name}: unknown configuration field" for name in sorted(unknown)])
    base = base or reference_config()
    values = base.to_dict()
    values.update({k: v for k, v in data.items() if k in _FIELDS})
    if "snr_db" in data:
        values["P_D"] = values["noise_variance"] * float(db_to_linear(data["snr_db"]))
    f_c = data.get("f_c", CARRIER_FREQUENCY)
    T_s = data.get("T_s", SYMBOL_INTERVAL)
    if "c_phi" in data:
        values["sigma_phi_sq"] = derive_increment_variance(f_c, T_s, data["c_phi"])
    if "c_theta" in data:
        values["sigma_theta_sq"] = derive_increment_variance(f_c, T_s, data["c_theta"])

    K, L = values["K"], values["L"]
    pdp = data.get("pdp")
    if pdp is None:
        if base.pdp.shape == (K, L):
            pdp = base.pdp
        else:
            pdp = exponential_pdp(L, PDP_DECAY, float(base.alpha[0]))
    if isinstance(pdp, Mapping):
        pdp = exponential_pdp(L, float(pdp.get("decay", PDP_DECAY)), float(pdp.get("alpha", 1.0)))
    pdp = np.asarray(pdp, dtype=float)
    if pdp.ndim == 1:
        pdp = np.tile(pdp, (K, 1))
    values["pdp"] = pdp
    cfg = SystemConfig(**values)
    return validate(cfg, alpha=data.get("alpha"))


def load_config(path: str | Path, base: SystemConfig | None = None) -> SystemConfig:
    """Read a YAML (or JSON) configuration file."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, Mapping):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return config_from_mapping(data, base)
