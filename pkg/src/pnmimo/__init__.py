"""Phase-noise-impaired massive MIMO uplink with time-reversal MRC.

Closed-form achievable rates, a link-level Monte Carlo simulator that checks
them, the two-branch toy channel, and sweeps over SNR, M, N_D and K.
"""

from .analytic import (
    InfeasibleTargetError,
    RateReport,
    effective_noise_variance,
    high_snr_limit,
    mean_A,
    optimize_data_length,
    rate_per_index,
    required_snr_for_rate,
    sum_rate,
    variance_kernels,
)
from .config import ConfigError, Mode, SystemConfig, block_layout, exponential_pdp, reference_config, validate

__all__ = [
    "ConfigError",
    "InfeasibleTargetError",
    "Mode",
    "RateReport",
    "SystemConfig",
    "block_layout",
    "effective_noise_variance",
    "exponential_pdp",
    "high_snr_limit",
    "mean_A",
    "optimize_data_length",
    "reference_config",
    "rate_per_index",
    "required_snr_for_rate",
    "sum_rate",
    "validate",
    "variance_kernels",
]
