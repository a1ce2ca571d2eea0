"""One coherence block: pilots, channel estimation, data, TR-MRC detection.

All functions accept arrays with arbitrary leading (trial) axes, so the
same code runs a single block or a stacked batch of blocks. Timeline
arrays have length ``N_c`` and array position ``t + L - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import BlockLayout, SystemConfig
from .stochastics import ChannelRealization, PhaseTrajectories, TrialDraw


@dataclass(frozen=True)
class ChannelEstimate:
    taps: np.ndarray  # [..., m, k, l]


@dataclass(frozen=True)
class FrameSignals:
    """Per-user transmit symbols and per-antenna received samples.

    ``transmit`` holds the pilot amplitudes in the training segment and the
    unit-variance symbols from the preamble on. ``received`` is NaN wherever
    the block has not been simulated yet.
    """

    transmit: np.ndarray  # [..., k, t]
    received: np.ndarray  # [..., m, t]


@dataclass(frozen=True)
class DecompositionTerms:
    """Detector output split into desired, ISI, MUI and aggregate-noise parts."""

    A: np.ndarray
    ISI: np.ndarray
    MUI: np.ndarray
    AN: np.ndarray
    x: np.ndarray
    x_hat: np.ndarray

    def recombined(self) -> np.ndarray:
        return self.A * self.x + self.ISI + self.MUI + self.AN

    def identity_error(self) -> np.ndarray:
        """``|x_hat - (A x + ISI + MUI + AN)| / max(1, |x_hat|)`` per cell."""
        return np.abs(self.x_hat - self.recombined()) / np.maximum(1.0, np.abs(self.x_hat))


def _check_dims(config: SystemConfig, layout: BlockLayout, taps, theta, phi, *timeline):
    M, K, L, T = config.M, config.K, config.L, layout.N_c
    if taps.shape[-3:] != (M, K, L):
        raise ValueError(f"channel taps must end in (M, K, L) = {(M, K, L)}, got {taps.shape}")
    if theta.shape[-2:] != (K, T) or phi.shape[-2:] != (M, T):
        raise ValueError(f"phase paths must end in (K, {T}) and (M, {T})")
    for arr in timeline:
        if arr.shape[-1] != T:
            raise ValueError(f"timeline arrays need {T} samples, got {arr.shape[-1]}")


def _propagate(taps, theta, phi, waveform, noise, positions):
    """Received samples at array ``positions`` for transmitted ``waveform`` [..., k, t]."""
    L = taps.shape[-1]
    u = np.exp(1j * theta) * waveform
    lagged = positions[None, :] - np.arange(L)[:, None]  # [l, n]
    U = u[..., lagged]  # [..., k, l, n]
    y = np.einsum("...mkl,...kln->...mn", taps, U)
    return np.exp(-1j * phi[..., positions]) * y + noise[..., positions]


def pilot_waveform(config: SystemConfig, layout: BlockLayout) -> np.ndarray:
    """Sequential impulses of amplitude sqrt(P_p K L); user k fires at t = kL."""
    s = np.zeros((config.K, layout.N_c), dtype=complex)
    amp = np.sqrt(config.P_p * config.K * config.L)
    for k in range(config.K):
        s[k, layout.pos(layout.pilot_instant(k))] = amp
    return s


def run_training(config: SystemConfig, layout: BlockLayout, channel: ChannelRealization,
                 phases: PhaseTrajectories, noise: np.ndarray) -> tuple[FrameSignals, ChannelEstimate]:
    """Send the pilots and form the ML estimate of each effective tap."""
    taps, theta, phi = channel.taps, phases.theta, phases.phi
    _check_dims(config, layout, taps, theta, phi, noise)
    pilots = pilot_waveform(config, layout)
    train = layout.segments["training"]
    positions = layout.pos(np.arange(train.start, train.stop))
    y_train = _propagate(taps, theta, phi, pilots, noise, positions)

    received = np.full(noise.shape, np.nan, dtype=complex)
    received[..., positions] = y_train
    K, L = config.K, config.L
    # y[m, kL + l] -> g_hat[m, k, l]
    est = y_train.reshape(y_train.shape[:-1] + (K, L)) / np.sqrt(config.P_p * K * L)
    transmit = np.broadcast_to(pilots, theta.shape).copy()
    return FrameSignals(transmit=transmit, received=received), ChannelEstimate(taps=est)


def run_data_phase(config: SystemConfig, layout: BlockLayout, channel: ChannelRealization,
                   phases: PhaseTrajectories, symbols: np.ndarray, noise: np.ndarray,
                   frame: FrameSignals | None = None) -> FrameSignals:
    """Received samples for every index the detector reads (data and postamble).

    ``symbols`` spans the whole timeline; entries before the preamble are
    ignored. If ``frame`` is given, its training samples are carried over.
    """
    taps, theta, phi = channel.taps, phases.theta, phases.phi
    _check_dims(config, layout, taps, theta, phi, noise)
    if symbols.shape[-2:] != (config.K, layout.N_c):
        raise ValueError(f"symbols must cover the whole block: expected (K, {layout.N_c}), "
                         f"got {symbols.shape[-2:]}")
    first = int(layout.pos(layout.segments["preamble"].start))
    if not np.all(np.isfinite(symbols[..., first:])):
        raise ValueError("symbols missing for part of preamble/data/postamble")
    waveform = np.zeros(symbols.shape, dtype=complex)
    waveform[..., first:] = np.sqrt(config.P_D) * symbols[..., first:]

    positions = np.arange(int(layout.pos(layout.data.start)), layout.N_c)
    y = _propagate(taps, theta, phi, waveform, noise, positions)

    if frame is None:
        received = np.full(noise.shape, np.nan, dtype=complex)
        transmit = np.zeros(symbols.shape, dtype=complex)
    else:
        received = frame.received.copy()
        transmit = frame.transmit.copy()
    received[..., positions] = y
    transmit[..., first:] = symbols[..., first:]
    return FrameSignals(transmit=transmit, received=received)


def tr_mrc_detect(estimate: ChannelEstimate, received: np.ndarray, layout: BlockLayout) -> np.ndarray:
    """x_hat[k, i] = sum_l sum_m conj(g_hat[m, k, l]) y[m, i + l] for i in the data set.

    Returns ``[..., K, N_D]``.
    """
    L = estimate.taps.shape[-1]
    data = layout.data
    idx = layout.pos(np.arange(data.start, data.stop))[None, :] + np.arange(L)[:, None]  # [l, n]
    if idx.max() >= received.shape[-1]:
        raise ValueError("received samples do not reach the end of the postamble")
    window = received[..., idx]  # [..., m, l, n]
    if np.isnan(window).any():
        raise ValueError("received samples have a coverage gap inside the detection window")
    return np.einsum("...mkl,...mln->...kn", estimate.taps.conj(), window)


def run_block(config: SystemConfig, draw: TrialDraw) -> tuple[FrameSignals, ChannelEstimate, np.ndarray]:
    layout = config.layout
    frame, est = run_training(config, layout, draw.channel, draw.phases, draw.noise)
    frame = run_data_phase(config, layout, draw.channel, draw.phases, draw.symbols, draw.noise, frame)
    return frame, est, tr_mrc_detect(est, frame.received, layout)


def _data_windows(config: SystemConfig, layout: BlockLayout):
    L = config.L
    i = np.arange(layout.data.start, layout.data.stop)
    l = np.arange(L)
    pos_il = layout.pos(i[None, :] + l[:, None])  # [l, n]
    pos_ilp = layout.pos(i[None, None, :] + l[:, None, None] - l[None, :, None])  # [l, p, n]
    pos_pilot_l = layout.pos(np.arange(config.K)[:, None] * L + l[None, :])  # [k, l]
    pos_pilot = layout.pos(np.arange(config.K) * L)  # [k]
    return i, pos_il, pos_ilp, pos_pilot_l, pos_pilot


def desired_coefficient(config: SystemConfig, channel: ChannelRealization,
                        phases: PhaseTrajectories) -> np.ndarray:
    """A[k, i] = sqrt(P_D) sum_m sum_l |g[m,k,l]|^2 * rotation(m, k, k; i, l, l)."""
    layout = config.layout
    i, pos_il, _, pos_pilot_l, pos_pilot = _data_windows(config, layout)
    taps, theta, phi = channel.taps, phases.theta, phases.phi
    bs_now = np.exp(-1j * phi[..., pos_il])  # [..., m, l, n]
    bs_pilot = np.exp(1j * phi[..., pos_pilot_l])  # [..., m, k, l]
    acc = np.einsum("...mkl,...mln->...kn", np.abs(taps) ** 2 * bs_pilot, bs_now)
    theta_pilot = theta[..., np.arange(config.K), pos_pilot]  # [..., k]
    user = np.exp(1j * (theta[..., layout.pos(i)] - theta_pilot[..., None]))  # [..., k, n]
    return np.sqrt(config.P_D) * acc * user


def decompose(config: SystemConfig, draw: TrialDraw) -> DecompositionTerms:
    """Evaluate every term of the detector-output decomposition from its defining sum.

    The detected symbol itself comes from the actual transmission chain, so
    ``identity_error`` compares two independent computations.
    """
    layout = config.layout
    _, est, x_hat = run_block(config, draw)
    i, pos_il, pos_ilp, pos_pilot_l, pos_pilot = _data_windows(config, layout)
    taps, theta, phi = draw.channel.taps, draw.phases.theta, draw.phases.phi
    x = draw.symbols
    K, L = config.K, config.L

    bs_now = np.exp(-1j * phi[..., pos_il])  # [..., m, l, n]
    bs_pilot = np.exp(1j * phi[..., pos_pilot_l])  # [..., m, k, l]
    user_pilot = np.exp(-1j * theta[..., np.arange(K), pos_pilot])  # [..., k]
    tx = np.exp(1j * theta[..., pos_ilp]) * x[..., pos_ilp]  # [..., q, l, p, n]

    W = np.sqrt(config.P_D) * np.einsum("...mkl,...mqp,...mln,...mkl->...kqlpn",
                                        taps.conj(), taps, bs_now, bs_pilot)
    F = W * user_pilot[..., :, None, None, None, None] * tx[..., None, :, :, :, :]
    same_user = np.eye(K, dtype=bool)[:, :, None, None, None]
    same_tap = np.eye(L, dtype=bool)[None, None, :, :, None]
    ISI = np.where(same_user & ~same_tap, F, 0).sum(axis=(-4, -3, -2))
    MUI = np.where(~same_user, F, 0).sum(axis=(-4, -3, -2))

    A = desired_coefficient(config, draw.channel, draw.phases)
    x_data = x[..., layout.pos(i)]

    noise = draw.noise
    n_pilot = noise[..., pos_pilot_l]  # [..., m, k, l]
    an_est = np.sqrt(config.P_D / (config.P_p * K * L)) * np.einsum(
        "...mqp,...mln,...mkl,...qlpn->...kn", taps, bs_now, n_pilot.conj(), tx)
    an_rx = np.einsum("...mkl,...mln->...kn", est.taps.conj(), noise[..., pos_il])
    return DecompositionTerms(A=A, ISI=ISI, MUI=MUI, AN=an_est + an_rx, x=x_data, x_hat=x_hat)
