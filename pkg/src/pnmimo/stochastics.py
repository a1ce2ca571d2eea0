"""Seeded sampling of channels, Wiener phase paths and symbols.

Every random object of a trial comes from its own labeled stream,
``stream(master_seed, trial, label)``. Streams are derived by
``SeedSequence`` spawn keys, so trial ``j`` sees the same numbers no
matter how many trials run or how they are split across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import BlockLayout, Mode, SystemConfig

STREAM_LABELS = {"channel": 0, "phases": 1, "symbols": 2, "noise": 3}


def stream(master_seed: int, trial: int, label: str) -> np.random.Generator:
    key = (int(trial), STREAM_LABELS[label])
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(master_seed), spawn_key=key)))


def sample_complex_gaussian(shape, variance: float, rng: np.random.Generator) -> np.ndarray:
    """Proper complex Gaussian samples; real and imaginary parts ~ N(0, variance/2)."""
    if variance < 0:
        raise ValueError(f"variance must be >= 0, got {variance}")
    z = rng.standard_normal((2,) + tuple(np.atleast_1d(shape)))
    return np.sqrt(variance / 2.0) * (z[0] + 1j * z[1])


@dataclass(frozen=True)
class WienerPath:
    values: np.ndarray
    increment_variance: float


def wiener_paths(n_paths: int, length: int, increment_variance: float,
                 initial_phase, rng: np.random.Generator) -> np.ndarray:
    """``(n_paths, length)`` unwrapped random-walk phases starting at ``initial_phase``."""
    steps = np.sqrt(increment_variance) * rng.standard_normal((n_paths, length - 1))
    out = np.empty((n_paths, length))
    out[:, 0] = np.ravel(np.broadcast_to(initial_phase, (n_paths, 1)))
    np.cumsum(steps, axis=1, out=out[:, 1:])
    out[:, 1:] += out[:, :1]
    return out


def wiener_path(length: int, increment_variance: float, initial_phase: float,
                rng: np.random.Generator) -> WienerPath:
    if length < 1:
        raise ValueError("length must be >= 1")
    values = wiener_paths(1, length, increment_variance, initial_phase, rng)[0]
    return WienerPath(values=values, increment_variance=increment_variance)


@dataclass(frozen=True)
class ChannelRealization:
    """Tap tensor ``taps[..., m, k, l]``; leading axes index trials."""

    taps: np.ndarray
    config: SystemConfig


def sample_channel(config: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    h = sample_complex_gaussian((config.M, config.K, config.L), 1.0, rng)
    return ChannelRealization(taps=np.sqrt(config.pdp)[None] * h, config=config)


@dataclass(frozen=True)
class PhaseTrajectories:
    """Oscillator phases over the block timeline (array position = t + L - 1).

    ``theta`` is ``(..., K, N_c)``. ``phi`` is ``(..., M, N_c)``; in
    synchronous mode it is a broadcast view of one shared path.
    """

    theta: np.ndarray
    phi: np.ndarray
    mode: Mode


def sample_phases(config: SystemConfig, layout: BlockLayout, rng: np.random.Generator,
                  mode: Mode | str | None = None) -> PhaseTrajectories:
    """Draw K user paths and M base-station paths.

    The draw always consumes M BS paths so that both modes run on paired
    randomness; synchronous mode keeps only the first one.
    """
    mode = Mode(mode or config.mode)
    T = layout.N_c
    start = rng.uniform(0.0, 2 * np.pi, size=config.K + config.M)
    theta = wiener_paths(config.K, T, config.sigma_theta_sq, start[: config.K, None], rng)
    phi = wiener_paths(config.M, T, config.sigma_phi_sq, start[config.K:, None], rng)
    if mode is Mode.SYNC:
        phi = np.broadcast_to(phi[:1], phi.shape)
    return PhaseTrajectories(theta=theta, phi=phi, mode=mode)


def sample_symbols(config: SystemConfig, layout: BlockLayout, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance Gaussian symbols from the preamble on; zero before it.

    Pilots are not stored here; the training stage inserts them.
    """
    x = np.zeros((config.K, layout.N_c), dtype=complex)
    first = int(layout.pos(layout.segments["preamble"].start))
    x[:, first:] = sample_complex_gaussian((config.K, layout.N_c - first), 1.0, rng)
    return x


def sample_noise(config: SystemConfig, layout: BlockLayout, rng: np.random.Generator) -> np.ndarray:
    """Receiver AWGN ``(M, N_c)`` over the whole block."""
    return sample_complex_gaussian((config.M, layout.N_c), config.noise_variance, rng)


@dataclass(frozen=True)
class TrialDraw:
    channel: ChannelRealization
    phases: PhaseTrajectories
    symbols: np.ndarray
    noise: np.ndarray


def draw_trial(config: SystemConfig, master_seed: int, trial: int,
               mode: Mode | str | None = None) -> TrialDraw:
    layout = config.layout
    return TrialDraw(
        channel=sample_channel(config, stream(master_seed, trial, "channel")),
        phases=sample_phases(config, layout, stream(master_seed, trial, "phases"), mode),
        symbols=sample_symbols(config, layout, stream(master_seed, trial, "symbols")),
        noise=sample_noise(config, layout, stream(master_seed, trial, "noise")),
    )


def draw_trials(config: SystemConfig, master_seed: int, trials, mode: Mode | str | None = None) -> TrialDraw:
    """Stack the draws of the given trial ids along a leading axis."""
    draws = [draw_trial(config, master_seed, j, mode) for j in trials]
    mode = draws[0].phases.mode
    return TrialDraw(
        channel=ChannelRealization(np.stack([d.channel.taps for d in draws]), config),
        phases=PhaseTrajectories(
            theta=np.stack([d.phases.theta for d in draws]),
            phi=np.stack([d.phases.phi for d in draws]),
            mode=mode,
        ),
        symbols=np.stack([d.symbols for d in draws]),
        noise=np.stack([d.noise for d in draws]),
    )
