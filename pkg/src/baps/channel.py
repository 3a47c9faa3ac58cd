"""AWGN channel with Wiener carrier phase noise: y_k = x_k exp(j theta_k) + n_k."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: float
    linewidth_hz: float = 0.0
    baud_hz: float = 50e9
    delta2_override: Optional[float] = None

    @property
    def sigma2(self) -> float:
        """Total complex noise variance for unit signal power."""
        return float(10.0 ** (-self.snr_db / 10.0))

    @property
    def delta2(self) -> float:
        if self.delta2_override is not None:
            if self.delta2_override < 0:
                raise ConfigurationError("delta2_override must be nonnegative")
            return float(self.delta2_override)
        return delta2_from_linewidth(self.linewidth_hz, self.baud_hz)


@dataclass
class ChannelOutput:
    received: np.ndarray
    true_phase: np.ndarray
    sigma2_true: float
    delta2_true: float


def delta2_from_linewidth(linewidth_hz: float, baud_hz: float) -> float:
    """Per-symbol phase increment variance 2*pi*f_w/R_s (rad^2).

    ``linewidth_hz`` is the combined transmitter + receiver linewidth.
    """
    if baud_hz <= 0:
        raise ConfigurationError(f"baud rate must be positive, got {baud_hz}")
    if linewidth_hz < 0:
        raise ConfigurationError(f"linewidth must be nonnegative, got {linewidth_hz}")
    return 2.0 * np.pi * linewidth_hz / baud_hz


def wiener_phase(count: int, delta2: float, theta0: float, rng: np.random.Generator) -> np.ndarray:
    """Unwrapped random walk theta_k = theta_{k-1} + v_k, starting from theta0."""
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    if delta2 < 0:
        raise ConfigurationError(f"delta2 must be nonnegative, got {delta2}")
    steps = rng.standard_normal(count) * np.sqrt(delta2)
    return theta0 + np.cumsum(steps)


def apply_channel(
    symbols: np.ndarray,
    config: ChannelConfig,
    phase_rng: np.random.Generator,
    noise_rng: np.random.Generator,
    theta0: Optional[float] = None,
) -> ChannelOutput:
    """Rotate ``symbols`` by a Wiener phase and add circular Gaussian noise.

    If ``theta0`` is None it is drawn uniformly from [-pi, pi) on ``phase_rng``
    before the increments.
    """
    symbols = np.asarray(symbols, dtype=complex)
    n = len(symbols)
    if theta0 is None:
        theta0 = float(phase_rng.uniform(-np.pi, np.pi))
    theta = wiener_phase(n, config.delta2, theta0, phase_rng)
    sigma2 = config.sigma2
    noise = noise_rng.standard_normal((2, n)) * np.sqrt(sigma2 / 2.0)
    received = symbols * np.exp(1j * theta) + (noise[0] + 1j * noise[1])
    return ChannelOutput(received, theta, sigma2, config.delta2)
