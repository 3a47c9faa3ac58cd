"""Performance metrics for derotated payload symbols."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcinv, logsumexp

from .cpr import QUARTER, fast_decision
from .errors import ConfigurationError, DomainError
from .shaping import Constellation, ShapedPrior

S_FLOOR = 1e-30


@dataclass
class MetricsRecord:
    mi_bits: float
    ser: float
    ber: float
    q_db: float
    rms_phase_error: float
    cycle_slips: int
    snr_eff_db: float


def mutual_information(derotated, tx_indices, prior: ShapedPrior, constellation: Constellation) -> float:
    """Symbol-wise mismatched-decoding MI estimate in bits/symbol.

    The auxiliary channel is a memoryless circular Gaussian whose variance is
    the mean squared residual between ``derotated`` and the sent points.
    """
    y = np.asarray(derotated, dtype=complex)
    tx = np.asarray(tx_indices)
    if len(y) == 0:
        raise ConfigurationError("mutual_information needs a nonempty input")
    if len(y) != len(tx):
        raise ConfigurationError("derotated and tx_indices differ in length")
    pts = constellation.points
    x = pts[tx]
    s = max(float(np.mean(np.abs(y - x) ** 2)), S_FLOOR)
    logp = prior.log_probabilities
    total = 0.0
    step = 16384
    for a in range(0, len(y), step):
        yy = y[a : a + step]
        d = np.abs(yy[:, None] - pts[None, :]) ** 2
        num = -np.abs(yy - x[a : a + step]) ** 2 / s
        den = logsumexp(logp[None, :] - d / s, axis=1)
        total += float(np.sum(num - den))
    mi = total / len(y) / np.log(2)
    return float(np.clip(mi, 0.0, np.log2(constellation.order)))


def error_rates(derotated, tx_indices, prior: ShapedPrior, constellation: Constellation, sigma2: float):
    """(SER, BER) of MAP hard decisions; BER counts Gray-label bit differences."""
    if sigma2 <= 0:
        raise ConfigurationError("sigma2 must be positive")
    tx = np.asarray(tx_indices)
    dec = fast_decision(derotated, constellation, prior, sigma2)
    ser = float(np.mean(dec != tx))
    bits = constellation.label_bits()
    nbits = constellation.bits_per_symbol
    ber = float(np.count_nonzero(bits[dec] != bits[tx]) / (nbits * len(tx)))
    return ser, ber


def q_factor_from_ber(ber: float) -> float:
    """Pre-FEC Q-factor in dB: 20 log10(sqrt(2) erfcinv(2 ber))."""
    if not 0 < ber < 0.5:
        raise DomainError(f"Q-factor undefined for ber={ber}")
    return float(20 * np.log10(np.sqrt(2) * erfcinv(2 * ber)))


def ber_from_q_factor(q_db: float) -> float:
    return float(0.5 * erfc(10 ** (q_db / 20) / np.sqrt(2)))


def phase_error_stats(theta_est, theta_true):
    """(RMS of the error folded into [-pi/4, pi/4), number of basin changes).

    The basin index is taken modulo 4, so a 2*pi jump in an unwrapped
    trajectory is not counted as a slip.
    """
    theta_est = np.asarray(theta_est, dtype=float)
    theta_true = np.asarray(theta_true, dtype=float)
    if theta_est.shape != theta_true.shape:
        raise ConfigurationError("theta_est and theta_true differ in length")
    d = theta_est - theta_true
    basin = np.round(d / QUARTER)
    err = d - basin * QUARTER
    rms = float(np.sqrt(np.mean(err**2))) if len(d) else 0.0
    b4 = np.mod(basin, 4)
    slips = int(np.count_nonzero(np.diff(b4) != 0))
    return rms, slips


def effective_snr_db(derotated, tx_symbols) -> float:
    x = np.asarray(tx_symbols, dtype=complex)
    err = float(np.mean(np.abs(np.asarray(derotated) - x) ** 2))
    sig = float(np.mean(np.abs(x) ** 2))
    if err == 0:
        return float("inf")
    return float(10 * np.log10(sig / err))
