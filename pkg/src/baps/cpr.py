"""
Carrier phase recovery: blind phase search (BPS) in plain and shaping-aware
form, plus Bayesian phase search (BaPS) with a pilot-initialized von Mises
phase prior.

All estimators operate on one payload block at a time; the ``*_frame``
drivers walk a pilot-interleaved frame, re-estimating noise and phase-noise
parameters from every pilot block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import i0e

from . import _kernels
from .errors import ConfigurationError
from .shaping import Constellation, Frame, ShapedPrior

ALGORITHMS = ("bps", "ps_bps", "baps")
DELTA2_FLOOR = 1e-9
SIGMA2_FLOOR = 1e-12
QUARTER = np.pi / 2


@dataclass(frozen=True)
class CprConfig:
    algorithm: str = "baps"
    half_window: int = 14
    n_test_phases: Optional[int] = None
    phase_range: Optional[str] = None
    pilot_window: int = 16
    reanchor: bool = False
    sigma2_source: str = "estimated"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.half_window < 0:
            raise ConfigurationError("half_window must be >= 0")
        if self.n_test_phases is not None and self.n_test_phases < 1:
            raise ConfigurationError("n_test_phases must be >= 1")
        if self.pilot_window < 1:
            raise ConfigurationError("pilot_window must be >= 1")
        if self.phase_range not in (None, "quarter", "full"):
            raise ConfigurationError("phase_range must be 'quarter' or 'full'")
        if self.sigma2_source not in ("estimated", "true_value"):
            raise ConfigurationError("sigma2_source must be 'estimated' or 'true_value'")

    @property
    def n_phases(self) -> int:
        if self.n_test_phases is not None:
            return self.n_test_phases
        return 240 if self.algorithm == "baps" else 60

    @property
    def full_circle(self) -> bool:
        if self.phase_range is not None:
            return self.phase_range == "full"
        return self.algorithm == "baps"

    def test_phases(self) -> np.ndarray:
        """``b*(pi/2)/B`` over [0, pi/2), or ``-pi + b*2pi/B`` over [-pi, pi)."""
        b = np.arange(self.n_phases, dtype=float)
        if self.full_circle:
            return -np.pi + b * (2 * np.pi / self.n_phases)
        return b * (QUARTER / self.n_phases)


@dataclass(frozen=True)
class VonMisesPrior:
    """Phase prior p(theta) = exp(Re[z e^{-j theta}]) / (2 pi I0(|z|))."""

    z: complex

    @property
    def concentration(self) -> float:
        return abs(self.z)

    @property
    def mean(self) -> float:
        return float(np.angle(self.z))

    def log_density(self, theta):
        kappa = abs(self.z)
        # log I0(k) = log(i0e(k)) + k, stable for large k
        log_norm = math.log(2 * math.pi) + math.log(i0e(kappa)) + kappa
        theta = np.asarray(theta, dtype=float)
        return self.z.real * np.cos(theta) + self.z.imag * np.sin(theta) - log_norm

    def density(self, theta):
        return np.exp(self.log_density(theta))


@dataclass
class PilotEstimates:
    theta_hat: np.ndarray
    sigma2_hat: float
    delta2_hat: float
    z_init: complex


@dataclass
class CprResult:
    theta_est: np.ndarray
    derotated: np.ndarray
    decisions: np.ndarray
    phase_index: np.ndarray
    z_magnitude: np.ndarray
    block_params: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# decisions
# ---------------------------------------------------------------------------


def map_decision(y_rot, prior: ShapedPrior, constellation: Constellation, sigma2: float):
    """Exhaustive argmax of ``-|y - x|^2 / sigma2 + log p(x)`` over all points.

    Accepts a scalar or an array of already-derotated samples; ties go to the
    lowest constellation index.
    """
    if sigma2 <= 0:
        raise ConfigurationError("sigma2 must be positive")
    y = np.asarray(y_rot, dtype=complex)
    pts = constellation.points
    logp = prior.log_probabilities
    flat = y.reshape(-1)
    out = np.empty(flat.shape, dtype=np.int64)
    step = 8192
    for s in range(0, len(flat), step):
        yy = flat[s : s + step, None]
        dr = yy.real - pts.real
        dq = yy.imag - pts.imag
        metric = -(dr * dr + dq * dq) / sigma2 + logp
        out[s : s + step] = np.argmax(metric, axis=1)
    if y.ndim == 0:
        return int(out[0])
    return out.reshape(y.shape)


def decision_gain(constellation: Constellation, prior: Optional[ShapedPrior], sigma2: float) -> Optional[float]:
    """Sample-to-grid gain that turns the MB MAP rule into nearest-neighbour slicing.

    With log p(x) = -lam |x/scale|^2 + c, the MAP metric is maximized by the
    grid point closest to ``y / (scale * (1 + lam * sigma2 / scale^2))``.
    Returns None when the prior is not Maxwell-Boltzmann.
    """
    if prior is None:
        return 1.0 / constellation.scale
    if prior.lam is None:
        return None
    a = prior.lam * sigma2 / constellation.scale**2
    return 1.0 / (constellation.scale * (1.0 + a))


def fast_decision(y_rot, constellation: Constellation, prior: Optional[ShapedPrior], sigma2: float) -> np.ndarray:
    """Vectorized decisions; nearest neighbour when ``prior`` is None."""
    gain = decision_gain(constellation, prior, sigma2)
    y = np.asarray(y_rot, dtype=complex)
    if gain is None:
        return map_decision(y, prior, constellation, sigma2)
    side = float(constellation.side)
    ir = _kernels._slice_level(y.real * gain, side)
    iq = _kernels._slice_level(y.imag * gain, side)
    return (ir * constellation.side + iq).astype(np.int64)


def _exhaustive_table(y, phases, constellation, prior, sigma2):
    cos_b, sin_b = np.cos(phases), np.sin(phases)
    pts = constellation.points
    logp = prior.log_probabilities
    out = np.empty((len(y), len(phases)))
    for b in range(len(phases)):
        r = y.real * cos_b[b] + y.imag * sin_b[b]
        q = y.imag * cos_b[b] - y.real * sin_b[b]
        dr = r[:, None] - pts.real
        dq = q[:, None] - pts.imag
        d = dr * dr + dq * dq
        idx = np.argmax(-d / sigma2 + logp, axis=1)
        out[:, b] = d[np.arange(len(y)), idx]
    return out


def decision_distance_table(y, phases, constellation, prior, sigma2):
    """``D[n, b]``: squared distance of the rotated sample to its decision."""
    y = np.asarray(y, dtype=complex)
    gain = decision_gain(constellation, prior, sigma2)
    if gain is None:
        return _exhaustive_table(y, phases, constellation, prior, sigma2)
    return _kernels.distance_table(
        y.real, y.imag, np.cos(phases), np.sin(phases), gain, constellation.scale, constellation.side
    )


def _unwrap_from(raw: np.ndarray, period: float, ref: Optional[float]) -> np.ndarray:
    """Pick the period-congruent representative closest to the previous value."""
    if len(raw) == 0:
        return raw.copy()
    if ref is None:
        return np.unwrap(raw, period=period)
    return np.unwrap(np.concatenate(([ref], raw)), period=period)[1:]


# ---------------------------------------------------------------------------
# blind phase search
# ---------------------------------------------------------------------------


def _bps_core(received, constellation, prior, sigma2, config, prev):
    received = np.asarray(received, dtype=complex)
    if len(received) == 0:
        raise ConfigurationError("empty received block")
    phases = config.test_phases()
    table = decision_distance_table(received, phases, constellation, prior, sigma2)
    # z = 0 and unit divisor reduce the objective to -sum, i.e. argmin of the window sum
    best, _, _ = _kernels.window_search(
        table, config.half_window, 1.0, 0j, 0.0, False, np.cos(phases), np.sin(phases)
    )
    period = 2 * np.pi if config.full_circle else QUARTER
    theta = _unwrap_from(phases[best], period, prev)
    derot = derotate(received, theta)
    decisions = fast_decision(derot, constellation, prior, max(sigma2, SIGMA2_FLOOR))
    return CprResult(theta, derot, decisions, best, np.zeros(len(received)))


def bps(received, constellation: Constellation, config: CprConfig, prev: Optional[float] = None) -> CprResult:
    """Blind phase search with nearest-neighbour decisions.

    Raw estimates lie on the [0, pi/2) test grid and are unwrapped modulo
    pi/2, continuing from ``prev`` when given. The absolute pi/2 ambiguity is
    left in place.
    """
    return _bps_core(received, constellation, None, 1.0, config, prev)


def ps_bps(
    received,
    constellation: Constellation,
    prior: ShapedPrior,
    sigma2: float,
    config: CprConfig,
    prev: Optional[float] = None,
) -> CprResult:
    """BPS with prior-weighted (MAP) decisions; window metric stays Euclidean."""
    return _bps_core(received, constellation, prior, max(sigma2, SIGMA2_FLOOR), config, prev)


# ---------------------------------------------------------------------------
# pilot-based estimation and the von Mises prior
# ---------------------------------------------------------------------------


def pilot_ml_phase(pilot_rx, pilot_tx, window: int) -> np.ndarray:
    """Windowed ML phase per pilot: angle of sum(y_n conj(x_n)) over p +- window//2."""
    if window < 1:
        raise ConfigurationError("pilot window must be >= 1")
    corr = np.asarray(pilot_rx, dtype=complex) * np.conj(np.asarray(pilot_tx, dtype=complex))
    n = len(corr)
    half = window // 2
    csum = np.concatenate(([0j], np.cumsum(corr)))
    p = np.arange(n)
    lo = np.maximum(0, p - half)
    hi = np.minimum(n - 1, p + half)
    return np.unwrap(np.angle(csum[hi + 1] - csum[lo]))


def estimate_params(pilot_rx, pilot_tx, theta_hat) -> PilotEstimates:
    pilot_rx = np.asarray(pilot_rx, dtype=complex)
    pilot_tx = np.asarray(pilot_tx, dtype=complex)
    theta_hat = np.asarray(theta_hat, dtype=float)
    n = len(theta_hat)
    if n < 2:
        raise ConfigurationError("parameter estimation needs at least 2 pilots")
    resid = pilot_rx - pilot_tx * np.exp(1j * theta_hat)
    sigma2 = float(np.mean(np.abs(resid) ** 2))
    delta2 = float(np.sum(np.diff(theta_hat) ** 2) / (n - 1))
    delta2 = max(delta2, DELTA2_FLOOR)
    z = np.exp(1j * theta_hat[-1]) / delta2
    return PilotEstimates(theta_hat, sigma2, delta2, complex(z))


def von_mises_predict(prior: VonMisesPrior, delta2: float) -> VonMisesPrior:
    """One-step prediction: z' = z / (1 + delta2 |z|)."""
    if delta2 < 0:
        raise ConfigurationError("delta2 must be nonnegative")
    return VonMisesPrior(prior.z / (1.0 + delta2 * abs(prior.z)))


# ---------------------------------------------------------------------------
# Bayesian phase search
# ---------------------------------------------------------------------------


def baps_block(
    received,
    constellation: Constellation,
    prior: ShapedPrior,
    config: CprConfig,
    sigma2: float,
    delta2: float,
    z: complex,
    prev: Optional[float] = None,
) -> CprResult:
    """BaPS over one payload block, starting from prior parameter ``z``.

    ``prev`` is the unwrapped phase the output continues from (normally the
    pilot anchor); without it the first estimate stays on the test grid.
    """
    received = np.asarray(received, dtype=complex)
    if len(received) == 0:
        raise ConfigurationError("empty received block")
    sigma2 = max(float(sigma2), SIGMA2_FLOOR)
    phases = config.test_phases()
    table = decision_distance_table(received, phases, constellation, prior, sigma2)
    best, zmag, _ = _kernels.window_search(
        table, config.half_window, sigma2, z, delta2, config.reanchor, np.cos(phases), np.sin(phases)
    )
    period = 2 * np.pi if config.full_circle else QUARTER
    theta = _unwrap_from(phases[best], period, prev)
    derot = derotate(received, theta)
    decisions = fast_decision(derot, constellation, prior, sigma2)
    return CprResult(theta, derot, decisions, best, zmag)


def _block_sigma2(est: PilotEstimates, config: CprConfig, sigma2_true):
    if config.sigma2_source == "true_value":
        if sigma2_true is None:
            raise ConfigurationError("sigma2_source='true_value' needs sigma2_true")
        return float(sigma2_true)
    return est.sigma2_hat


def _concat(parts: list[CprResult], params: list[PilotEstimates]) -> CprResult:
    return CprResult(
        np.concatenate([p.theta_est for p in parts]),
        np.concatenate([p.derotated for p in parts]),
        np.concatenate([p.decisions for p in parts]),
        np.concatenate([p.phase_index for p in parts]),
        np.concatenate([p.z_magnitude for p in parts]),
        params,
    )


def recover_frame(
    received,
    frame: Frame,
    constellation: Constellation,
    prior: ShapedPrior,
    config: CprConfig,
    sigma2_true: Optional[float] = None,
) -> CprResult:
    """Run the configured estimator over every payload block of ``frame``.

    Pilot blocks feed the per-block parameter estimates (used for the BaPS
    prior and for the decision noise variance). Output covers payload
    positions only, in frame order.
    """
    received = np.asarray(received, dtype=complex)
    if len(received) != len(frame.symbols):
        raise ConfigurationError("received length does not match frame length")
    blocks = frame.blocks()
    if not blocks or not frame.pilot_mask[0]:
        raise ConfigurationError("frame must start with a pilot block")
    parts, params = [], []
    prev = None
    for p_sl, d_sl in blocks:
        prx, ptx = received[p_sl], frame.symbols[p_sl]
        theta_p = pilot_ml_phase(prx, ptx, config.pilot_window)
        if prev is not None:
            theta_p = theta_p + 2 * np.pi * np.round((prev - theta_p[0]) / (2 * np.pi))
        est = estimate_params(prx, ptx, theta_p)
        params.append(est)
        if d_sl.stop <= d_sl.start:
            continue
        sigma2 = _block_sigma2(est, config, sigma2_true)
        y = received[d_sl]
        if config.algorithm == "baps":
            res = baps_block(y, constellation, prior, config, sigma2, est.delta2_hat, est.z_init, theta_p[-1])
        elif config.algorithm == "ps_bps":
            res = ps_bps(y, constellation, prior, sigma2, config, prev)
        else:
            res = bps(y, constellation, config, prev)
        parts.append(res)
        prev = float(res.theta_est[-1])
    return _concat(parts, params)


def baps(
    received,
    frame: Frame,
    constellation: Constellation,
    prior: ShapedPrior,
    config: CprConfig,
    sigma2_true: Optional[float] = None,
) -> CprResult:
    if config.algorithm != "baps":
        config = CprConfig(**{**config.__dict__, "algorithm": "baps"})
    return recover_frame(received, frame, constellation, prior, config, sigma2_true)


# ---------------------------------------------------------------------------
# post-processing
# ---------------------------------------------------------------------------


def supervised_cycle_slip_correct(theta_est, theta_true) -> np.ndarray:
    """Genie removal of the pi/2-multiple offset, symbol by symbol."""
    theta_est = np.asarray(theta_est, dtype=float)
    theta_true = np.asarray(theta_true, dtype=float)
    if theta_est.shape != theta_true.shape:
        raise ConfigurationError("theta_est and theta_true differ in length")
    return theta_est - np.round((theta_est - theta_true) / QUARTER) * QUARTER


def derotate(received, theta_est) -> np.ndarray:
    received = np.asarray(received, dtype=complex)
    theta_est = np.asarray(theta_est, dtype=float)
    if received.shape != theta_est.shape:
        raise ConfigurationError("received and theta_est differ in length")
    return received * np.exp(-1j * theta_est)
