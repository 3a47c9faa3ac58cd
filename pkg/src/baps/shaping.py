"""
Square QAM constellations, Maxwell-Boltzmann priors and pilot framing.

Functions
---------
build_qam :
    Odd-integer-grid square QAM with per-dimension Gray labels.
mb_prior :
    Maxwell-Boltzmann prior p(x) ~ exp(-lambda |x|^2) on the unnormalized grid.
lambda_for_rate :
    Inverts the amplitude-entropy map by bisection.
normalize :
    Rescales a constellation to unit mean energy under a prior.
sample_source :
    I.i.d. symbol draws (ideal distribution matcher).
insert_pilots :
    Interleaves pilot blocks ahead of every payload block.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DomainError

SUPPORTED_ORDERS = (64, 256)


def _gray(n: int) -> int:
    return n ^ (n >> 1)


@dataclass(frozen=True)
class Constellation:
    """Square QAM on the odd-integer grid times ``scale``.

    Point ``i`` sits at level index ``(i // side, i % side)`` for the
    (in-phase, quadrature) components; levels ascend from ``-(side-1)``.
    """

    order: int
    grid: np.ndarray = field(repr=False)
    labels: tuple = field(repr=False)
    scale: float = 1.0

    @property
    def side(self) -> int:
        return int(round(np.sqrt(self.order)))

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    @property
    def points(self) -> np.ndarray:
        return self.grid * self.scale

    @property
    def amplitudes(self) -> np.ndarray:
        """Positive per-dimension amplitudes {1, 3, ..., side-1}."""
        return np.arange(1, self.side, 2, dtype=float)

    def label_bits(self) -> np.ndarray:
        """Label matrix of shape (order, bits_per_symbol), 0/1 entries."""
        m = self.bits_per_symbol
        return np.array([[int(c) for c in lab] for lab in self.labels], dtype=np.uint8).reshape(-1, m)

    def corner_points(self) -> np.ndarray:
        """The four outermost points, ordered (+,+), (-,+), (-,-), (+,-)."""
        a = (self.side - 1) * self.scale
        return np.array([a + 1j * a, -a + 1j * a, -a - 1j * a, a - 1j * a])


@dataclass(frozen=True)
class ShapedPrior:
    """Per-point probabilities.

    ``lam`` is the Maxwell-Boltzmann parameter on the unnormalized grid, or
    None for an arbitrary prior (decisions then fall back to exhaustive search).
    """

    probabilities: np.ndarray
    lam: Optional[float] = None

    @property
    def log_probabilities(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.probabilities)

    def entropy(self) -> float:
        """Symbol entropy H(X) in bits."""
        p = self.probabilities[self.probabilities > 0]
        return float(-(p * np.log2(p)).sum())


def build_qam(order: int) -> Constellation:
    if order not in SUPPORTED_ORDERS:
        raise ConfigurationError(f"unsupported order {order}; expected one of {SUPPORTED_ORDERS}")
    side = int(round(np.sqrt(order)))
    nbits = int(np.log2(side))
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    i_re, i_im = np.divmod(np.arange(order), side)
    grid = levels[i_re] + 1j * levels[i_im]
    labels = tuple(
        format(_gray(int(a)), f"0{nbits}b") + format(_gray(int(b)), f"0{nbits}b")
        for a, b in zip(i_re, i_im)
    )
    return Constellation(order=order, scale=1.0, grid=grid, labels=labels)


def uniform_prior(constellation: Constellation) -> ShapedPrior:
    return mb_prior(constellation, 0.0)


def mb_prior(constellation: Constellation, lam: float) -> ShapedPrior:
    if lam < 0:
        raise ConfigurationError(f"lambda must be nonnegative, got {lam}")
    energy = np.abs(constellation.grid) ** 2
    # subtract the minimum energy so large lambda does not underflow everything
    w = np.exp(-lam * (energy - energy.min()))
    return ShapedPrior(probabilities=w / w.sum(), lam=float(lam))


def amplitude_distribution(constellation: Constellation, lam: float) -> np.ndarray:
    """Per-dimension amplitude probabilities for an MB prior."""
    a = constellation.amplitudes
    w = np.exp(-lam * (a**2 - a[0] ** 2))
    return w / w.sum()


def amplitude_entropy(constellation: Constellation, lam: float) -> float:
    """H(A) in bits per amplitude."""
    p = amplitude_distribution(constellation, lam)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def lambda_for_rate(constellation: Constellation, target: float, tol: float = 1e-9) -> float:
    """Smallest-error lambda whose amplitude entropy equals ``target`` bits."""
    h_max = np.log2(len(constellation.amplitudes))
    if not 0 < target <= h_max:
        raise DomainError(f"target {target} bits/amplitude outside (0, {h_max}]")
    if target >= h_max - tol:
        return 0.0
    lo, hi = 0.0, 0.01
    while amplitude_entropy(constellation, hi) > target:
        hi *= 2
        if hi > 1e6:
            raise DomainError(f"target {target} bits/amplitude not reachable")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        h = amplitude_entropy(constellation, mid)
        if abs(h - target) < tol:
            return mid
        if h > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def normalize(constellation: Constellation, prior: ShapedPrior) -> Constellation:
    if len(prior.probabilities) != constellation.order:
        raise ConfigurationError("prior length does not match constellation order")
    energy = float(np.sum(prior.probabilities * np.abs(constellation.grid) ** 2))
    return replace(constellation, scale=1.0 / np.sqrt(energy))


def sample_source(prior: ShapedPrior, count: int, rng: np.random.Generator) -> np.ndarray:
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    cdf = np.cumsum(prior.probabilities)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(count), side="right")
    return np.minimum(idx, len(cdf) - 1)


@dataclass
class Frame:
    """Transmit sequence: ``[pilots | payload | pilots | payload ...]``."""

    symbols: np.ndarray
    pilot_mask: np.ndarray
    pilot_block_len: int
    payload_block_len: int
    source_indices: Optional[np.ndarray] = None

    @property
    def payload_mask(self) -> np.ndarray:
        return ~self.pilot_mask

    @property
    def payload(self) -> np.ndarray:
        return self.symbols[~self.pilot_mask]

    def blocks(self) -> list[tuple[slice, slice]]:
        """(pilot slice, payload slice) pairs in frame order."""
        out = []
        n = len(self.symbols)
        start = 0
        while start < n:
            p_end = start + self.pilot_block_len
            d_end = min(p_end + self.payload_block_len, n)
            out.append((slice(start, p_end), slice(p_end, d_end)))
            start = d_end
        return out


def insert_pilots(
    payload: np.ndarray,
    n_pilots: int,
    period: int,
    pilot_symbols: np.ndarray,
    source_indices: Optional[np.ndarray] = None,
) -> Frame:
    if n_pilots < 2:
        raise ConfigurationError(f"need at least 2 pilots per block, got {n_pilots}")
    if period < 1:
        raise ConfigurationError(f"pilot period must be >= 1, got {period}")
    payload = np.asarray(payload, dtype=complex)
    pilot_symbols = np.asarray(pilot_symbols, dtype=complex)
    n_blocks = -(-len(payload) // period)
    total = len(payload) + n_blocks * n_pilots
    mask = np.zeros(total, dtype=bool)
    for b in range(n_blocks):
        s = b * (n_pilots + period)
        mask[s : s + n_pilots] = True
    symbols = np.empty(total, dtype=complex)
    n_p_total = int(mask.sum())
    symbols[mask] = pilot_symbols[np.arange(n_p_total) % len(pilot_symbols)]
    symbols[~mask] = payload
    return Frame(symbols, mask, n_pilots, period, source_indices)
