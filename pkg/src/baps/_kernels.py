"""
Hot loops of the phase search, in numba and plain numpy.

Both backends evaluate the same floating-point expressions in the same
order, so they return bitwise-identical results. Set ``BAPS_DISABLE_NUMBA=1``
to force the numpy path (also used automatically when numba is missing).

distance_table :
    Squared distance from each rotated sample to its decision, per test phase.
window_search :
    Sliding-window objective maximization with the von Mises prior recursion.
"""

import math
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def numba_enabled() -> bool:
    flag = os.environ.get("BAPS_DISABLE_NUMBA", "").strip().lower()
    return HAVE_NUMBA and flag not in ("1", "true", "yes", "on")


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------


def _slice_level(v, side):
    # ties round toward the lower level index
    t = (v + (side - 1.0)) * 0.5
    i = np.ceil(t - 0.5)
    i = np.minimum(np.maximum(i, 0.0), side - 1.0)
    return i


def distance_table_numpy(yr, yi, cos_b, sin_b, gain, scale, side):
    r = yr[:, None] * cos_b[None, :] + yi[:, None] * sin_b[None, :]
    q = yi[:, None] * cos_b[None, :] - yr[:, None] * sin_b[None, :]
    ir = _slice_level(r * gain, side)
    iq = _slice_level(q * gain, side)
    xr = (2.0 * ir - (side - 1.0)) * scale
    xq = (2.0 * iq - (side - 1.0)) * scale
    dr = r - xr
    dq = q - xq
    return dr * dr + dq * dq


def window_sums_numpy(table, half_window):
    n = table.shape[0]
    acc = np.zeros_like(table)
    for off in range(-half_window, half_window + 1):
        lo = max(0, -off)
        hi = min(n, n - off)
        if lo < hi:
            acc[lo:hi] += table[lo + off : hi + off]
    return acc


def window_search_numpy(table, half_window, sigma2, zr, zi, delta2, reanchor, cos_b, sin_b):
    n = table.shape[0]
    sums = window_sums_numpy(table, half_window)
    best = np.empty(n, dtype=np.int64)
    zmag = np.empty(n)
    if not reanchor:
        zr_k = np.empty(n)
        zi_k = np.empty(n)
        for k in range(n):
            zr_k[k] = zr
            zi_k[k] = zi
            m = math.sqrt(zr * zr + zi * zi)
            zmag[k] = m
            denom = 1.0 + delta2 * m
            zr = zr / denom
            zi = zi / denom
        obj = (zr_k[:, None] * cos_b[None, :] + zi_k[:, None] * sin_b[None, :]) - sums / sigma2
        best[:] = np.argmax(obj, axis=1)
        return best, zmag, zr, zi
    for k in range(n):
        obj = (zr * cos_b + zi * sin_b) - sums[k] / sigma2
        b = int(np.argmax(obj))
        best[k] = b
        m = math.sqrt(zr * zr + zi * zi)
        zmag[k] = m
        m = m / (1.0 + delta2 * m)
        zr = m * cos_b[b]
        zi = m * sin_b[b]
    return best, zmag, zr, zi


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _slice_level_nb(v, side):
        t = (v + (side - 1.0)) * 0.5
        i = math.ceil(t - 0.5)
        if i < 0.0:
            i = 0.0
        if i > side - 1.0:
            i = side - 1.0
        return i

    @numba.njit(cache=True)
    def distance_table_numba(yr, yi, cos_b, sin_b, gain, scale, side):
        n = yr.shape[0]
        nb = cos_b.shape[0]
        out = np.empty((n, nb))
        for k in range(n):
            a = yr[k]
            c = yi[k]
            for b in range(nb):
                r = a * cos_b[b] + c * sin_b[b]
                q = c * cos_b[b] - a * sin_b[b]
                ir = _slice_level_nb(r * gain, side)
                iq = _slice_level_nb(q * gain, side)
                dr = r - (2.0 * ir - (side - 1.0)) * scale
                dq = q - (2.0 * iq - (side - 1.0)) * scale
                out[k, b] = dr * dr + dq * dq
        return out

    @numba.njit(cache=True)
    def window_search_numba(table, half_window, sigma2, zr, zi, delta2, reanchor, cos_b, sin_b):
        n, nb = table.shape
        best = np.empty(n, dtype=np.int64)
        zmag = np.empty(n)
        acc = np.empty(nb)
        for k in range(n):
            lo = max(0, k - half_window)
            hi = min(n - 1, k + half_window)
            acc[:] = 0.0
            for j in range(lo, hi + 1):
                for b in range(nb):
                    acc[b] += table[j, b]
            arg = 0
            top = -np.inf
            for b in range(nb):
                v = (zr * cos_b[b] + zi * sin_b[b]) - acc[b] / sigma2
                if v > top:
                    top = v
                    arg = b
            best[k] = arg
            m = math.sqrt(zr * zr + zi * zi)
            zmag[k] = m
            if reanchor:
                m = m / (1.0 + delta2 * m)
                zr = m * cos_b[arg]
                zi = m * sin_b[arg]
            else:
                denom = 1.0 + delta2 * m
                zr = zr / denom
                zi = zi / denom
        return best, zmag, zr, zi


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def distance_table(yr, yi, cos_b, sin_b, gain, scale, side, use_numba=None):
    """Table ``D[n, b] = |y_n e^{-j phi_b} - xhat_{n,b}|^2``.

    ``xhat`` is the nearest grid point to ``y_n e^{-j phi_b} * gain``, scaled
    back by ``scale``; ``gain`` folds in the MB shrink of the MAP decision.
    """
    if use_numba is None:
        use_numba = numba_enabled()
    args = (
        np.ascontiguousarray(yr, dtype=np.float64),
        np.ascontiguousarray(yi, dtype=np.float64),
        np.ascontiguousarray(cos_b, dtype=np.float64),
        np.ascontiguousarray(sin_b, dtype=np.float64),
        float(gain),
        float(scale),
        float(side),
    )
    if use_numba:
        return distance_table_numba(*args)
    return distance_table_numpy(*args)


def window_search(table, half_window, sigma2, z, delta2, reanchor, cos_b, sin_b, use_numba=None):
    """Per-symbol argmax of ``Re[z_k e^{-j phi_b}] - sum_window D / sigma2``.

    Returns (best test-phase index, |z_k| used at each k, final z).
    """
    if use_numba is None:
        use_numba = numba_enabled()
    fn = window_search_numba if use_numba else window_search_numpy
    best, zmag, zr, zi = fn(
        np.ascontiguousarray(table, dtype=np.float64),
        int(half_window),
        float(sigma2),
        float(np.real(z)),
        float(np.imag(z)),
        float(delta2),
        bool(reanchor),
        np.ascontiguousarray(cos_b, dtype=np.float64),
        np.ascontiguousarray(sin_b, dtype=np.float64),
    )
    return best, zmag, complex(zr, zi)
