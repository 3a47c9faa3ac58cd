"""Compare the numba and numpy kernel backends on BaPS-sized inputs.

    python benchmarks/bench_kernels.py [--symbols 2000] [--phases 240] [--half-window 14] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from baps import _kernels
from baps.cpr import decision_gain
from baps.shaping import build_qam, mb_prior, normalize, sample_source


def make_inputs(n, nb, lam=0.0605, sigma2=10 ** (-1.2), seed=0):
    rng = np.random.default_rng(seed)
    base = build_qam(64)
    prior = mb_prior(base, lam)
    c = normalize(base, prior)
    x = c.points[sample_source(prior, n, rng)]
    y = x * np.exp(0.3j) + np.sqrt(sigma2 / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    phases = -np.pi + np.arange(nb) * (2 * np.pi / nb)
    return y, np.cos(phases), np.sin(phases), decision_gain(c, prior, sigma2), c, sigma2


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--symbols", type=int, default=2000)
    ap.add_argument("--phases", type=int, default=240)
    ap.add_argument("--half-window", type=int, default=14)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed")

    y, cb, sb, gain, c, s2 = make_inputs(args.symbols, args.phases)
    table_args = (y.real, y.imag, cb, sb, gain, c.scale, c.side)
    table = _kernels.distance_table(*table_args, use_numba=False)
    z = 1e3 * np.exp(0.3j)

    cases = {
        "distance_table": lambda nb: _kernels.distance_table(*table_args, use_numba=nb),
        "window_search": lambda nb: _kernels.window_search(
            table, args.half_window, s2, z, 2.5e-5, False, cb, sb, use_numba=nb),
        "window_search (reanchor)": lambda nb: _kernels.window_search(
            table, args.half_window, s2, z, 2.5e-5, True, cb, sb, use_numba=nb),
    }
    print(f"{args.symbols} symbols, B={args.phases}, N={args.half_window}, best of {args.repeat}")
    print(f"{'kernel':<26}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}  identical")
    for name, fn in cases.items():
        a, b = fn(True), fn(False)  # warm-up and equality check
        if isinstance(a, np.ndarray):
            a, b = (a,), (b,)
        same = all(np.array_equal(p, q) for p, q in zip(a, b))
        t_nb = min(timeit.repeat(lambda: fn(True), number=1, repeat=args.repeat)) * 1e3
        t_np = min(timeit.repeat(lambda: fn(False), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<26}{t_np:>12.2f}{t_nb:>12.2f}{t_np / t_nb:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
