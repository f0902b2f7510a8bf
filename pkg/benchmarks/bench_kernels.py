"""Benchmark the chirped mode-sum kernel: jit engine vs numpy fallback.

Times `mode_chirp_sums` on synthetic workloads shaped like the real ones
(desk: 50 modes, full: 1000 modes with staggered support cuts), checks that
both engines agree, and optionally times a full folded-map build under each
engine.  Run from the repository root:

    python3 benchmarks/bench_kernels.py --scale both --end-to-end
"""

import argparse
import math
import time

import numpy as np

from qfall.kernels import (NUMBA_AVAILABLE, get_engine, mode_chirp_sums_numba,
                           mode_chirp_sums_numpy, set_engine)
from qfall.physcore import CONSTANTS

CASES = {
    "desk": dict(n_modes=50, n_z=2500, n_tau=1500),
    "full": dict(n_modes=1000, n_z=16000, n_tau=1200),
}


def make_case(n_modes: int, n_z: int, n_tau: int, seed: int = 7):
    """Inputs with realistic magnitudes and per-mode support cuts."""
    rng = np.random.default_rng(seed)
    m, hbar = CONSTANTS.atom_mass, CONSTANTS.hbar
    z = np.linspace(0.0, 2e-4, n_z)
    chi_w = rng.standard_normal((n_modes, n_z)) * (z[1] - z[0])
    # higher modes reach further up the bounce well; zero the tails so the
    # jit path's cut actually matters, exactly as in the production grids
    idx_cut = np.linspace(n_z // 4, n_z, n_modes).astype(np.int64)
    for n in range(n_modes):
        chi_w[n, idx_cut[n]:] = 0.0
    tau = np.linspace(0.18, 0.26, n_tau)
    alpha = m / (2.0 * hbar * tau)
    zprime = -0.3 + 0.5 * 9.81 * tau * tau
    return (np.ascontiguousarray(chi_w), z, idx_cut, alpha, zprime,
            1.0 / tau, 9.81 * tau)


def best_of(func, args, repeat: int) -> float:
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        func(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def agreement(args) -> float:
    F_np, G_np = mode_chirp_sums_numpy(*args)
    F_nb, G_nb = mode_chirp_sums_numba(*args)
    scale = max(np.abs(F_np).max(), np.abs(G_np).max())
    return max(np.abs(F_np - F_nb).max(), np.abs(G_np - G_nb).max()) / scale


def bench_kernel(scale: str, repeat: int):
    args = make_case(**CASES[scale])
    mode_chirp_sums_numba(*args)  # compile outside the timed region
    t_nb = best_of(mode_chirp_sums_numba, args, repeat)
    t_np = best_of(mode_chirp_sums_numpy, args, repeat)
    print("%-6s  %4d modes  %5d z  %5d tau   numba %8.3f s   "
          "numpy %8.3f s   speedup %5.2fx   agree %.1e"
          % (scale, CASES[scale]["n_modes"], CASES[scale]["n_z"],
             CASES[scale]["n_tau"], t_nb, t_np, t_np / t_nb,
             agreement(args)))


def bench_end_to_end(repeat: int):
    from qfall.freefall import build_folded_map
    from qfall.mirror import DiskGeometry
    from qfall.source import build_photodetach, build_trap

    trap = build_trap(20e3)
    pd = build_photodetach(10e-6 * CONSTANTS.electron_volt)
    geo = DiskGeometry(release_height=10e-6, travel_distance=0.05,
                       fall_height=0.3)
    saved = get_engine()
    try:
        results = {}
        for engine in ("numba", "numpy"):
            set_engine(engine)
            build_folded_map(50, trap, pd, geo)  # warm compile and caches
            t0 = time.perf_counter()
            for _ in range(repeat):
                fmap = build_folded_map(50, trap, pd, geo)
            results[engine] = ((time.perf_counter() - t0) / repeat,
                               fmap.total_weight())
    finally:
        set_engine(saved)
    t_nb, w_nb = results["numba"]
    t_np, w_np = results["numpy"]
    print("folded map n_max=50          numba %8.3f s   numpy %8.3f s   "
          "speedup %5.2fx   agree %.1e"
          % (t_nb, t_np, t_np / t_nb, abs(w_nb - w_np) / w_nb))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", choices=["desk", "full", "both"],
                    default="desk")
    ap.add_argument("--repeat", type=int, default=3,
                    help="timing repetitions, best is reported")
    ap.add_argument("--end-to-end", action="store_true",
                    help="also time a full desk-scale folded-map build")
    args = ap.parse_args(argv)
    if not NUMBA_AVAILABLE:
        print("numba is not importable; only the numpy path can run here")
        return 1
    scales = ["desk", "full"] if args.scale == "both" else [args.scale]
    for scale in scales:
        bench_kernel(scale, args.repeat)
    if args.end_to_end:
        bench_end_to_end(args.repeat)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
