"""Compare the numba and numpy backends on the same generation workload.

Usage: python3 benchmarks/bench_backends.py [--steps 400] [--bands 4]

Each backend runs ``steps`` generation steps of a random 192-unit model on
one thread. The numpy backend is a per-step Python loop, so keep ``steps``
small. Times exclude model preparation and a short warm-up.
"""
import argparse
import time

import numpy as np
from threadpoolctl import threadpool_limits

from mbvoc import _accel
from mbvoc.wavernn import MbWaveRnnConfig, MbWaveRnnParams, PreparedModel


def time_generate(model, steps, seed, repeats):
    model.generate_categories(8, rng=seed)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        cats = model.generate_categories(steps, rng=seed)
        best = min(best, time.perf_counter() - t0)
    return best, cats


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=400)
    ap.add_argument("--bands", type=int, default=4)
    ap.add_argument("--size", type=int, default=192)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not _accel.NUMBA_AVAILABLE:
        raise SystemExit("numba is disabled (MBVOC_DISABLE_NUMBA); nothing to compare")

    cfg = MbWaveRnnConfig(args.size, args.size, args.bands, 16000)
    params = MbWaveRnnParams.random(cfg, args.seed)
    print(f"config G=F={args.size}, {args.bands} bands, {args.steps} steps, VNNI={_accel.HAS_VNNI}")
    print(f"{'arithmetic':<10} {'numpy s':>10} {'numba s':>10} {'speedup':>9} {'agree':>7}")
    with threadpool_limits(limits=1):
        for arithmetic in ("float", "int8"):
            t_np, a = time_generate(PreparedModel(params, arithmetic, "numpy"), args.steps, args.seed, args.repeats)
            t_nb, b = time_generate(PreparedModel(params, arithmetic, "numba"), args.steps, args.seed, args.repeats)
            print(f"{arithmetic:<10} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>8.1f}x {np.mean(a == b):>7.1%}")


if __name__ == "__main__":
    main()
