"""Fullband vs 4-band float real-time factor as the network grows.

Usage: python3 benchmarks/band_scaling.py [--sizes 64 96 128 192 256]

Prints the weight footprint of each model next to the measured speedup and
the multiply-count ratio. When one model's weights fit in L2 and the other's
do not, the measured speedup falls well short of the multiply-count ratio.
"""
import argparse

import numpy as np

from mbvoc.bench import run_bench
from mbvoc.wavernn import MbWaveRnnConfig, MbWaveRnnParams, flops_per_second

RATE = 16000


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 96, 128, 192, 256])
    ap.add_argument("--arithmetic", choices=("float", "int8"), default="float")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    print(f"{'G=F':>5} {'MiB 1b':>8} {'MiB 4b':>8} {'RTF 1b':>8} {'RTF 4b':>8} {'speedup':>8} {'mult ratio':>10}")
    for size in args.sizes:
        row = {}
        for bands in (1, 4):
            params = MbWaveRnnParams.random(MbWaveRnnConfig(size, size, bands, RATE), 0)
            width = 4 if args.arithmetic == "float" else 1
            mib = sum(np.size(v) for v in params.tensors().values()) * width / 2**20
            rtf = run_bench(params, RATE // bands, args.arithmetic, repeats=args.repeats).rtf
            row[bands] = mib, rtf
        ratio = flops_per_second(size, size, 1, RATE) / flops_per_second(size, size, 4, RATE)
        print(f"{size:>5} {row[1][0]:>8.2f} {row[4][0]:>8.2f} {row[1][1]:>8.3f} {row[4][1]:>8.3f} "
              f"{row[1][1] / row[4][1]:>7.2f}x {ratio:>9.2f}x")


if __name__ == "__main__":
    main()
