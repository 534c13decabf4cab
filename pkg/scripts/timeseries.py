"""<n_i(t)> after the quench for one N, written as CSV to stdout.

    python3 scripts/timeseries.py --n 6 --t-max 200 --step 0.1 > n6.csv
"""
import argparse
import sys

import numpy as np

from memtherm import ModelParams, build_hamiltonian, initial_state_vector
from memtherm.cache import cache_path, read_cache, write_cache, CacheError
from memtherm.diagnostics import coefficients, expectation_t, infinite_time_average, observable_matrix
from memtherm.spectrum import diagonalize


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=6)
    ap.add_argument("--mode", type=int, default=1)
    ap.add_argument("--t-max", type=float, default=200.0)
    ap.add_argument("--step", type=float, default=0.1)
    ap.add_argument("--cache-dir", default=".cache/spectra")
    args = ap.parse_args()

    p = ModelParams.from_size(args.n)
    m = build_hamiltonian(p)
    path = cache_path(args.cache_dir, args.n)
    try:
        s = read_cache(path, p)
    except (FileNotFoundError, CacheError):
        s = diagonalize(m)
        write_cache(path, p, s)
    c = coefficients(s, initial_state_vector(p, m.basis))
    o = observable_matrix(s, m.basis, args.mode)
    t = np.arange(int(round(args.t_max / args.step)) + 1) * args.step
    n_t = expectation_t(c, o, s, t)
    print(f"# n_bar = {infinite_time_average(c, o):.10f}", file=sys.stderr)
    print("t,n_t")
    for ti, v in zip(t, n_t):
        print(f"{ti:.17g},{v:.17g}")


if __name__ == "__main__":
    main()
