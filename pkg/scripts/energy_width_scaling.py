"""sigma_E/N of the initial state for N=2..9 and its power-law fit.

The initial state has zero energy, so its energy width is just ||H|in>||
and needs no diagonalization; N=9 is cheap here.
"""
import argparse

import numpy as np

from memtherm import ModelParams, build_hamiltonian, initial_state_vector
from memtherm.fitting import fit


def width(N: int) -> float:
    p = ModelParams.from_size(N)
    m = build_hamiltonian(p)
    v = initial_state_vector(p, m.basis)
    return float(np.linalg.norm(m.H @ v))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-max", type=int, default=9)
    args = ap.parse_args()
    N = np.arange(2, args.n_max + 1)
    y = np.array([width(n) / n for n in N])
    for n, v in zip(N, y):
        print(f"N={n}  sigma_E/N={v:.6f}")
    r = fit("power", N, y)
    names = "abc"
    print("a+b*N^c:", ", ".join(f"{names[i]}={v:.4f}+-{e:.4f}" for i, (v, e) in enumerate(zip(r.params, r.errors))))
    print(f"RMSE={r.rmse:.3e}  adj R2={r.adj_r2:.5f} (uncentered {r.adj_r2_uncentered:.5f})")


if __name__ == "__main__":
    main()
