"""Model parameters, memory-mode couplings and the sparse Hamiltonian.

All parameters follow from the system size ``N``: ``K = K' = N``,
``N_m = floor(N/2)``, gap ``eps = sqrt(K)``, couplings ``C_b = 1/sqrt(N)``
and ``C_m = 1/sqrt(N_m K)``, splitting ``Delta = N/2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from mpmath import mp

from .fock import SectorBasis, enumerate_sector, FockState

# (shift of first argument, shift of second argument) per coupling family;
# the K-dependent shifts are K + 1.
_SHIFTS = {1: (1, None), 2: (1, 1), 3: (None, None)}


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    N: int
    K: int
    N_m: int
    eps: float
    C_b: float
    C_m: float
    Delta: float

    @classmethod
    def from_size(cls, N: int) -> "ModelParams":
        N = int(N)
        if N < 2:
            raise ValueError(f"system size must be >= 2, got {N}")
        K = N
        N_m = N // 2
        return cls(
            N=N,
            K=K,
            N_m=N_m,
            eps=math.sqrt(K),
            C_b=1.0 / math.sqrt(N),
            C_m=1.0 / (math.sqrt(N_m) * math.sqrt(K)),
            Delta=N / 2,
        )

    @property
    def gap_condition_ratio(self) -> float:
        """``Delta / (N / (1 + sqrt(N_m K)))``; should be >> 1."""
        return self.Delta * (1 + math.sqrt(self.N_m) * math.sqrt(self.K)) / self.N

    def as_block(self) -> np.ndarray:
        """8-slot float block used by the spectrum cache."""
        return np.array([self.eps, self.C_b, self.C_m, self.Delta, self.N_m, self.K, 0.0, 0.0])


@lru_cache(maxsize=None)
def coupling_F(i: int, k: int, l: int, K: int) -> float:
    """``(sqrt(2) (k + dk_i)^3 + sqrt(7) (l + dl_i)^5) mod 1``.

    The fifth power reaches ~1e7 for the sizes of interest, so the
    fractional part is taken in 50-digit arithmetic before rounding.
    """
    if i not in _SHIFTS:
        raise ValueError(f"coupling family must be 1, 2 or 3, got {i}")
    dk, dl = _SHIFTS[i]
    dk = K + 1 if dk is None else dk
    dl = K + 1 if dl is None else dl
    with mp.workdps(50):
        v = mp.sqrt(2) * mp.mpf(int(k + dk)) ** 3 + mp.sqrt(7) * mp.mpf(int(l + dl)) ** 5
        frac = v - mp.floor(v)
        out = float(frac)
    # rounding to double can land exactly on 1.0
    return 0.0 if out >= 1.0 else out


def coupling_f(i: int, k: int, l: int, K: int) -> float:
    return fold_coupling(coupling_F(i, k, l, K))


def fold_coupling(F: float) -> float:
    return F - 1.0 if F < 0.5 else F


def memory_hops(K: int) -> list[tuple[int, int, float]]:
    """``(mode_p, mode_q, f)`` for every hopping pair, modes 1-based.

    K' modes enter the couplings with their global labels ``K+1..2K``.
    """
    hops = []
    for k in range(1, K + 1):
        for kp in range(K + 1, 2 * K + 1):
            hops.append((k, kp, coupling_f(1, k, kp, K)))
    for k in range(1, K + 1):
        for l in range(k + 1, K + 1):
            hops.append((k, l, coupling_f(2, k, l, K)))
    for k in range(K + 1, 2 * K + 1):
        for l in range(k + 1, 2 * K + 1):
            hops.append((k, l, coupling_f(3, k, l, K)))
    return hops


@dataclass(frozen=True)
class ModelInstance:
    params: ModelParams
    basis: SectorBasis
    H: sp.csr_matrix = field(repr=False)

    @property
    def nnz(self) -> int:
        return self.H.nnz

    @property
    def dim(self) -> int:
        return self.H.shape[0]


def _check_basis(params: ModelParams, basis: SectorBasis) -> None:
    if (basis.N, basis.K, basis.N_m) != (params.N, params.K, params.N_m):
        raise DimensionMismatchError(
            f"basis (N, K, N_m) = {(basis.N, basis.K, basis.N_m)} does not match "
            f"params {(params.N, params.K, params.N_m)}"
        )


def build_hamiltonian(params: ModelParams, basis: SectorBasis | None = None) -> ModelInstance:
    if basis is None:
        basis = enumerate_sector(params.N, params.K, params.N_m)
    _check_basis(params, basis)
    N, K = params.N, params.K
    n_a = basis.n_a
    n_b = N - n_a
    masks = basis.masks
    n_k, n_kp = basis.sector_counts()

    diag = params.eps * (1 - n_a / N) * n_k + params.eps * (1 - n_a / (N - params.Delta)) * n_kp
    rows = [np.arange(len(basis))]
    cols = [np.arange(len(basis))]
    vals = [diag]

    # a^dag b + b^dag a: (n_a, n_b) -> (n_a - 1, n_b + 1) and back
    src = np.flatnonzero(n_a > 0)
    dst = basis.rank_masks(n_a[src] - 1, masks[src])
    amp = params.C_b * np.sqrt(n_a[src] * (n_b[src] + 1.0))
    rows += [src, dst]
    cols += [dst, src]
    vals += [amp, amp]

    one = np.uint64(1)
    for p, q, f in memory_hops(K):
        bp = one << np.uint64(p - 1)
        bq = one << np.uint64(q - 1)
        # hard-core hop q -> p, amplitude 1; the reverse hop is the mirror entry
        src = np.flatnonzero(((masks & bq) != 0) & ((masks & bp) == 0))
        dst = basis.rank_masks(n_a[src], masks[src] ^ (bp | bq))
        amp = np.full(len(src), params.C_m * f)
        rows += [src, dst]
        cols += [dst, src]
        vals += [amp, amp]

    H = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(basis), len(basis)),
    ).tocsr()
    H.eliminate_zeros()
    H.sort_indices()
    return ModelInstance(params, basis, H)


def initial_state(params: ModelParams) -> FockState:
    memory = (1,) * params.N_m + (0,) * (2 * params.K - params.N_m)
    return FockState(params.N, 0, memory)


def initial_state_vector(params: ModelParams, basis: SectorBasis) -> np.ndarray:
    _check_basis(params, basis)
    v = np.zeros(len(basis))
    v[basis.rank(initial_state(params))] = 1.0
    return v


def build_model(N: int) -> ModelInstance:
    return build_hamiltonian(ModelParams.from_size(N))
