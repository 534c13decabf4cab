"""Occupation-number basis of the conserved sector.

A state is ``|n_a, n_b, n_1..n_K, n_1'..n_K'>`` with ``n_a + n_b = N`` and
exactly ``N_m`` of the ``2K`` hard-core memory modes occupied.  Memory
occupations are packed into one integer: bit ``j`` is memory mode ``j + 1``
(modes ``1..K`` form the K sector, ``K+1..2K`` the K' sector).

Ordering: blocks of decreasing ``n_a``; inside a block the memory masks run
in colexicographic order, which is plain ascending order of the packed
integer.  The state with ``n_a = N`` and the lowest ``N_m`` modes occupied
therefore has rank 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Iterator, Sequence

import numpy as np


class InvalidParameterError(ValueError):
    pass


class NotInSectorError(ValueError):
    pass


@dataclass(frozen=True)
class FockState:
    n_a: int
    n_b: int
    memory: tuple[int, ...]

    @property
    def mask(self) -> int:
        return sum(1 << j for j, bit in enumerate(self.memory) if bit)

    @classmethod
    def from_mask(cls, n_a: int, n_b: int, mask: int, n_modes: int) -> "FockState":
        return cls(n_a, n_b, tuple((mask >> j) & 1 for j in range(n_modes)))


def _colex_rank(mask: int) -> int:
    r, count, j = 0, 0, 0
    while mask:
        if mask & 1:
            count += 1
            r += comb(j, count)
        mask >>= 1
        j += 1
    return r


def _colex_unrank(r: int, m: int) -> int:
    mask = 0
    for count in range(m, 0, -1):
        j = count - 1
        while comb(j + 1, count) <= r:
            j += 1
        r -= comb(j, count)
        mask |= 1 << j
    return mask


def _colex_masks(n_modes: int, m: int) -> np.ndarray:
    """All ``m``-subsets of ``n_modes`` bits in ascending (= colex) order."""
    out = np.empty(comb(n_modes, m), dtype=np.uint64)
    if m == 0:
        out[0] = 0
        return out
    x = (1 << m) - 1
    limit = 1 << n_modes
    i = 0
    while x < limit:
        out[i] = x
        i += 1
        # Gosper's hack: next integer with the same popcount
        u = x & -x
        v = x + u
        x = v + (((v ^ x) // u) >> 2)
    return out


@dataclass(frozen=True)
class SectorBasis:
    """Rank-indexed basis for fixed ``(N, K, N_m)``.

    ``n_a`` and ``masks`` are parallel arrays over the basis; ``n_b`` is
    implied by ``N - n_a``.
    """

    N: int
    K: int
    N_m: int
    n_a: np.ndarray = field(repr=False)
    masks: np.ndarray = field(repr=False)
    # rank table: binom[j, c] = C(j, c), for vectorised colex ranks
    _binom: np.ndarray = field(repr=False)

    @property
    def n_modes(self) -> int:
        return 2 * self.K

    @property
    def block_size(self) -> int:
        return comb(2 * self.K, self.N_m)

    def __len__(self) -> int:
        return len(self.masks)

    @property
    def dim(self) -> int:
        return len(self.masks)

    @property
    def states(self) -> list[FockState]:
        return list(self)

    def __iter__(self) -> Iterator[FockState]:
        for j in range(len(self)):
            yield self.unrank(j)

    def __getitem__(self, j: int) -> FockState:
        return self.unrank(j)

    def unrank(self, j: int) -> FockState:
        if not 0 <= j < len(self):
            raise IndexError(j)
        block, r = divmod(j, self.block_size)
        n_a = self.N - block
        return FockState.from_mask(n_a, self.N - n_a, _colex_unrank(r, self.N_m), self.n_modes)

    def rank(self, s: FockState) -> int:
        if len(s.memory) != self.n_modes:
            raise NotInSectorError(f"expected {self.n_modes} memory modes, got {len(s.memory)}")
        if s.n_a < 0 or s.n_b < 0 or s.n_a + s.n_b != self.N:
            raise NotInSectorError(f"n_a + n_b = {s.n_a + s.n_b}, sector has N = {self.N}")
        if any(b not in (0, 1) for b in s.memory) or sum(s.memory) != self.N_m:
            raise NotInSectorError(f"memory occupation {s.memory} not in sector N_m = {self.N_m}")
        return (self.N - s.n_a) * self.block_size + _colex_rank(s.mask)

    def rank_masks(self, n_a: np.ndarray, masks: np.ndarray) -> np.ndarray:
        """Vectorised rank for arrays of in-sector ``(n_a, mask)`` pairs."""
        masks = np.asarray(masks, dtype=np.uint64)
        r = np.zeros(masks.shape, dtype=np.int64)
        count = np.zeros(masks.shape, dtype=np.int64)
        for j in range(self.n_modes):
            bit = ((masks >> np.uint64(j)) & np.uint64(1)).astype(bool)
            count += bit
            r += np.where(bit, self._binom[j, count], 0)
        return (self.N - np.asarray(n_a, dtype=np.int64)) * self.block_size + r

    def occupation(self, mode: int) -> np.ndarray:
        """0/1 occupation of memory mode ``mode`` (1-based) for every state."""
        if not 1 <= mode <= self.n_modes:
            raise InvalidParameterError(f"mode index {mode} outside 1..{self.n_modes}")
        return ((self.masks >> np.uint64(mode - 1)) & np.uint64(1)).astype(np.int8)

    def sector_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-state occupation of the K and K' memory sectors."""
        low = np.uint64((1 << self.K) - 1)
        n_k = _popcount(self.masks & low)
        return n_k, self.N_m - n_k


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    n = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        n += (x & np.uint64(1)).astype(np.int64)
        x = x >> np.uint64(1)
    return n


def sector_dimension(N: int, K: int, N_m: int) -> int:
    return (N + 1) * comb(2 * K, N_m)


def enumerate_sector(N: int, K: int, N_m: int) -> SectorBasis:
    if min(N, K, N_m) < 0:
        raise InvalidParameterError(f"negative argument in (N={N}, K={K}, N_m={N_m})")
    if N_m > 2 * K:
        raise InvalidParameterError(f"N_m = {N_m} exceeds the {2 * K} memory modes")
    if 2 * K > 63:
        raise InvalidParameterError("packed masks support at most 63 memory modes")
    block = _colex_masks(2 * K, N_m)
    n_a = np.repeat(np.arange(N, -1, -1, dtype=np.int64), len(block))
    masks = np.tile(block, N + 1)
    binom = np.array([[comb(j, c) for c in range(N_m + 2)] for j in range(2 * K + 1)], dtype=np.int64)
    basis = SectorBasis(N, K, N_m, n_a, masks, binom)
    n_a.setflags(write=False)
    masks.setflags(write=False)
    return basis


def brute_force_sector(N: int, K: int, N_m: int) -> set[tuple[int, int, tuple[int, ...]]]:
    """Filter all ``(N+1) * 2**(2K)`` candidates by both conservation laws."""
    out = set()
    for n_a in range(N + 1):
        for mask in range(1 << (2 * K)):
            if bin(mask).count("1") == N_m:
                out.add((n_a, N - n_a, tuple((mask >> j) & 1 for j in range(2 * K))))
    return out


def as_tuples(states: Sequence[FockState]) -> set[tuple[int, int, tuple[int, ...]]]:
    return {(s.n_a, s.n_b, s.memory) for s in states}
