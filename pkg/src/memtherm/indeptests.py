"""Rank-based tests of independence between two paired samples.

Each test returns a :class:`TestResult`; p-values are two-sided except for
Hoeffding's D, whose permutation p-value is the upper tail of D.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit
from scipy import stats

log = logging.getLogger(__name__)

SIGNIFICANCE = 0.05
EXACT_KENDALL_MAX_N = 50
_PAIR_BLOCK = 512


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True)
class TestResult:
    name: str
    statistic: float
    p_value: float
    method: str
    n: int
    seed: int | None = None
    replicates: int | None = None
    dropped: int = 0
    error: str | None = None

    __test__ = False  # not a pytest class

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    return x, y


def _normal_p(z: float) -> float:
    return float(min(1.0, 2 * stats.norm.sf(abs(z))))


def _pair_counts(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-observation concordant and discordant partner counts."""
    n = len(x)
    conc = np.zeros(n)
    disc = np.zeros(n)
    for start in range(0, n, _PAIR_BLOCK):
        sl = slice(start, start + _PAIR_BLOCK)
        s = np.sign(x[sl, None] - x[None, :]) * np.sign(y[sl, None] - y[None, :])
        conc[sl] = (s > 0).sum(axis=1)
        disc[sl] = (s < 0).sum(axis=1)
    return conc, disc


def _tie_sizes(a: np.ndarray) -> np.ndarray:
    _, counts = np.unique(a, return_counts=True)
    return counts[counts > 1].astype(float)


# Blomqvist beta -------------------------------------------------------------

def blomqvist_beta(x, y) -> TestResult:
    """Medial (quadrant) correlation.

    Points lying on either sample median are dropped; ``sqrt(n) * beta`` is
    compared with a standard normal.
    """
    x, y = _pair(x, y)
    if len(x) < 4:
        raise DegenerateDataError("Blomqvist beta needs at least 4 points")
    sx = np.sign(x - np.median(x))
    sy = np.sign(y - np.median(y))
    keep = (sx != 0) & (sy != 0)
    n = int(keep.sum())
    if n == 0:
        raise DegenerateDataError("all points lie on a median")
    beta = float(np.mean(sx[keep] * sy[keep]))
    return TestResult("blomqvist_beta", beta, _normal_p(math.sqrt(n) * beta), "asymptotic",
                      n, dropped=len(x) - n)


# Kendall tau-b --------------------------------------------------------------

@lru_cache(maxsize=None)
def _kendall_null_counts(n: int) -> np.ndarray:
    """Number of permutations of ``n`` items with each inversion count."""
    counts = np.array([1], dtype=object)
    for m in range(2, n + 1):
        new = np.zeros(len(counts) + m - 1, dtype=object)
        for shift in range(m):
            new[shift:shift + len(counts)] += counts
        counts = new
    return counts


def _kendall_exact_p(S: int, n: int) -> float:
    counts = _kendall_null_counts(n)
    total = sum(counts)
    # S = n0 - 2 * inversions
    n0 = n * (n - 1) // 2
    inv = np.arange(len(counts))
    s_vals = n0 - 2 * inv
    tail = sum(c for c, s in zip(counts, s_vals) if abs(s) >= abs(S))
    return float(min(1.0, tail / total))


def kendall_tau(x, y, method: str = "auto") -> TestResult:
    """Kendall tau-b.

    ``method="auto"`` uses the exact null distribution of ``S`` for tie-free
    samples up to ``EXACT_KENDALL_MAX_N`` points and the tie-corrected
    normal approximation otherwise.
    """
    x, y = _pair(x, y)
    n = len(x)
    if n < 2 or np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateDataError("Kendall tau needs two non-constant samples")
    conc, disc = _pair_counts(x, y)
    S = (conc.sum() - disc.sum()) / 2
    n0 = n * (n - 1) / 2
    t = _tie_sizes(x)
    u = _tie_sizes(y)
    n1 = float(np.sum(t * (t - 1) / 2))
    n2 = float(np.sum(u * (u - 1) / 2))
    tau = S / math.sqrt((n0 - n1) * (n0 - n2))

    ties = n1 > 0 or n2 > 0
    if method == "exact" or (method == "auto" and not ties and n <= EXACT_KENDALL_MAX_N):
        if ties:
            raise ValueError("exact Kendall p-value requires tie-free data")
        return TestResult("kendall_tau", tau, _kendall_exact_p(int(round(S)), n), "exact", n)

    v0 = n * (n - 1) * (2 * n + 5)
    vt = float(np.sum(t * (t - 1) * (2 * t + 5)))
    vu = float(np.sum(u * (u - 1) * (2 * u + 5)))
    v1 = float(np.sum(t * (t - 1))) * float(np.sum(u * (u - 1))) / (2 * n * (n - 1))
    v2 = 0.0
    if n > 2:
        v2 = float(np.sum(t * (t - 1) * (t - 2))) * float(np.sum(u * (u - 1) * (u - 2))) / (9 * n * (n - 1) * (n - 2))
    var = (v0 - vt - vu) / 18 + v1 + v2
    return TestResult("kendall_tau", tau, _normal_p(S / math.sqrt(var)), "asymptotic", n)


# Spearman rho ---------------------------------------------------------------

def spearman_rank(x, y) -> TestResult:
    x, y = _pair(x, y)
    n = len(x)
    if n < 3 or np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateDataError("Spearman rho needs two non-constant samples of size >= 3")
    rx = stats.rankdata(x)
    ry = stats.rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    rho = float(rx @ ry / math.sqrt((rx @ rx) * (ry @ ry)))
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        p = 0.0
    else:
        tstat = rho * math.sqrt((n - 2) / (1 - rho * rho))
        p = float(2 * stats.t.sf(abs(tstat), n - 2))
    return TestResult("spearman_rank", rho, p, "asymptotic", n)


# Goodman-Kruskal gamma ------------------------------------------------------

def goodman_kruskal_gamma(x, y) -> TestResult:
    """Gamma with the null-hypothesis asymptotic standard error."""
    x, y = _pair(x, y)
    n = len(x)
    conc, disc = _pair_counts(x, y)
    P = conc.sum()
    Q = disc.sum()
    if P + Q == 0:
        raise DegenerateDataError("no concordant or discordant pairs")
    gamma = float((P - Q) / (P + Q))
    ase0 = 2 / (P + Q) * math.sqrt(max(np.sum((conc - disc) ** 2) - (P - Q) ** 2 / n, 0.0))
    if ase0 == 0:
        p = 0.0 if gamma != 0 else 1.0
    else:
        p = _normal_p(gamma / ase0)
    return TestResult("goodman_kruskal_gamma", gamma, p, "asymptotic", n)


# Hoeffding D ----------------------------------------------------------------

@njit(cache=True)
def _lower_left_counts(r: np.ndarray, s: np.ndarray) -> np.ndarray:
    """``#{j: r_j < r_i and s_j < s_i}`` for tie-free integer ranks 1..n."""
    n = len(r)
    order = np.argsort(r)
    tree = np.zeros(n + 1, dtype=np.int64)
    out = np.empty(n, dtype=np.int64)
    for idx in order:
        k = s[idx] - 1
        c = 0
        while k > 0:
            c += tree[k]
            k -= k & -k
        out[idx] = c
        k = s[idx]
        while k <= n:
            tree[k] += 1
            k += k & -k
    return out


def _bivariate_counts(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``Q_i - 1`` with the usual 1/2 and 1/4 credits for ties."""
    n = len(x)
    q = np.zeros(n)
    for start in range(0, n, _PAIR_BLOCK):
        sl = slice(start, start + _PAIR_BLOCK)
        lx = x[None, :] < x[sl, None]
        ex = x[None, :] == x[sl, None]
        ly = y[None, :] < y[sl, None]
        ey = y[None, :] == y[sl, None]
        q[sl] = (lx & ly).sum(1) + 0.5 * ((ex & ly).sum(1) + (lx & ey).sum(1)) + 0.25 * (ex & ey).sum(1)
    return q - 0.25  # drop the self pair counted as a double tie


def _hoeffding_from(R: np.ndarray, S: np.ndarray, Qm1: np.ndarray) -> float:
    n = len(R)
    D1 = np.sum(Qm1 * (Qm1 - 1))
    D2 = np.sum((R - 1) * (R - 2) * (S - 1) * (S - 2))
    D3 = np.sum((R - 2) * (S - 2) * Qm1)
    return float(30 * ((n - 2) * (n - 3) * D1 + D2 - 2 * (n - 2) * D3)
                 / (n * (n - 1) * (n - 2) * (n - 3) * (n - 4)))


def hoeffding_statistic(x, y) -> float:
    x, y = _pair(x, y)
    if len(x) < 5:
        raise DegenerateDataError("Hoeffding D needs at least 5 points")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateDataError("Hoeffding D needs two non-constant samples")
    R = stats.rankdata(x)
    S = stats.rankdata(y)
    if len(np.unique(x)) == len(x) and len(np.unique(y)) == len(y):
        Qm1 = _lower_left_counts(R.astype(np.int64), S.astype(np.int64)).astype(float)
    else:
        Qm1 = _bivariate_counts(x, y)
    return _hoeffding_from(R, S, Qm1)


def hoeffding_d(x, y, replicates: int = 10_000, seed: int = 0) -> TestResult:
    """Hoeffding's D with a permutation p-value ``(1 + #{D* >= D}) / (1 + B)``.

    Replicate ``r`` shuffles ``y`` with a generator keyed on ``(seed, r)``, so
    results do not depend on how replicates are scheduled.
    """
    x, y = _pair(x, y)
    n = len(x)
    if n < 5:
        raise DegenerateDataError("Hoeffding D needs at least 5 points")
    D = hoeffding_statistic(x, y)
    R = stats.rankdata(x)
    S = stats.rankdata(y)
    tie_free = len(np.unique(x)) == n and len(np.unique(y)) == n
    Ri = R.astype(np.int64)
    exceed = 0
    for r in range(replicates):
        perm = np.random.default_rng([seed, r]).permutation(n)
        Sp = S[perm]
        if tie_free:
            Qm1 = _lower_left_counts(Ri, Sp.astype(np.int64)).astype(float)
        else:
            Qm1 = _bivariate_counts(x, y[perm])
        if _hoeffding_from(R, Sp, Qm1) >= D - 1e-12 * abs(D):
            exceed += 1
    p = (1 + exceed) / (1 + replicates)
    return TestResult("hoeffding_d", D, p, "permutation", n, seed=seed, replicates=replicates)


# batch ----------------------------------------------------------------------

TESTS = ("blomqvist_beta", "goodman_kruskal_gamma", "hoeffding_d", "kendall_tau", "spearman_rank")


def run_all_tests(x, y=None, replicates: int = 10_000, seed: int = 0) -> list[TestResult]:
    """All five tests on a pair of series, or on a report's fluctuation series.

    A failing test yields a result with ``p_value = nan`` and the error text
    instead of aborting the batch.
    """
    if y is None:
        x, y = x.dn, x.dc
    x, y = _pair(x, y)
    calls = {
        "blomqvist_beta": lambda: blomqvist_beta(x, y),
        "goodman_kruskal_gamma": lambda: goodman_kruskal_gamma(x, y),
        "hoeffding_d": lambda: hoeffding_d(x, y, replicates=replicates, seed=seed),
        "kendall_tau": lambda: kendall_tau(x, y),
        "spearman_rank": lambda: spearman_rank(x, y),
    }
    out = []
    for name in TESTS:
        try:
            out.append(calls[name]())
        except (DegenerateDataError, ValueError) as exc:
            log.warning("%s failed: %s", name, exc)
            out.append(TestResult(name, float("nan"), float("nan"), "failed", len(x), error=str(exc)))
    return out
