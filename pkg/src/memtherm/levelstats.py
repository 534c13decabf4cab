"""Nearest-neighbour level spacings and the GOE / Poisson references."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

ARGMAX_GOE = math.sqrt(2 / math.pi)


class DegenerateSpectrumError(ValueError):
    pass


def normalized_spacings(energies) -> np.ndarray:
    E = np.asarray(energies, dtype=float)
    if len(E) < 3:
        raise ValueError("need at least three levels")
    gaps = np.diff(E)
    if np.any(gaps <= 0):
        raise DegenerateSpectrumError("energies must be strictly ascending")
    return gaps / gaps.mean()


def goe_pdf(s):
    s = np.asarray(s, dtype=float)
    return np.pi / 2 * s * np.exp(-np.pi * s * s / 4)


def poisson_pdf(s):
    return np.exp(-np.asarray(s, dtype=float))


def goe_cdf(s):
    s = np.asarray(s, dtype=float)
    return 1 - np.exp(-np.pi * s * s / 4)


def poisson_cdf(s):
    return 1 - np.exp(-np.asarray(s, dtype=float))


def reference_pdfs(s):
    return goe_pdf(s), poisson_pdf(s)


def sample_goe(n: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from the Wigner surmise."""
    u = rng.random(n)
    return np.sqrt(-4 / np.pi * np.log1p(-u))


def n_bins(rule, n: int, data=None) -> int:
    """Bin count for ``n`` samples; the Freedman-Diaconis rule needs ``data``
    and spans ``[0, max]`` to match the histogram range."""
    if isinstance(rule, int):
        return rule
    if rule == "sqrt":
        return int(math.ceil(math.sqrt(n)))
    if rule == "sturges":
        return int(math.ceil(math.log2(n))) + 1
    if rule == "fd":
        if data is None:
            raise ValueError("the fd rule needs the sample")
        data = np.asarray(data, dtype=float)
        q75, q25 = np.percentile(data, [75, 25])
        width = 2 * (q75 - q25) / n ** (1 / 3)
        return max(1, int(math.ceil(data.max() / width))) if width > 0 else n_bins("sqrt", n)
    raise ValueError(f"unknown bin rule {rule!r}")


@dataclass(frozen=True)
class SpacingStats:
    spacings: np.ndarray = field(repr=False)
    edges: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    argmax_s: float
    goe_distance: float
    poisson_distance: float


def spacing_histogram(s, rule="sqrt", smooth: int = 1) -> tuple[np.ndarray, np.ndarray, float]:
    """Density histogram on ``[0, max s]`` and the centre of its tallest bin.

    ``smooth`` > 1 applies a centred moving average of that many bins before
    locating the maximum; the returned density is never smoothed.  Ties go to
    the smaller ``s``.
    """
    s = np.asarray(s, dtype=float)
    if len(s) < 10:
        raise ValueError("need at least 10 spacings for a histogram")
    bins = n_bins(rule, len(s), s)
    density, edges = np.histogram(s, bins=bins, range=(0.0, float(s.max())), density=True)
    search = density
    if smooth > 1:
        search = np.convolve(density, np.ones(smooth) / smooth, mode="same")
    j = int(np.argmax(search))  # first maximum, i.e. smallest s
    return edges, density, float(0.5 * (edges[j] + edges[j + 1]))


def sup_cdf_distance(s, cdf) -> float:
    return float(stats.kstest(np.asarray(s, dtype=float), cdf).statistic)


def spacing_stats(energies, rule="sqrt", smooth: int = 1) -> SpacingStats:
    s = normalized_spacings(energies)
    edges, density, argmax_s = spacing_histogram(s, rule, smooth)
    return SpacingStats(
        spacings=s,
        edges=edges,
        density=density,
        argmax_s=argmax_s,
        goe_distance=sup_cdf_distance(s, goe_cdf),
        poisson_distance=sup_cdf_distance(s, poisson_cdf),
    )
