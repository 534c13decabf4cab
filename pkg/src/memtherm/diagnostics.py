"""Thermalization and ETH diagnostics for a single-mode occupation.

Everything here works on the eigenbasis representation of ``n_i``.  Since
``n_i`` is diagonal in the Fock basis with 0/1 entries, its eigenbasis
matrix is ``n_ab = sum_s v_sa v_sb`` over the Fock states ``s`` with mode
``i`` occupied.  :class:`EigenbasisObservable` keeps only those rows of the
eigenvector matrix and produces blocks of ``n_ab`` on demand.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .fock import SectorBasis
from .spectrum import Spectrum, check_nondegeneracy

log = logging.getLogger(__name__)

BLOCK_BYTES = 256 * 2**20


class EmptyWindowError(ValueError):
    pass


class InsufficientWindowError(ValueError):
    pass


@dataclass(frozen=True)
class CoefficientVector:
    C: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return self.C * self.C


@dataclass(frozen=True)
class EigenbasisObservable:
    mode: int
    rows: np.ndarray = field(repr=False)
    diag: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def block_size(self) -> int:
        return max(1, min(self.dim, BLOCK_BYTES // (8 * max(self.dim, 1))))

    def block(self, start: int, stop: int) -> np.ndarray:
        """Rows ``start:stop`` of ``n_ab``."""
        return self.rows[:, start:stop].T @ self.rows

    def blocks(self):
        b = self.block_size()
        for start in range(0, self.dim, b):
            stop = min(start + b, self.dim)
            yield start, stop, self.block(start, stop)

    def full(self) -> np.ndarray:
        return self.rows.T @ self.rows


def coefficients(s: Spectrum, in_vec: np.ndarray) -> CoefficientVector:
    return CoefficientVector(s.vectors.T @ np.asarray(in_vec, dtype=float))


def observable_matrix(s: Spectrum, basis: SectorBasis, mode: int = 1) -> EigenbasisObservable:
    occupied = basis.occupation(mode).astype(bool)
    rows = np.ascontiguousarray(s.vectors[occupied])
    diag = np.einsum("ij,ij->j", rows, rows)
    return EigenbasisObservable(mode, rows, diag)


def infinite_time_average(c: CoefficientVector, o: EigenbasisObservable) -> float:
    return float(c.weights @ o.diag)


def expectation_t(c: CoefficientVector, o: EigenbasisObservable, s: Spectrum, t) -> np.ndarray:
    """``<n_i(t)>`` for scalar or array ``t``.

    Equivalent to the double sum ``sum_ab C_a C_b n_ab cos((E_a - E_b) t)``
    but evaluated as the norm of the evolved state projected on the
    occupied Fock states, which costs one matrix product per time chunk.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(len(t))
    chunk = max(1, min(len(t), BLOCK_BYTES // (16 * max(o.dim, 1))))
    for start in range(0, len(t), chunk):
        phase = np.outer(s.energies, t[start:start + chunk])
        re = o.rows @ (c.C[:, None] * np.cos(phase))
        im = o.rows @ (c.C[:, None] * np.sin(phase))
        out[start:start + chunk] = (re * re + im * im).sum(axis=0)
    return out


def temporal_fluctuation(c: CoefficientVector, o: EigenbasisObservable) -> float:
    """``sqrt(sum_{a != b} C_a^2 C_b^2 n_ab^2)``.

    With ``X = rows * C`` the weighted matrix is ``X^T X`` and its squared
    Frobenius norm equals that of the much smaller ``X X^T``.
    """
    X = o.rows * c.C
    G = X @ X.T
    total = float(np.einsum("ij,ij->", G, G))
    diag = float(np.sum((c.weights * o.diag) ** 2))
    return math.sqrt(max(total - diag, 0.0))


def energy_stats(c: CoefficientVector, s: Spectrum) -> tuple[float, float]:
    w = c.weights
    E_mean = math.fsum(w * s.energies)
    var = math.fsum(w * (s.energies - E_mean) ** 2)
    return E_mean, math.sqrt(var)


def in_window(energies: np.ndarray, center: float, halfwidth: float) -> np.ndarray:
    return np.abs(center - np.asarray(energies)) < halfwidth


def microcanonical(s: Spectrum, o: EigenbasisObservable, E_mean: float, halfwidth: float):
    """Unweighted mean of ``n_aa`` over the open window ``(E - hw, E + hw)``.

    Returns ``(n_mc, count, flags)``.
    """
    if not halfwidth > 0:
        raise ValueError(f"window half-width must be positive, got {halfwidth}")
    flags = in_window(s.energies, E_mean, halfwidth)
    count = int(flags.sum())
    if count == 0:
        raise EmptyWindowError(f"no eigenvalue in ({E_mean - halfwidth}, {E_mean + halfwidth})")
    return float(o.diag[flags].mean()), count, flags


@dataclass(frozen=True)
class DiagStats:
    n_av: float
    delta: float
    sigma: float
    delta_mc: float | None
    sigma_mc: float | None
    delta_max: float
    delta_max_mc: float | None


def diag_statistics(diag: np.ndarray, n_mc: float, window: np.ndarray) -> DiagStats:
    """Neighbour-difference statistics of ``n_aa`` (energy-ordered).

    Windowed variants use the pairs with both members inside the window and
    are ``None`` when there are too few such pairs.
    """
    diag = np.asarray(diag, dtype=float)
    window = np.asarray(window, dtype=bool)
    n = len(diag)
    if n < 3:
        raise ValueError("need at least three diagonal elements")
    n_av = float(diag.mean())
    d = np.abs(np.diff(diag))
    delta = float(d.sum() / (n - 1) / n_av)
    sigma = float(math.sqrt(np.sum((d - n_av * delta) ** 2) / (n - 2)) / n_av)
    delta_max = float(d.max() / n_av)

    pairs = window[:-1] & window[1:]
    count = int(window.sum())
    dw = d[pairs]
    delta_mc = sigma_mc = delta_max_mc = None
    if len(dw) >= 1:
        delta_max_mc = float(dw.max() / n_mc)
    if len(dw) >= 2:
        delta_mc = float(dw.sum() / (count - 1) / n_mc)
    else:
        log.warning("only %d in-window neighbour pairs; windowed delta absent", len(dw))
    if len(dw) >= 3:
        sigma_mc = float(math.sqrt(np.sum((dw - n_mc * delta_mc) ** 2) / (count - 2)) / n_mc)
    return DiagStats(n_av, delta, sigma, delta_mc, sigma_mc, delta_max, delta_max_mc)


def offdiag_abs_average(o: EigenbasisObservable) -> float:
    n = o.dim
    total = 0.0
    for _, _, blk in o.blocks():
        total += float(np.abs(blk).sum())
    total -= float(np.abs(o.diag).sum())
    return total / (n * (n - 1))


def normalized_fluctuations(o: EigenbasisObservable, c: CoefficientVector) -> tuple[np.ndarray, np.ndarray]:
    n_av = o.diag.mean()
    if not n_av > 0:
        raise ValueError("observable has zero trace")
    return o.diag / n_av - 1.0, c.weights * len(c.C) - 1.0


@dataclass
class DiagnosticsReport:
    N: int
    mode: int
    dim: int
    n_bar: float
    sigma_t: float
    E_mean: float
    sigma_E: float
    n_window: int
    n_mc: float
    n_av: float
    delta: float
    sigma: float
    delta_mc: float | None
    sigma_mc: float | None
    delta_max: float
    delta_max_mc: float | None
    offdiag_av: float
    min_gap: float
    energies: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)
    diag: np.ndarray = field(repr=False)
    dn: np.ndarray = field(repr=False)
    dc: np.ndarray = field(repr=False)
    window: np.ndarray = field(repr=False)

    SERIES = ("energies", "C", "diag", "dn", "dc", "window")

    def scalars(self) -> dict:
        d = asdict(self)
        for k in self.SERIES:
            d.pop(k)
        return d

    def to_json(self) -> dict:
        d = self.scalars()
        for k in self.SERIES:
            d[k] = getattr(self, k).tolist()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "DiagnosticsReport":
        d = dict(d)
        for k in cls.SERIES:
            d[k] = np.asarray(d[k], dtype=bool if k == "window" else float)
        return cls(**d)


def analyze(s: Spectrum, basis: SectorBasis, in_vec: np.ndarray, mode: int = 1,
            rel_tol: float = 1e-12) -> DiagnosticsReport:
    """Every scalar and series diagnostic for one system size."""
    min_gap = check_nondegeneracy(s.energies)
    if min_gap <= rel_tol:
        log.warning("N=%d: spectrum looks degenerate (min gap %.3g)", basis.N, min_gap)
    c = coefficients(s, in_vec)
    o = observable_matrix(s, basis, mode)
    E_mean, sigma_E = energy_stats(c, s)
    n_mc, count, window = microcanonical(s, o, E_mean, sigma_E)
    st = diag_statistics(o.diag, n_mc, window)
    dn, dc = normalized_fluctuations(o, c)
    return DiagnosticsReport(
        N=basis.N,
        mode=mode,
        dim=len(s.energies),
        n_bar=infinite_time_average(c, o),
        sigma_t=temporal_fluctuation(c, o),
        E_mean=E_mean,
        sigma_E=sigma_E,
        n_window=count,
        n_mc=n_mc,
        n_av=st.n_av,
        delta=st.delta,
        sigma=st.sigma,
        delta_mc=st.delta_mc,
        sigma_mc=st.sigma_mc,
        delta_max=st.delta_max,
        delta_max_mc=st.delta_max_mc,
        offdiag_av=offdiag_abs_average(o),
        min_gap=min_gap,
        energies=np.asarray(s.energies),
        C=c.C,
        diag=o.diag,
        dn=dn,
        dc=dc,
        window=window,
    )
