"""Full dense eigendecomposition plus the sector and degeneracy checks."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl

from .fock import SectorBasis
from .model import ModelInstance

log = logging.getLogger(__name__)

# columns per block when streaming over eigenvectors; 1024 columns of a
# 16380-dim problem is ~130 MB
BLOCK = 1024


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Spectrum:
    energies: np.ndarray
    vectors: np.ndarray = field(repr=False)
    residual_norm: float = float("nan")

    @property
    def dim(self) -> int:
        return len(self.energies)


def fix_signs(vectors: np.ndarray) -> None:
    """Make the largest-magnitude entry of each column positive, in place."""
    for start in range(0, vectors.shape[1], BLOCK):
        blk = vectors[:, start:start + BLOCK]
        idx = np.argmax(np.abs(blk), axis=0)
        neg = blk[idx, np.arange(blk.shape[1])] < 0
        if np.any(neg):
            cols = start + np.flatnonzero(neg)
            vectors[:, cols] *= -1.0


def residual_norm(H, energies: np.ndarray, vectors: np.ndarray) -> float:
    """``max_a ||H v_a - E_a v_a||_2`` evaluated blockwise."""
    worst = 0.0
    for start in range(0, vectors.shape[1], BLOCK):
        V = vectors[:, start:start + BLOCK]
        R = H @ V - V * energies[start:start + BLOCK]
        worst = max(worst, float(np.sqrt((R * R).sum(axis=0)).max()))
    return worst


def diagonalize(m: ModelInstance, driver: str = "evr") -> Spectrum:
    """All eigenpairs of ``m.H``, ascending.

    The dense copy is handed to LAPACK in Fortran order and overwritten, so
    peak memory is the input plus the eigenvector matrix.
    """
    dense = m.H.toarray(order="F")
    try:
        energies, vectors = sl.eigh(dense, overwrite_a=True, check_finite=False, driver=driver)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"eigh(driver={driver!r}) failed for dim {m.dim}: {exc}") from exc
    del dense
    fix_signs(vectors)
    res = residual_norm(m.H, energies, vectors)
    log.debug("N=%d dim=%d residual=%.3g", m.params.N, m.dim, res)
    return Spectrum(energies, vectors, res)


def check_nondegeneracy(energies, rel_tol: float = 1e-12) -> float:
    """Smallest neighbouring gap relative to the spectral width.

    ``rel_tol`` is the threshold the caller compares against; it only
    matters through :func:`is_nondegenerate`.
    """
    E = np.sort(np.asarray(getattr(energies, "energies", energies), dtype=float))
    if len(E) < 2:
        raise ValueError("need at least two levels")
    width = E[-1] - E[0]
    if width == 0:
        return 0.0
    return float(np.min(np.diff(E)) / width)


def is_nondegenerate(energies, rel_tol: float = 1e-12) -> bool:
    return check_nondegeneracy(energies) > rel_tol


def verify_sector_charges(s: Spectrum, basis: SectorBasis) -> tuple[np.ndarray, np.ndarray]:
    """Per-eigenvector expectation of ``n_a + n_b`` and total memory occupation."""
    n_ab = (basis.n_a + (basis.N - basis.n_a)).astype(float)
    n_k, n_kp = basis.sector_counts()
    n_mem = (n_k + n_kp).astype(float)
    V = s.vectors
    ab = np.empty(V.shape[1])
    mem = np.empty(V.shape[1])
    for start in range(0, V.shape[1], BLOCK):
        W = V[:, start:start + BLOCK] ** 2
        ab[start:start + BLOCK] = n_ab @ W
        mem[start:start + BLOCK] = n_mem @ W
    return ab, mem


def _inertia(A) -> int:
    from scipy.sparse.linalg import splu

    try:
        lu = splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise SolverError("row pivoting broke the symmetric ordering")
    d = lu.U.diagonal()
    if not np.all(np.isfinite(d)) or np.any(d == 0):
        raise SolverError("singular pivot")
    return int(np.count_nonzero(d < 0))


def negative_count(H, shift: float, nudges: int = 4) -> int:
    """Number of eigenvalues of ``H`` below ``shift`` (Sylvester inertia).

    Sparse LU with a symmetric ordering and no pivoting is an LDL^T
    factorization, so the signs of ``diag(U)`` are the inertia of
    ``H - shift``.  Memory follows the fill of the factor, not ``dim^2``.
    A zero pivot (a structurally exact diagonal hit) is retried at a shift
    nudged by a few ulps of the spectral scale.
    """
    import scipy.sparse as sparse

    H = sparse.csc_matrix(H)
    eye = sparse.identity(H.shape[0], format="csc")
    scale = max(abs(shift), float(abs(H).max()), 1.0)
    err = None
    for i in range(nudges + 1):
        x = shift + i * 64 * np.finfo(float).eps * scale
        try:
            return _inertia((H - x * eye).tocsc())
        except SolverError as exc:
            err = exc
    raise SolverError(f"no stable factorization near shift {shift}: {err}")


def count_in_window(H, center: float, halfwidth: float) -> int:
    """Eigenvalues of sparse symmetric ``H`` in ``(center - hw, center + hw)``."""
    if halfwidth <= 0:
        return 0
    return negative_count(H, center + halfwidth) - negative_count(H, center - halfwidth)
