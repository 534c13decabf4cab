import numpy as np
import pytest

from memtherm.spectrum import (
    Spectrum, check_nondegeneracy, diagonalize, fix_signs, is_nondegenerate, verify_sector_charges,
)

from conftest import small_system
from oracles import oracle_hamiltonian


def test_n2_eigenvalues_match_dense_oracle():
    m, s, _ = small_system(2)
    ref = oracle_hamiltonian(2, [(x.n_a, x.n_b, x.memory) for x in m.basis])
    np.testing.assert_allclose(s.energies, np.linalg.eigvalsh(ref), atol=1e-10)


@pytest.mark.parametrize("N", range(2, 7))
def test_orthonormal_and_residual(N):
    m, s, _ = small_system(N)
    assert np.all(np.diff(s.energies) > 0)
    np.testing.assert_allclose(s.vectors.T @ s.vectors, np.eye(m.dim), atol=1e-10)
    assert s.residual_norm <= 1e-8 * np.abs(s.energies).max()


@pytest.mark.parametrize("N", range(2, 7))
def test_similarity_invariants(N):
    m, s, _ = small_system(N)
    H = m.H.toarray()
    assert s.energies.sum() == pytest.approx(np.trace(H), rel=1e-9, abs=1e-9)
    assert (s.energies ** 2).sum() == pytest.approx((H * H).sum(), rel=1e-9)
    recon = (s.vectors * s.energies) @ s.vectors.T
    assert np.linalg.norm(recon - H) <= 1e-8 * np.linalg.norm(H)


@pytest.mark.parametrize("N", range(2, 7))
def test_sign_convention(N):
    _, s, _ = small_system(N)
    V = s.vectors
    idx = np.argmax(np.abs(V), axis=0)
    assert np.all(V[idx, np.arange(V.shape[1])] > 0)


def test_fix_signs_in_place():
    V = np.array([[0.6, -0.8], [-0.8, -0.6]])
    fix_signs(V)
    np.testing.assert_array_equal(V, [[-0.6, 0.8], [0.8, 0.6]])


@pytest.mark.parametrize("N", range(2, 7))
def test_nondegenerate(N):
    _, s, _ = small_system(N)
    g = check_nondegeneracy(s.energies)
    assert g > 0 and is_nondegenerate(s.energies)
    assert check_nondegeneracy(s.energies + 12.5) == pytest.approx(g, rel=1e-6)


def test_duplicate_is_degenerate():
    E = np.array([0.0, 1.0, 1.0, 2.0])
    assert check_nondegeneracy(E) == 0.0
    assert not is_nondegenerate(E)


@pytest.mark.parametrize("N", range(2, 7))
def test_sector_charges(N):
    m, s, _ = small_system(N)
    ab, mem = verify_sector_charges(s, m.basis)
    np.testing.assert_allclose(ab, N, atol=1e-10)
    np.testing.assert_allclose(mem, N // 2, atol=1e-10)


def test_charges_of_fake_eigenvectors(rng):
    m, _, _ = small_system(3)
    eye = Spectrum(np.arange(m.dim, dtype=float), np.eye(m.dim))
    ab, mem = verify_sector_charges(eye, m.basis)
    assert np.all(ab == 3) and np.all(mem == 1)
    v = rng.standard_normal((m.dim, 1))
    v /= np.linalg.norm(v)
    ab, mem = verify_sector_charges(Spectrum(np.zeros(1), v), m.basis)
    assert ab[0] == pytest.approx(3, abs=1e-12) and mem[0] == pytest.approx(1, abs=1e-12)


def test_evd_driver_agrees():
    m, s, _ = small_system(4)
    other = diagonalize(m, driver="evd")
    np.testing.assert_allclose(other.energies, s.energies, atol=1e-10)
    # the sign convention makes the vectors comparable across drivers
    np.testing.assert_allclose(np.abs(other.vectors.T @ s.vectors).diagonal(), 1, atol=1e-8)


@pytest.mark.parametrize("N", range(2, 7))
def test_inertia_window_count_matches_dense(N, rng):
    from memtherm.spectrum import count_in_window, negative_count

    m, s, _ = small_system(N)
    E = s.energies
    for _ in range(5):
        c, hw = rng.uniform(E[0], E[-1]), rng.uniform(0.05, 0.5) * (E[-1] - E[0])
        assert count_in_window(m.H, c, hw) == np.count_nonzero(np.abs(E - c) < hw)
    assert negative_count(m.H, E[0] - 1) == 0
    assert negative_count(m.H, E[-1] + 1) == len(E)


def test_inertia_survives_exact_diagonal_hit():
    import scipy.sparse as sparse
    from memtherm.spectrum import negative_count

    # a shift equal to a diagonal entry makes the first pivot exactly zero
    H = sparse.csr_matrix(np.array([[1.0, 2.0], [2.0, 5.0]]))
    assert negative_count(H, 1.0) == int(np.sum(np.linalg.eigvalsh(H.toarray()) < 1.0))
