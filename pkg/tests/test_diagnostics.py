import json
from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from memtherm.diagnostics import (
    CoefficientVector, DiagnosticsReport, EigenbasisObservable, EmptyWindowError, coefficients,
    diag_statistics, energy_stats, expectation_t, infinite_time_average, microcanonical,
    normalized_fluctuations, observable_matrix, offdiag_abs_average, temporal_fluctuation,
)
from memtherm.spectrum import Spectrum

from conftest import small_report, small_system
from oracles import dense_observable, naive_diag_stats, naive_offdiag, naive_sigma_t


@pytest.mark.parametrize("N", range(2, 7))
def test_coefficients_normalized(N):
    _, s, vec = small_system(N)
    c = coefficients(s, vec)
    assert c.weights.sum() == pytest.approx(1, abs=1e-12)


def test_coefficients_of_eigenvector():
    _, s, _ = small_system(3)
    c = coefficients(s, s.vectors[:, 5])
    np.testing.assert_allclose(c.C, np.eye(s.dim)[5], atol=1e-12)


@pytest.mark.parametrize("N", range(2, 7))
def test_observable_trace_and_range(N):
    m, s, _ = small_system(N)
    o = observable_matrix(s, m.basis, 1)
    K, N_m = N, N // 2
    assert o.diag.sum() == pytest.approx((N + 1) * comb(2 * K - 1, N_m - 1), rel=1e-12)
    assert o.diag.min() >= -1e-14 and o.diag.max() <= 1 + 1e-14


def test_observable_matches_dense_oracle_n4():
    m, s, _ = small_system(4)
    o = observable_matrix(s, m.basis, 1)
    ref = dense_observable(s.vectors, m.basis.occupation(1))
    np.testing.assert_allclose(o.full(), ref, atol=1e-10)
    for start, stop, blk in o.blocks():
        np.testing.assert_allclose(blk, ref[start:stop], atol=1e-10)


@pytest.mark.parametrize("N", [2, 3, 4, 5])
def test_sigma_t_and_offdiag_match_double_loop(N):
    m, s, vec = small_system(N)
    o = observable_matrix(s, m.basis, 1)
    c = coefficients(s, vec)
    M = dense_observable(s.vectors, m.basis.occupation(1))
    if N <= 4:
        assert temporal_fluctuation(c, o) == pytest.approx(naive_sigma_t(c.C, M), abs=1e-10)
        assert offdiag_abs_average(o) == pytest.approx(naive_offdiag(M), abs=1e-12)
    else:
        W = np.outer(c.weights, c.weights) * M * M
        np.fill_diagonal(W, 0)
        assert temporal_fluctuation(c, o) == pytest.approx(np.sqrt(W.sum()), abs=1e-10)
        A = np.abs(M)
        np.fill_diagonal(A, 0)
        assert offdiag_abs_average(o) == pytest.approx(A.sum() / (s.dim * (s.dim - 1)), abs=1e-12)


def test_sigma_t_blocked_n6():
    m, s, vec = small_system(6)
    o = observable_matrix(s, m.basis, 1)
    c = coefficients(s, vec)
    M = o.full()
    W = np.outer(c.weights, c.weights) * M * M
    np.fill_diagonal(W, 0)
    assert temporal_fluctuation(c, o) == pytest.approx(np.sqrt(W.sum()), abs=1e-10)


def test_single_eigenstate_limits():
    m, s, _ = small_system(4)
    o = observable_matrix(s, m.basis, 1)
    c = coefficients(s, s.vectors[:, 17])
    assert infinite_time_average(c, o) == pytest.approx(o.diag[17], abs=1e-12)
    assert temporal_fluctuation(c, o) == pytest.approx(0, abs=1e-7)
    assert energy_stats(c, s)[1] == pytest.approx(0, abs=1e-6)


@pytest.mark.parametrize("N", range(2, 7))
def test_expectation_at_zero(N):
    m, s, vec = small_system(N)
    c = coefficients(s, vec)
    occupied = observable_matrix(s, m.basis, 1)
    empty = observable_matrix(s, m.basis, N // 2 + 1)
    assert expectation_t(c, occupied, s, 0.0)[0] == pytest.approx(1, abs=1e-12)
    assert expectation_t(c, empty, s, 0.0)[0] == pytest.approx(0, abs=1e-12)


def test_expectation_matches_double_sum():
    m, s, vec = small_system(3)
    o = observable_matrix(s, m.basis, 1)
    c = coefficients(s, vec)
    M = o.full()
    t = np.array([0.0, 0.7, 3.3, 41.0])
    dE = s.energies[:, None] - s.energies[None, :]
    ref = [np.sum(np.outer(c.C, c.C) * M * np.cos(dE * ti)) for ti in t]
    np.testing.assert_allclose(expectation_t(c, o, s, t), ref, atol=1e-12)


@pytest.mark.parametrize("N", [2, 3, 4, 5])
def test_dynamic_oracle_for_time_average(N):
    m, s, vec = small_system(N)
    o = observable_matrix(s, m.basis, 1)
    c = coefficients(s, vec)
    t = np.linspace(1e3, 1e4, 2000)
    series = expectation_t(c, o, s, t)
    sig = temporal_fluctuation(c, o)
    assert abs(series.mean() - infinite_time_average(c, o)) <= 3 * sig


@pytest.mark.parametrize("N", range(2, 7))
def test_initial_energy_zero(N):
    r = small_report(N)
    assert abs(r.E_mean) < 1e-10


def test_energy_stats_centered():
    s = Spectrum(np.array([1e8, 1e8 + 1, 1e8 + 2]), np.eye(3))
    c = CoefficientVector(np.sqrt(np.array([0.25, 0.5, 0.25])))
    E, sd = energy_stats(c, s)
    assert E == 1e8 + 1
    assert sd == pytest.approx(np.sqrt(0.5), rel=1e-12)


def test_window_all_states_gives_trace_average():
    m, s, _ = small_system(4)
    o = observable_matrix(s, m.basis, 1)
    n_mc, count, flags = microcanonical(s, o, 0.0, 1e9)
    assert count == s.dim
    assert n_mc == pytest.approx(o.diag.mean(), abs=1e-14)


def test_window_is_open():
    s = Spectrum(np.array([-1.0, 0.0, 1.0]), np.eye(3))
    o = EigenbasisObservable(1, np.eye(3), np.array([0.2, 0.4, 0.6]))
    n_mc, count, _ = microcanonical(s, o, 0.0, 1.0)
    assert count == 1 and n_mc == 0.4
    with pytest.raises(EmptyWindowError):
        microcanonical(s, o, 10.0, 1.0)
    with pytest.raises(ValueError):
        microcanonical(s, o, 0.0, 0.0)


@pytest.mark.parametrize("N", range(2, 7))
def test_diag_statistics_match_transliteration(N):
    r = small_report(N)
    ref = naive_diag_stats(list(r.diag), r.n_mc, list(r.window))
    for key, want in ref.items():
        got = getattr(r, key)
        if want is None:
            assert got is None
        else:
            assert got == pytest.approx(want, abs=1e-12), key


@given(hnp.arrays(float, st.integers(6, 40), elements=st.floats(0.01, 1.0)),
       st.integers(0, 2**32 - 1))
def test_diag_statistics_property(diag, seed):
    rng = np.random.default_rng(seed)
    window = rng.random(len(diag)) < 0.6
    n_mc = float(diag[window].mean()) if window.any() else 0.3
    got = diag_statistics(diag, n_mc, window)
    ref = naive_diag_stats(list(diag), n_mc, list(window))
    for key, want in ref.items():
        v = getattr(got, key)
        assert (v is None) if want is None else v == pytest.approx(want, rel=1e-10, abs=1e-12)


def test_constant_diag():
    st_ = diag_statistics(np.full(10, 0.25), 0.25, np.ones(10, bool))
    assert st_.delta == 0 and st_.delta_max == 0 and st_.delta_mc == 0


@pytest.mark.parametrize("N", range(2, 7))
def test_trace_identity(N):
    r = small_report(N)
    assert r.n_av == pytest.approx((N // 2) / (2 * N), abs=1e-10)


def test_offdiag_zero_for_diagonal_observable():
    o = EigenbasisObservable(1, np.diag([1.0, 0.0, 1.0, 1.0])[[0, 2, 3]], np.array([1.0, 0.0, 1.0, 1.0]))
    assert offdiag_abs_average(o) == 0


@pytest.mark.parametrize("N", range(2, 7))
def test_normalized_fluctuations_centered(N):
    r = small_report(N)
    assert abs(r.dn.mean()) < 1e-12
    assert abs(r.dc.mean()) < 1e-12


def test_report_json_roundtrip():
    r = small_report(3)
    back = DiagnosticsReport.from_json(json.loads(json.dumps(r.to_json())))
    assert back.scalars() == r.scalars()
    np.testing.assert_array_equal(back.dc, r.dc)
    np.testing.assert_array_equal(back.window, r.window)
