import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from nats.linalg import (
    ProductEigen,
    eig_hermitian,
    frac_power,
    hermitize,
    log_mean,
    log_mean_matrix,
    logm_psd,
    mat_func_hermitian,
    partial_trace,
    relative_entropy,
    von_neumann_entropy,
)

import oracles


def random_density(d, rng):
    Z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = Z @ Z.conj().T
    return rho / np.trace(rho).real


seeds = st.integers(0, 2**31 - 1)


@given(seeds, st.integers(2, 6))
def test_reconstruct_round_trip(seed, d):
    rho = random_density(d, np.random.default_rng(seed))
    eig = eig_hermitian(rho)
    assert np.allclose(eig.reconstruct(), rho, atol=1e-13)
    assert np.all(np.diff(eig.values) >= 0)


def test_real_input_stays_real():
    M = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert eig_hermitian(M).vectors.dtype == np.float64


def test_hermitize_rejects_rectangular():
    with pytest.raises(ValueError):
        hermitize(np.zeros((2, 3)))


@given(seeds, st.floats(0.05, 0.95))
def test_frac_power_matches_scipy(seed, y):
    rho = random_density(4, np.random.default_rng(seed))
    assert np.allclose(frac_power(rho, y), oracles.power(rho, y), atol=1e-10)


def test_exp_and_log_match_scipy():
    rho = random_density(5, np.random.default_rng(3))
    assert np.allclose(mat_func_hermitian(rho, np.exp), sla.expm(rho), atol=1e-12)
    assert np.allclose(logm_psd(rho), sla.logm(rho), atol=1e-9)


def test_undefined_function_raises():
    with pytest.raises(ValueError):
        mat_func_hermitian(np.diag([-1.0, 1.0]), np.log)


@given(st.floats(1e-8, 10), st.floats(1e-8, 10))
def test_log_mean_between_geometric_and_arithmetic(p, q):
    m = log_mean(p, q)
    assert math.sqrt(p * q) * (1 - 1e-12) <= m <= (p + q) / 2 * (1 + 1e-12)
    assert log_mean(q, p) == pytest.approx(m, rel=1e-14)


@given(st.floats(1e-6, 1), st.floats(1e-6, 1))
def test_log_mean_is_y_integral(p, q):
    # int_0^1 p^y q^(1-y) dy by quadrature
    ref = float(np.sum(oracles.W * p**oracles.Y * q ** (1 - oracles.Y)))
    assert log_mean(p, q) == pytest.approx(ref, rel=1e-10)


def test_log_mean_nearly_equal_and_zero():
    assert log_mean(1.0, 1.0 + 1e-14) == pytest.approx(1.0, rel=1e-14)
    assert log_mean(0.0, 0.5) == 0.0
    with pytest.raises(ValueError):
        log_mean(-1.0, 1.0)
    M = log_mean_matrix(np.array([0.2, 0.8]))
    assert M[0, 0] == pytest.approx(0.2) and M[0, 1] == pytest.approx(M[1, 0])


@given(seeds)
def test_partial_trace_matches_loops(seed):
    rng = np.random.default_rng(seed)
    M = random_density(6, rng)
    for keep in (1, 2):
        assert np.allclose(partial_trace(M, 2, 3, keep), oracles.ptrace(M, 2, 3, keep), atol=1e-14)


def test_partial_trace_of_product():
    rng = np.random.default_rng(0)
    A, B = random_density(3, rng), random_density(2, rng)
    assert np.allclose(partial_trace(np.kron(A, B), 3, 2, 1), A)
    assert np.allclose(partial_trace(np.kron(A, B), 3, 2, 2), B)
    with pytest.raises(ValueError):
        partial_trace(np.eye(6), 2, 2, 1)


@given(seeds)
def test_product_eigen_rotation(seed):
    rng = np.random.default_rng(seed)
    A, B = random_density(3, rng), random_density(2, rng)
    pe = ProductEigen(eig_hermitian(A), eig_hermitian(B))
    X = rng.normal(size=(6, 6))
    V = np.kron(pe.first.vectors, pe.second.vectors)
    assert np.allclose(pe.to_eigenbasis(X), V.conj().T @ X @ V, atol=1e-13)
    assert np.allclose(pe.from_eigenbasis(pe.to_eigenbasis(X)), X, atol=1e-13)
    assert np.allclose(pe.reconstruct(), np.kron(A, B), atol=1e-14)


@given(seeds)
def test_entropies(seed):
    rng = np.random.default_rng(seed)
    rho, sigma = random_density(3, rng), random_density(3, rng)
    assert von_neumann_entropy(rho) == pytest.approx(oracles.entropy(rho), abs=1e-12)
    rel = relative_entropy(rho, sigma)
    assert rel >= -1e-12
    assert rel == pytest.approx(oracles.relative_entropy(rho, sigma), abs=1e-9)
    assert relative_entropy(rho, rho) == pytest.approx(0.0, abs=1e-12)


def test_entropy_of_maximally_mixed():
    assert von_neumann_entropy(np.eye(4) / 4) == pytest.approx(math.log(4))
