import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nats.bosonic import build_fock, frame_charges
from nats.gge import (
    HermitianObservable,
    as_affinities,
    build_gge,
    expectation,
    squeezed_thermal_affinities,
    squeezing_from_mu,
)

import oracles

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0, -1.0])


def random_hermitian(d, rng):
    Z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (Z + Z.conj().T) / 2


def test_zero_affinity_is_maximally_mixed():
    s = build_gge([np.diag([0.0, 1.0])], [0.0])
    assert np.allclose(s.density, np.eye(2) / 2)


def test_two_level_gibbs():
    H = np.diag([0.0, 1.0])
    s = build_gge([H], [math.log(2)])
    assert np.allclose(s.density, np.diag([2 / 3, 1 / 3]), atol=1e-15)
    assert expectation(s, H) == pytest.approx(1 / 3)
    assert expectation(s, np.eye(2)) == pytest.approx(1.0)
    assert s.log_partition == pytest.approx(math.log(1.5))


@given(st.integers(0, 2**31 - 1), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_matches_expm_and_is_a_state(seed, lam):
    rng = np.random.default_rng(seed)
    charges = [random_hermitian(3, rng) for _ in range(3)]
    s = build_gge(charges, lam)
    assert np.trace(s.density).real == pytest.approx(1.0, abs=1e-12)
    assert s.populations.min() >= -1e-14
    assert np.allclose(s.density, oracles.gge(charges, lam), atol=1e-10)


@given(st.integers(0, 2**31 - 1))
def test_reordering_charges_is_harmless(seed):
    rng = np.random.default_rng(seed)
    charges = [random_hermitian(3, rng) for _ in range(3)]
    lam = rng.normal(size=3)
    perm = rng.permutation(3)
    a = build_gge(charges, lam)
    b = build_gge([charges[i] for i in perm], lam[perm])
    assert np.allclose(a.density, b.density, atol=1e-13)


def test_commuting_charges_give_diagonal_state():
    s = build_gge([np.diag([0.0, 1.0, 2.0]), np.diag([1.0, -1.0, 0.5])], [0.7, 0.3])
    off = s.density - np.diag(np.diag(s.density))
    assert np.abs(off).max() < 1e-12


@given(st.integers(0, 2**31 - 1))
def test_log_partition_derivative(seed):
    rng = np.random.default_rng(seed)
    charges = [random_hermitian(3, rng) for _ in range(2)]
    lam = rng.normal(size=2)
    s = build_gge(charges, lam)
    h = 1e-5
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        d = (build_gge(charges, lam + e).log_partition - build_gge(charges, lam - e).log_partition) / (2 * h)
        assert d == pytest.approx(-expectation(s, charges[k]), rel=1e-6, abs=1e-9)


def test_large_beta_does_not_overflow():
    s = build_gge([np.diag([0.0, 1.0])], [2000.0])
    assert s.density[0, 0] == pytest.approx(1.0)
    assert np.isfinite(s.log_partition)


def test_errors():
    with pytest.raises(ValueError):
        build_gge([np.eye(2), np.eye(3)], [1, 1])
    with pytest.raises(ValueError):
        build_gge([np.eye(2)], [np.nan])
    with pytest.raises(ValueError):
        build_gge([np.eye(2)], [1, 2])
    with pytest.raises(ValueError):
        build_gge([], [])
    with pytest.raises(ValueError):
        expectation(build_gge([SZ], [1.0]), np.diag([1.0, 1j]))
    with pytest.raises(ValueError):
        as_affinities([[1.0]])


def test_observable_validation():
    O = HermitianObservable("sy", SY)
    assert O.dim == 2
    with pytest.raises(ValueError):
        HermitianObservable("bad", np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        HermitianObservable("bad", np.eye(2), subsystem="3")
    with pytest.raises(ValueError):
        HermitianObservable("bad", np.ones((2, 3)))


def test_affinity_parameters():
    p = squeezed_thermal_affinities(2.0, 0.0)
    assert p.mu == 0 and p.alpha == pytest.approx(2.0)
    p = squeezed_thermal_affinities(1.0, 1.0)
    assert p.mu == pytest.approx(0.9640, abs=1e-4)
    assert p.alpha == pytest.approx(0.2658, abs=1e-4)
    assert p.alpha == pytest.approx(math.sqrt(1 - p.mu**2))
    assert np.allclose(p.affinities, [1.0, -p.mu])
    assert squeezed_thermal_affinities(math.log(2), 0.0).nbar == pytest.approx(1.0)
    assert squeezing_from_mu(p.mu) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        squeezed_thermal_affinities(0.0, 0.1)
    with pytest.raises(ValueError):
        squeezing_from_mu(1.0)


@pytest.mark.parametrize("beta,r", [(1.0, 0.5), (2.0, 0.3), (1.0, 0.0)])
def test_squeezed_thermal_moments_in_fock_space(beta, r):
    # lab-frame charges: pi is the squeezed thermal state
    sp = build_fock(160)
    p = squeezed_thermal_affinities(beta, r)
    s = build_gge([sp.H, sp.A], p.affinities)
    nb = p.nbar
    assert expectation(s, sp.H) == pytest.approx((nb + 0.5) * math.cosh(2 * r), rel=1e-9)
    assert expectation(s, sp.A) == pytest.approx(math.sinh(2 * r) * (nb + 0.5), rel=1e-9, abs=1e-12)


def test_squeezed_frame_state_is_thermal():
    sp = build_fock(40)
    p = squeezed_thermal_affinities(1.0, 0.5)
    H2, A2 = frame_charges(sp, 0.5)
    s = build_gge([H2, A2], p.affinities)
    th = build_gge([sp.H], [p.alpha])
    assert np.allclose(s.density, th.density, atol=1e-12)
