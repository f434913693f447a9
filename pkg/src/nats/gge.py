"""Generalized Gibbs ensembles exp(-sum_k lambda_k Q_k) / Z over a set of charges."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import EigenDecomposition, eig_hermitian, hermitize, max_abs

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class HermitianObservable:
    """A labelled Hermitian matrix living on subsystem 1, 2 or the joint space."""

    label: str
    matrix: np.ndarray
    subsystem: str = "1"

    def __post_init__(self):
        M = np.asarray(self.matrix)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"{self.label}: expected a square matrix, got {M.shape}")
        scale = max(max_abs(M), 1.0)
        if max_abs(M - M.conj().T) > HERMITIAN_TOL * scale:
            raise ValueError(f"{self.label}: matrix is not Hermitian")
        if self.subsystem not in ("1", "2", "joint"):
            raise ValueError(f"subsystem must be '1', '2' or 'joint', got {self.subsystem!r}")
        object.__setattr__(self, "matrix", hermitize(M))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _matrix(Q) -> np.ndarray:
    return Q.matrix if isinstance(Q, HermitianObservable) else np.asarray(Q)


def as_affinities(values, n: int | None = None) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(values, dtype=float))
    if lam.ndim != 1:
        raise ValueError("affinities must be a flat vector")
    if not np.all(np.isfinite(lam)):
        raise ValueError(f"affinities must be finite, got {lam}")
    if n is not None and len(lam) != n:
        raise ValueError(f"expected {n} affinities, got {len(lam)}")
    return lam


@dataclass(frozen=True)
class GGEState:
    """Normalized GGE with its spectrum cached.

    ``eig.values`` are the populations in ascending order.
    """

    density: np.ndarray
    eig: EigenDecomposition
    affinities: np.ndarray
    log_partition: float
    charges: tuple = field(default=(), repr=False)

    @property
    def dim(self) -> int:
        return self.density.shape[0]

    @property
    def populations(self) -> np.ndarray:
        return self.eig.values


def build_gge(charges: Sequence, affinities) -> GGEState:
    """Build exp(-sum_k lambda_k Q_k) / Z.

    The exponent is shifted by its largest eigenvalue before exponentiating, so
    large inverse temperatures do not overflow.
    """
    mats = [_matrix(Q) for Q in charges]
    if not mats:
        raise ValueError("need at least one charge")
    dim = mats[0].shape
    if any(M.shape != dim for M in mats):
        raise ValueError("all charges must have the same dimension")
    lam = as_affinities(affinities, len(mats))

    G = sum(l * M for l, M in zip(lam, mats))
    geig = eig_hermitian(G)
    g = geig.values
    w = np.exp(-(g - g[0]))
    total = w.sum()
    p = w / total
    log_z = -g[0] + math.log(total)
    # descending populations; flip to keep the ascending convention
    eig = EigenDecomposition(values=p[::-1].copy(), vectors=geig.vectors[:, ::-1].copy())
    rho = hermitize(eig.reconstruct())
    return GGEState(density=rho, eig=eig, affinities=lam, log_partition=log_z, charges=tuple(mats))


def expectation(state: GGEState | np.ndarray, O, tol: float = 1e-12) -> float:
    """tr(rho O) for Hermitian O; a sizeable imaginary part means O was not Hermitian."""
    rho = state.density if isinstance(state, GGEState) else np.asarray(state)
    M = _matrix(O)
    if M.shape != rho.shape:
        raise ValueError(f"operator shape {M.shape} does not match state shape {rho.shape}")
    val = np.sum(rho * M.T)
    scale = max(max_abs(M), 1.0)
    if abs(np.imag(val)) > tol * scale * max(1.0, rho.shape[0]):
        raise ValueError(f"expectation has imaginary part {np.imag(val):.3e}; operator not Hermitian?")
    return float(np.real(val))


@dataclass(frozen=True)
class SqueezedThermalParams:
    beta: float
    r: float
    omega: float
    mu: float
    alpha: float
    nbar: float
    affinities: np.ndarray


def squeezed_thermal_affinities(beta: float, r: float, omega: float = 1.0) -> SqueezedThermalParams:
    """Affinities (beta, -beta*mu) of a squeezed thermal state, mu = tanh(2r).

    alpha = beta*omega*sqrt(1 - mu^2) is the effective inverse temperature of the
    unsqueezed thermal state and nbar = 1/(e^alpha - 1) its occupation.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    if not np.isfinite(r):
        raise ValueError("r must be finite")
    mu = math.tanh(2 * r)
    # sqrt(1 - tanh^2) = 1/cosh, which stays accurate at large r
    alpha = beta * omega / math.cosh(2 * r)
    nbar = 1.0 / math.expm1(alpha)
    return SqueezedThermalParams(
        beta=beta,
        r=r,
        omega=omega,
        mu=mu,
        alpha=alpha,
        nbar=nbar,
        affinities=np.array([beta, -beta * mu]),
    )


def squeezing_from_mu(mu: float) -> float:
    """Inverse of mu = tanh(2r)."""
    if not abs(mu) < 1:
        raise ValueError(f"|mu| must be < 1, got {mu}")
    return 0.5 * math.atanh(mu)
