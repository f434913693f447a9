"""Linear-response transport between two GGE reservoirs coupled by a collision unitary.

A collision maps pi1 (x) pi2 to U (pi1 (x) pi2) U^dagger. When U commutes with
every total charge Q_k^(1) + Q_k^(2), the change of <Q_k^(1)> is a current and
the equilibrium product state is a fixed point. Everything here works for an
arbitrary finite-dimensional charge set; the bosonic model only supplies
matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import bernoulli

from .gge import GGEState, HermitianObservable, as_affinities, build_gge, expectation
from .linalg import (
    EIG_FLOOR,
    EigenDecomposition,
    ProductEigen,
    dag,
    eig_hermitian,
    hermitize,
    log_mean_matrix,
    max_abs,
    partial_trace,
    relative_entropy,
    von_neumann_entropy,
)

UNITARITY_TOL = 1e-10
DEFAULT_PRESERVATION_TOL = 1e-8
SLD_RESIDUAL_TOL = 1e-10


class InvalidSetupError(ValueError):
    """The collision unitary does not preserve the charges within tolerance."""


class SeriesConvergenceError(ValueError):
    """The Bernoulli commutator series was requested outside its convergence disc."""


# --------------------------------------------------------------------------
# operator plumbing (dense or sparse U)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockUnitary:
    """Unitary that is block diagonal once basis states are grouped.

    ``indices[b]`` lists the basis states of block b (the blocks partition the
    basis) and ``blocks[b]`` is the corresponding square unitary. Products with
    dense operators are done block row by block row.
    """

    blocks: tuple
    indices: tuple

    def __post_init__(self):
        idx = [np.asarray(i, dtype=np.intp) for i in self.indices]
        blocks = [np.asarray(B) for B in self.blocks]
        if len(idx) != len(blocks) or any(B.shape != (len(i), len(i)) for B, i in zip(blocks, idx)):
            raise ValueError("each block must be square and match its index set")
        allidx = np.concatenate(idx) if idx else np.array([], dtype=np.intp)
        if not np.array_equal(np.sort(allidx), np.arange(len(allidx))):
            raise ValueError("block index sets must partition the basis")
        object.__setattr__(self, "indices", tuple(idx))
        object.__setattr__(self, "blocks", tuple(blocks))

    @property
    def shape(self) -> tuple[int, int]:
        n = sum(len(i) for i in self.indices)
        return (n, n)

    @property
    def dtype(self):
        return np.result_type(*self.blocks)

    def _map(self, f) -> "BlockUnitary":
        return BlockUnitary(tuple(f(B) for B in self.blocks), self.indices)

    def adjoint(self) -> "BlockUnitary":
        return self._map(lambda B: B.conj().T)

    def transpose(self) -> "BlockUnitary":
        return self._map(lambda B: B.T)

    def conj(self) -> "BlockUnitary":
        return self._map(np.conj)

    def toarray(self) -> np.ndarray:
        n = self.shape[0]
        out = np.zeros((n, n), dtype=self.dtype)
        for i, B in zip(self.indices, self.blocks):
            out[np.ix_(i, i)] = B
        return out

    def left(self, X: np.ndarray, adjoint: bool = False) -> np.ndarray:
        """U X, or U^dagger X."""
        out = np.empty(X.shape, dtype=np.result_type(X, self.dtype))
        for i, B in zip(self.indices, self.blocks):
            out[i, :] = (B.conj().T if adjoint else B) @ X[i, :]
        return out

    def right(self, X: np.ndarray, adjoint: bool = False) -> np.ndarray:
        """X U, or X U^dagger."""
        # (X U)^T = U^T X^T; row gathers on a C-ordered copy are much faster than column gathers
        Xt = np.ascontiguousarray(X.T)
        out = np.empty(Xt.shape, dtype=np.result_type(X, self.dtype))
        for i, B in zip(self.indices, self.blocks):
            out[i, :] = (B.conj() if adjoint else B.T) @ Xt[i, :]
        return out.T

    def unitarity_residual(self) -> float:
        return max((max_abs(B.conj().T @ B - np.eye(len(B))) for B in self.blocks), default=0.0)


class _SparseForms:
    """CSR copies of U, U^T, conj(U) and U^dagger; sparse-times-dense is only fast row-wise."""

    def __init__(self, U):
        U = sp.csr_matrix(U)
        self.U = U
        self.T = U.T.tocsr()
        self.conj = U.conj().tocsr()
        self.H = U.conj().T.tocsr()


_FORMS: dict[int, tuple[object, _SparseForms]] = {}


def _forms(U) -> _SparseForms:
    key = id(U)
    hit = _FORMS.get(key)
    if hit is None or hit[0] is not U:
        if len(_FORMS) > 32:
            _FORMS.clear()
        hit = (U, _SparseForms(U))
        _FORMS[key] = hit
    return hit[1]


def _left(U, X, adjoint=False):
    if isinstance(U, BlockUnitary):
        return U.left(X, adjoint)
    if sp.issparse(U):
        f = _forms(U)
        return np.asarray((f.H if adjoint else f.U) @ X)
    return (dag(U) if adjoint else U) @ X


def _right(U, X, adjoint=False):
    if isinstance(U, BlockUnitary):
        return U.right(X, adjoint)
    if sp.issparse(U):
        # X U = (U^T X^T)^T and X U^dagger = (conj(U) X^T)^T
        f = _forms(U)
        return np.asarray((f.conj if adjoint else f.T) @ X.T).T
    return X @ (dag(U) if adjoint else U)


def as_dense_unitary(U) -> np.ndarray:
    if isinstance(U, BlockUnitary) or sp.issparse(U):
        return U.toarray()
    return np.asarray(U)


def heisenberg(U, X: np.ndarray) -> np.ndarray:
    """U^dagger X U."""
    return _right(U, _left(U, X, adjoint=True))


def schrodinger(U, rho: np.ndarray) -> np.ndarray:
    """U rho U^dagger."""
    return _right(U, _left(U, rho), adjoint=True)


def commutator(U, Q: np.ndarray) -> np.ndarray:
    """[U, Q] as a dense array."""
    return _left(U, Q) - _right(U, Q)


def _commutator_max(U, Q: np.ndarray, sector: np.ndarray | None) -> float:
    C = commutator(U, Q)
    if sector is not None:
        C = C[np.ix_(sector, sector)]
    return max_abs(C)


def _unitarity_residual(U) -> float:
    if isinstance(U, BlockUnitary):
        return U.unitarity_residual()
    n = U.shape[0]
    if sp.issparse(U):
        R = (U.conj().T @ U - sp.identity(n, format="csr")).tocoo()
        return float(np.max(np.abs(R.data))) if R.nnz else 0.0
    return max_abs(dag(U) @ U - np.eye(n))


# --------------------------------------------------------------------------
# setup
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CollisionSetup:
    """Two subsystems, an ordered list of charge pairs and a joint unitary.

    ``U`` may be a dense array or a scipy sparse matrix. ``sector`` is an
    optional boolean mask over the joint basis restricting where charge
    preservation is checked (truncated bosonic modes are only exact there).
    """

    d1: int
    d2: int
    charges1: tuple
    charges2: tuple
    U: object
    labels: tuple = ()
    tolerance: float = DEFAULT_PRESERVATION_TOL
    sector: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        c1 = tuple(hermitize(np.asarray(getattr(Q, "matrix", Q))) for Q in self.charges1)
        c2 = tuple(hermitize(np.asarray(getattr(Q, "matrix", Q))) for Q in self.charges2)
        if len(c1) != len(c2) or not c1:
            raise ValueError("need the same nonzero number of charges on both subsystems")
        if any(Q.shape != (self.d1, self.d1) for Q in c1):
            raise ValueError("subsystem-1 charges do not match d1")
        if any(Q.shape != (self.d2, self.d2) for Q in c2):
            raise ValueError("subsystem-2 charges do not match d2")
        n = self.d1 * self.d2
        if self.U.shape != (n, n):
            raise ValueError(f"U has shape {self.U.shape}, expected ({n}, {n})")
        res = _unitarity_residual(self.U)
        if res > UNITARITY_TOL:
            raise ValueError(f"U is not unitary (residual {res:.2e})")
        labels = tuple(self.labels) or tuple(f"Q{k + 1}" for k in range(len(c1)))
        if len(labels) != len(c1):
            raise ValueError("one label per charge")
        object.__setattr__(self, "charges1", c1)
        object.__setattr__(self, "charges2", c2)
        object.__setattr__(self, "labels", labels)
        if self.sector is not None:
            mask = np.asarray(self.sector, dtype=bool)
            if mask.shape != (n,):
                raise ValueError("sector mask must cover the joint basis")
            object.__setattr__(self, "sector", mask)

    @property
    def n_charges(self) -> int:
        return len(self.charges1)

    @property
    def dim(self) -> int:
        return self.d1 * self.d2

    def local1(self, k: int) -> np.ndarray:
        return np.kron(self.charges1[k], np.eye(self.d2))

    def local2(self, k: int) -> np.ndarray:
        return np.kron(np.eye(self.d1), self.charges2[k])

    def total_charge(self, k: int) -> np.ndarray:
        return self.local1(k) + self.local2(k)

    def with_unitary(self, U) -> "CollisionSetup":
        return CollisionSetup(
            self.d1, self.d2, self.charges1, self.charges2, U, self.labels, self.tolerance, self.sector
        )


@dataclass(frozen=True)
class PreservationReport:
    residuals: np.ndarray
    scales: np.ndarray
    tolerance: float
    valid: bool

    @property
    def worst(self) -> float:
        rel = self.residuals / np.maximum(self.scales, 1e-300)
        return float(np.max(rel))


def check_charge_preservation(setup: CollisionSetup, tolerance: float | None = None) -> PreservationReport:
    """Residuals max|[U, Q_k^(1) (x) 1 + 1 (x) Q_k^(2)]| (on the sector, if one is set)."""
    tol = setup.tolerance if tolerance is None else tolerance
    res, scales = [], []
    for k in range(setup.n_charges):
        Qt = setup.total_charge(k)
        if setup.sector is not None:
            scales.append(max(max_abs(Qt[np.ix_(setup.sector, setup.sector)]), 1e-300))
        else:
            scales.append(max(max_abs(Qt), 1e-300))
        res.append(_commutator_max(setup.U, Qt, setup.sector))
    res, scales = np.array(res), np.array(scales)
    valid = bool(np.all(res <= tol * scales))
    return PreservationReport(residuals=res, scales=scales, tolerance=tol, valid=valid)


def ensure_valid(setup: CollisionSetup) -> None:
    rep = check_charge_preservation(setup)
    if not rep.valid:
        raise InvalidSetupError(
            f"U does not preserve the charges: worst relative residual {rep.worst:.3e} "
            f"exceeds tolerance {rep.tolerance:.1e}"
        )


def reservoir_states(setup: CollisionSetup, lam1, lam2) -> tuple[GGEState, GGEState]:
    n = setup.n_charges
    pi1 = build_gge(setup.charges1, as_affinities(lam1, n))
    pi2 = build_gge(setup.charges2, as_affinities(lam2, n))
    return pi1, pi2


def sector_leakage(setup: CollisionSetup, lam1, lam2=None) -> float:
    """Weight of pi1 (x) pi2 outside ``setup.sector`` (0 when no sector is set)."""
    if setup.sector is None:
        return 0.0
    pi1, pi2 = reservoir_states(setup, lam1, lam1 if lam2 is None else lam2)
    diag = np.kron(np.real(np.diag(pi1.density)), np.real(np.diag(pi2.density)))
    return float(max(0.0, 1.0 - diag[setup.sector].sum()))


# --------------------------------------------------------------------------
# exact collision
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CollisionResult:
    final_state: np.ndarray
    pi1: GGEState
    pi2: GGEState
    currents: np.ndarray
    currents_from_2: np.ndarray
    delta_lambda: np.ndarray
    sigma: float

    @property
    def conservation_residual(self) -> float:
        return float(np.max(np.abs(self.currents - self.currents_from_2)))

    @property
    def marginals(self) -> tuple[np.ndarray, np.ndarray]:
        d1, d2 = self.pi1.dim, self.pi2.dim
        return (
            partial_trace(self.final_state, d1, d2, keep=1),
            partial_trace(self.final_state, d1, d2, keep=2),
        )


def collide(setup: CollisionSetup, lam1, lam2, require_valid: bool = True) -> CollisionResult:
    """One collision of fresh GGE units: final state, currents and entropy production.

    J_k = <Q_k^(1)>_f - <Q_k^(1)>_i and Sigma = sum_k (lam1_k - lam2_k) J_k.
    """
    if require_valid:
        ensure_valid(setup)
    pi1, pi2 = reservoir_states(setup, lam1, lam2)
    rho0 = np.kron(pi1.density, pi2.density)
    rho = schrodinger(setup.U, rho0)
    rho1 = partial_trace(rho, setup.d1, setup.d2, keep=1)
    rho2 = partial_trace(rho, setup.d1, setup.d2, keep=2)
    J = np.array(
        [expectation(rho1, Q) - expectation(pi1, Q) for Q in setup.charges1]
    )
    J2 = np.array(
        [-(expectation(rho2, Q) - expectation(pi2, Q)) for Q in setup.charges2]
    )
    dl = pi1.affinities - pi2.affinities
    return CollisionResult(
        final_state=rho,
        pi1=pi1,
        pi2=pi2,
        currents=J,
        currents_from_2=J2,
        delta_lambda=dl,
        sigma=float(dl @ J),
    )


@dataclass(frozen=True)
class InformationalEntropy:
    sigma_info: float
    sigma_exact: float
    delta_s1: float
    delta_s2: float
    relative_entropy1: float
    relative_entropy2: float
    mutual_information: float


def entropy_informational(
    setup: CollisionSetup, lam1, lam2, direct_joint_entropy: bool | None = None
) -> InformationalEntropy:
    """Entropy production as I(rho'_12) + S(rho'_1||pi1) + S(rho'_2||pi2).

    The joint entropy S(rho'_12) is diagonalized directly for small spaces; above
    2500 states it is taken from unitary invariance, S(pi1) + S(pi2).
    """
    res = collide(setup, lam1, lam2)
    rho1, rho2 = res.marginals
    s1, s2 = von_neumann_entropy(rho1), von_neumann_entropy(rho2)
    s1_0, s2_0 = von_neumann_entropy(res.pi1.eig), von_neumann_entropy(res.pi2.eig)
    if direct_joint_entropy is None:
        direct_joint_entropy = setup.dim <= 2500
    s12 = von_neumann_entropy(hermitize(res.final_state)) if direct_joint_entropy else s1_0 + s2_0
    mutual = s1 + s2 - s12
    rel1 = relative_entropy(rho1, res.pi1.eig)
    rel2 = relative_entropy(rho2, res.pi2.eig)
    return InformationalEntropy(
        sigma_info=mutual + rel1 + rel2,
        sigma_exact=res.sigma,
        delta_s1=s1 - s1_0,
        delta_s2=s2 - s2_0,
        relative_entropy1=rel1,
        relative_entropy2=rel2,
        mutual_information=mutual,
    )


# --------------------------------------------------------------------------
# y-covariances and skew information
# --------------------------------------------------------------------------


def _spectrum(state):
    if isinstance(state, GGEState):
        return state.eig
    if isinstance(state, (EigenDecomposition, ProductEigen)):
        return state
    if isinstance(state, tuple) and len(state) == 2:
        return ProductEigen(_spectrum(state[0]), _spectrum(state[1]))
    return eig_hermitian(np.asarray(state))


def _as_real(val: complex, scale: float):
    if abs(np.imag(val)) <= 1e-12 * max(scale, 1.0):
        return float(np.real(val))
    return complex(val)


def y_covariance(A, B, state, y: float | None = None):
    """tr(A pi^y B pi^(1-y)) - tr(A pi) tr(B pi); integrated over y in [0, 1] when ``y`` is None.

    The integral uses pairwise logarithmic means of the populations. ``state``
    may be a GGEState, a density matrix, an (eigen)decomposition or a pair of
    GGEStates meaning their tensor product. Fixed-y values of non-symmetric
    pairs can be complex and are returned as such.
    """
    spec = _spectrum(state)
    p = np.maximum(spec.values, EIG_FLOOR)
    At = spec.to_eigenbasis(np.asarray(getattr(A, "matrix", A)))
    Bt = spec.to_eigenbasis(np.asarray(getattr(B, "matrix", B)))
    mean_a = np.sum(np.diag(At) * p)
    mean_b = np.sum(np.diag(Bt) * p)
    if y is None:
        W = log_mean_matrix(p)
    else:
        # sum_ij A_ij p_j^y B_ji p_i^(1-y)
        W = np.outer(p ** (1 - y), p**y)
    val = np.sum(At * Bt.T * W) - mean_a * mean_b
    return _as_real(val, max_abs(At) * max_abs(Bt))


def wyd_skew_information(state, A, y: float | None = None) -> float:
    """-1/2 tr([pi^y, A][pi^(1-y), A]); integrated over y when ``y`` is None."""
    spec = _spectrum(state)
    p = np.maximum(spec.values, EIG_FLOOR)
    At = spec.to_eigenbasis(np.asarray(getattr(A, "matrix", A)))
    a2 = np.abs(At) ** 2
    if y is None:
        W = (p[:, None] + p[None, :]) / 2 - log_mean_matrix(p)
    else:
        py, pc = p**y, p ** (1 - y)
        W = 0.5 * (py[:, None] - py[None, :]) * (pc[:, None] - pc[None, :])
    return float(np.sum(a2 * W))


# --------------------------------------------------------------------------
# linear-response kernel shared by the Onsager routes
# --------------------------------------------------------------------------


class ResponseKernel:
    """Cached objects for linear response of ``setup`` around common affinities.

    Holds the equilibrium GGEs, the joint product spectrum and the charge
    changes D_k = U^dagger Q_k^(1) U - Q_k^(1) in the joint eigenbasis.
    """

    def __init__(self, setup: CollisionSetup, affinities):
        self.setup = setup
        self.affinities = as_affinities(affinities, setup.n_charges)

    @cached_property
    def states(self) -> tuple[GGEState, GGEState]:
        return reservoir_states(self.setup, self.affinities, self.affinities)

    @property
    def pi1(self) -> GGEState:
        return self.states[0]

    @property
    def pi2(self) -> GGEState:
        return self.states[1]

    @cached_property
    def spectrum(self) -> ProductEigen:
        return ProductEigen(self.pi1.eig, self.pi2.eig)

    @cached_property
    def populations(self) -> np.ndarray:
        return np.maximum(self.spectrum.values, EIG_FLOOR)

    @cached_property
    def log_means(self) -> np.ndarray:
        return log_mean_matrix(self.populations)

    @cached_property
    def evolved(self) -> tuple[np.ndarray, ...]:
        """Q~_k = U^dagger (Q_k (x) 1) U in the computational basis."""
        return tuple(heisenberg(self.setup.U, self.setup.local1(k)) for k in range(self.setup.n_charges))

    @cached_property
    def changes(self) -> tuple[np.ndarray, ...]:
        """D_k in the joint eigenbasis of pi."""
        out = []
        for k in range(self.setup.n_charges):
            D = self.evolved[k] - self.setup.local1(k)
            out.append(self.spectrum.to_eigenbasis(D))
        return tuple(out)

    @cached_property
    def change_means(self) -> np.ndarray:
        p = self.populations
        return np.array([np.real(np.sum(np.diag(D) * p)) for D in self.changes])

    def covariance_integral(self, k: int, l: int) -> float:
        Dk, Dl = self.changes[k], self.changes[l]
        val = np.sum(Dk * Dl.T * self.log_means) - self.change_means[k] * self.change_means[l]
        return float(np.real(val))

    def density_derivatives(self) -> list[np.ndarray]:
        """d pi1 / d lambda_l in the eigenbasis of pi1, one per charge."""
        return [density_derivative(self.pi1, Q, eigenbasis=True) for Q in self.setup.charges1]

    def unsymmetrized_onsager(self) -> np.ndarray:
        """L_kl = tr[(Q~_k - Q_k) (d pi1/d lambda_l (x) pi2)], the exact linear response."""
        d1, d2 = self.setup.d1, self.setup.d2
        p2 = self.pi2.populations
        n = self.setup.n_charges
        L = np.zeros((n, n))
        derivs = self.density_derivatives()
        for k in range(n):
            D4 = self.changes[k].reshape(d1, d2, d1, d2)
            # contract the subsystem-2 legs against diag(p2)
            Dk1 = np.einsum("iaja,a->ij", D4, p2)
            for l in range(n):
                L[k, l] = float(np.real(np.sum(Dk1 * derivs[l].T)))
        return L


# --------------------------------------------------------------------------
# Onsager matrices
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EntropySplit:
    sigma: float
    classical: float
    quantum: float
    R: float
    R_second_moment: float
    second_moment_half: float
    closure_residual: float

    @property
    def R_defined(self) -> bool:
        return math.isfinite(self.R)


@dataclass(frozen=True)
class OnsagerReport:
    L: np.ndarray
    method: str
    symmetry_residual: float
    min_eigenvalue: float
    entropy: EntropySplit | None = None
    L_unsymmetrized: np.ndarray | None = None

    @property
    def scale(self) -> float:
        return max_abs(self.L)


def _report(L: np.ndarray, method: str, entropy=None, L_unsym=None) -> OnsagerReport:
    L = np.asarray(L, dtype=float)
    sym = (L + L.T) / 2
    return OnsagerReport(
        L=L,
        method=method,
        symmetry_residual=max_abs(L - L.T),
        min_eigenvalue=float(np.min(np.linalg.eigvalsh(sym))),
        entropy=entropy,
        L_unsymmetrized=L_unsym,
    )


def _kernel(setup, affinities, kernel):
    if kernel is not None:
        return kernel
    ensure_valid(setup)
    return ResponseKernel(setup, affinities)


def onsager_ycov(setup: CollisionSetup, affinities, delta_lambda=None, kernel: ResponseKernel | None = None) -> OnsagerReport:
    """L_kl = 1/2 int_0^1 cov_y(Q~_k - Q_k, Q~_l - Q_l) dy at pi = pi_lam (x) pi_lam.

    The y-integral is exact (logarithmic means). The unsymmetrized exact response
    is attached for diagnostics.
    """
    ker = _kernel(setup, affinities, kernel)
    n = setup.n_charges
    L = np.zeros((n, n))
    for k in range(n):
        for l in range(k, n):
            L[k, l] = L[l, k] = 0.5 * ker.covariance_integral(k, l)
    ent = entropy_split(setup, affinities, delta_lambda, kernel=ker) if delta_lambda is not None else None
    return _report(L, "ycov", ent, ker.unsymmetrized_onsager())


def onsager_finite_difference(
    setup: CollisionSetup,
    affinities,
    h: float = 1e-4,
    central: bool = False,
    richardson: bool = False,
    delta_lambda=None,
) -> OnsagerReport:
    """Columns of L from exact collisions at lam1 = lam + h e_l, lam2 = lam.

    Forward differences carry an O(h) error, central ones O(h^2).
    ``richardson=True`` combines central differences at h and 2h, leaving O(h^4).
    """
    if not h > 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    ensure_valid(setup)
    lam = as_affinities(affinities, setup.n_charges)
    n = setup.n_charges

    def current(step, l):
        e = np.zeros(n)
        e[l] = step
        return collide(setup, lam + e, lam, require_valid=False).currents

    L = np.zeros((n, n))
    for l in range(n):
        if richardson:
            d1 = current(h, l) - current(-h, l)
            d2 = current(2 * h, l) - current(-2 * h, l)
            L[:, l] = (8 * d1 - d2) / (12 * h)
        elif central:
            L[:, l] = (current(h, l) - current(-h, l)) / (2 * h)
        else:
            L[:, l] = current(h, l) / h
    ent = entropy_split(setup, lam, delta_lambda) if delta_lambda is not None else None
    method = "finite-difference"
    return _report(L, method, ent)


def density_derivative(state: GGEState, Q, eigenbasis: bool = False) -> np.ndarray:
    """d pi / d lambda for the charge Q of a GGE.

    In the eigenbasis of pi: <Q> p_i delta_ij - Q_ij * log_mean(p_i, p_j).
    """
    Qm = np.asarray(getattr(Q, "matrix", Q))
    p = np.maximum(state.populations, EIG_FLOOR)
    Qt = state.eig.to_eigenbasis(Qm)
    mean = float(np.real(np.sum(np.diag(Qt) * p)))
    dpi = -Qt * log_mean_matrix(p) + np.diag(mean * p)
    return dpi if eigenbasis else state.eig.from_eigenbasis(dpi)


def sld_series_coefficient(m: int) -> float:
    """f_m = 4 (4^(m/2+1) - 1) B_(m+2) / (m+2)! for even m."""
    if m % 2:
        raise ValueError("only even orders enter the series")
    B = bernoulli(m + 2)[m + 2]
    return 4.0 * (4.0 ** (m // 2 + 1) - 1.0) * B / math.factorial(m + 2)


def bernoulli_series(x: float, terms: int = 40) -> float:
    """sum_{n=1}^{terms} f_(2n) x^(2n); converges to tanh(x/2)/(x/2) - 1 for |x| < pi."""
    return float(sum(sld_series_coefficient(2 * n) * x ** (2 * n) for n in range(1, terms + 1)))


def _sld_eigen(state: GGEState, Q) -> tuple[np.ndarray, float]:
    p = np.maximum(state.populations, EIG_FLOOR)
    dpi = density_derivative(state, Q, eigenbasis=True)
    lam = 2 * dpi / (p[:, None] + p[None, :])
    resid = max_abs(0.5 * (lam * p[None, :] + p[:, None] * lam) - dpi) / max(max_abs(dpi), 1e-300)
    return state.eig.from_eigenbasis(lam), resid


def _sld_series(charges, affinities, state: GGEState, Q, terms: int) -> np.ndarray:
    G = sum(l * np.asarray(M) for l, M in zip(affinities, charges))
    geig = eig_hermitian(G)
    g = geig.values
    Qt = geig.to_eigenbasis(np.asarray(Q))
    # matrix elements below this are treated as absent when judging convergence
    mask = np.abs(Qt) > 1e-12 * max(max_abs(Qt), 1e-300)
    gaps = np.abs(g[:, None] - g[None, :])
    spread = float(np.max(gaps[mask])) if mask.any() else 0.0
    if spread >= math.pi:
        raise SeriesConvergenceError(
            f"commutator spread {spread:.3f} of G on this charge is outside the convergence disc (< pi)"
        )
    C = np.where(mask, Qt, 0.0)
    Gd = np.diag(g)
    total = sld_series_coefficient(0) * C
    for n in range(1, terms + 1):
        # C <- [G, [G, C]] with G diagonal in this basis
        C = Gd @ (Gd @ C - C @ Gd) - (Gd @ C - C @ Gd) @ Gd
        total = total + sld_series_coefficient(2 * n) * C
    mean = expectation(state, Q)
    return mean * np.eye(len(g)) - geig.from_eigenbasis(total)


def sld(charges: Sequence, affinities, index: int, method: str = "eigen", terms: int = 40) -> HermitianObservable:
    """Symmetric logarithmic derivative of the GGE with respect to lambda_index.

    ``method="eigen"`` solves (Lambda pi + pi Lambda)/2 = d pi/d lambda exactly in
    the eigenbasis of pi. ``method="series"`` sums the nested-commutator Bernoulli
    series and refuses to run outside its convergence disc.
    """
    mats = [np.asarray(getattr(Q, "matrix", Q)) for Q in charges]
    lam = as_affinities(affinities, len(mats))
    state = build_gge(mats, lam)
    Q = mats[index]
    if method == "eigen":
        S, resid = _sld_eigen(state, Q)
        if resid > SLD_RESIDUAL_TOL:
            raise ArithmeticError(f"SLD defining relation residual {resid:.2e}")
    elif method == "series":
        S = _sld_series(mats, lam, state, Q, terms)
    else:
        raise ValueError(f"unknown SLD method {method!r}")
    return HermitianObservable(label=f"Lambda_{index + 1}", matrix=hermitize(S), subsystem="1")


def sld_residual(state: GGEState, Lam, index: int) -> float:
    """Relative residual of (Lambda pi + pi Lambda)/2 = d pi/d lambda_index."""
    Lm = np.asarray(getattr(Lam, "matrix", Lam))
    dpi = density_derivative(state, state.charges[index])
    lhs = 0.5 * (Lm @ state.density + state.density @ Lm)
    return max_abs(lhs - dpi) / max(max_abs(dpi), 1e-300)


def conditional_expectation(setup: CollisionSetup, k: int, pi2: GGEState, evolved=None) -> np.ndarray:
    """xi(Q_k^(1)) = tr_2[Q~_k^(1) (1 (x) pi2)]."""
    Qt = heisenberg(setup.U, setup.local1(k)) if evolved is None else evolved
    T = Qt.reshape(setup.d1, setup.d2, setup.d1, setup.d2)
    return np.einsum("iajb,ba->ij", T, pi2.density)


def onsager_sld(setup: CollisionSetup, affinities, delta_lambda=None, kernel: ResponseKernel | None = None) -> OnsagerReport:
    """L_ki = 1/2 < {xi(Q_k) - Q_k, Lambda_i} >_pi1, with Lambda_i the SLD of pi1."""
    ker = _kernel(setup, affinities, kernel)
    n = setup.n_charges
    pi1, pi2 = ker.pi1, ker.pi2
    slds = []
    for i in range(n):
        S, resid = _sld_eigen(pi1, setup.charges1[i])
        if resid > SLD_RESIDUAL_TOL:
            raise ArithmeticError(f"SLD defining relation residual {resid:.2e}")
        slds.append(S)
    L = np.zeros((n, n))
    for k in range(n):
        X = conditional_expectation(setup, k, pi2, ker.evolved[k]) - setup.charges1[k]
        for i in range(n):
            anti = X @ slds[i] + slds[i] @ X
            L[k, i] = 0.5 * expectation(pi1, hermitize(anti))
    ent = entropy_split(setup, affinities, delta_lambda, kernel=ker) if delta_lambda is not None else None
    return _report(L, "sld", ent)


def entropy_split(setup: CollisionSetup, affinities, delta_lambda, kernel: ResponseKernel | None = None) -> EntropySplit:
    """Split Sigma = 1/2 int cov_y(D, D) into 1/2 var(D) minus 1/2 int I_y(pi, D).

    D = sum_k dlam_k (Q~_k - Q_k) and all averages are over the global pi. The
    three pieces are computed independently; ``closure_residual`` measures
    classical - quantum - sigma. R is nan when delta_lambda = 0.
    """
    ker = _kernel(setup, affinities, kernel)
    dl = as_affinities(delta_lambda, setup.n_charges)
    D = sum(c * Dk for c, Dk in zip(dl, ker.changes))
    if np.isscalar(D):
        D = np.zeros_like(ker.changes[0])
    p = ker.populations
    a2 = np.abs(D) ** 2
    mean = float(np.real(np.sum(np.diag(D) * p)))
    sigma = 0.5 * (float(np.sum(a2 * ker.log_means)) - mean**2)
    second = 0.5 * float(np.sum(a2 * p[:, None]))
    classical = second - 0.5 * mean**2
    quantum = float(np.sum(a2 * ((p[:, None] + p[None, :]) / 2 - ker.log_means)))
    quantum *= 0.5
    closure = classical - quantum - sigma
    if sigma > 0 and np.any(dl != 0):
        R = quantum / sigma
        R2 = second / sigma - 1.0
    else:
        R = R2 = float("nan")
    return EntropySplit(
        sigma=sigma,
        classical=classical,
        quantum=quantum,
        R=R,
        R_second_moment=R2,
        second_moment_half=second,
        closure_residual=closure,
    )


def transform_onsager(L: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Onsager matrix of the currents J' = A J, namely A L A^T."""
    A = np.asarray(A, dtype=float)
    return A @ np.asarray(L) @ A.T


def transform_affinities(delta_lambda, A: np.ndarray) -> np.ndarray:
    """Forces conjugate to J' = A J, from dlam = A^T dlam'."""
    A = np.asarray(A, dtype=float)
    if abs(np.linalg.det(A)) < 1e-14 * max(max_abs(A), 1.0) ** A.shape[0]:
        raise np.linalg.LinAlgError("current transformation is singular")
    return np.linalg.solve(A.T, np.asarray(delta_lambda, dtype=float))


# --------------------------------------------------------------------------
# time reversal
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeReversalSpec:
    """Starred (time-reversed) setup and the basis in which Theta is complex conjugation."""

    starred: CollisionSetup
    basis: np.ndarray | None = None

    def __post_init__(self):
        if self.basis is not None:
            W = np.asarray(self.basis)
            if max_abs(dag(W) @ W - np.eye(W.shape[0])) > 1e-12:
                raise ValueError("conjugation basis must be unitary")


def _theta(X, W: np.ndarray | None):
    """Theta X Theta^dagger with Theta = W K W^dagger (K complex conjugation)."""
    if W is None:
        return X.conj()
    return W @ (dag(W) @ X @ W).conj() @ dag(W)


def _reverse_unitary(U, W: np.ndarray | None):
    """Theta U^dagger Theta^dagger, keeping block or sparse structure when W is diagonal."""
    if W is not None and max_abs(W - np.diag(np.diag(W))) > 0:
        return _theta(dag(as_dense_unitary(U)), W)
    # with W = diag(w): (Theta X Theta^dagger)_ij = w_i^2 conj(X_ij) conj(w_j)^2
    w2 = None if W is None else np.diag(W) ** 2
    if isinstance(U, BlockUnitary):
        if w2 is None:
            return U.transpose()
        blocks = tuple(w2[i][:, None] * B.T * w2[i].conj()[None, :] for i, B in zip(U.indices, U.blocks))
        return BlockUnitary(blocks, U.indices)
    if sp.issparse(U):
        Ut = U.T.tocsr()
        if w2 is None:
            return Ut
        return (sp.diags(w2) @ Ut @ sp.diags(w2.conj())).tocsr()
    Ut = np.asarray(U).T
    return Ut if w2 is None else w2[:, None] * Ut * w2.conj()[None, :]


def time_reversed(setup: CollisionSetup, basis1: np.ndarray | None = None, basis2: np.ndarray | None = None) -> TimeReversalSpec:
    """Build the starred setup U_* = Theta U^dagger Theta^dagger, Q_* = Theta Q Theta^dagger.

    Theta is complex conjugation in the product basis W1 (x) W2 (the
    computational basis when both are omitted).
    """
    if basis1 is None and basis2 is None:
        W1 = W2 = Wj = None
    else:
        W1 = np.eye(setup.d1) if basis1 is None else np.asarray(basis1)
        W2 = np.eye(setup.d2) if basis2 is None else np.asarray(basis2)
        Wj = np.kron(W1, W2)
    Ustar = _reverse_unitary(setup.U, Wj)
    c1 = tuple(_theta(Q, W1) for Q in setup.charges1)
    c2 = tuple(_theta(Q, W2) for Q in setup.charges2)
    starred = CollisionSetup(
        setup.d1, setup.d2, c1, c2, Ustar, tuple(f"{s}*" for s in setup.labels), setup.tolerance, setup.sector
    )
    return TimeReversalSpec(starred=starred, basis=Wj)


def reversal_residual(setup: CollisionSetup, starred: TimeReversalSpec) -> float:
    """max difference between the setup and its starred partner; 0 for a time-reversal invariant setup."""
    other = starred.starred
    res = max(
        max_abs(a - b)
        for a, b in zip(setup.charges1 + setup.charges2, other.charges1 + other.charges2)
    )
    U, V = setup.U, other.U
    if isinstance(U, BlockUnitary) and isinstance(V, BlockUnitary) and len(U.indices) == len(V.indices) and all(
        np.array_equal(i, j) for i, j in zip(U.indices, V.indices)
    ):
        diff = max((max_abs(a - b) for a, b in zip(U.blocks, V.blocks)), default=0.0)
    else:
        diff = max_abs(as_dense_unitary(U) - as_dense_unitary(V))
    return max(res, diff)


@dataclass(frozen=True)
class CasimirReport:
    residual: float
    symmetry_residual: float
    L: np.ndarray
    L_starred: np.ndarray


def onsager_casimir_check(setup: CollisionSetup, starred: TimeReversalSpec, affinities) -> CasimirReport:
    """max_kl |L_lk - L*_kl| using the exact (unsymmetrized) linear response of both setups."""
    ensure_valid(setup)
    if not check_charge_preservation(starred.starred).valid:
        raise InvalidSetupError("starred setup is not charge preserving")
    L = ResponseKernel(setup, affinities).unsymmetrized_onsager()
    Ls = ResponseKernel(starred.starred, affinities).unsymmetrized_onsager()
    return CasimirReport(
        residual=max_abs(L.T - Ls),
        symmetry_residual=max_abs(L - L.T),
        L=L,
        L_starred=Ls,
    )
