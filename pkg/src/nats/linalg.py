"""Dense Hermitian linear algebra shared by every other module.

Composite systems use row-major indexing with subsystem 1 as the slow index,
so ``kron(A, B)[(i, k), (j, l)] == A[i, j] * B[k, l]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# GGE populations underflow long before anything else does; clamp them here.
EIG_FLOOR = 1e-300


def dag(M: np.ndarray) -> np.ndarray:
    return M.conj().T


def hermitize(M: np.ndarray) -> np.ndarray:
    """Return the Hermitian part (M + M^dagger) / 2."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    return (M + M.conj().T) / 2


def max_abs(M) -> float:
    M = np.asarray(M)
    return float(np.max(np.abs(M))) if M.size else 0.0


@dataclass(frozen=True)
class EigenDecomposition:
    """Spectrum ``values`` (ascending) and unitary ``vectors`` (columns)."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.values)

    def reconstruct(self, f: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
        w = self.values if f is None else f(self.values)
        return (self.vectors * w) @ dag(self.vectors)

    def to_eigenbasis(self, X: np.ndarray) -> np.ndarray:
        return dag(self.vectors) @ X @ self.vectors

    def from_eigenbasis(self, Y: np.ndarray) -> np.ndarray:
        return self.vectors @ Y @ dag(self.vectors)


@dataclass(frozen=True)
class ProductEigen:
    """Eigendecomposition of ``A (x) B`` kept in factored form.

    The joint eigenvectors ``kron(V1, V2)`` are never formed; basis changes
    contract each tensor leg separately, which costs O(d^5) instead of O(d^6)
    for two d-level factors.
    """

    first: EigenDecomposition
    second: EigenDecomposition

    @property
    def values(self) -> np.ndarray:
        return np.kron(self.first.values, self.second.values)

    @property
    def dim(self) -> int:
        return self.first.dim * self.second.dim

    def _rotate(self, X: np.ndarray, V1: np.ndarray, V2: np.ndarray) -> np.ndarray:
        d1, d2 = V1.shape[0], V2.shape[0]
        T = np.asarray(X).reshape(d1, d2, d1, d2)
        # Y[i,j,k,l] = sum conj(V1)[a,i] conj(V2)[b,j] T[a,b,c,d] V1[c,k] V2[d,l]
        T = np.tensordot(V1.conj(), T, axes=([0], [0]))  # i, b, c, d
        T = np.tensordot(V2.conj(), T, axes=([0], [1]))  # j, i, c, d
        T = np.tensordot(T, V1, axes=([2], [0]))  # j, i, d, k
        T = np.tensordot(T, V2, axes=([2], [0]))  # j, i, k, l
        return T.transpose(1, 0, 2, 3).reshape(d1 * d2, d1 * d2)

    def to_eigenbasis(self, X: np.ndarray) -> np.ndarray:
        return self._rotate(X, self.first.vectors, self.second.vectors)

    def from_eigenbasis(self, Y: np.ndarray) -> np.ndarray:
        return self._rotate(Y, dag(self.first.vectors), dag(self.second.vectors))

    def reconstruct(self, f: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
        w = self.values if f is None else f(self.values)
        return self.from_eigenbasis(np.diag(w))


def eig_hermitian(M: np.ndarray) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix (symmetrized first).

    Real symmetric input stays real, which halves the cost of everything
    downstream for the bosonic model.
    """
    H = hermitize(M)
    try:
        w, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"Hermitian eigensolver did not converge: {exc}") from exc
    return EigenDecomposition(values=w, vectors=V)


def mat_func_hermitian(
    M: np.ndarray | EigenDecomposition,
    f: Callable[[np.ndarray], np.ndarray],
    floor: float | None = None,
) -> np.ndarray:
    """Apply a real scalar function to a Hermitian matrix through its spectrum.

    ``floor`` clamps eigenvalues from below before ``f`` is applied (used for
    fractional powers and logarithms of density matrices).
    """
    eig = M if isinstance(M, EigenDecomposition) else eig_hermitian(M)
    w = eig.values if floor is None else np.maximum(eig.values, floor)
    with np.errstate(all="ignore"):
        fw = np.asarray(f(w))
    if not np.all(np.isfinite(fw)):
        bad = w[~np.isfinite(fw)]
        raise ValueError(f"function undefined at eigenvalue(s) {bad[:3]}")
    out = (eig.vectors * fw) @ dag(eig.vectors)
    return hermitize(out)


def frac_power(rho: np.ndarray | EigenDecomposition, y: float) -> np.ndarray:
    """``rho**y`` for positive semidefinite ``rho``."""
    return mat_func_hermitian(rho, lambda w: w**y, floor=EIG_FLOOR)


def logm_psd(rho: np.ndarray | EigenDecomposition) -> np.ndarray:
    return mat_func_hermitian(rho, np.log, floor=EIG_FLOOR)


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.kron(A, B)


def partial_trace(M: np.ndarray, d1: int, d2: int, keep: int) -> np.ndarray:
    """Trace out one factor of a ``d1*d2`` operator; ``keep`` is 1 or 2."""
    M = np.asarray(M)
    if M.shape != (d1 * d2, d1 * d2):
        raise ValueError(f"operator of shape {M.shape} does not match dims ({d1}, {d2})")
    T = M.reshape(d1, d2, d1, d2)
    if keep == 1:
        return np.einsum("ibjb->ij", T)
    if keep == 2:
        return np.einsum("aiaj->ij", T)
    raise ValueError(f"keep must be 1 or 2, got {keep!r}")


def log_mean(p, q):
    """Logarithmic mean (p - q) / (ln p - ln q), the value of int_0^1 p^y q^(1-y) dy.

    Works elementwise on arrays. Uses ``min * expm1(d) / d`` with
    ``d = ln max - ln min >= 0`` so that nearly equal arguments lose no digits.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("log_mean needs nonnegative arguments")
    lo = np.minimum(p, q)
    hi = np.maximum(p, q)
    out = np.zeros(np.broadcast(p, q).shape)
    pos = lo > 0
    with np.errstate(all="ignore"):
        d = np.where(pos, np.log(np.where(pos, hi, 1.0)) - np.log(np.where(pos, lo, 1.0)), 0.0)
        tiny = d < 1e-12
        ratio = np.where(tiny, 1.0 + d / 2, np.expm1(d) / np.where(tiny, 1.0, d))
    out = np.where(pos, lo * ratio, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def log_mean_matrix(p: np.ndarray) -> np.ndarray:
    """Matrix of pairwise logarithmic means ``LM[i, j] = log_mean(p_i, p_j)``."""
    p = np.maximum(np.asarray(p, dtype=float), EIG_FLOOR)
    return log_mean(p[:, None], p[None, :])


def von_neumann_entropy(rho: np.ndarray | EigenDecomposition) -> float:
    eig = rho if isinstance(rho, EigenDecomposition) else eig_hermitian(rho)
    p = np.clip(eig.values, 0.0, None)
    p = p[p > EIG_FLOOR]
    return float(-np.sum(p * np.log(p)))


def relative_entropy(rho: np.ndarray, sigma: np.ndarray | EigenDecomposition) -> float:
    """S(rho || sigma) = tr rho (ln rho - ln sigma); sigma's spectrum is floored."""
    s_eig = sigma if isinstance(sigma, EigenDecomposition) else eig_hermitian(sigma)
    r_eig = eig_hermitian(rho)
    cross = np.real(np.trace(rho @ logm_psd(s_eig)))
    return -von_neumann_entropy(r_eig) - float(cross)
