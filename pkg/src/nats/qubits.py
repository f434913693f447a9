"""Two-qubit collision models used for small-scale checks and the demo configuration."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .transport import CollisionSetup

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]],
    dtype=complex,
)


def partial_swap(theta: float) -> np.ndarray:
    """exp(-i theta SWAP); commutes with every collective operator Q (x) 1 + 1 (x) Q."""
    return sla.expm(-1j * theta * SWAP)


def qubit_setup(theta: float, axes: str = "z", U: np.ndarray | None = None, tolerance: float = 1e-8) -> CollisionSetup:
    """Partial-swap collision with Pauli charges along ``axes`` (e.g. "z", "zx", "xyz")."""
    if not axes or any(a not in PAULI for a in axes):
        raise ValueError(f"axes must be a non-empty string over 'xyz', got {axes!r}")
    charges = tuple(PAULI[a] for a in axes)
    return CollisionSetup(
        d1=2,
        d2=2,
        charges1=charges,
        charges2=charges,
        U=partial_swap(theta) if U is None else U,
        labels=tuple(f"sigma_{a}" for a in axes),
        tolerance=tolerance,
    )
