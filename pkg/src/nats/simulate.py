"""Sequential collisions of a system unit stream with fresh reservoir units."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .gge import build_gge, as_affinities
from .linalg import max_abs
from .transport import CollisionSetup, collide, ensure_valid, schrodinger


@dataclass(frozen=True)
class Trajectory:
    """Per-collision currents and entropy production with running totals.

    Row i describes collision i + 1. ``cumulative_charge[i, k]`` is the total
    amount of charge k received by side 1 after i + 1 collisions.
    """

    labels: tuple
    currents: np.ndarray
    sigma: np.ndarray
    cumulative_charge: np.ndarray
    cumulative_sigma: np.ndarray
    conservation_residual: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.sigma)

    def rows(self):
        for i in range(self.steps):
            yield [i + 1, *self.currents[i], self.sigma[i], *self.cumulative_charge[i], self.cumulative_sigma[i]]

    def header(self) -> list[str]:
        n = self.currents.shape[1]
        return (
            ["step"]
            + [f"J_{k + 1}" for k in range(n)]
            + ["sigma"]
            + [f"cum_Q_{k + 1}" for k in range(n)]
            + ["cum_sigma"]
        )

    def to_csv(self, path=None, unit_comment: str | None = None) -> str:
        buf = io.StringIO()
        if unit_comment:
            buf.write(f"# {unit_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for row in self.rows():
            w.writerow([row[0]] + [format_float(v) for v in row[1:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def format_float(v: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return "%.17g" % float(v)


def run_collisions(setup: CollisionSetup, lam1, lam2, n: int) -> Trajectory:
    """Run ``n`` collisions, each between freshly prepared GGE units.

    Each collision is evaluated in full rather than copied from the first,
    so the constancy of the per-collision record is itself a check.
    """
    if n < 1:
        raise ValueError(f"need at least one collision, got {n}")
    ensure_valid(setup)
    J, S, cons = [], [], []
    for _ in range(n):
        res = collide(setup, lam1, lam2, require_valid=False)
        J.append(res.currents)
        S.append(res.sigma)
        cons.append(res.conservation_residual)
    J = np.array(J)
    S = np.array(S)
    if np.any(S < -1e-12):
        raise ArithmeticError(f"negative entropy production {S.min():.3e}")
    return Trajectory(
        labels=setup.labels,
        currents=J,
        sigma=S,
        cumulative_charge=np.cumsum(J, axis=0),
        cumulative_sigma=np.cumsum(S),
        conservation_residual=np.array(cons),
    )


def fixed_point_check(setup: CollisionSetup, lam, lam2=None) -> float:
    """max |U (pi1 (x) pi2) U^dagger - pi1 (x) pi2|, on the setup's sector if it has one.

    With ``lam2`` omitted both units share ``lam`` and the residual should vanish.
    """
    lam = as_affinities(lam, setup.n_charges)
    lam2 = lam if lam2 is None else as_affinities(lam2, setup.n_charges)
    pi1 = build_gge(setup.charges1, lam)
    pi2 = build_gge(setup.charges2, lam2)
    rho = np.kron(pi1.density, pi2.density)
    diff = schrodinger(setup.U, rho) - rho
    if setup.sector is not None:
        diff = diff[np.ix_(setup.sector, setup.sector)]
    return max_abs(diff)
