"""Two bosonic modes exchanging energy H and squeezing asymmetry A through a beam splitter.

Operators live in a truncated Fock space of dimension ``d`` per mode. The
squeezed thermal GGE exp(-beta (H - mu A)) is a squeezed copy of a thermal
state with inverse temperature alpha/omega. Because the squeezing unitary is
generated by Q3 on each mode and Q3_1 + Q3_2 commutes with the beam splitter,
the whole linear-response problem can be rotated into a "squeezed frame" where
the charges become

    H' = cosh(2r) H + sinh(2r) A,    A' = sinh(2r) H + cosh(2r) A

and the GGE is exactly diagonal in the Fock basis. Truncation then only clips
a geometric tail, which converges far faster than squeezing a truncated
thermal state in the lab frame. Both frames are available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .gge import SqueezedThermalParams, squeezed_thermal_affinities
from .linalg import max_abs
from .transport import BlockUnitary, CollisionSetup, TimeReversalSpec, commutator, sector_leakage, time_reversed

LEAKAGE_LIMIT = 1e-10


# --------------------------------------------------------------------------
# Fock space and the collision
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FockSpace:
    """Single-mode ladder algebra truncated to ``d`` levels; energies in units of hbar*omega."""

    d: int
    omega: float
    a: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    Q3: np.ndarray = field(repr=False)

    @property
    def adag(self) -> np.ndarray:
        return self.a.T

    @property
    def number(self) -> np.ndarray:
        return np.arange(self.d)


def build_fock(d: int, omega: float = 1.0) -> FockSpace:
    if d < 2:
        raise ValueError(f"Fock dimension must be at least 2, got {d}")
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    a = np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1)
    ad = a.T
    x = (a + ad) / math.sqrt(2)
    p = 1j * (ad - a) / math.sqrt(2)
    # number form keeps H exactly diagonal at the top level too
    H = omega * np.diag(np.arange(d) + 0.5)
    A = -omega * (a @ a + ad @ ad) / 2
    Q3 = 1j * omega * (ad @ ad - a @ a) / 2
    return FockSpace(d=d, omega=omega, a=a, x=x, p=p, H=H, A=A, Q3=Q3)


def _pair_index(d: int) -> tuple[np.ndarray, np.ndarray]:
    n1, n2 = np.divmod(np.arange(d * d), d)
    return n1, n2


def sector_mask(d: int) -> np.ndarray:
    """Joint basis states with n1 + n2 <= d - 1, where every beam-splitter block is complete."""
    n1, n2 = _pair_index(d)
    return n1 + n2 <= d - 1


def beam_splitter(gtau: float, space: FockSpace | int) -> BlockUnitary:
    """exp(-g tau (a1^dag a2 - a2^dag a1)) as a real orthogonal block unitary.

    The generator conserves n1 + n2, so it is exponentiated one excitation
    block at a time. Blocks with n1 + n2 >= d are clipped by the truncation but
    stay orthogonal.
    """
    d = space if isinstance(space, int) else space.d
    n1, n2 = _pair_index(d)
    total = n1 + n2
    blocks, indices = [], []
    for N in range(2 * d - 1):
        idx = np.flatnonzero(total == N)
        m1 = n1[idx]
        # idx is sorted by n1, so a1^dag a2 |m1, N-m1> = sqrt((m1+1)(N-m1)) |m1+1, N-m1-1>
        # links consecutive entries
        amp = gtau * np.sqrt((m1[:-1] + 1.0) * (N - m1[:-1]))
        K = np.diag(amp, -1) - np.diag(amp, 1)
        blocks.append(sla.expm(-K))
        indices.append(idx)
    return BlockUnitary(tuple(blocks), tuple(indices))


def projected_commutators(U, space: FockSpace) -> dict[str, float]:
    """max |[U, Q_tot]| on the complete sector n1 + n2 <= d - 1 for H, A and Q3."""
    d = space.d
    mask = sector_mask(d)
    I = np.eye(d)
    out = {}
    for name, Q in (("H", space.H), ("A", space.A), ("Q3", space.Q3)):
        Qt = np.kron(Q, I) + np.kron(I, Q)
        C = commutator(U, Qt)
        out[name] = max_abs(C[np.ix_(mask, mask)])
    return out


def frame_charges(space: FockSpace, r: float) -> tuple[np.ndarray, np.ndarray]:
    """H and A conjugated by the single-mode squeezer with parameter r."""
    c, s = math.cosh(2 * r), math.sinh(2 * r)
    return c * space.H + s * space.A, s * space.H + c * space.A


def bosonic_setup(
    d: int,
    gtau: float,
    omega: float = 1.0,
    frame_r: float = 0.0,
    include_q3: bool = False,
    tolerance: float = 1e-8,
    U=None,
) -> CollisionSetup:
    """Beam-splitter collision of two identical modes with charges (H, A[, Q3]).

    ``frame_r`` rotates the charges into the squeezed frame of parameter r;
    0 means the lab frame.
    """
    space = build_fock(d, omega)
    if frame_r:
        Q1, Q2 = frame_charges(space, frame_r)
    else:
        Q1, Q2 = space.H, space.A
    charges = [Q1, Q2]
    labels = ["H", "A"]
    if include_q3:
        # Q3 generates the squeezer, so it is the same in both frames
        charges.append(space.Q3)
        labels.append("Q3")
    U = beam_splitter(gtau, space) if U is None else U
    return CollisionSetup(
        d1=d,
        d2=d,
        charges1=tuple(charges),
        charges2=tuple(charges),
        U=U,
        labels=tuple(labels),
        tolerance=tolerance,
        sector=sector_mask(d),
    )


@dataclass(frozen=True)
class BosonicPoint:
    """A (beta, r, g tau) operating point with its collision setup."""

    params: SqueezedThermalParams
    gtau: float
    setup: CollisionSetup
    frame: str

    @property
    def affinities(self) -> np.ndarray:
        lam = self.params.affinities
        if self.setup.n_charges == 3:
            lam = np.append(lam, 0.0)
        return lam

    @property
    def leakage(self) -> float:
        return sector_leakage(self.setup, self.affinities)

    def check_truncation(self, limit: float = LEAKAGE_LIMIT) -> None:
        leak = self.leakage
        if leak > limit:
            raise TruncationError(
                f"GGE weight {leak:.2e} lies outside the complete sector at d={self.setup.d1}; "
                f"alpha={self.params.alpha:.4g} needs roughly d >= {suggested_fock_dim(self.params.alpha, limit)}"
            )


class TruncationError(ArithmeticError):
    """The Fock truncation is too small for the requested temperature and squeezing."""


def suggested_fock_dim(alpha: float, limit: float = LEAKAGE_LIMIT) -> int:
    """Smallest d whose thermal pair weight beyond n1 + n2 = d - 1 is below ``limit``."""
    q = math.exp(-alpha)
    d = 2
    # tail of (1-q)^2 q^N (N+1) summed from N = d
    while (d + 1 + q / (1 - q)) * q**d > limit:
        d += 1
    return d


def bosonic_point(
    beta: float,
    r: float,
    gtau: float,
    d: int = 60,
    omega: float = 1.0,
    frame: str = "squeezed",
    include_q3: bool = False,
    tolerance: float = 1e-8,
) -> BosonicPoint:
    if frame not in ("squeezed", "lab"):
        raise ValueError(f"frame must be 'squeezed' or 'lab', got {frame!r}")
    params = squeezed_thermal_affinities(beta, r, omega)
    setup = bosonic_setup(
        d, gtau, omega, frame_r=r if frame == "squeezed" else 0.0, include_q3=include_q3, tolerance=tolerance
    )
    return BosonicPoint(params=params, gtau=gtau, setup=setup, frame=frame)


def bosonic_time_reversal(setup: CollisionSetup) -> TimeReversalSpec:
    """Time reversal with Theta = K on mode 1 and diag(i^n) K on mode 2.

    Plain conjugation maps the real beam splitter to its inverse; the extra
    mode-2 parity makes the starred unitary equal to U itself.
    """
    W2 = np.diag(1j ** np.arange(setup.d2))
    return time_reversed(setup, basis1=np.eye(setup.d1), basis2=W2)


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------


def _check_mu(mu: float) -> None:
    if not abs(mu) < 1:
        raise ValueError(f"|mu| must be < 1, got {mu}")


def _alpha_nbar(beta: float, mu: float, omega: float) -> tuple[float, float, float]:
    _check_mu(mu)
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    alpha = beta * omega * math.sqrt(1 - mu * mu)
    nbar = 1.0 / math.expm1(alpha)
    t = math.tanh(alpha) / alpha
    return alpha, nbar, t


def thermal_moments(alpha: float, omega: float = 1.0) -> dict[str, float]:
    """<H>, <H^2>, <A^2> in a Gibbs state exp(-alpha H/omega)/Z (<A> vanishes there)."""
    n = 1.0 / math.expm1(alpha)
    w2 = omega * omega
    return {
        "H": omega * (n + 0.5),
        "H2": w2 * (2 * n * n + 2 * n + 0.25),
        "A2": w2 * (n * n + n + 0.5),
    }


def squeezed_moments(alpha: float, r: float, omega: float = 1.0) -> dict[str, float]:
    """First and second moments of H and A in the squeezed thermal GGE."""
    th = thermal_moments(alpha, omega)
    c, s = math.cosh(2 * r), math.sinh(2 * r)
    return {
        "H": c * th["H"],
        "A": s * th["H"],
        "H2": c * c * th["H2"] + s * s * th["A2"],
        "A2": s * s * th["H2"] + c * c * th["A2"],
        "HA": c * s * (th["H2"] + th["A2"]),
    }


def closed_form_onsager(beta: float, mu: float, omega: float = 1.0, gtau: float = math.pi / 4, variant: str = "exact") -> np.ndarray:
    """Energy/squeezing Onsager matrix in closed form.

    ``variant="exact"`` uses <A^2>_th = omega^2 (nbar^2 + nbar + 1/2), which is
    what the truncated-Fock numerics converge to. ``variant="printed"`` uses
    nbar^2 + nbar/2 + 1/2 in that slot, kept for comparison.
    """
    alpha, n, t = _alpha_nbar(beta, mu, omega)
    if variant == "exact":
        B = n * n + n + 0.5
    elif variant == "printed":
        B = n * n + n / 2 + 0.5
    else:
        raise ValueError(f"unknown variant {variant!r}")
    N = n * n + n
    pre = math.sin(gtau) ** 2 * omega**2 / (1 - mu * mu)
    L11 = pre * (N + mu * mu * t * B)
    L12 = pre * mu * (N + t * B)
    L22 = pre * (mu * mu * N + t * B)
    return np.array([[L11, L12], [L12, L22]])


def heat_squeezing_transform(mu: float) -> np.ndarray:
    """J_Q = J_1 - mu J_2, J_A = J_2."""
    return np.array([[1.0, -mu], [0.0, 1.0]])


def heat_squeezing_onsager(beta: float, mu: float, omega: float = 1.0, gtau: float = math.pi / 4, variant: str = "exact") -> np.ndarray:
    """Heat/squeezing Onsager matrix [[L_QQ, L_QA], [L_AQ, L_AA]] in closed form."""
    alpha, n, t = _alpha_nbar(beta, mu, omega)
    B = n * n + n + 0.5 if variant == "exact" else n * n + n / 2 + 0.5
    if variant not in ("exact", "printed"):
        raise ValueError(f"unknown variant {variant!r}")
    N = n * n + n
    s2 = math.sin(gtau) ** 2 * omega**2
    LQQ = s2 * (1 - mu * mu) * N
    LQA = s2 * mu * N
    LAA = s2 / (1 - mu * mu) * (mu * mu * N + t * B)
    return np.array([[LQQ, LQA], [LQA, LAA]])


def closed_form_R(alpha: float) -> float:
    """(alpha - tanh a) / (2 alpha / (3 cosh a - sinh a - 1) + tanh a)."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    th = math.tanh(alpha)
    den = 3 * math.cosh(alpha) - math.sinh(alpha) - 1
    return (alpha - th) / (2 * alpha / den + th)


def closed_form_var_D(beta: float, r: float, delta_lambda, omega: float = 1.0, gtau: float = math.pi / 4) -> float:
    """<D^2> - <D>^2 over the global GGE for D = sum_k dlam_k (Q~_k - Q_k)."""
    params = squeezed_thermal_affinities(beta, r, omega)
    n = params.nbar
    c, s = math.cosh(2 * r), math.sinh(2 * r)
    d1, d2 = delta_lambda
    u, v = d1 * c + d2 * s, d1 * s + d2 * c
    return 2 * math.sin(gtau) ** 2 * omega**2 * (u * u * (n * n + n) + v * v * (n * n + n + 0.5))


def closed_form_R_directional(beta: float, r: float, delta_lambda, omega: float = 1.0) -> float:
    """Relative entropy reduction for a given gradient direction.

    With u = dlam1 cosh 2r + dlam2 sinh 2r and v = dlam1 sinh 2r + dlam2 cosh 2r
    the split reads R = v^2 B (1 - t) / (u^2 (nbar^2 + nbar) + v^2 t B),
    t = tanh(alpha)/alpha and B = nbar^2 + nbar + 1/2.
    """
    params = squeezed_thermal_affinities(beta, r, omega)
    n, alpha = params.nbar, params.alpha
    t = math.tanh(alpha) / alpha
    c, s = math.cosh(2 * r), math.sinh(2 * r)
    d1, d2 = delta_lambda
    u, v = d1 * c + d2 * s, d1 * s + d2 * c
    B = n * n + n + 0.5
    den = u * u * (n * n + n) + v * v * t * B
    if den <= 0:
        return float("nan")
    return v * v * B * (1 - t) / den


def closed_form_sld(H: np.ndarray, A: np.ndarray, beta: float, r: float, omega: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """SLDs of the squeezed thermal GGE with respect to (lambda_1, lambda_2).

    ``H`` and ``A`` may be lab-frame charges or their squeezed-frame images;
    the expression is covariant, and the means are frame independent.
    """
    params = squeezed_thermal_affinities(beta, r, omega)
    mu, alpha = params.mu, params.alpha
    k = math.tanh(alpha) / alpha - 1
    mom = squeezed_moments(alpha, r, omega)
    I = np.eye(H.shape[0])
    X = (A - mu * H) / (1 - mu * mu)
    L1 = mom["H"] * I - (H + k * mu * X)
    L2 = mom["A"] * I - (A + k * X)
    return L1, L2


# --------------------------------------------------------------------------
# thermosqueezing coefficients and engine
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ThermoCoefficients:
    """Heat/squeezing transport coefficients.

    ``kappa`` and ``G`` are positive magnitudes L_QQ/T^2 and L_AA/T. The
    ``*_signed`` fields carry the same quantities with the explicit minus
    signs of the conductance definitions; ZT is unaffected by them.
    """

    T: float
    mu: float
    L: np.ndarray
    kappa: float
    G: float
    S: float
    Pi: float
    ZT: float
    ZT_from_L: float
    kappa_signed: float
    G_signed: float
    kappa_open_circuit: float
    delta_mu_fr_per_dbeta: float
    delta_mu_stop_per_dbeta: float


def thermo_coefficients(beta: float, mu: float, omega: float = 1.0, gtau: float = math.pi / 2, L_heat: np.ndarray | None = None) -> ThermoCoefficients:
    """kappa, G, S, Pi and ZT from the heat/squeezing Onsager matrix.

    ``L_heat`` defaults to the closed form; pass a numeric matrix to evaluate
    the coefficients of a simulated setup. Without squeezing S = Pi = ZT = 0
    and the fridge window is undefined (nan).
    """
    _check_mu(mu)
    T = 1.0 / beta
    L = heat_squeezing_onsager(beta, mu, omega, gtau) if L_heat is None else np.asarray(L_heat, float)
    LQQ, LQA, LAQ, LAA = L[0, 0], L[0, 1], L[1, 0], L[1, 1]
    kappa = LQQ / T**2
    G = LAA / T
    S = LAQ / (T * LAA)
    Pi = LQA / LAA
    ZT = G * S * S * T / kappa if kappa else 0.0
    ZT_L = LQA * LQA / (LQQ * LAA) if LQQ * LAA else 0.0
    GS = G * S
    fr = kappa * T / GS if GS else float("nan")
    return ThermoCoefficients(
        T=T,
        mu=mu,
        L=L,
        kappa=kappa,
        G=G,
        S=S,
        Pi=Pi,
        ZT=ZT,
        ZT_from_L=ZT_L,
        kappa_signed=-kappa,
        G_signed=-G,
        kappa_open_circuit=(LQQ - LQA * LAQ / LAA) / T**2,
        delta_mu_fr_per_dbeta=fr,
        delta_mu_stop_per_dbeta=Pi / beta,
    )


@dataclass(frozen=True)
class EngineReport:
    coefficients: ThermoCoefficients
    delta_beta: float
    delta_mu_fr: float
    delta_mu_stop: float

    def currents(self, delta_mu: float) -> tuple[float, float]:
        """(J_Q, J_A) for a squeezing-potential difference delta_mu."""
        c = self.coefficients
        beta = 1.0 / c.T
        dl = np.array([self.delta_beta, -beta * delta_mu])
        JQ, JA = c.L @ dl
        return float(JQ), float(JA)

    def power(self, delta_mu: float) -> float:
        """W = J_A delta_mu."""
        return self.currents(delta_mu)[1] * delta_mu

    def entropy_production(self, delta_mu: float) -> float:
        beta = 1.0 / self.coefficients.T
        dl = np.array([self.delta_beta, -beta * delta_mu])
        return float(dl @ self.coefficients.L @ dl)

    def dissipation_split(self, delta_mu: float, open_circuit: bool = False) -> tuple[float, float]:
        """(T Sigma, kappa dT^2/T + J_A^2/G) with dT = -T^2 dbeta.

        ``open_circuit=True`` uses the thermal conductance at J_A = 0 in place
        of kappa, the conductance for which the split is an identity.
        """
        c = self.coefficients
        dT = -c.T**2 * self.delta_beta
        k = c.kappa_open_circuit if open_circuit else c.kappa
        JA = self.currents(delta_mu)[1]
        return c.T * self.entropy_production(delta_mu), k * dT * dT / c.T + JA * JA / c.G


def engine_analysis(beta: float, mu: float, omega: float, gtau: float, delta_beta: float, L_heat: np.ndarray | None = None) -> EngineReport:
    """Fridge and engine windows of the linear thermosqueezing device."""
    if not delta_beta > 0:
        raise ValueError("delta_beta must be positive")
    c = thermo_coefficients(beta, mu, omega, gtau, L_heat)
    return EngineReport(
        coefficients=c,
        delta_beta=delta_beta,
        delta_mu_fr=c.delta_mu_fr_per_dbeta * delta_beta,
        delta_mu_stop=c.delta_mu_stop_per_dbeta * delta_beta,
    )


# --------------------------------------------------------------------------
# Gaussian characterization
# --------------------------------------------------------------------------

SYMPLECTIC_TOL = 1e-10


def symplectic_form(n_modes: int) -> np.ndarray:
    """Omega = [[0, I], [-I, 0]] in the (x_1..x_N, p_1..p_N) ordering."""
    I = np.eye(n_modes)
    Z = np.zeros((n_modes, n_modes))
    return np.block([[Z, I], [-I, Z]])


def charge_kernels(n_modes: int) -> dict[str, np.ndarray]:
    """Quadratic-form matrices of the net charges: Q_i = (omega/2) R^T K_i R."""
    I = np.eye(n_modes)
    Z = np.zeros((n_modes, n_modes))
    return {
        "Q1": np.eye(2 * n_modes),
        "Q2": np.block([[I, Z], [Z, -I]]),
        "Q3": np.block([[Z, I], [I, Z]]),
    }


def is_symplectic(V: np.ndarray, tol: float = SYMPLECTIC_TOL) -> bool:
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1] or V.shape[0] % 2:
        return False
    Om = symplectic_form(V.shape[0] // 2)
    return max_abs(V.T @ Om @ V - Om) <= tol * max(1.0, max_abs(V) ** 2)


@dataclass(frozen=True)
class SymplecticChargeReport:
    residuals: dict
    preserved: frozenset


def symplectic_charge_check(V: np.ndarray, tol: float = SYMPLECTIC_TOL) -> SymplecticChargeReport:
    """Which of V^T K_i V = K_i hold for the three net charges."""
    V = np.asarray(V, dtype=float)
    if not is_symplectic(V, tol):
        raise ValueError("matrix is not symplectic")
    res = {}
    for name, K in charge_kernels(V.shape[0] // 2).items():
        res[name] = max_abs(V.T @ K @ V - K)
    scale = max(1.0, max_abs(V) ** 2)
    return SymplecticChargeReport(residuals=res, preserved=frozenset(k for k, v in res.items() if v <= tol * scale))


def passive_symplectic(u: np.ndarray) -> np.ndarray:
    """Symplectic image of the mode transformation a -> u a (u unitary)."""
    X, Y = np.real(u), np.imag(u)
    return np.block([[X, -Y], [Y, X]])


def rotation_symplectic(phi: float) -> np.ndarray:
    """Two-mode beam splitter with mixing angle phi (real rotation, Y = 0)."""
    c, s = math.cos(phi), math.sin(phi)
    return passive_symplectic(np.array([[c, s], [-s, c]], dtype=complex))


def hopping_symplectic(g: float) -> np.ndarray:
    """exp(-i g (a1^dag a2 + a2^dag a1)): a_1 -> cos g a_1 - i sin g a_2."""
    c, s = math.cos(g), math.sin(g)
    return passive_symplectic(np.array([[c, -1j * s], [-1j * s, c]]))


def squeezing_symplectic(s: float, n_modes: int = 2, mode: int = 0) -> np.ndarray:
    """Single-mode squeezer x -> e^s x, p -> e^-s p embedded in n_modes."""
    diag = np.ones(2 * n_modes)
    diag[mode] = math.exp(s)
    diag[n_modes + mode] = math.exp(-s)
    return np.diag(diag)


def random_symplectic(n_modes: int, rng: np.random.Generator, passive: bool = False, scale: float = 0.5) -> np.ndarray:
    """Random symplectic matrix: exp(Omega S) with S symmetric, or a random passive one."""
    if passive:
        Z = rng.normal(size=(n_modes, n_modes)) + 1j * rng.normal(size=(n_modes, n_modes))
        q, r = np.linalg.qr(Z)
        u = q * (np.diag(r) / np.abs(np.diag(r)))
        return passive_symplectic(u)
    S = rng.normal(scale=scale, size=(2 * n_modes, 2 * n_modes))
    S = (S + S.T) / 2
    return sla.expm(symplectic_form(n_modes) @ S)
