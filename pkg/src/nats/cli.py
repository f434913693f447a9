"""Command-line front end: ``nats {onsager,sweep,coeffs,simulate,verify} --config run.json``.

Exit codes: 0 success, 2 bad configuration, 3 Fock truncation too small,
4 a verification check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bosonic as bos
from .config import ConfigError, RunConfig, load_config
from .gge import as_affinities, squeezed_thermal_affinities, squeezing_from_mu
from .linalg import max_abs
from .qubits import qubit_setup
from .simulate import fixed_point_check, format_float, run_collisions
from .transport import (
    CollisionSetup,
    InvalidSetupError,
    ResponseKernel,
    bernoulli_series,
    check_charge_preservation,
    collide,
    entropy_informational,
    entropy_split,
    onsager_casimir_check,
    onsager_finite_difference,
    onsager_sld,
    onsager_ycov,
    reversal_residual,
    sld,
    sld_residual,
    sector_leakage,
    time_reversed,
    transform_onsager,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRUNCATION = 3
EXIT_VERIFY = 4

UNITS_BOSONIC = "units: hbar = k_B = 1; energies in hbar*omega, beta in k_B/(hbar*omega)"
UNITS_SWEEP = (
    "units: beta in k_B/(hbar*omega); L columns in (hbar*omega)^2 sin^2(g*tau); "
    "S in hbar*omega/k_B; R and ZT dimensionless"
)
UNITS_GENERIC = "units: dimensionless (charges in the units of the supplied matrices)"

DEFAULT_FOCK_DIM = 60
DEFAULT_FD_STEP = 1e-4
DEFAULT_DELTA_BETA = 1e-3


def _fmt(v) -> str:
    return format_float(v)


def write_csv(header, rows, unit_comment: str) -> str:
    buf = io.StringIO()
    buf.write(f"# {unit_comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return buf.getvalue()


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------


@dataclass
class Model:
    """A validated setup together with the operating point and gradient to use."""

    setup: CollisionSetup
    affinities: np.ndarray
    delta_lambda: np.ndarray
    units: str
    point: bos.BosonicPoint | None = None

    @property
    def affinities2(self) -> np.ndarray:
        return self.affinities - self.delta_lambda


def _bosonic_r(cfg: RunConfig) -> float:
    if "mu" in cfg.parameters:
        return squeezing_from_mu(cfg.param("mu"))
    return float(cfg.param("r", 0.0))


def build_model(cfg: RunConfig, fock_dim: int | None = None) -> Model:
    tol = cfg.tolerances.get("charge_preservation", 1e-8)
    if cfg.model == "bosonic":
        beta = float(cfg.param("beta", 1.0))
        r = _bosonic_r(cfg)
        omega = float(cfg.param("omega", 1.0))
        gtau = float(cfg.param("gtau", math.pi / 4))
        d = fock_dim or int(cfg.param("fock_dim", DEFAULT_FOCK_DIM))
        point = bos.bosonic_point(
            beta, r, gtau, d=d, omega=omega, frame=cfg.param("frame", "squeezed"),
            include_q3=bool(cfg.param("include_q3", False)), tolerance=tol,
        )
        lam = point.affinities
        if "delta_lambda" in cfg.parameters:
            dl = cfg.param("delta_lambda")
        elif "beta2" in cfg.parameters or "r2" in cfg.parameters:
            p2 = squeezed_thermal_affinities(float(cfg.param("beta2", beta)), float(cfg.param("r2", r)), omega)
            dl = lam[:2] - p2.affinities
        else:
            dl = [cfg.param("delta_beta", DEFAULT_DELTA_BETA), -beta * cfg.param("delta_mu", 0.0)]
        dl = np.asarray(dl, float)
        if len(dl) == 2 and point.setup.n_charges == 3:
            dl = np.append(dl, 0.0)
        try:
            dl = as_affinities(dl, point.setup.n_charges)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return Model(point.setup, lam, dl, UNITS_BOSONIC, point)

    if cfg.model == "qubit-demo":
        axes = cfg.param("axes", "z")
        setup = qubit_setup(float(cfg.param("theta", 0.4)), axes, tolerance=tol)
        lam = cfg.param("affinities", [0.5] * len(axes))
    else:
        setup = _custom_setup(cfg, tol)
        lam = cfg.param("affinities")
        if lam is None:
            raise ConfigError("custom-matrices needs parameters.affinities")
    n = setup.n_charges
    try:
        lam = as_affinities(lam, n)
        if "delta_lambda" in cfg.parameters:
            dl = as_affinities(cfg.param("delta_lambda"), n)
        elif "affinities2" in cfg.parameters:
            dl = lam - as_affinities(cfg.param("affinities2"), n)
        else:
            dl = np.full(n, 1e-3)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return Model(setup, lam, dl, UNITS_GENERIC)


def _custom_setup(cfg: RunConfig, tol: float) -> CollisionSetup:
    path = cfg.param("matrices")
    if path is None:
        raise ConfigError("custom-matrices needs parameters.matrices (an .npz file)")
    try:
        with np.load(cfg.resolve(path)) as data:
            U = np.asarray(data["U"])
            c1 = np.asarray(data["charges1"])
            c2 = np.asarray(data["charges2"]) if "charges2" in data else c1
            labels = tuple(str(s) for s in data["labels"]) if "labels" in data else ()
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load matrices from {path}: {exc}") from None
    if c1.ndim == 2:
        c1, c2 = c1[None], c2[None] if c2.ndim == 2 else c2
    try:
        return CollisionSetup(
            d1=c1.shape[-1], d2=c2.shape[-1], charges1=tuple(c1), charges2=tuple(c2),
            U=U, labels=labels, tolerance=tol,
        )
    except ValueError as exc:
        raise ConfigError(f"matrices do not define a collision: {exc}") from None


def _check_leakage(model: Model, cfg: RunConfig) -> None:
    if model.point is None:
        return
    limit = cfg.tolerances.get("leakage", bos.LEAKAGE_LIMIT)
    model.point.check_truncation(limit)
    # the displaced reservoir has to fit as well
    leak2 = sector_leakage(model.setup, model.affinities2)
    if leak2 > limit:
        raise bos.TruncationError(f"second reservoir leaks {leak2:.2e} outside the complete sector")


def _methods(name: str) -> list[str]:
    return ["ycov", "sld", "fd"] if name == "all" else [name]


def _onsager(method: str, model: Model, kernel: ResponseKernel, h: float):
    dl = model.delta_lambda
    if method == "ycov":
        return onsager_ycov(model.setup, model.affinities, dl, kernel=kernel)
    if method == "sld":
        return onsager_sld(model.setup, model.affinities, dl, kernel=kernel)
    rep = onsager_finite_difference(model.setup, model.affinities, h=h, richardson=True)
    ent = entropy_split(model.setup, model.affinities, dl, kernel=kernel)
    return type(rep)(rep.L, "fd", rep.symmetry_residual, rep.min_eigenvalue, ent)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_onsager(cfg: RunConfig, args) -> int:
    model = build_model(cfg, args.fock_dim)
    _check_leakage(model, cfg)
    n = model.setup.n_charges
    h = float(cfg.param("fd_step", DEFAULT_FD_STEP))
    kernel = ResponseKernel(model.setup, model.affinities)
    reports = [_onsager(m, model, kernel, h) for m in _methods(args.method or cfg.method)]
    exact = collide(model.setup, model.affinities, model.affinities2)

    idx = [(k, l) for k in range(n) for l in range(n)]
    header = (
        ["method"] + [f"L_{k + 1}_{l + 1}" for k, l in idx] + [f"J_{k + 1}" for k in range(n)]
        + ["sigma", "classical", "quantum", "R", "symmetry_residual", "min_eigenvalue"]
    )
    rows = []
    for rep in reports:
        e = rep.entropy
        rows.append(
            [rep.method] + [rep.L[k, l] for k, l in idx] + list(rep.L @ model.delta_lambda)
            + [e.sigma, e.classical, e.quantum, e.R, rep.symmetry_residual, rep.min_eigenvalue]
        )
    nan = float("nan")
    rows.append(["exact-collision"] + [nan] * len(idx) + list(exact.currents) + [exact.sigma] + [nan] * 5)
    _emit(write_csv(header, rows, model.units), args.out or cfg.output)

    for rep in reports:
        _note(
            f"{rep.method}: symmetry residual {rep.symmetry_residual:.3e}, "
            f"min eigenvalue {rep.min_eigenvalue:.6g}, R {rep.entropy.R:.6g}"
        )
    if len(reports) > 1:
        # ycov is the symmetric form, so methods are compared on symmetric parts
        sym = [(r.L + r.L.T) / 2 for r in reports]
        scale = max(max_abs(L) for L in sym) or 1.0
        worst = max(max_abs(a - b) for a in sym for b in sym) / scale
        _note(f"cross-method max discrepancy (relative to max|L|): {worst:.3e}")
    if model.point is not None and n == 2:
        p = model.point.params
        Lc = bos.closed_form_onsager(p.beta, p.mu, p.omega, model.point.gtau)
        scale = max_abs(Lc)
        if scale > 0:
            worst = max(max_abs(r.L - Lc) for r in reports) / scale
            _note(f"closed-form discrepancy (relative to max|L|): {worst:.3e}")
    return EXIT_OK


SWEEP_HEADER = ["beta", "r", "mu", "alpha", "L11", "L12", "L22", "L_QQ", "L_QA", "L_AA", "R", "S", "ZT"]


def sweep_row(beta: float, r: float, omega: float, gtau: float, source: str, d: int, delta_lambda, leak_limit: float):
    """One sweep row with Onsager entries divided by omega^2 sin^2(g tau)."""
    p = squeezed_thermal_affinities(beta, r, omega)
    norm = omega**2 * math.sin(gtau) ** 2
    if source == "closed-form":
        L = bos.closed_form_onsager(beta, p.mu, omega, gtau)
        R = bos.closed_form_R(p.alpha)
    else:
        point = bos.bosonic_point(beta, r, gtau, d=d, omega=omega)
        point.check_truncation(leak_limit)
        rep = onsager_ycov(point.setup, point.affinities, delta_lambda)
        L, R = rep.L, rep.entropy.R
    Lh = transform_onsager(L, bos.heat_squeezing_transform(p.mu))
    c = bos.thermo_coefficients(beta, p.mu, omega, gtau, L_heat=Lh)
    Ln, Lhn = L / norm, Lh / norm
    return [beta, r, p.mu, p.alpha, Ln[0, 0], Ln[0, 1], Ln[1, 1], Lhn[0, 0], Lhn[0, 1], Lhn[1, 1], R, c.S, c.ZT]


def _threads() -> int:
    raw = os.environ.get("NATS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"NATS_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"NATS_THREADS must be a positive integer, got {raw!r}")
    return n


def cmd_sweep(cfg: RunConfig, args) -> int:
    if cfg.model != "bosonic":
        raise ConfigError("sweep is only defined for the bosonic model")
    betas = cfg.sweep.get("beta", [cfg.param("beta", 1.0)])
    rs = cfg.sweep.get("r", [_bosonic_r(cfg)])
    omega = float(cfg.param("omega", 1.0))
    gtau = float(cfg.param("gtau", math.pi / 2))
    if abs(math.sin(gtau)) < 1e-12:
        raise ConfigError("g*tau is a multiple of pi; the sweep normalization sin^2(g*tau) vanishes")
    source = cfg.sweep.get("source", "closed-form")
    d = args.fock_dim or int(cfg.param("fock_dim", DEFAULT_FOCK_DIM))
    dl = cfg.param("delta_lambda", [1.0, 0.0])
    limit = cfg.tolerances.get("leakage", bos.LEAKAGE_LIMIT)
    grid = [(b, r) for b in betas for r in rs]
    jobs = [(b, r, omega, gtau, source, d, dl, limit) for b, r in grid]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            # map keeps grid order whatever the completion order
            rows = list(pool.map(sweep_row, *zip(*jobs)))
    else:
        rows = [sweep_row(*job) for job in jobs]
    _emit(write_csv(SWEEP_HEADER, rows, UNITS_SWEEP), args.out or cfg.output)
    return EXIT_OK


COEFF_HEADER = [
    "beta", "r", "mu", "T", "kappa", "G", "S", "Pi", "ZT", "kappa_signed", "G_signed",
    "kappa_open_circuit", "delta_beta", "delta_mu_stop", "delta_mu_fr", "delta_mu", "J_Q", "J_A",
    "power", "T_sigma", "dissipation_closed", "dissipation_open_circuit",
]


def cmd_coeffs(cfg: RunConfig, args) -> int:
    if cfg.model != "bosonic":
        raise ConfigError("coeffs is only defined for the bosonic model")
    beta = float(cfg.param("beta", 1.0))
    r = _bosonic_r(cfg)
    omega = float(cfg.param("omega", 1.0))
    gtau = float(cfg.param("gtau", math.pi / 2))
    db = float(cfg.param("delta_beta", DEFAULT_DELTA_BETA))
    if not db > 0:
        raise ConfigError("delta_beta must be positive for the engine analysis")
    mu = math.tanh(2 * r)
    eng = bos.engine_analysis(beta, mu, omega, gtau, db)
    c = eng.coefficients
    dmu = float(cfg.param("delta_mu", eng.delta_mu_stop / 2))
    JQ, JA = eng.currents(dmu)
    TS, split = eng.dissipation_split(dmu)
    _, split_oc = eng.dissipation_split(dmu, open_circuit=True)
    row = [
        beta, r, mu, c.T, c.kappa, c.G, c.S, c.Pi, c.ZT, c.kappa_signed, c.G_signed,
        c.kappa_open_circuit, db, eng.delta_mu_stop, eng.delta_mu_fr, dmu, JQ, JA,
        eng.power(dmu), TS, split, split_oc,
    ]
    unit = UNITS_BOSONIC + "; S in hbar*omega/k_B; power W = J_A*delta_mu"
    _emit(write_csv(COEFF_HEADER, [row], unit), args.out or cfg.output)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    model = build_model(cfg, args.fock_dim)
    _check_leakage(model, cfg)
    n = int(cfg.param("collisions", 10))
    traj = run_collisions(model.setup, model.affinities, model.affinities2, n)
    _emit(traj.to_csv(unit_comment=model.units + "; J_k is charge k gained by unit 1 per collision"), args.out or cfg.output)
    return EXIT_OK


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    def line(self) -> str:
        return f"{self.name},{_fmt(self.residual)},{_fmt(self.tolerance)},{'PASS' if self.passed else 'FAIL'}"


def _rel(a, b) -> float:
    scale = max(max_abs(np.asarray(b)), 1e-300)
    return max_abs(np.asarray(a) - np.asarray(b)) / scale


def verification_checks(model: Model, cfg: RunConfig, seed: int) -> list[Check]:
    """Invariants of the configured model; later checks need a charge-preserving setup."""
    setup, lam, dl = model.setup, model.affinities, model.delta_lambda
    checks = []
    pres = check_charge_preservation(setup)
    checks.append(Check("charge_preservation", pres.worst, pres.tolerance))
    if not pres.valid:
        _note("setup does not preserve the charges; remaining checks skipped")
        return checks
    if model.point is not None:
        checks.append(Check("sector_leakage", model.point.leakage, cfg.tolerances.get("leakage", bos.LEAKAGE_LIMIT)))

    checks.append(Check("gge_fixed_point", fixed_point_check(setup, lam), 1e-10))
    ker = ResponseKernel(setup, lam)
    y = onsager_ycov(setup, lam, dl, kernel=ker)
    s = onsager_sld(setup, lam, dl, kernel=ker)
    h = float(cfg.param("fd_step", DEFAULT_FD_STEP))
    f = onsager_finite_difference(setup, lam, h=h, richardson=True)
    scale = max(y.scale, 1e-300)
    starred = _starred(model)
    tri = reversal_residual(setup, starred) <= 1e-12
    for rep in (y, s, f):
        name = "fd" if rep is f else rep.method
        # the exact response is symmetric only under time-reversal symmetry
        if rep is y or tri:
            checks.append(Check(f"onsager_symmetry_{name}", rep.symmetry_residual / scale, 1e-9))
        checks.append(Check(f"onsager_psd_{name}", max(0.0, -rep.min_eigenvalue) / scale, 1e-10))
    Lu = y.L_unsymmetrized
    checks.append(Check("ycov_vs_symmetric_response", _rel(y.L, (Lu + Lu.T) / 2), 1e-8))
    checks.append(Check("sld_vs_exact_response", _rel(s.L, Lu), 1e-8))
    checks.append(Check("fd_vs_exact_response", _rel(f.L, Lu), 1e-6))
    if model.point is not None and setup.n_charges == 2:
        p = model.point.params
        Lc = bos.closed_form_onsager(p.beta, p.mu, p.omega, model.point.gtau)
        checks.append(Check("closed_form_onsager", _rel(y.L, Lc), 1e-6))
        c = bos.thermo_coefficients(p.beta, p.mu, p.omega, model.point.gtau, L_heat=transform_onsager(y.L, bos.heat_squeezing_transform(p.mu)))
        checks.append(Check("peltier_equals_T_seebeck", abs(c.Pi - c.T * c.S), 1e-12))
        checks.append(Check("zt_identity", abs(c.ZT - c.ZT_from_L), 1e-12))

    e = y.entropy
    checks.append(Check("entropy_split_closure", abs(e.closure_residual) / max(e.sigma, 1e-300), 1e-9))
    checks.append(Check("second_moment_bound", max(0.0, e.sigma - e.second_moment_half), 0.0))
    res = collide(setup, lam, model.affinities2)
    checks.append(Check("current_conservation", res.conservation_residual, 1e-10))
    quad = float(dl @ y.L_unsymmetrized @ dl)
    checks.append(Check("sigma_quadratic_form", abs(res.sigma - quad) / max(abs(quad), 1e-300), 10 * max_abs(dl)))
    info = entropy_informational(setup, lam, model.affinities2)
    checks.append(Check("sigma_informational", abs(info.sigma_info - info.sigma_exact), 1e-9))

    pi = ker.pi1
    worst = 0.0
    for k in range(setup.n_charges):
        worst = max(worst, sld_residual(pi, sld(setup.charges1, lam, k), k))
    checks.append(Check("sld_residual", worst, 1e-10))

    casimir = onsager_casimir_check(setup, starred, lam)
    checks.append(Check("onsager_casimir", casimir.residual / scale, 1e-9))

    rng = np.random.default_rng(seed)
    alpha = float(rng.uniform(0.05, 1.45))
    checks.append(Check("bernoulli_series", abs(bernoulli_series(2 * alpha) - (math.tanh(alpha) / alpha - 1)), 1e-8))
    # passive maps keep the total photon number; real rotations keep all three charges
    V = bos.random_symplectic(2, rng, passive=True)
    checks.append(Check("passive_symplectic_number", bos.symplectic_charge_check(V).residuals["Q1"], bos.SYMPLECTIC_TOL))
    V = bos.rotation_symplectic(float(rng.uniform(0, 2 * math.pi)))
    checks.append(Check("rotation_symplectic_charges", max(bos.symplectic_charge_check(V).residuals.values()), bos.SYMPLECTIC_TOL))
    return checks


def _starred(model: Model):
    if model.point is not None:
        return bos.bosonic_time_reversal(model.setup)
    return time_reversed(model.setup)


def cmd_verify(cfg: RunConfig, args) -> int:
    model = build_model(cfg, args.fock_dim)
    checks = verification_checks(model, cfg, args.seed)
    override = cfg.tolerances.get("verify")
    if override is not None:
        checks = [Check(c.name, c.residual, override) for c in checks]
    text = "name,residual,tolerance,pass\n" + "".join(c.line() + "\n" for c in checks)
    _emit(text, args.out)
    if args.out:
        sys.stdout.write(text)
    failed = [c.name for c in checks if not c.passed]
    if failed:
        _note(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_VERIFY
    return EXIT_OK


# --------------------------------------------------------------------------

COMMANDS = {
    "onsager": cmd_onsager,
    "sweep": cmd_sweep,
    "coeffs": cmd_coeffs,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nats", description="Transport coefficients of collisional non-Abelian thermal machines.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "onsager": "Onsager matrix by the requested methods, with the entropy split",
        "sweep": "closed-form or numeric (beta, r) grid of transport coefficients",
        "coeffs": "thermosqueezing coefficients and engine windows",
        "simulate": "per-collision trajectory of currents and entropy production",
        "verify": "run the invariant checks and report pass/fail",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output CSV path (stdout when omitted)")
        p.add_argument("--method", choices=["ycov", "sld", "fd", "all"], help="overrides the configured method")
        p.add_argument("--fock-dim", type=int, help="overrides parameters.fock_dim")
        p.add_argument("--seed", type=int, default=0, help="seed for the randomized checks of verify")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.fock_dim is not None and not 2 <= args.fock_dim <= 120:
        _note("error: --fock-dim must lie in [2, 120]")
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        _note(f"error: {exc}")
        return EXIT_CONFIG
    except bos.TruncationError as exc:
        _note(f"error: {exc}")
        return EXIT_TRUNCATION
    except InvalidSetupError as exc:
        _note(f"error: {exc}")
        return EXIT_VERIFY if args.command == "verify" else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
