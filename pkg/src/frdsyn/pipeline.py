"""End-to-end synthesis pipeline.

One run goes: build the plant source, check the initial controller is
acceptable, construct a certified optimization grid at the initial point,
minimize the discretized objective with the bundle solver, then certify the
result with a fresh grid and a verification scan.  If the scan finds a
frequency where the response exceeds the certified level, that frequency
and its midpoints join the optimization grid and synthesis repeats.
"""

import logging
import os

import numpy as np

from .bundle import run as bundle_run, trace_to_csv
from .config import RunConfig
from .controllers import (
    ControllerStructure,
    export_controller,
    k_eval,
    k_eval_batch,
    pi_controller,
    static_gain,
    tridiag_controller,
)
from .errors import (
    BudgetExceededError,
    ConfigError,
    FrdsynError,
    HiddenConstraintViolation,
)
from .frd import FrdPlant, frd_load
from .gridcert import bound_from_samples, build_grid, certificate_to_csv, verify_certificate
from .linalg import max_svd
from .objective import BarrierSpec, HinfOracle, lft_close, nyquist_winding
from .plants import (
    CavityParams,
    RationalFilter,
    RcdConstants,
    assemble_mixed_sensitivity,
    cavity_transfer,
    rcd_transfer,
)

__all__ = ["PlantSource", "SynthOutcome", "synthesize", "evaluate", "certify", "build_opt_grid"]

log = logging.getLogger("frdsyn")


class PlantSource:
    """Generalized-plant samples at arbitrary frequencies.

    Analytic kinds (rcd, cavity) are precomputed on a fine logarithmic grid
    for fast interpolation and can also be evaluated exactly; FRD files are
    interpolated linearly between their own nodes.
    """

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.kind = cfg.plant.split(":", 1)[0]
        self.we = RationalFilter(cfg.we_num, cfg.we_den)
        self.wn = RationalFilter(cfg.wn_num, cfg.wn_den)
        self.wu = RationalFilter(cfg.wu_num, cfg.wu_den)
        self.barrier_c = cfg.barrier_c
        if self.kind == "rcd":
            self.consts = RcdConstants(D=cfg.rcd_D, U_ss=cfg.rcd_Uss,
                                       C_in=cfg.rcd_Cin, k=cfg.rcd_k, L=cfg.rcd_L)
            self.fine_omega = np.geomspace(cfg.wmin, cfg.wmax, cfg.fine_nodes)
            self.fine_g = rcd_transfer(self.consts, 1j * self.fine_omega)
            self.analytic = True
        elif self.kind == "cavity":
            self.params = CavityParams(p2=cfg.cavity_p2, q2=cfg.cavity_q2,
                                       c=cfg.cavity_c, tau1=cfg.cavity_tau[0],
                                       tau2=cfg.cavity_tau[1], tau3=cfg.cavity_tau[2])
            self.fine_omega = np.geomspace(cfg.wmin, cfg.wmax, cfg.fine_nodes)
            self.fine_g = cavity_transfer(self.params, 1j * self.fine_omega)
            self.analytic = True
        else:
            base = frd_load(cfg.frd_path(), unit=cfg.frd_unit)
            keep = (base.omega >= cfg.wmin) & (base.omega <= cfg.wmax)
            if np.count_nonzero(keep) < 2:
                raise ConfigError("FRD grid has fewer than 2 nodes inside [wmin, wmax]")
            self.base = base.subset(np.flatnonzero(keep))
            self.fine_omega = self.base.omega
            self.analytic = False

    @classmethod
    def from_frd(cls, cfg, plant: FrdPlant):
        src = cls.__new__(cls)
        src.cfg = cfg
        src.kind = "frd"
        src.base = plant
        src.fine_omega = plant.omega
        src.analytic = False
        return src

    # -- G evaluation (analytic plants only) --------------------------------

    def g_at(self, omega, exact=False):
        if self.kind == "rcd" and exact:
            return rcd_transfer(self.consts, 1j * np.asarray(omega, dtype=float))
        if self.kind == "cavity":
            return cavity_transfer(self.params, 1j * np.asarray(omega, dtype=float))
        if self.kind == "rcd":
            return np.interp(np.asarray(omega, dtype=float), self.fine_omega,
                             self.fine_g.real) + 1j * np.interp(
                np.asarray(omega, dtype=float), self.fine_omega, self.fine_g.imag)
        raise ConfigError("raw transfer samples are only defined for analytic plants")

    # -- plant sampling ------------------------------------------------------

    def sample(self, omegas, exact=False):
        """FrdPlant at the given frequencies."""
        omegas = np.asarray(omegas, dtype=float)
        if self.kind in ("rcd", "cavity"):
            g = self.g_at(omegas, exact=exact)
            return assemble_mixed_sensitivity(omegas, g, self.we, self.wn, self.wu,
                                              barrier_c=self.barrier_c)
        blocks = [self.base.at(w) for w in omegas]
        return FrdPlant(
            omegas,
            np.array([b[0] for b in blocks]),
            np.array([b[1] for b in blocks]),
            np.array([b[2] for b in blocks]),
            np.array([b[3] for b in blocks]),
        )

    def fine_plant(self):
        if self.kind in ("rcd", "cavity"):
            return self.sample(self.fine_omega)
        return self.base


def make_structure(cfg: RunConfig, plant: FrdPlant):
    if cfg.controller == "pi":
        st = pi_controller()
    elif cfg.controller == "static":
        st = static_gain(ny=plant.ny, nu=plant.nu)
    else:
        st = tridiag_controller(cfg.order, ny=plant.ny, nu=plant.nu)
    if len(cfg.x0) != st.n_params:
        raise ConfigError(
            f"x0 has {len(cfg.x0)} entries but the {st.kind} structure needs {st.n_params}"
        )
    return st


def make_barrier(cfg: RunConfig):
    return BarrierSpec(cfg.barrier_c) if cfg.barrier_c > 0 else None


def closed_loop_phi(source: PlantSource, structure, x, barrier, exact=False):
    """Pointwise objective curve omega -> max(sigma(T), c sigma(S))."""
    x = np.asarray(x, dtype=float)

    def phi(omega):
        plant = source.sample(np.array([float(omega)]), exact=exact)
        K = k_eval(structure, x, float(omega))
        T, S = lft_close(plant.p11[0], plant.p12[0], plant.p21[0], plant.p22[0],
                         K, omega=float(omega))
        val = max_svd(T).sigma
        if barrier is not None:
            val = max(val, barrier.c * max_svd(S).sigma)
        return val

    return phi


def curve_on_fine_grid(source: PlantSource, structure, x, barrier):
    plant = source.fine_plant()
    oracle = HinfOracle(plant, structure, barrier)
    _w, curve_T, curve_S = oracle.response_curves(np.asarray(x, dtype=float))
    if barrier is not None:
        return plant.omega, np.maximum(curve_T, curve_S)
    return plant.omega, curve_T


def stability_check(source: PlantSource, structure, x, barrier, eps_bar=1e-8):
    """Well-posedness plus barrier headroom on the fine grid; logs the winding."""
    plant = source.fine_plant()
    oracle = HinfOracle(plant, structure, barrier, eps_bar=eps_bar)
    oracle.value(np.asarray(x, dtype=float))  # raises on violation
    K = k_eval_batch(structure, np.asarray(x, dtype=float), plant.omega)
    winding = nyquist_winding(plant, K)
    log.info("advisory Nyquist winding of det(I - P22 K): %.3f turns", winding)
    return winding


def build_opt_grid(source: PlantSource, structure, x0, barrier, cfg: RunConfig,
                   theta=None):
    """Certified grid for the initial response curve (interpolated data)."""
    theta = cfg.theta if theta is None else theta
    omega_f, curve = curve_on_fine_grid(source, structure, x0, barrier)
    bound = bound_from_samples(omega_f, curve)
    phi = closed_loop_phi(source, structure, x0, barrier, exact=False)
    return build_grid(phi, bound, theta, (cfg.wmin, cfg.wmax),
                      node_budget=cfg.node_budget)


class SynthOutcome:
    def __init__(self):
        self.x = None
        self.f = None
        self.gamma_star = None
        self.certified = False
        self.refinements = 0
        self.report = None
        self.trace = None
        self.grid = None
        self.cert = None
        self.status = ""


def _refine(grid, violating):
    grid = np.asarray(grid, dtype=float)
    idx = int(np.searchsorted(grid, violating))
    new = [violating]
    if 0 < idx <= len(grid) - 1:
        new.append(0.5 * (grid[idx - 1] + violating))
    if idx < len(grid):
        new.append(0.5 * (violating + grid[idx]))
    merged = np.unique(np.concatenate([grid, np.array(new)]))
    return merged


def _scan_extras(source: PlantSource, verify_source: PlantSource = None):
    if verify_source is not None:
        return verify_source.fine_omega
    if not source.analytic:
        return source.fine_omega
    return None


def _load_verify_source(cfg: RunConfig):
    if cfg.verify_frd is None:
        return None
    base = frd_load(os.path.join(cfg.base_dir, cfg.verify_frd), unit=cfg.frd_unit)
    return PlantSource.from_frd(cfg, base)


def synthesize(cfg: RunConfig, out_dir=None):
    """Run the full loop; returns (exit_code, SynthOutcome)."""
    outcome = SynthOutcome()
    source = PlantSource(cfg)
    probe = source.sample(source.fine_omega[:1])
    structure = make_structure(cfg, probe)
    barrier = make_barrier(cfg)
    x0 = np.asarray(cfg.x0, dtype=float)

    try:
        stability_check(source, structure, x0, barrier)
    except HiddenConstraintViolation as err:
        outcome.status = f"initial controller not acceptable: {err}"
        return 2, outcome

    verify_source = _load_verify_source(cfg)

    try:
        cert0 = build_opt_grid(source, structure, x0, barrier, cfg)
    except BudgetExceededError as err:
        outcome.status = f"grid budget exhausted: {err}"
        return 3, outcome
    grid = cert0.omega

    x_start = x0
    params = cfg.solver_params()
    for round_no in range(cfg.max_refine + 1):
        plant_opt = source.sample(grid)
        oracle = HinfOracle(plant_opt, structure, barrier)
        res = bundle_run(oracle, x_start, params, rng_seed=cfg.seed)
        x_star = res.x
        gamma_star = res.f

        scan_source = verify_source if verify_source is not None else source
        phi_star = closed_loop_phi(scan_source, structure, x_star, barrier,
                                   exact=source.analytic)
        omega_f, curve_star = curve_on_fine_grid(source, structure, x_star, barrier)
        bound_star = bound_from_samples(omega_f, curve_star)
        cert = build_grid(phi_star, bound_star, cfg.theta, (cfg.wmin, cfg.wmax),
                          node_budget=cfg.node_budget)
        report = verify_certificate(phi_star, cert, gamma_star=gamma_star,
                                    density=cfg.verify_density,
                                    extra_nodes=_scan_extras(source, verify_source))
        outcome.x = x_star
        outcome.f = res.f
        outcome.gamma_star = gamma_star
        outcome.report = report
        outcome.trace = res.trace
        outcome.grid = grid
        outcome.cert = cert
        outcome.refinements = round_no
        outcome.status = res.status
        if report.passed:
            outcome.certified = True
            if out_dir is not None:
                write_artifacts(out_dir, cfg, structure, outcome, oracle)
            return 0, outcome
        log.info("certificate failed at omega=%.6g (scan %.6g > %.6g); refining",
                 report.violating_omega, report.scan_max,
                 gamma_star + cfg.theta)
        grid = _refine(grid, report.violating_omega)
        x_start = x_star

    if out_dir is not None:
        write_artifacts(out_dir, cfg, structure, outcome, oracle)
    return 3, outcome


def evaluate(cfg: RunConfig, out_dir=None):
    """Objective value of x0 on the certified grid (no optimization)."""
    outcome = SynthOutcome()
    source = PlantSource(cfg)
    probe = source.sample(source.fine_omega[:1])
    structure = make_structure(cfg, probe)
    barrier = make_barrier(cfg)
    x0 = np.asarray(cfg.x0, dtype=float)
    try:
        stability_check(source, structure, x0, barrier)
    except HiddenConstraintViolation as err:
        outcome.status = f"controller not acceptable: {err}"
        return 2, outcome
    try:
        cert0 = build_opt_grid(source, structure, x0, barrier, cfg)
    except BudgetExceededError as err:
        outcome.status = f"grid budget exhausted: {err}"
        return 3, outcome
    plant_opt = source.sample(cert0.omega)
    oracle = HinfOracle(plant_opt, structure, barrier)
    outcome.x = x0
    outcome.f = oracle.value(x0)
    outcome.grid = cert0.omega
    outcome.cert = cert0
    outcome.status = "evaluated"
    if out_dir is not None:
        write_artifacts(out_dir, cfg, structure, outcome, oracle)
    return 0, outcome


def make_grid(cfg: RunConfig, out_dir=None):
    """Algorithm step: build and store the optimization grid at x0."""
    outcome = SynthOutcome()
    source = PlantSource(cfg)
    probe = source.sample(source.fine_omega[:1])
    structure = make_structure(cfg, probe)
    barrier = make_barrier(cfg)
    x0 = np.asarray(cfg.x0, dtype=float)
    try:
        stability_check(source, structure, x0, barrier)
    except HiddenConstraintViolation as err:
        outcome.status = f"controller not acceptable: {err}"
        return 2, outcome
    try:
        cert = build_opt_grid(source, structure, x0, barrier, cfg)
    except BudgetExceededError as err:
        outcome.status = f"grid budget exhausted: {err}"
        return 3, outcome
    outcome.cert = cert
    outcome.grid = cert.omega
    outcome.status = f"grid with {len(cert.omega)} nodes"
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        certificate_to_csv(cert, os.path.join(out_dir, "grid.csv"))
    return 0, outcome


def certify(cfg: RunConfig, structure, x, out_dir=None):
    """Certify a given controller: grid value, verification scan, verdict."""
    outcome = SynthOutcome()
    source = PlantSource(cfg)
    barrier = make_barrier(cfg)
    x = np.asarray(x, dtype=float)
    try:
        stability_check(source, structure, x, barrier)
    except HiddenConstraintViolation as err:
        outcome.status = f"controller not acceptable: {err}"
        return 2, outcome

    verify_source = _load_verify_source(cfg)

    omega_f, curve = curve_on_fine_grid(source, structure, x, barrier)
    bound = bound_from_samples(omega_f, curve)
    phi_build = closed_loop_phi(source, structure, x, barrier, exact=False)
    try:
        cert = build_grid(phi_build, bound, cfg.theta, (cfg.wmin, cfg.wmax),
                          node_budget=cfg.node_budget)
    except BudgetExceededError as err:
        outcome.status = f"grid budget exhausted: {err}"
        return 3, outcome
    scan_source = verify_source if verify_source is not None else source
    phi_scan = closed_loop_phi(scan_source, structure, x, barrier,
                               exact=source.analytic)
    report = verify_certificate(phi_scan, cert, density=cfg.verify_density,
                                extra_nodes=_scan_extras(source, verify_source))
    outcome.x = x
    outcome.gamma_star = cert.gamma_star
    outcome.f = cert.gamma_star
    outcome.cert = cert
    outcome.grid = cert.omega
    outcome.report = report
    outcome.certified = report.passed
    outcome.status = "pass" if report.passed else "fail"
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        certificate_to_csv(cert, os.path.join(out_dir, "certificate.csv"))
    return (0 if report.passed else 1), outcome


def write_artifacts(out_dir, cfg: RunConfig, structure, outcome: SynthOutcome,
                    oracle: HinfOracle):
    os.makedirs(out_dir, exist_ok=True)
    if outcome.x is not None:
        export_controller(structure, outcome.x,
                          os.path.join(out_dir, "controller.txt"))
    if outcome.trace is not None:
        trace_to_csv(outcome.trace, os.path.join(out_dir, "trace.csv"))
    if outcome.cert is not None:
        certificate_to_csv(outcome.cert, os.path.join(out_dir, "certificate.csv"))
    if outcome.x is not None:
        omega, curve_T, curve_S = oracle.response_curves(outcome.x)
        with open(os.path.join(out_dir, "response.csv"), "w") as fh:
            fh.write("omega,sigma_T,barrier\n")
            for w, t, s in zip(omega, curve_T, curve_S):
                sv = 0.0 if not np.isfinite(s) else s
                fh.write(f"{w:.17g},{t:.17g},{sv:.17g}\n")
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(f"status = {outcome.status}\n")
        if outcome.f is not None:
            fh.write(f"f = {outcome.f:.17g}\n")
        if outcome.gamma_star is not None:
            fh.write(f"gamma_star = {outcome.gamma_star:.17g}\n")
        fh.write(f"theta = {cfg.theta:.17g}\n")
        if outcome.report is not None:
            fh.write(f"scan_max = {outcome.report.scan_max:.17g}\n")
            fh.write(f"certified = {int(outcome.certified)}\n")
        if outcome.grid is not None:
            fh.write(f"grid_nodes = {len(outcome.grid)}\n")
        fh.write(f"refinements = {outcome.refinements}\n")
