"""Manufactured-solution verification: 1D flow coupled with solute transport.

Exact fields on z in [0, 1]::

    psi_m(z, t) = -t z (1 - z) + z/4
    c_m(z, t)   =  t z (1 - z) + 1

with theta(psi, c) = 1/(1 - psi - c/10) and K(psi) = psi^2. The governing
equations are

    d_t theta - d_z [K d_z(psi + z)]            = f_psi
    d_t (theta c) + d_z (q c) - D d_zz c         = f_c,    q = -K d_z(psi + z)

and the sources are obtained by substituting the exact fields. Both fields
are advanced by explicit L-scheme sweeps: flow first (with the current
concentration inside theta), then transport using the fresh heads.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .constitutive import ManufacturedModel
from .exceptions import ConfigError, DomainViolation, NoConvergence, StabilityViolated
from .fdm1d import STABILITY_LIMIT, ExplicitLConfig, Grid1D, explicit_l_step, face_conductivities
from .iteration import l2_scaled
from .orders import CorrectionSequence, Kind, classify, eoc

REFINEMENT_DZ = (0.1, 0.05, 0.025, 0.0125)

# With error-based stopping every level ends with an error of about the
# tolerance, and that lag is inherited by the next level. On nz = 40 the
# floor passes 1e-3 after roughly eight levels, so the study stops earlier.
DICHOTOMY_T = 0.15


class ManufacturedSolution:
    """Closed forms of the exact fields and their partial derivatives."""

    @staticmethod
    def psi(z, t):
        z = np.asarray(z, dtype=np.float64)
        return -t * z * (1.0 - z) + z / 4.0

    @staticmethod
    def c(z, t):
        z = np.asarray(z, dtype=np.float64)
        return t * z * (1.0 - z) + 1.0

    @staticmethod
    def psi_t(z, t):
        z = np.asarray(z, dtype=np.float64)
        return -z * (1.0 - z)

    @staticmethod
    def psi_z(z, t):
        z = np.asarray(z, dtype=np.float64)
        return -t * (1.0 - 2.0 * z) + 0.25

    @staticmethod
    def psi_zz(z, t):
        return 2.0 * t + 0.0 * np.asarray(z, dtype=np.float64)

    @staticmethod
    def c_t(z, t):
        z = np.asarray(z, dtype=np.float64)
        return z * (1.0 - z)

    @staticmethod
    def c_z(z, t):
        z = np.asarray(z, dtype=np.float64)
        return t * (1.0 - 2.0 * z)

    @staticmethod
    def c_zz(z, t):
        return -2.0 * t + 0.0 * np.asarray(z, dtype=np.float64)


def manufactured_sources(z, t, diffusion=1.0):
    """Return ``(f_psi, f_c)`` at positions ``z`` (array or Grid1D) and time t."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if isinstance(z, Grid1D):
        z = z.z
    ms = ManufacturedSolution
    psi, c = ms.psi(z, t), ms.c(z, t)
    den = 1.0 - psi - c / 10.0
    if np.any(den <= 0):
        raise DomainViolation("manufactured theta undefined on this trajectory")
    theta = 1.0 / den
    theta_t = theta**2 * (ms.psi_t(z, t) + ms.c_t(z, t) / 10.0)
    grad_h = ms.psi_z(z, t) + 1.0
    # q = -psi^2 (psi_z + 1)
    q = -psi**2 * grad_h
    q_z = -(2.0 * psi * ms.psi_z(z, t) * grad_h + psi**2 * ms.psi_zz(z, t))
    f_psi = theta_t + q_z
    f_c = (theta_t * c + theta * ms.c_t(z, t) + q_z * c + q * ms.c_z(z, t)
           - diffusion * ms.c_zz(z, t))
    return f_psi, f_c


@dataclass
class CoupledState:
    psi: np.ndarray
    c: np.ndarray
    k: int = 0

    def __post_init__(self):
        if np.shape(self.psi) != np.shape(self.c):
            raise ValueError("psi and c must live on the same grid")


@dataclass
class CoupledConfig:
    L: float = 100.0
    diffusion: float = 1.0
    dt: float = None
    T: float = 1.0
    safety: float = 0.9
    tol: float = 1e-6
    stopping: str = "corrections"
    max_iters: int = 200_000
    check_stability: bool = True

    def __post_init__(self):
        if self.stopping not in ("corrections", "errors"):
            raise ConfigError("stopping must be 'corrections' or 'errors'")
        if not self.L > 0 or not self.diffusion > 0 or not self.T > 0:
            raise ConfigError("L, diffusion and T must be positive")


def stable_dt_coupled(grid, cfg, k_max=1.0 / 16.0):
    """Largest dt meeting both r <= 1/2 bounds (flow with K <= k_max, transport with D)."""
    flow = STABILITY_LIMIT * cfg.L * grid.dz**2 / k_max
    transport = STABILITY_LIMIT * cfg.L * grid.dz**2 / cfg.diffusion
    return min(flow, transport)


def time_grid(grid, cfg):
    """(dt, number of steps) with dt dividing T."""
    dt = cfg.dt if cfg.dt is not None else cfg.safety * stable_dt_coupled(grid, cfg)
    steps = max(1, math.ceil(cfg.T / dt - 1e-12))
    return cfg.T / steps, steps


def darcy_flux(grid, closure, psi):
    """q on each face between nodes i and i+1."""
    kface = np.asarray(closure.conductivity(0.5 * (psi[:-1] + psi[1:])))
    return -kface * ((psi[1:] - psi[:-1]) / grid.dz + 1.0)


def transport_step(grid, model, psi_new, c_s, theta_c_prev, f_c, dt, L, diffusion,
                   check_stability=True):
    rd = diffusion * dt / (L * grid.dz**2)
    if check_stability and rd > STABILITY_LIMIT:
        raise StabilityViolated(-1, rd, STABILITY_LIMIT * L * grid.dz**2 / diffusion)
    theta = model.water_content(psi_new, c_s)
    q = darcy_flux(grid, model, psi_new)
    return _kernels.explicit_transport_sweep(
        np.ascontiguousarray(c_s), np.ascontiguousarray(q), np.ascontiguousarray(theta),
        np.ascontiguousarray(theta_c_prev), np.ascontiguousarray(f_c),
        diffusion, dt, grid.dz, L,
    )


def coupled_iteration(state, grid, cfg, sources, previous, dt, model=None):
    """One flow sweep followed by one transport sweep.

    ``previous`` is the CoupledState of the last time level; the boundary
    entries of ``state`` hold the Dirichlet data of the new level. Returns the
    new state and the correction pair ``(||dpsi||, ||dc||)``.
    """
    model = model or ManufacturedModel()
    f_psi, f_c = sources
    flow_cfg = ExplicitLConfig(L=cfg.L, dt=dt, check_stability=cfg.check_stability)
    theta_prev = model.water_content(previous.psi, previous.c)
    closure = model.at_concentration(state.c)
    psi_new = explicit_l_step(grid, closure, state.psi, previous.psi, flow_cfg, f_psi,
                              bottom="dirichlet", theta_prev=theta_prev)
    c_new = transport_step(grid, model, psi_new, state.c, theta_prev * previous.c, f_c,
                           dt, cfg.L, cfg.diffusion, cfg.check_stability)
    c_new[0], c_new[-1] = state.c[0], state.c[-1]
    pair = (l2_scaled(psi_new - state.psi), l2_scaled(c_new - state.c))
    return CoupledState(psi_new, c_new, state.k), pair


@dataclass
class StepRecord:
    k: int
    t: float
    psi_corrections: CorrectionSequence
    c_corrections: CorrectionSequence
    psi_errors: CorrectionSequence
    c_errors: CorrectionSequence
    iterations: int


@dataclass
class CoupledRun:
    grid: Grid1D
    dt: float
    state: CoupledState
    steps: list = field(default_factory=list)

    @property
    def t_final(self):
        return self.steps[-1].t if self.steps else 0.0

    def errors(self):
        t = self.t_final
        ms = ManufacturedSolution
        return (l2_scaled(self.state.psi - ms.psi(self.grid.z, t)),
                l2_scaled(self.state.c - ms.c(self.grid.z, t)))

    @property
    def total_iterations(self):
        return sum(s.iterations for s in self.steps)


def solve_coupled(grid, cfg, record_steps=None):
    """March the coupled problem to ``cfg.T``.

    ``record_steps`` selects which time levels keep their per-iteration
    sequences (all by default; negative entries count from the end). Raises NoConvergence if a level exhausts
    ``cfg.max_iters``.
    """
    model = ManufacturedModel()
    ms = ManufacturedSolution
    z = grid.z
    dt, nsteps = time_grid(grid, cfg)
    state = CoupledState(ms.psi(z, 0.0), ms.c(z, 0.0), 0)
    run = CoupledRun(grid, dt, state)
    for k in range(1, nsteps + 1):
        t = k * dt
        sources = manufactured_sources(z, t, cfg.diffusion)
        psi_exact, c_exact = ms.psi(z, t), ms.c(z, t)
        previous = state
        guess_psi = previous.psi.copy()
        guess_c = previous.c.copy()
        guess_psi[[0, -1]] = psi_exact[[0, -1]]
        guess_c[[0, -1]] = c_exact[[0, -1]]
        current = CoupledState(guess_psi, guess_c, k)
        dpsi, dc, epsi, ec = [], [], [], []
        converged = False
        for _ in range(cfg.max_iters):
            current, (a, b) = coupled_iteration(current, grid, cfg, sources, previous, dt, model)
            dpsi.append(a)
            dc.append(b)
            ea = l2_scaled(current.psi - psi_exact)
            eb = l2_scaled(current.c - c_exact)
            epsi.append(ea)
            ec.append(eb)
            crit = max(a, b) if cfg.stopping == "corrections" else max(ea, eb)
            if crit <= cfg.tol:
                converged = True
                break
        if not converged:
            raise NoConvergence(f"coupled step {k}: no convergence after {cfg.max_iters} sweeps",
                                state=current)
        state = current
        if record_steps is None or k in record_steps or (k - nsteps - 1) in record_steps:
            run.steps.append(StepRecord(
                k, t,
                CorrectionSequence.from_values(dpsi, f"psi-corrections@k={k}"),
                CorrectionSequence.from_values(dc, f"c-corrections@k={k}"),
                CorrectionSequence.from_values(epsi, f"psi-errors@k={k}", Kind.errors),
                CorrectionSequence.from_values(ec, f"c-errors@k={k}", Kind.errors),
                len(dpsi),
            ))
        else:
            run.steps.append(StepRecord(k, t, None, None, None, None, len(dpsi)))
    run.state = state
    return run


@dataclass
class RefinementRow:
    dz: float
    err_psi: float
    err_c: float
    eoc_psi: float = float("nan")
    eoc_c: float = float("nan")
    iterations: int = 0


def refinement_study(dz_list=REFINEMENT_DZ, cfg=None):
    """Table of final-time errors and EOCs under successive halving of dz."""
    cfg = cfg or CoupledConfig()
    rows = []
    for dz in dz_list:
        nz = round(1.0 / dz)
        if abs(nz * dz - 1.0) > 1e-12:
            raise ConfigError(f"dz = {dz} does not divide the unit interval")
        run = solve_coupled(Grid1D(1.0, nz), cfg, record_steps=())
        ep, ec = run.errors()
        rows.append(RefinementRow(dz, ep, ec, iterations=run.total_iterations))
    psi_orders = eoc([(r.dz, r.err_psi) for r in rows])
    c_orders = eoc([(r.dz, r.err_c) for r in rows])
    for row, a, b in zip(rows[1:], psi_orders, c_orders):
        row.eoc_psi, row.eoc_c = a, b
    return rows


def dichotomy_study(nz=40, T=DICHOTOMY_T, tol=1e-3, cfg=None):
    """Run with error-based stopping and classify the last level's four sequences.

    Returns ``(StepRecord, {name: OrderReport})`` with names psi_errors,
    c_errors, psi_corrections and c_corrections.
    """
    cfg = cfg or CoupledConfig()
    cfg = CoupledConfig(L=cfg.L, diffusion=cfg.diffusion, dt=cfg.dt, T=T, safety=cfg.safety,
                        tol=tol, stopping="errors", max_iters=cfg.max_iters,
                        check_stability=cfg.check_stability)
    run = solve_coupled(Grid1D(1.0, nz), cfg, record_steps=(-1,))
    last = run.steps[-1]
    names = ("psi_errors", "c_errors", "psi_corrections", "c_corrections")
    return last, {name: classify(getattr(last, name)) for name in names}
