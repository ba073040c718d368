"""Explicit finite-difference L-scheme for 1D Richards' equation.

Nodes sit at ``z_i = i*dz``, i = 0..nz, with z pointing up. One sweep is::

    psi_i <- (1 - r_up - r_dn) psi_i + r_up psi_{i+1} + r_dn psi_{i-1} + f_i

    r_up/dn = K(psi_{i+-1/2}) dt / (L dz^2)
    f_i     = dt*src_i/L + (r_up - r_dn) dz - (theta(psi_i) - theta_prev_i)/L

with the face head psi_{i+1/2} taken as the arithmetic mean of its two nodes.
The top node is Dirichlet. The bottom node is Dirichlet or no-flow; no-flow
uses a ghost node mirrored about z = 0 with the gravity shift
``psi_{-1} = psi_1 + 2 dz``. Fixed points of the sweep are exactly the
solutions of the implicit backward-Euler scheme (``implicit_residual == 0``).
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .exceptions import ConfigError, StabilityViolated
from .iteration import SchemeConfig, iterate

STABILITY_LIMIT = 0.5


@dataclass(frozen=True)
class Grid1D:
    Z: float = 1.0
    nz: int = 40

    def __post_init__(self):
        if self.nz < 2 or not self.Z > 0:
            raise ConfigError("Grid1D needs nz >= 2 and Z > 0")

    @property
    def dz(self):
        return self.Z / self.nz

    @property
    def z(self):
        return np.arange(self.nz + 1) * self.dz


@dataclass
class ExplicitLConfig:
    L: float = 0.5
    dt: float = 0.001
    epsilon: float = 1e-7
    max_iters: int = 100_000
    aa_enabled: bool = False
    aa_depth: int = 5
    aa_beta: float = 1.0
    norm: str = "l2_scaled"
    check_stability: bool = True

    def __post_init__(self):
        if not self.L > 0 or not self.dt > 0 or not self.epsilon > 0:
            raise ConfigError("L, dt and epsilon must be positive")

    def scheme(self):
        return SchemeConfig("lscheme", L=self.L, epsilon=self.epsilon,
                            max_iters=self.max_iters, aa_enabled=self.aa_enabled,
                            aa_depth=self.aa_depth, aa_beta=self.aa_beta, norm=self.norm)


def _extend(grid, psi, bottom):
    ext = np.empty(psi.size + 2)
    ext[1:-1] = psi
    if bottom == "noflow":
        ext[0] = psi[1] + 2.0 * grid.dz
    elif bottom == "dirichlet":
        ext[0] = psi[0]
    else:
        raise ConfigError(f"unknown bottom condition {bottom!r}")
    ext[-1] = psi[-1]                    # top node is Dirichlet, ghost unused
    return ext


def face_conductivity(closure, psi, i):
    """K on the face between nodes i and i+1, evaluated at the mean head."""
    return float(closure.conductivity(0.5 * (psi[i] + psi[i + 1])))


def face_conductivities(closure, psi_ext):
    return np.asarray(closure.conductivity(0.5 * (psi_ext[:-1] + psi_ext[1:])), dtype=np.float64)


def stable_dt(grid, closure, psi_range, L):
    """Largest dt keeping K dt/(L dz^2) <= 1/2 for heads in ``psi_range``."""
    if not L > 0:
        raise ConfigError("L must be positive")
    k_max = closure.max_conductivity(*psi_range)
    if k_max <= 0:
        return np.inf
    return STABILITY_LIMIT * L * grid.dz**2 / k_max


def _active_faces(n_faces, bottom):
    # with a Dirichlet bottom the ghost face never influences an updated node
    return slice(0 if bottom == "noflow" else 1, n_faces - 1)


def _check_stability(grid, kface, cfg, bottom):
    r = kface * cfg.dt / (cfg.L * grid.dz**2)
    active = _active_faces(r.size, bottom)
    r_act = r[active]
    worst = int(np.argmax(r_act))
    if r_act[worst] > STABILITY_LIMIT:
        face = worst + active.start - 1      # index i of face i+1/2 (ghost face = -1)
        admissible = STABILITY_LIMIT * cfg.L * grid.dz**2 / kface[active][worst]
        raise StabilityViolated(face, float(r_act[worst]), float(admissible))
    return float(r_act.max())


def explicit_l_step(grid, closure, psi_s, psi_prev_time, cfg, f, bottom="noflow",
                    theta_prev=None, info=None):
    """One explicit L-scheme sweep. Boundary entries of ``psi_s`` carry the Dirichlet data.

    ``theta_prev`` overrides ``closure.water_content(psi_prev_time)`` (the
    coupled problem evaluates it with the previous concentration).
    """
    psi_s = np.asarray(psi_s, dtype=np.float64)
    if theta_prev is None:
        theta_prev = closure.water_content(psi_prev_time)
    ext = _extend(grid, psi_s, bottom)
    kface = face_conductivities(closure, ext)
    if cfg.check_stability:
        r_max = _check_stability(grid, kface, cfg, bottom)
    else:
        r_max = float(kface.max() * cfg.dt / (cfg.L * grid.dz**2))
    if info is not None:
        info.setdefault("r_max", []).append(r_max)
    theta = np.ascontiguousarray(closure.water_content(psi_s), dtype=np.float64)
    source = np.broadcast_to(np.asarray(f, dtype=np.float64), psi_s.shape)
    out = _kernels.explicit_flow_sweep(
        ext, kface, theta, np.ascontiguousarray(theta_prev, dtype=np.float64),
        np.ascontiguousarray(source), cfg.dt, grid.dz, cfg.L,
    )
    out[-1] = psi_s[-1]
    if bottom == "dirichlet":
        out[0] = psi_s[0]
    return out


def flux_divergence(grid, closure, psi, bottom="noflow"):
    """The bracket of the implicit scheme, per node:
    K_up (psi_{i+1} - psi_i) - K_dn (psi_i - psi_{i-1}) + (K_up - K_dn) dz."""
    ext = _extend(grid, np.asarray(psi, dtype=np.float64), bottom)
    kface = face_conductivities(closure, ext)
    k_up, k_dn = kface[1:], kface[:-1]
    c = ext[1:-1]
    return (k_up * (ext[2:] - c) - k_dn * (c - ext[:-2])) + (k_up - k_dn) * grid.dz


def implicit_residual(grid, closure, psi, theta_prev, f, dt, bottom="noflow"):
    """theta(psi) - theta_prev - dt/dz^2 * D(psi) - dt f at every updated node."""
    psi = np.asarray(psi, dtype=np.float64)
    res = (closure.water_content(psi) - theta_prev
           - dt / grid.dz**2 * flux_divergence(grid, closure, psi, bottom) - dt * np.asarray(f))
    res = np.array(res, dtype=np.float64)
    res[-1] = 0.0
    if bottom == "dirichlet":
        res[0] = 0.0
    return res


@dataclass
class ContractionReport:
    theta_prime_min: float
    lipschitz_estimate: float
    bound: float
    satisfied: bool
    notes: list = field(default_factory=list)


def _theta_prime_samples(closure, lo, hi, n=2001):
    psi = np.linspace(lo, hi, n)
    c = getattr(closure, "c", None)
    if c is not None:
        # frozen-concentration closure: sample over heads and the stored concentrations
        return closure.model.d_water_content(psi[:, None], c[None, :]).ravel()
    return np.asarray(closure.d_water_content(psi))


def contraction_diagnostic(closure, psi_field, L, dt, dz, bottom="noflow", samples=200, seed=0):
    """Advisory check of inf theta' > L_D dt / dz^2.

    ``L_D`` is estimated as the largest ratio ||D(psi+d) - D(psi)||_inf / ||d||_inf
    over random perturbations d. The condition is necessary, not sufficient,
    for a contracting iteration.
    """
    psi = np.asarray(psi_field, dtype=np.float64)
    grid = Grid1D(Z=dz * (psi.size - 1), nz=psi.size - 1)
    tp = _theta_prime_samples(closure, psi.min(), psi.max())
    theta_min = float(np.min(tp))

    rng = np.random.default_rng(seed)
    base = flux_divergence(grid, closure, psi, bottom)
    scale = 1e-4 * max(1.0, float(np.ptp(psi)))
    lip = 0.0
    interior = slice(0 if bottom == "noflow" else 1, psi.size - 1)
    for _ in range(samples):
        d = scale * rng.uniform(-1.0, 1.0, psi.size)
        d[-1] = 0.0
        if bottom == "dirichlet":
            d[0] = 0.0
        diff = flux_divergence(grid, closure, psi + d, bottom) - base
        lip = max(lip, float(np.max(np.abs(diff[interior])) / np.max(np.abs(d))))
    bound = lip * dt / dz**2
    notes = []
    if theta_min <= 0:
        notes.append("theta' vanishes on the sampled range")
    return ContractionReport(theta_min, lip, bound, bool(theta_min > bound), notes)


def solve_time_step_1d(grid, closure, psi_prev_time, cfg, f, bottom="noflow",
                       theta_prev=None, boundary=None, label="", stop=None):
    """Iterate the explicit sweep from the previous time level.

    ``boundary`` maps ``"top"``/``"bottom"`` to Dirichlet values for the new
    time level; by default the previous boundary values are kept. Returns
    ``(psi, CorrectionSequence)``; ``meta["r_max"]`` lists the largest
    stability ratio of every sweep.
    """
    psi0 = np.array(psi_prev_time, dtype=np.float64, copy=True)
    if theta_prev is None:
        theta_prev = closure.water_content(psi_prev_time)
    if boundary:
        if "top" in boundary:
            psi0[-1] = boundary["top"]
        if "bottom" in boundary:
            psi0[0] = boundary["bottom"]
    info = {}

    def step(psi):
        return explicit_l_step(grid, closure, psi, psi_prev_time, cfg, f, bottom,
                               theta_prev=theta_prev, info=info)

    psi, seq = iterate(step, psi0, cfg.scheme(), label=label, stop=stop)
    seq.meta["r_max"] = info.get("r_max", [])
    return psi, seq


# ---------------------------------------------------------------------------
# Generic column problem: a vertical slice of the 2D benchmark
# ---------------------------------------------------------------------------

def column_initial(grid):
    z = grid.z
    return np.where(z < 0.25, -z + 0.25, -3.0)


def column_source(grid, x=0.25):
    """The 2D benchmark source on the vertical line at horizontal position x."""
    z = grid.z
    val = 0.006 * np.cos(4.0 / 3.0 * np.pi * (z - 1.0) * np.sin(2.0 * np.pi * x))
    return np.where(z < 0.25, 0.0, val)
