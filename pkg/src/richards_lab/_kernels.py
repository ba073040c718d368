"""Hot inner loops, each in two flavours.

Every kernel exists as a numba ``@njit`` loop and as a vectorised numpy
function with the same signature. The public name resolves to the numba
version unless ``RICHARDS_LAB_NUMBA=0`` is set in the environment (or numba
cannot be imported). Both flavours stay importable so tests and the
benchmark script can compare them directly.
"""

import math
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False

_flag = os.environ.get("RICHARDS_LAB_NUMBA", "1").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag not in ("0", "false", "no", "off")


# ---------------------------------------------------------------------------
# van Genuchten - Mualem closure
# ---------------------------------------------------------------------------

def van_genuchten_numpy(psi, alpha, n, m, theta_r, theta_s, k_s):
    """Return (theta, K, dtheta/dpsi, dK/dpsi) for a 1D array of heads."""
    psi = np.asarray(psi, dtype=np.float64)
    theta = np.full(psi.shape, theta_s)
    cond = np.full(psi.shape, k_s)
    dtheta = np.zeros(psi.shape)
    dcond = np.zeros(psi.shape)
    u_all = -alpha * psi
    unsat = u_all > 0.0                   # an underflowed u counts as saturated
    if not np.any(unsat):
        return theta, cond, dtheta, dcond

    u = u_all[unsat]
    un = u**n
    sat = (1.0 + un) ** (-m)
    # ln(1 - w) with w = 1/(1 + u^n); each branch avoids cancellation
    with np.errstate(divide="ignore", over="ignore"):
        log_1mw = np.where(un > 1.0, -np.log1p(1.0 / un), n * np.log(u) - np.log1p(un))
    bracket = -np.expm1(m * log_1mw)       # 1 - (1 - w)**m
    dsat_u = alpha * m * n * u ** (n - 2.0) * (1.0 + un) ** (-m - 1.0)   # dsat / u
    dsat = dsat_u * u
    root = np.sqrt(sat)

    theta[unsat] = theta_r + (theta_s - theta_r) * sat
    cond[unsat] = k_s * root * bracket * bracket
    dtheta[unsat] = (theta_s - theta_r) * dsat
    # d(bracket)/dpsi simplifies to dsat / u
    dcond[unsat] = k_s * (0.5 * bracket * bracket / root * dsat + 2.0 * root * bracket * dsat_u)
    return theta, cond, dtheta, dcond


if HAVE_NUMBA:

    @njit(cache=True)
    def van_genuchten_numba(psi, alpha, n, m, theta_r, theta_s, k_s):
        size = psi.size
        theta = np.empty(size)
        cond = np.empty(size)
        dtheta = np.empty(size)
        dcond = np.empty(size)
        for i in range(size):
            u = -alpha * psi[i]
            if not u > 0.0:
                theta[i] = theta_s
                cond[i] = k_s
                dtheta[i] = 0.0
                dcond[i] = 0.0
                continue
            un = u**n
            sat = (1.0 + un) ** (-m)
            if un > 1.0:
                log_1mw = -math.log1p(1.0 / un)
            else:
                log_1mw = n * math.log(u) - math.log1p(un)
            bracket = -math.expm1(m * log_1mw)
            dsat_u = alpha * m * n * u ** (n - 2.0) * (1.0 + un) ** (-m - 1.0)
            dsat = dsat_u * u
            root = math.sqrt(sat)
            theta[i] = theta_r + (theta_s - theta_r) * sat
            cond[i] = k_s * root * bracket * bracket
            dtheta[i] = (theta_s - theta_r) * dsat
            dcond[i] = k_s * (0.5 * bracket * bracket / root * dsat + 2.0 * root * bracket * dsat_u)
        return theta, cond, dtheta, dcond

else:  # pragma: no cover
    van_genuchten_numba = None


# ---------------------------------------------------------------------------
# FEM: scatter element contributions into CSR data
# ---------------------------------------------------------------------------

def scatter_add_numpy(index, values, size):
    return np.bincount(index, weights=values, minlength=size)


if HAVE_NUMBA:

    @njit(cache=True)
    def scatter_add_numba(index, values, size):
        out = np.zeros(size)
        for k in range(index.size):
            out[index[k]] += values[k]
        return out

else:  # pragma: no cover
    scatter_add_numba = None


# ---------------------------------------------------------------------------
# FDM: explicit L-scheme sweep for the flow equation
# ---------------------------------------------------------------------------
# Arrays are "extended": index 0 and -1 are ghost nodes, kface[j] is the
# conductivity on the face between extended nodes j and j+1.

def explicit_flow_sweep_numpy(psi_ext, kface, theta, theta_prev, source, dt, dz, lam):
    r = kface * (dt / (lam * dz * dz))
    r_up = r[1:]
    r_dn = r[:-1]
    centre = psi_ext[1:-1]
    f_s = dt * source / lam + (r_up - r_dn) * dz - (theta - theta_prev) / lam
    return ((1.0 - (r_up + r_dn)) * centre + r_up * psi_ext[2:]
            + r_dn * psi_ext[:-2] + f_s)


if HAVE_NUMBA:

    @njit(cache=True)
    def explicit_flow_sweep_numba(psi_ext, kface, theta, theta_prev, source, dt, dz, lam):
        n = psi_ext.size - 2
        out = np.empty(n)
        coef = dt / (lam * dz * dz)
        for i in range(n):
            r_dn = kface[i] * coef
            r_up = kface[i + 1] * coef
            f_s = dt * source[i] / lam + (r_up - r_dn) * dz - (theta[i] - theta_prev[i]) / lam
            out[i] = ((1.0 - (r_up + r_dn)) * psi_ext[i + 1] + r_up * psi_ext[i + 2]
                      + r_dn * psi_ext[i] + f_s)
        return out

else:  # pragma: no cover
    explicit_flow_sweep_numba = None


# ---------------------------------------------------------------------------
# FDM: explicit L-scheme sweep for advection-diffusion transport
# ---------------------------------------------------------------------------
# c is a plain nodal array; only interior nodes are updated (Dirichlet ends).
# qface[j] is the Darcy flux between nodes j and j+1.

def explicit_transport_sweep_numpy(c, qface, theta, theta_c_prev, source, diff, dt, dz, lam):
    out = c.copy()
    rd = diff * dt / (lam * dz * dz)
    flux = qface * 0.5 * (c[:-1] + c[1:])
    adv = (flux[1:] - flux[:-1]) * (dt / (lam * dz))
    ci = c[1:-1]
    out[1:-1] = ((1.0 - 2.0 * rd) * ci + rd * (c[2:] + c[:-2]) - adv
                 - (theta[1:-1] * ci - theta_c_prev[1:-1]) / lam
                 + dt * source[1:-1] / lam)
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def explicit_transport_sweep_numba(c, qface, theta, theta_c_prev, source, diff, dt, dz, lam):
        n = c.size
        out = c.copy()
        rd = diff * dt / (lam * dz * dz)
        adv_coef = dt / (lam * dz)
        for i in range(1, n - 1):
            f_up = qface[i] * 0.5 * (c[i] + c[i + 1])
            f_dn = qface[i - 1] * 0.5 * (c[i - 1] + c[i])
            out[i] = ((1.0 - 2.0 * rd) * c[i] + rd * (c[i + 1] + c[i - 1])
                      - (f_up - f_dn) * adv_coef
                      - (theta[i] * c[i] - theta_c_prev[i]) / lam
                      + dt * source[i] / lam)
        return out

else:  # pragma: no cover
    explicit_transport_sweep_numba = None


if USE_NUMBA:
    van_genuchten = van_genuchten_numba
    scatter_add = scatter_add_numba
    explicit_flow_sweep = explicit_flow_sweep_numba
    explicit_transport_sweep = explicit_transport_sweep_numba
else:
    van_genuchten = van_genuchten_numpy
    scatter_add = scatter_add_numpy
    explicit_flow_sweep = explicit_flow_sweep_numpy
    explicit_transport_sweep = explicit_transport_sweep_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
