"""Backward-Euler P1 Galerkin solver for 2D Richards' equation on the unit square.

Mass-type terms (theta, the L-stabilisation and the source) use vertex
quadrature, which lumps them onto the diagonal. The conductivity enters each
element through the mean of its three vertex values, so the stiffness block
is ``A(K)_ij = sum_T Kbar_T |T| grad phi_j . grad phi_i``.

The nonlinear residual at free nodes is::

    R(psi) = M (theta(psi) - theta(psi_prev)) + dt A(Kbar(psi)) (psi + z) - dt M f

and both linearisations solve for a correction ``delta`` of the free values:

* Newton:   (diag(M theta') + dt A + dt C) delta = -R
* L-scheme: (L M + dt A) delta = -R

where ``C`` is the derivative of the Kbar weights (a convection-like block).
"""

import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .exceptions import ConfigError, LinearSolveFailure, SingularJacobian
from .iteration import SchemeConfig, iterate

INNER_RTOL = 1e-12


class TriMesh:
    """Uniform triangulation of [0,1]^2, each cell split along its SW-NE diagonal.

    Node ``j*(nx+1) + i`` sits at ``(i/nx, j/ny)``; the second coordinate is the
    height z. Nodes on z = 1 carry the Dirichlet condition, everything else on
    the boundary is no-flow.
    """

    def __init__(self, nx=40, ny=40):
        if nx < 1 or ny < 1:
            raise ConfigError("mesh needs at least one cell per direction")
        if ny % 4:
            raise ConfigError(f"ny must be a multiple of 4 so z = 1/4 is a mesh line, got {ny}")
        self.nx, self.ny = int(nx), int(ny)
        xs = np.linspace(0.0, 1.0, nx + 1)
        zs = np.linspace(0.0, 1.0, ny + 1)
        X, Z = np.meshgrid(xs, zs)
        self.nodes = np.column_stack([X.ravel(), Z.ravel()])
        self.x = self.nodes[:, 0]
        self.z = self.nodes[:, 1]

        i, j = np.meshgrid(np.arange(nx), np.arange(ny))
        i, j = i.ravel(), j.ravel()
        sw = j * (nx + 1) + i
        se = sw + 1
        ne = se + nx + 1
        nw = sw + nx + 1
        self.triangles = np.concatenate(
            [np.column_stack([sw, se, ne]), np.column_stack([sw, ne, nw])]
        )

        self.top_dirichlet = np.isclose(self.z, 1.0)
        on_edge = (np.isclose(self.x, 0) | np.isclose(self.x, 1)
                   | np.isclose(self.z, 0) | self.top_dirichlet)
        self.noflow = on_edge & ~self.top_dirichlet
        self.free = np.flatnonzero(~self.top_dirichlet)
        self._geometry()
        self._pattern()

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    def _geometry(self):
        p = self.nodes[self.triangles]                 # (ne, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self.area = 0.5 * det
        # gradients of the barycentric basis functions
        inv = np.empty((len(det), 2, 2))
        inv[:, 0, 0] = d2[:, 1] / det
        inv[:, 0, 1] = -d2[:, 0] / det
        inv[:, 1, 0] = -d1[:, 1] / det
        inv[:, 1, 1] = d1[:, 0] / det
        ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        self.grads = np.einsum("ak,ekd->ead", ref, inv)   # (ne, 3, 2)
        self.local_stiffness = self.area[:, None, None] * np.einsum(
            "ead,ebd->eab", self.grads, self.grads
        )
        self.lumped_mass = np.bincount(
            self.triangles.ravel(), weights=np.repeat(self.area / 3.0, 3),
            minlength=self.n_nodes,
        )

    def _pattern(self):
        nf = self.free.size
        free_index = np.full(self.n_nodes, -1)
        free_index[self.free] = np.arange(nf)
        rows = free_index[np.repeat(self.triangles, 3, axis=1)].ravel()
        cols = free_index[np.tile(self.triangles, (1, 3))].ravel()
        valid = (rows >= 0) & (cols >= 0)
        keys = rows[valid].astype(np.int64) * nf + cols[valid]
        uniq, inverse = np.unique(keys, return_inverse=True)
        self._valid = valid
        self._map = inverse.astype(np.int64)
        self._indices = (uniq % nf).astype(np.int32)
        self._indptr = np.searchsorted(uniq // nf, np.arange(nf + 1)).astype(np.int32)
        self._nnz = uniq.size
        self.free_index = free_index

    def free_matrix(self, element_values, diagonal=None):
        """Assemble (ne, 3, 3) element blocks into a free-node CSR matrix."""
        vals = np.ascontiguousarray(element_values.reshape(-1)[self._valid])
        data = _kernels.scatter_add(self._map, vals, self._nnz)
        mat = sp.csr_matrix((data, self._indices, self._indptr),
                            shape=(self.free.size, self.free.size))
        if diagonal is not None:
            mat = mat + sp.diags(diagonal)
        return mat

    def scatter_nodes(self, element_vectors):
        """Sum (ne, 3) element vectors into a nodal vector."""
        return _kernels.scatter_add(
            np.ascontiguousarray(self.triangles.ravel()),
            np.ascontiguousarray(element_vectors.ravel()),
            self.n_nodes,
        )


# ---------------------------------------------------------------------------
# Benchmark problem on the unit square
# ---------------------------------------------------------------------------

INTERFACE_Z = 0.25


def benchmark_initial(x, z):
    """psi0 = -z + 1/4 below z = 1/4 and -3 above."""
    z = np.asarray(z, dtype=np.float64)
    return np.where(z < INTERFACE_Z, -z + INTERFACE_Z, -3.0)


def benchmark_source(x, z, grouping="verbatim"):
    """Source term; zero below z = 1/4.

    ``grouping="verbatim"`` reads the printed formula as
    0.006*cos(4/3*pi*(z-1)*sin(2*pi*x)); ``"split"`` as
    0.006*cos(4/3*pi*(z-1))*sin(2*pi*x).
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if grouping == "verbatim":
        val = 0.006 * np.cos(4.0 / 3.0 * np.pi * (z - 1.0) * np.sin(2.0 * np.pi * x))
    elif grouping == "split":
        val = 0.006 * np.cos(4.0 / 3.0 * np.pi * (z - 1.0)) * np.sin(2.0 * np.pi * x)
    else:
        raise ConfigError(f"unknown source grouping {grouping!r}")
    return np.where(z < INTERFACE_Z, 0.0, val)


def _nodal(mesh, f):
    if callable(f):
        return np.asarray(f(mesh.x, mesh.z), dtype=np.float64)
    if np.isscalar(f):
        return np.full(mesh.n_nodes, float(f))
    return np.asarray(f, dtype=np.float64)


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def _element_potential_gradient(mesh, psi):
    h = (psi + mesh.z)[mesh.triangles]                 # (ne, 3)
    return np.einsum("ead,ea->ed", mesh.grads, h)      # grad(psi + z) per element


def _flux_vector(mesh, kbar, psi):
    """Nodal vector A(Kbar)(psi + z)."""
    h = (psi + mesh.z)[mesh.triangles]
    local = kbar[:, None] * np.einsum("eab,eb->ea", mesh.local_stiffness, h)
    return mesh.scatter_nodes(local)


def _residual_full(mesh, theta, theta_prev, kbar, psi, dt, f_nodal):
    m = mesh.lumped_mass
    return m * (theta - theta_prev) + dt * _flux_vector(mesh, kbar, psi) - dt * m * f_nodal


def assemble_residual(mesh, soil, psi, psi_prev_time, dt, f):
    """Galerkin residual of the fully discrete equation, one entry per free node."""
    theta, cond, _, _ = soil.evaluate(psi)
    theta_prev = soil.water_content(psi_prev_time)
    kbar = cond[mesh.triangles].mean(axis=1)
    res = _residual_full(mesh, theta, theta_prev, kbar, psi, dt, _nodal(mesh, f))
    return res[mesh.free]


def assemble_jacobian(mesh, soil, psi, dt):
    """Newton matrix on free nodes: diag(M theta') + dt A(Kbar) + dt C."""
    _, cond, dtheta, dcond = soil.evaluate(psi)
    kbar = cond[mesh.triangles].mean(axis=1)
    grad_h = _element_potential_gradient(mesh, psi)
    # C[e, a, b] = |T| (grad h . grad phi_a) K'(psi_b) / 3
    conv = (mesh.area[:, None] * np.einsum("ead,ed->ea", mesh.grads, grad_h))[:, :, None] \
        * (dcond[mesh.triangles] / 3.0)[:, None, :]
    blocks = dt * (kbar[:, None, None] * mesh.local_stiffness + conv)
    diag = (mesh.lumped_mass * dtheta)[mesh.free]
    return mesh.free_matrix(blocks, diagonal=diag)


def assemble_lscheme_matrix(mesh, soil, psi, dt, L):
    """SPD L-scheme matrix on free nodes: L M + dt A(Kbar)."""
    cond = soil.conductivity(psi)
    kbar = cond[mesh.triangles].mean(axis=1)
    blocks = dt * kbar[:, None, None] * mesh.local_stiffness
    return mesh.free_matrix(blocks, diagonal=L * mesh.lumped_mass[mesh.free])


def _linear_solve(mat, rhs, method="direct", singular_cls=LinearSolveFailure):
    if method == "cg":
        precond = sp.diags(1.0 / mat.diagonal())
        sol, info = spla.cg(mat, rhs, rtol=INNER_RTOL, atol=0.0, M=precond,
                            maxiter=10 * rhs.size)
        if info != 0:
            raise LinearSolveFailure(f"CG stopped with info={info}")
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                sol = spla.spsolve(mat.tocsc(), rhs)
            except spla.MatrixRankWarning as exc:
                raise singular_cls(str(exc)) from exc
            except RuntimeError as exc:
                raise singular_cls(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise singular_cls("linear solve produced non-finite values")
    return sol


def newton_step(mesh, soil, psi_s, psi_prev_time, dt, f):
    res = assemble_residual(mesh, soil, psi_s, psi_prev_time, dt, f)
    jac = assemble_jacobian(mesh, soil, psi_s, dt)
    delta = _linear_solve(jac, -res, "direct", SingularJacobian)
    out = np.array(psi_s, dtype=np.float64, copy=True)
    out[mesh.free] += delta
    return out


def lscheme_step(mesh, soil, psi_s, psi_prev_time, dt, f, L, linear_solver="direct"):
    if not L > 0:
        raise ConfigError("L must be positive")
    res = assemble_residual(mesh, soil, psi_s, psi_prev_time, dt, f)
    mat = assemble_lscheme_matrix(mesh, soil, psi_s, dt, L)
    delta = _linear_solve(mat, -res, linear_solver)
    out = np.array(psi_s, dtype=np.float64, copy=True)
    out[mesh.free] += delta
    return out


def solve_time_step(mesh, soil, psi_prev_time, dt, f, scheme, label=""):
    """Iterate the chosen linearisation from the previous time level.

    Returns ``(psi, CorrectionSequence)``. The sequence ``meta`` also counts
    nodal sign changes of psi between iterates (Newton crosses the kink of the
    closure at psi = 0 there).
    """
    if not isinstance(scheme, SchemeConfig):
        raise TypeError("scheme must be a SchemeConfig")
    f_nodal = _nodal(mesh, f)
    psi_prev_time = np.asarray(psi_prev_time, dtype=np.float64)
    if scheme.scheme == "newton":
        def step(psi):
            return newton_step(mesh, soil, psi, psi_prev_time, dt, f_nodal)
    else:
        def step(psi):
            return lscheme_step(mesh, soil, psi, psi_prev_time, dt, f_nodal,
                                scheme.L, scheme.linear_solver)

    crossings = [0]

    def count(old, new):
        crossings[0] += int(np.count_nonzero((old < 0) != (new < 0)))

    psi, seq = iterate(step, psi_prev_time, scheme, label=label, on_iterate=count)
    seq.meta["sign_crossings"] = crossings[0]
    return psi, seq
