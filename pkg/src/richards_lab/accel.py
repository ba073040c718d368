"""Windowed Anderson acceleration for fixed-point maps x -> g(x)."""

from collections import deque

import numpy as np

COND_LIMIT = 1e10


class AndersonState:
    """Mixing history for one solver. Not shared between threads.

    Parameters
    ----------
    depth : int
        number m of residual differences used; ``depth=0`` is the plain iteration.
    beta : float
        damping in (0, 1]; 1 means undamped.
    """

    def __init__(self, depth=5, beta=1.0):
        if depth < 0:
            raise ValueError("depth must be >= 0")
        if not 0 < beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        self.depth = int(depth)
        self.beta = float(beta)
        self.x_hist = deque(maxlen=self.depth + 1)
        self.g_hist = deque(maxlen=self.depth + 1)
        self.gamma = np.zeros(0)
        self.columns_dropped = 0
        # residual norms of the mixed step and of the plain step (gamma = 0)
        self.last_mixed_norm = np.nan
        self.last_plain_norm = np.nan

    def reset(self):
        self.x_hist.clear()
        self.g_hist.clear()
        self.gamma = np.zeros(0)

    def __len__(self):
        return len(self.x_hist)


def _solve_lsq(dF, f):
    """min ||f - dF gamma||_2 by QR, dropping oldest columns while ill-conditioned."""
    dropped = 0
    while dF.shape[1] > 0:
        q, r = np.linalg.qr(dF)
        diag = np.abs(np.diag(r))
        if diag.min() > 0 and np.linalg.cond(r) < COND_LIMIT:
            return np.linalg.solve(r, q.T @ f), dropped
        dF = dF[:, 1:]
        dropped += 1
    return np.zeros(0), dropped


def aa_step(state, x, gx):
    """Push (x, g(x)) into the window and return the next iterate.

    With an empty difference window (first call, or ``depth == 0``) the result
    is ``g(x)`` itself.
    """
    x = np.asarray(x, dtype=np.float64)
    gx = np.asarray(gx, dtype=np.float64)
    if state.depth == 0:
        return gx
    if state.x_hist and state.x_hist[-1].shape != x.shape:
        raise ValueError("iterate dimension changed between calls")
    state.x_hist.append(x.copy())
    state.g_hist.append(gx.copy())
    f = gx - x
    state.last_plain_norm = float(np.linalg.norm(f))
    k = len(state.x_hist)
    if k == 1:
        state.gamma = np.zeros(0)
        state.last_mixed_norm = state.last_plain_norm
        return gx.copy()

    X = np.stack(state.x_hist, axis=1)
    G = np.stack(state.g_hist, axis=1)
    F = G - X
    dF = np.diff(F, axis=1)
    dX = np.diff(X, axis=1)
    gamma, dropped = _solve_lsq(dF, f)
    state.columns_dropped += dropped
    if dropped:
        dF = dF[:, dropped:]
        dX = dX[:, dropped:]
    state.gamma = gamma
    mixed_f = f - dF @ gamma
    state.last_mixed_norm = float(np.linalg.norm(mixed_f))
    return x - dX @ gamma + state.beta * mixed_f


class Accelerated:
    """A fixed-point map whose successive calls produce the AA-mixed sequence.

    ``Accelerated(g, depth, beta)(x)`` evaluates ``g(x)`` and mixes it with the
    stored history. Call :meth:`reset` before starting a new iteration.
    """

    def __init__(self, step, depth=5, beta=1.0):
        self.step = step
        self.state = AndersonState(depth, beta)

    def __call__(self, x):
        gx = self.step(x)
        return aa_step(self.state, x, gx)

    def reset(self):
        self.state.reset()


def wrap(scheme_step, depth=5, beta=1.0):
    return Accelerated(scheme_step, depth, beta)
