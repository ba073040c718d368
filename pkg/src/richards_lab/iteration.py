"""Scheme configuration and the generic correction-recording fixed-point loop."""

import time
from dataclasses import dataclass

import numpy as np

from .accel import Accelerated
from .exceptions import ConfigError, NoConvergence
from .orders import CorrectionSequence


def l2_scaled(v):
    """Discrete L2 norm weighted by 1/sqrt(N)."""
    v = np.asarray(v)
    return float(np.sqrt(np.mean(v * v)))


def max_norm(v):
    return float(np.max(np.abs(v)))


NORMS = {"l2_scaled": l2_scaled, "max": max_norm}


@dataclass
class SchemeConfig:
    scheme: str = "lscheme"
    L: float = 0.15
    epsilon: float = 1e-7
    max_iters: int = 10_000
    aa_enabled: bool = False
    aa_depth: int = 5
    aa_beta: float = 1.0
    norm: str = "l2_scaled"
    linear_solver: str = "direct"

    def __post_init__(self):
        if self.scheme not in ("newton", "lscheme"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.scheme == "lscheme" and not self.L > 0:
            raise ConfigError("L must be positive for the L-scheme")
        if self.norm not in NORMS:
            raise ConfigError(f"unknown norm {self.norm!r}")
        if self.aa_depth < 0 or not 0 < self.aa_beta <= 1:
            raise ConfigError("need aa_depth >= 0 and aa_beta in (0, 1]")
        if self.linear_solver not in ("direct", "cg"):
            raise ConfigError(f"unknown linear solver {self.linear_solver!r}")

    @property
    def norm_fn(self):
        return NORMS[self.norm]

    @property
    def aa_active(self):
        return self.aa_enabled and self.aa_depth > 0


def iterate(step, x0, cfg, label="", stop=None, on_iterate=None):
    """Iterate ``x <- step(x)`` from ``x0`` until the correction norm drops to ``cfg.epsilon``.

    ``stop(x, correction)`` may replace the default correction test. Returns
    ``(x, CorrectionSequence)``; the sequence ``meta`` carries the iteration
    count and wall time. Raises :class:`NoConvergence` at ``cfg.max_iters``.
    """
    norm = cfg.norm_fn
    mapping = Accelerated(step, cfg.aa_depth, cfg.aa_beta) if cfg.aa_active else step
    x = np.array(x0, dtype=np.float64, copy=True)
    corrections = []
    t0 = time.perf_counter()
    converged = False
    for _ in range(cfg.max_iters):
        x_new = mapping(x)
        corr = norm(x_new - x)
        corrections.append(corr)
        if on_iterate is not None:
            on_iterate(x, x_new)
        x = x_new
        if not np.isfinite(corr):
            break
        done = stop(x, corr) if stop is not None else corr <= cfg.epsilon
        if done:
            converged = True
            break
    elapsed = time.perf_counter() - t0
    finite = [c for c in corrections if np.isfinite(c)]
    seq = CorrectionSequence.from_values(finite, label=label)
    seq.meta = {"iterations": len(corrections), "wall": elapsed, "converged": converged}
    if not converged:
        raise NoConvergence(
            f"{label or 'iteration'}: no convergence after {len(corrections)} iterations "
            f"(last correction {corrections[-1]:.3e})",
            sequence=seq,
            state=x,
        )
    return x, seq
