"""Closure relations: van Genuchten - Mualem soil and the manufactured test closure.

Both closures expose the same duck-typed surface used by the solvers::

    water_content(psi)     conductivity(psi)
    d_water_content(psi)   d_conductivity(psi)
    max_conductivity(lo, hi)

Scalars in, scalars out; arrays in, arrays out.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels
from .exceptions import ConfigError, DomainViolation


def _as_array(psi):
    arr = np.asarray(psi, dtype=np.float64)
    return arr, arr.ndim == 0


def _unwrap(value, scalar):
    return float(value.reshape(())) if scalar else value


@dataclass(frozen=True)
class SoilModel:
    """van Genuchten - Mualem parameters. ``m`` is derived as 1 - 1/n."""

    alpha: float
    n: float
    theta_r: float
    theta_s: float
    K_s: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not self.n > 1:
            raise ConfigError(f"n must exceed 1, got {self.n}")
        if not self.K_s > 0:
            raise ConfigError(f"K_s must be positive, got {self.K_s}")
        # theta_r == theta_s is accepted: it is the constant-theta degenerate soil
        if not 0 <= self.theta_r <= self.theta_s <= 1:
            raise ConfigError(
                f"need 0 <= theta_r <= theta_s <= 1, got {self.theta_r}, {self.theta_s}"
            )

    @property
    def m(self):
        return 1.0 - 1.0 / self.n

    @classmethod
    def from_mapping(cls, cfg):
        if "m" in cfg:
            raise ConfigError("m is derived from n and cannot be set")
        return cls(
            alpha=float(cfg["alpha"]),
            n=float(cfg["n"]),
            theta_r=float(cfg["theta_r"]),
            theta_s=float(cfg["theta_s"]),
            K_s=float(cfg["K_s"]),
        )

    def evaluate(self, psi):
        """Return ``(theta, K, dtheta, dK)`` arrays in one pass."""
        arr = np.asarray(psi, dtype=np.float64)
        flat = np.ascontiguousarray(arr.ravel())
        out = _kernels.van_genuchten(
            flat, self.alpha, self.n, self.m, self.theta_r, self.theta_s, self.K_s
        )
        return tuple(v.reshape(arr.shape) for v in out)

    def normalized_saturation(self, psi):
        arr, scalar = _as_array(psi)
        out = np.ones(arr.shape)
        neg = arr < 0
        out[neg] = (1.0 + (-self.alpha * arr[neg]) ** self.n) ** (-self.m)
        return _unwrap(out, scalar)

    def water_content(self, psi):
        arr, scalar = _as_array(psi)
        return _unwrap(self.evaluate(arr)[0], scalar)

    def conductivity(self, psi):
        arr, scalar = _as_array(psi)
        return _unwrap(self.evaluate(arr)[1], scalar)

    def d_water_content(self, psi):
        arr, scalar = _as_array(psi)
        return _unwrap(self.evaluate(arr)[2], scalar)

    def d_conductivity(self, psi):
        arr, scalar = _as_array(psi)
        return _unwrap(self.evaluate(arr)[3], scalar)

    def max_conductivity(self, psi_lo, psi_hi):
        # K is non-decreasing in psi
        return self.conductivity(float(psi_hi))

    @cached_property
    def l_theta(self):
        return l_theta_bound(self)


def normalized_saturation(model, psi):
    return model.normalized_saturation(psi)


def water_content(model, psi):
    return model.water_content(psi)


def conductivity(model, psi):
    return model.conductivity(psi)


def d_water_content(model, psi):
    return model.d_water_content(psi)


def d_conductivity(model, psi):
    return model.d_conductivity(psi)


def l_theta_bound(model, samples=20001):
    """Upper estimate of sup over psi of theta'(psi).

    Dense sampling on [-100/alpha, 0] locates the peak, then a bounded
    golden-section search refines it between the neighbouring samples.
    """
    if model.theta_s == model.theta_r:
        return 0.0
    lo = -100.0 / model.alpha
    # geometric spacing resolves the peak near psi ~ -1/alpha as well as the tails
    grid = -np.geomspace(-lo, 1e-8 / model.alpha, samples)
    vals = model.d_water_content(grid)
    k = int(np.argmax(vals))
    best = float(vals[k])
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(
        lambda p: -model.d_water_content(p),
        bounds=(a, b),
        method="bounded",
        options={"xatol": 1e-12 * max(1.0, abs(a))},
    )
    return max(best, float(-res.fun))


class ManufacturedModel:
    """Closures of the coupled flow/transport verification problem.

    theta(psi, c) = 1 / (1 - psi - c/10) and K(psi) = psi**2.
    """

    @staticmethod
    def _denominator(psi, c):
        den = 1.0 - np.asarray(psi, dtype=np.float64) - np.asarray(c, dtype=np.float64) / 10.0
        if np.any(den <= 0):
            raise DomainViolation("1 - psi - c/10 must stay positive for the manufactured closure")
        return den

    def water_content(self, psi, c):
        return 1.0 / self._denominator(psi, c)

    def d_water_content(self, psi, c):
        """Partial derivative with respect to psi (equals theta**2)."""
        return 1.0 / self._denominator(psi, c) ** 2

    def d_water_content_dc(self, psi, c):
        return 0.1 / self._denominator(psi, c) ** 2

    def conductivity(self, psi):
        return np.asarray(psi, dtype=np.float64) ** 2

    def d_conductivity(self, psi):
        return 2.0 * np.asarray(psi, dtype=np.float64)

    def max_conductivity(self, psi_lo, psi_hi):
        return max(psi_lo * psi_lo, psi_hi * psi_hi)

    def at_concentration(self, c):
        """Freeze the concentration field, giving a single-argument flow closure."""
        return _FrozenConcentration(self, np.asarray(c, dtype=np.float64))


class _FrozenConcentration:
    def __init__(self, model, c):
        self.model = model
        self.c = c

    def water_content(self, psi):
        return self.model.water_content(psi, self.c)

    def d_water_content(self, psi):
        return self.model.d_water_content(psi, self.c)

    def conductivity(self, psi):
        return self.model.conductivity(psi)

    def d_conductivity(self, psi):
        return self.model.d_conductivity(psi)

    def max_conductivity(self, psi_lo, psi_hi):
        return self.model.max_conductivity(psi_lo, psi_hi)
