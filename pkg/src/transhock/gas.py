"""Isentropic gas relations, P = rho^gamma."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonPositiveDensity, VacuumBernoulli


@dataclass(frozen=True)
class GasParams:
    gamma: float = 2.0
    A: float = 1.0

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ConfigError(f"gamma must exceed 1, got {self.gamma}")
        if self.A != 1.0:
            raise ConfigError("pressure constant A is fixed to 1")

    @property
    def enthalpy_factor(self) -> float:
        # gamma/(gamma-1)
        return self.gamma / (self.gamma - 1.0)


def _check_rho(rho):
    r = np.asarray(rho, dtype=float)
    if np.any(~(r > 0.0)):
        bad = np.argwhere(~(r > 0.0))
        raise NonPositiveDensity("density must be positive", where=bad[0].tolist() if bad.size else None)
    return r


def thermo(rho, gas: GasParams):
    """Return (P, c2) for density ``rho``."""
    r = _check_rho(rho)
    P = r ** gas.gamma
    c2 = gas.gamma * r ** (gas.gamma - 1.0)
    if np.ndim(rho) == 0:
        return float(P), float(c2)
    return P, c2


def enthalpy(rho, gas: GasParams):
    """gamma P / ((gamma-1) rho) = gamma/(gamma-1) rho^(gamma-1)."""
    r = _check_rho(rho)
    return gas.enthalpy_factor * r ** (gas.gamma - 1.0)


def bernoulli(u, rho, Phi, gas: GasParams):
    """B = |u|^2/2 + gamma P/((gamma-1) rho) - Phi.  ``u`` has the vector index last."""
    u = np.asarray(u, dtype=float)
    q2 = np.sum(u * u, axis=-1)
    B = 0.5 * q2 + enthalpy(rho, gas) - Phi
    return float(B) if np.ndim(B) == 0 else B


def density_from_bernoulli(B, q2, Phi, gas: GasParams):
    """Invert the Bernoulli relation: rho = ((gamma-1)/gamma (B - q2/2 + Phi))^(1/(gamma-1))."""
    arg = np.asarray(B - 0.5 * np.asarray(q2) + Phi, dtype=float)
    if np.any(~(arg > 0.0)):
        bad = np.argwhere(~(arg > 0.0))
        raise VacuumBernoulli("Bernoulli argument is not positive",
                              where=bad[0].tolist() if bad.size else None)
    rho = (arg / gas.enthalpy_factor) ** (1.0 / (gas.gamma - 1.0))
    return float(rho) if np.ndim(rho) == 0 else rho
