"""One-dimensional Hamiltonians H = p^2/(2m) + V(q) with polynomial V."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ConfigurationError


class Kind(enum.Enum):
    FREE = "free"
    HARMONIC = "harmonic"
    QUARTIC = "quartic"
    POLYNOMIAL = "polynomial"


@dataclass(frozen=True)
class HamiltonianSpec:
    """A mass and a polynomial potential.

    Use the constructors :meth:`free`, :meth:`harmonic`, :meth:`quartic` and
    :meth:`polynomial`.  Quartic means ``V = m w^2 q^2/2 + lam4 q^4/4``.
    """

    kind: Kind
    mass: float = 1.0
    omega: float = 0.0
    lam4: float = 0.0
    coefficients: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not (np.isfinite(self.mass) and self.mass > 0):
            raise ConfigurationError(f"mass must be positive, got {self.mass}", field="m")
        if not (np.isfinite(self.omega) and self.omega >= 0):
            raise ConfigurationError(f"omega must be >= 0, got {self.omega}", field="omega")

    @classmethod
    def free(cls, m=1.0):
        return cls(Kind.FREE, float(m))

    @classmethod
    def harmonic(cls, m=1.0, omega=1.0):
        return cls(Kind.HARMONIC, float(m), float(omega))

    @classmethod
    def quartic(cls, m=1.0, omega=0.0, lam4=1.0):
        return cls(Kind.QUARTIC, float(m), float(omega), float(lam4))

    @classmethod
    def polynomial(cls, coefficients, m=1.0):
        """``coefficients[k]`` multiplies ``q**k`` in V."""
        return cls(Kind.POLYNOMIAL, float(m), coefficients=tuple(float(c) for c in coefficients))

    @property
    def potential(self) -> Polynomial:
        m, w = self.mass, self.omega
        if self.kind is Kind.FREE:
            return Polynomial([0.0])
        if self.kind is Kind.HARMONIC:
            return Polynomial([0.0, 0.0, 0.5 * m * w * w])
        if self.kind is Kind.QUARTIC:
            return Polynomial([0.0, 0.0, 0.5 * m * w * w, 0.0, 0.25 * self.lam4])
        return Polynomial(self.coefficients or [0.0])

    @property
    def degree(self) -> int:
        return _degree(self.potential)

    def V(self, q):
        return self.potential(q)

    def dV(self, q):
        return self.potential.deriv(1)(q) if self.degree >= 1 else np.zeros_like(np.asarray(q, float))

    def d3V(self, q):
        return self.potential.deriv(3)(q) if self.degree >= 3 else np.zeros_like(np.asarray(q, float))

    def energy(self, q, p):
        return p * p / (2 * self.mass) + self.V(q)

    def velocity(self, q, p):
        """Hamilton's equations: (dH/dp, -dH/dq)."""
        return p / self.mass, -self.dV(q)


def _degree(poly: Polynomial) -> int:
    c = np.trim_zeros(np.asarray(poly.coef, float), "b")
    return max(len(c) - 1, 0)
