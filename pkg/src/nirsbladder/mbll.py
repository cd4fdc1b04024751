"""Modified Beer-Lambert law.

Attenuation is base-10 absorbance.  Chromophore terms are stored as
``epsilon * c`` products, i.e. as mu_a-equivalents in cm^-1, so callers may
pass either extinction/concentration pairs or absorption coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class PathParams:
    """Source-detector distance ``L`` (cm), path-length factor ``D`` and offset ``G``.

    No defaults: abdominal values of ``D`` and ``G`` are not known, so they
    must always be supplied.
    """

    L: float
    D: float
    G: float

    def __post_init__(self):
        if not self.L > 0:
            raise ConfigError(f"L must be > 0, got {self.L}")
        if not self.D >= 1:
            raise ConfigError(f"D must be >= 1, got {self.D}")
        if not self.G >= 0:
            raise ConfigError(f"G must be >= 0, got {self.G}")


@dataclass(frozen=True)
class Chromophore:
    """One absorber: ``epsilon`` (cm^-1 per mol/L) and concentration ``c`` (mol/L)."""

    epsilon: float
    c: float
    name: str = ""

    def __post_init__(self):
        if not self.epsilon >= 0 or not self.c >= 0:
            raise ConfigError(f"{self.name or 'chromophore'}: epsilon and c must be >= 0")

    @classmethod
    def from_mu_a(cls, mu_a, name=""):
        """A term given directly as an absorption coefficient (cm^-1)."""
        return cls(epsilon=float(mu_a), c=1.0, name=name)

    @property
    def mu_a(self):
        return self.epsilon * self.c


def attenuation(i0, i):
    """Absorbance ``log10(i0 / i)``."""
    if not (i0 > 0 and i > 0):
        raise DomainError(f"intensities must be > 0, got i0={i0}, i={i}")
    return math.log10(i0 / i)


def predicted_attenuation(concs, path):
    """``A = sum(eps_i * c_i) * D * L + G``."""
    mu = math.fsum(c.mu_a for c in concs)
    return mu * path.D * path.L + path.G


def delta_concentration(a_before, a_after, epsilon, path):
    """Concentration change (mol/L) from two attenuations; ``G`` cancels."""
    denom = epsilon * path.D * path.L
    if not denom > 0:
        raise DomainError(f"epsilon * D * L must be > 0, got {denom}")
    return (a_after - a_before) / denom
