"""Closed-form two-body solutions used as oracles for the numerical code.

Two particles with intensities ``G1, G2`` have relative coordinate
``z = z1 - z2`` obeying ``dz/dt = -S / conj(z)`` with ``S = G1 + G2``.  In
polar form ``r dr/dt = -Re S`` and ``r**2 dtheta/dt = -Im S``, so ``r**2``
falls linearly and the orbit is a logarithmic spiral.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass


class CollisionPassedError(ValueError):
    """Requested time lies at or beyond the collision."""


def collision_time(S: complex, r0: float) -> float | None:
    """Forward collision time ``r0**2 / (2 Re S)``, or ``None`` if the pair never meets."""
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    re = complex(S).real
    if re > 0:
        return r0 * r0 / (2.0 * re)
    return None


@dataclass(frozen=True)
class TwoBodySolution:
    S: complex
    r0: float
    theta0: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "S", complex(self.S))
        if self.r0 <= 0:
            raise ValueError("r0 must be positive")

    @property
    def t_star(self) -> float | None:
        return collision_time(self.S, self.r0)

    @classmethod
    def from_pair(cls, z1: complex, z2: complex, g1: complex, g2: complex) -> TwoBodySolution:
        z = complex(z1) - complex(z2)
        return cls(complex(g1) + complex(g2), abs(z), cmath.phase(z))

    def radius(self, t: float) -> float:
        r2 = self.r0 * self.r0 - 2.0 * t * self.S.real
        if r2 <= 0:
            raise CollisionPassedError(f"t={t} is at or beyond the collision time")
        return math.sqrt(r2)

    def angle(self, t: float) -> float:
        """Unwrapped polar angle of the relative coordinate."""
        re, im = self.S.real, self.S.imag
        if im == 0:
            return self.theta0
        if re == 0:
            return self.theta0 - im * t / (self.r0 * self.r0)
        arg = 1.0 - 2.0 * t * re / (self.r0 * self.r0)
        if arg <= 0:
            raise CollisionPassedError(f"t={t} is at or beyond the collision time")
        return self.theta0 + im / (2.0 * re) * math.log(arg)


def two_body_state(sol: TwoBodySolution, t: float) -> complex:
    """Relative position ``z1 - z2`` at time ``t``."""
    if sol.S == 0:
        return cmath.rect(sol.r0, sol.theta0)
    return cmath.rect(sol.radius(t), sol.angle(t))


def single_source_radius(gamma: float, r0: float, t: float) -> float:
    """Distance from a fixed source of intensity ``gamma`` (``gamma > 0`` is a sink)."""
    r2 = r0 * r0 - 2.0 * gamma * t
    if r2 <= 0:
        raise CollisionPassedError("particle has reached the source")
    return math.sqrt(r2)


def blowup_two_body(K: complex, S: complex, s: float) -> complex:
    """Relative coordinate ``K exp(-S s)`` in the blown-up time ``s``."""
    return complex(K) * cmath.exp(-complex(S) * s)


def blowup_time(K: complex, S: complex, s: float, t0: float = 0.0) -> float:
    """Physical time reached after rescaled time ``s`` (quadrature of ``|z(s)|**2``)."""
    k2 = abs(complex(K)) ** 2
    re = complex(S).real
    if re == 0:
        return t0 + k2 * s
    return t0 + k2 * -math.expm1(-2.0 * re * s) / (2.0 * re)
