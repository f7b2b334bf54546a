"""Simulation and invariant checks for interacting planar point sources and vortices."""

from .model import (
    CoincidenceError,
    Particle,
    SystemState,
    UndefinedCenterError,
    angular_momentum,
    decompose_field,
    equivalent_center,
    from_source_strength,
    from_vorticity,
    hamiltonian_H,
    linear_momentum,
    moment_of_inertia,
    potential_G,
    velocity_field,
    virial,
)
from .integrate import Event, IntegratorOptions, Trajectory, integrate_adaptive, simulate

__all__ = [
    "CoincidenceError",
    "Event",
    "IntegratorOptions",
    "Particle",
    "SystemState",
    "Trajectory",
    "UndefinedCenterError",
    "angular_momentum",
    "decompose_field",
    "equivalent_center",
    "from_source_strength",
    "from_vorticity",
    "hamiltonian_H",
    "integrate_adaptive",
    "linear_momentum",
    "moment_of_inertia",
    "potential_G",
    "simulate",
    "velocity_field",
    "virial",
]
