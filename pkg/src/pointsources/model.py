"""Planar point sources and vortices with complex intensities.

A single velocity law covers sources, vortices and mixed source-vortices::

    dz_k/dt = -sum_{l != k} G_l (z_k - z_l) / |z_k - z_l|**2
            = -sum_{l != k} G_l / conj(z_k - z_l)

A real intensity ``G`` is a source particle (``G > 0`` pulls neighbours in,
i.e. the particle is a sink of outflow strength ``-G``).  A purely imaginary
``G`` is a point vortex.  Use :func:`from_source_strength` and
:func:`from_vorticity` to convert from the physical conventions.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

ComplexArray = NDArray[np.complex128]
FloatArray = NDArray[np.float64]

#: separations below this are treated as coincident positions
MIN_SEPARATION = 1e-13


class CoincidenceError(ValueError):
    """Two particles occupy the same point, where the field is undefined."""

    def __init__(self, pair: tuple[int, int], separation: float):
        self.pair = pair
        self.separation = separation
        super().__init__(
            f"particles {pair[0]} and {pair[1]} coincide (separation {separation:.3g})"
        )


class UndefinedCenterError(ValueError):
    """The total intensity vanishes, so the equivalent center does not exist."""


def from_source_strength(q: complex) -> complex:
    """Intensity of a point source with outflow strength ``q``."""
    return -complex(q)


def from_vorticity(omega: complex) -> complex:
    """Intensity of a point vortex with circulation ``omega``."""
    return -1j * complex(omega)


@dataclass(frozen=True)
class Particle:
    position: complex
    intensity: complex

    def __post_init__(self) -> None:
        if complex(self.intensity) == 0:
            raise ValueError("intensity must be nonzero")


@dataclass(frozen=True, eq=False)
class SystemState:
    """Time plus positions and intensities of ``N >= 1`` particles.

    Arrays are copied and frozen on construction.  ``ids`` are stable labels
    used to follow particles through merges; they default to ``0..N-1``.
    """

    time: float
    positions: ComplexArray
    intensities: ComplexArray
    ids: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        z = np.array(self.positions, dtype=np.complex128).reshape(-1)
        g = np.array(self.intensities, dtype=np.complex128).reshape(-1)
        if z.shape != g.shape:
            raise ValueError("positions and intensities must have equal length")
        if z.size < 1:
            raise ValueError("a state needs at least one particle")
        if not (np.isfinite(z).all() and np.isfinite(g).all()):
            raise ValueError("positions and intensities must be finite")
        bad = np.flatnonzero(g == 0)
        if bad.size:
            raise ValueError(f"particle {int(bad[0])} has zero intensity")
        if np.unique(z).size != z.size:
            d = np.abs(z[:, None] - z[None, :]) + np.eye(z.size)
            k, l = np.argwhere(d == 0)[0]
            raise CoincidenceError((int(min(k, l)), int(max(k, l))), 0.0)
        ids = tuple(int(i) for i in self.ids) if self.ids else tuple(range(z.size))
        if len(ids) != z.size or len(set(ids)) != len(ids):
            raise ValueError("ids must be unique, one per particle")
        z.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "positions", z)
        object.__setattr__(self, "intensities", g)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def from_particles(cls, particles: Iterable[Particle], time: float = 0.0) -> SystemState:
        ps = list(particles)
        return cls(time, [p.position for p in ps], [p.intensity for p in ps])

    @property
    def n(self) -> int:
        return int(self.positions.size)

    @property
    def particles(self) -> list[Particle]:
        return [Particle(complex(z), complex(g)) for z, g in zip(self.positions, self.intensities)]

    def replace(self, *, time: float | None = None, positions=None) -> SystemState:
        return SystemState(
            self.time if time is None else time,
            self.positions if positions is None else positions,
            self.intensities,
            self.ids,
        )

    def translated(self, w: complex) -> SystemState:
        return self.replace(positions=self.positions + w)

    def closest_pair(self) -> tuple[tuple[int, int], float]:
        """Indices and separation of the closest pair (``inf`` for N=1)."""
        if self.n < 2:
            return (0, 0), float("inf")
        d = np.abs(self.positions[:, None] - self.positions[None, :])
        d[np.diag_indices(self.n)] = np.inf
        k, l = np.unravel_index(int(np.argmin(d)), d.shape)
        return (int(min(k, l)), int(max(k, l))), float(d[k, l])


def _pairwise_inverse(positions: ComplexArray) -> ComplexArray:
    """Matrix ``1 / conj(z_k - z_l)`` with zeros on the diagonal."""
    z = np.asarray(positions, dtype=np.complex128)
    n = z.size
    diff = z[:, None] - z[None, :]
    sep = np.abs(diff)
    sep[np.diag_indices(n)] = np.inf
    if n > 1 and sep.min() < MIN_SEPARATION:
        k, l = np.unravel_index(int(np.argmin(sep)), sep.shape)
        raise CoincidenceError((int(min(k, l)), int(max(k, l))), float(sep[k, l]))
    diff[np.diag_indices(n)] = 1.0
    inv = 1.0 / np.conj(diff)
    inv[np.diag_indices(n)] = 0.0
    return inv


def field_velocities(positions: ComplexArray, intensities: ComplexArray) -> ComplexArray:
    """Array form of :func:`velocity_field` for raw position/intensity arrays."""
    if np.size(positions) < 2:
        return np.zeros(np.size(positions), dtype=np.complex128)
    inv = _pairwise_inverse(positions)
    return -(inv @ np.asarray(intensities, dtype=np.complex128))


def velocity_field(state: SystemState) -> ComplexArray:
    """Velocity of every particle; zero for a lone particle.

    Raises
    ------
    CoincidenceError
        If two positions are closer than :data:`MIN_SEPARATION`.
    """
    return field_velocities(state.positions, state.intensities)


def decompose_field(state: SystemState) -> tuple[ComplexArray, ComplexArray]:
    """Split the field into its rotational (vortex) and radial (source) parts.

    The vortex part uses intensities ``i*Im(G)``, the source part ``Re(G)``;
    the two add up to :func:`velocity_field` by linearity.
    """
    g = state.intensities
    vortex = field_velocities(state.positions, 1j * g.imag)
    source = field_velocities(state.positions, g.real.astype(np.complex128))
    return vortex, source


def _weights(weights: Sequence[float] | FloatArray, n: int) -> FloatArray:
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size != n:
        raise ValueError(f"expected {n} weights, got {w.size}")
    return w


def source_weights(state: SystemState) -> FloatArray:
    """Real source weights ``Re(G)``; the standard choice for pure-source states."""
    return state.intensities.real.copy()


def vortex_weights(state: SystemState) -> FloatArray:
    """Real vortex weights ``Im(G)`` (circulations up to an overall sign)."""
    return state.intensities.imag.copy()


def _log_energy(state: SystemState, weights) -> float:
    if state.n < 2:
        raise ValueError("need at least two particles")
    w = _weights(weights, state.n)
    z = state.positions
    total = 0.0
    for k in range(state.n - 1):
        r = np.abs(z[k] - z[k + 1 :])
        if r.min() < MIN_SEPARATION:
            l = k + 1 + int(np.argmin(r))
            raise CoincidenceError((k, l), float(r.min()))
        total -= w[k] * float(np.dot(w[k + 1 :], np.log(r)))
    return total


def hamiltonian_H(state: SystemState, vorticities) -> float:
    """``-sum_{k<l} w_k w_l ln|z_k - z_l|`` with the given vortex weights."""
    return _log_energy(state, vorticities)


def potential_G(state: SystemState, sources) -> float:
    """Same log-interaction energy as :func:`hamiltonian_H`, for source weights."""
    return _log_energy(state, sources)


def linear_momentum(state: SystemState) -> complex:
    """``Z = sum_k G_k z_k`` with the full complex intensities."""
    return complex(np.sum(state.intensities * state.positions))


def equivalent_center(state: SystemState) -> complex:
    """``Z / sum G``; raises :class:`UndefinedCenterError` for zero total intensity."""
    total = complex(np.sum(state.intensities))
    if total == 0:
        raise UndefinedCenterError("total intensity is zero; no equivalent center")
    return linear_momentum(state) / total


def angular_momentum(positions, velocities, weights) -> float:
    """``A = sum_k w_k (i z_k) . v_k`` with ``.`` the planar dot product."""
    z = np.asarray(positions, dtype=np.complex128).reshape(-1)
    v = np.asarray(velocities, dtype=np.complex128).reshape(-1)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if not (z.size == v.size == w.size):
        raise ValueError("positions, velocities and weights must have equal length")
    # (a . b) = Re(conj(a) b)
    return float(np.sum(w * np.real(np.conj(1j * z) * v)))


def moment_of_inertia(state: SystemState, weights) -> float:
    w = _weights(weights, state.n)
    return float(np.dot(w, np.abs(state.positions) ** 2))


def virial(weights):
    """Pairwise product sum ``sum_{k<l} w_k w_l``.

    Real weights give a float; complex intensities give a complex number.
    """
    w = np.asarray(weights).reshape(-1)
    if w.size < 2:
        raise ValueError("virial needs at least two weights")
    total = sum(w[k] * w[l] for k in range(w.size) for l in range(k + 1, w.size))
    return complex(total) if np.iscomplexobj(w) else float(total)
