"""Relative coordinates and blown-up dynamics near binary collisions.

With a base particle ``b`` the relative coordinates are ``xi_j = z_b - z_j``
for every other particle ``j``.  Together with ``Z = sum G_k z_k`` they fix
the configuration whenever the total intensity is nonzero.

Rescaling time by ``dt/ds = prod_{j in sel} |xi_j|**2`` turns the binary
collisions ``xi_j = 0`` (``j`` selected) into equilibria reached as
``s -> inf``.  The rescaled field is assembled with the singular factors
already cancelled, so it can be evaluated exactly at the collision.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from .integrate import AdaptiveStepper, IntegratorOptions, MaxStepsExceeded
from .model import (
    MIN_SEPARATION,
    CoincidenceError,
    ComplexArray,
    SystemState,
    UndefinedCenterError,
    linear_momentum,
)


@dataclass(frozen=True, eq=False)
class RelativeState:
    """Momentum, intensities and relative coordinates of a system.

    ``xi[j]`` belongs to particle ``others[j]``, i.e. every index except
    ``base`` in increasing order.  ``base_position`` is carried along so the
    absolute configuration can still be rebuilt when ``sum G == 0``.
    """

    Z: complex
    intensities: ComplexArray
    xi: ComplexArray
    base: int
    s: float = 0.0
    t: float = 0.0
    base_position: complex | None = None

    def __post_init__(self) -> None:
        g = np.array(self.intensities, dtype=np.complex128).reshape(-1)
        xi = np.array(self.xi, dtype=np.complex128).reshape(-1)
        if g.size < 2 or xi.size != g.size - 1:
            raise ValueError("need N >= 2 intensities and N-1 relative coordinates")
        base = int(self.base) % g.size
        for name, arr in (("intensities", g), ("xi", xi)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "Z", complex(self.Z))

    @property
    def n(self) -> int:
        return int(self.intensities.size)

    @property
    def others(self) -> tuple[int, ...]:
        return tuple(k for k in range(self.n) if k != self.base)

    @property
    def total_intensity(self) -> complex:
        return complex(np.sum(self.intensities))

    def with_xi(self, xi, *, s: float | None = None, t: float | None = None, base_position=None):
        return RelativeState(
            self.Z,
            self.intensities,
            xi,
            self.base,
            self.s if s is None else s,
            self.t if t is None else t,
            self.base_position if base_position is None else base_position,
        )


def to_relative(state: SystemState, base: int = -1) -> RelativeState:
    if state.n < 2:
        raise ValueError("relative coordinates need at least two particles")
    b = base % state.n
    z = state.positions
    others = [k for k in range(state.n) if k != b]
    return RelativeState(
        linear_momentum(state),
        state.intensities,
        z[b] - z[others],
        b,
        t=state.time,
        base_position=complex(z[b]),
    )


def from_relative(rel: RelativeState, anchor: complex | None = None) -> SystemState:
    """Absolute positions from ``Z`` and the relative coordinates.

    Solves ``sum G_k z_k = Z`` together with ``z_b - z_j = xi_j``:
    ``z_b = (Z + sum_j G_j xi_j) / sum G``.  When ``sum G == 0`` the
    momentum carries no positional information and the base particle is
    placed at ``anchor`` (default ``rel.base_position``) instead.
    """
    g = rel.intensities
    others = list(rel.others)
    total = rel.total_intensity
    if anchor is not None:
        zb = complex(anchor)
    elif total != 0:
        zb = (rel.Z + complex(np.sum(g[others] * rel.xi))) / total
    elif rel.base_position is not None:
        zb = rel.base_position
    else:
        raise UndefinedCenterError("sum of intensities is zero; an anchor position is required")
    z = np.empty(rel.n, dtype=np.complex128)
    z[rel.base] = zb
    z[others] = zb - rel.xi
    return SystemState(rel.t, z, g)


def _split(rel: RelativeState) -> tuple[ComplexArray, complex]:
    g = rel.intensities
    return g[list(rel.others)], complex(g[rel.base])


def _check(xi: ComplexArray, skip: frozenset[int] = frozenset()) -> None:
    for i, x in enumerate(xi):
        if i not in skip and abs(x) < MIN_SEPARATION:
            raise CoincidenceError((i, len(xi)), abs(x))
    for i in range(xi.size):
        for j in range(i + 1, xi.size):
            if abs(xi[i] - xi[j]) < MIN_SEPARATION:
                raise CoincidenceError((i, j), abs(xi[i] - xi[j]))


def _rates(xi: ComplexArray, g_other: ComplexArray, g_base: complex, sel: frozenset[int]):
    """Rescaled rates ``(P * dxi/dt, P * dz_b/dt, P)`` with ``P = prod_{sel} |xi|^2``.

    Every ``1/conj(xi_l)`` term appears as ``R_l = P / conj(xi_l)``; for
    selected ``l`` that is ``xi_l * prod_{j in sel, j != l} |xi_j|^2``,
    which stays finite at ``xi_l = 0``.
    """
    m = xi.size
    mod2 = np.abs(xi) ** 2
    P = float(np.prod(mod2[list(sel)])) if sel else 1.0
    R = np.empty(m, dtype=np.complex128)
    for l in range(m):
        if l in sel:
            rest = [j for j in sel if j != l]
            R[l] = xi[l] * (float(np.prod(mod2[rest])) if rest else 1.0)
        else:
            R[l] = P / np.conj(xi[l])
    out = np.empty(m, dtype=np.complex128)
    for i in range(m):
        acc = -(g_other[i] + g_base) * R[i]
        for l in range(m):
            if l != i:
                acc -= g_other[l] * (R[l] - P / np.conj(xi[l] - xi[i]))
        out[i] = acc
    dzb = -complex(np.sum(g_other * R))
    return out, dzb, P


def relative_field(rel: RelativeState) -> ComplexArray:
    """``dxi_j/dt = dz_b/dt - dz_j/dt`` written in relative coordinates only.

    For particle ``i`` (non-base) with intensity ``G_i``::

        dxi_i/dt = -(G_i + G_b)/conj(xi_i)
                   - sum_{l != i} G_l (1/conj(xi_l) - 1/conj(xi_l - xi_i))
    """
    _check(rel.xi)
    g_other, g_base = _split(rel)
    return _rates(rel.xi, g_other, g_base, frozenset())[0]


def _selection(sel: Iterable[int], m: int) -> frozenset[int]:
    out = frozenset(int(i) for i in sel)
    if not out:
        raise ValueError("blow-up selection must not be empty")
    if not all(0 <= i < m for i in out):
        raise ValueError(f"blow-up selection must index the {m} relative coordinates")
    return out


def blowup_field(rel: RelativeState, sel: Iterable[int]) -> ComplexArray:
    """``dxi/ds`` for ``dt/ds = prod_{j in sel} |xi_j|**2``; finite at ``xi_j = 0`` for selected ``j``.

    ``sel`` indexes ``rel.xi`` (0-based).  Collisions between two non-base
    particles (``xi_i == xi_j``) are not regularized; re-base instead.
    """
    chosen = _selection(sel, rel.xi.size)
    _check(rel.xi, chosen)
    g_other, g_base = _split(rel)
    return _rates(rel.xi, g_other, g_base, chosen)[0]


@dataclass
class BlowupTrajectory:
    states: list[RelativeState] = field(default_factory=list)
    selection: frozenset[int] = frozenset()
    terminated: str = ""

    @property
    def s(self) -> np.ndarray:
        return np.array([r.s for r in self.states])

    @property
    def t(self) -> np.ndarray:
        return np.array([r.t for r in self.states])

    @property
    def xi(self) -> np.ndarray:
        return np.array([r.xi for r in self.states])

    def absolute(self) -> list[SystemState]:
        return [from_relative(r) for r in self.states]


def integrate_blowup(
    rel: RelativeState,
    sel: Iterable[int],
    s_end: float,
    opts: IntegratorOptions = IntegratorOptions(),
) -> BlowupTrajectory:
    """Integrate the blown-up system in ``s`` with physical time as an extra component.

    The augmented state is ``(xi, z_base, t)``; ``dt/ds`` is the product of
    the selected ``|xi_j|**2``, so ``t`` is recovered at the same order as
    ``xi``.  Approaching a selected collision shows up as ``xi_j -> 0``
    while ``t`` levels off at the collision time.
    """
    chosen = _selection(sel, rel.xi.size)
    g_other, g_base = _split(rel)
    m = rel.xi.size
    if rel.base_position is None:
        zb0 = from_relative(rel).positions[rel.base]
    else:
        zb0 = rel.base_position

    def f(s, y):
        xi = y[:m]
        _check(xi, chosen)
        dxi, dzb, P = _rates(xi, g_other, g_base, chosen)
        return np.concatenate([dxi, [dzb, P]])

    y = np.concatenate([rel.xi, [zb0, rel.t]]).astype(np.complex128)
    s = rel.s
    traj = BlowupTrajectory([rel.with_xi(rel.xi, s=s, base_position=complex(zb0))], chosen)
    stepper = AdaptiveStepper(f, opts.atol, opts.rtol, opts.step_floor)
    h = opts.initial_step
    for _ in range(opts.max_steps):
        if s == s_end:
            return traj
        res = stepper.step(s, y, h, s_end)
        if res is None:
            traj.terminated = "step_floor"
            return traj
        s, y, h = res.t, res.y, res.h_next
        traj.states.append(
            rel.with_xi(y[:m], s=s, t=float(y[m + 1].real), base_position=complex(y[m]))
        )
    raise MaxStepsExceeded(f"{opts.max_steps} steps did not reach s={s_end}")


def tau_regularize_two_body(gamma_sum: float, z0: float, tau0: float, tau: float) -> tuple[float, float]:
    """Collinear two-body motion in the regularizing time ``dt/dtau = z``.

    ``z(tau) = -G (tau - tau0) + z0`` and, integrating ``dt = z dtau`` with
    ``t = 0`` at ``tau = 0``, ``t(tau) = -G tau**2 / 2 + (G tau0 + z0) tau``.
    """
    G = float(gamma_sum)
    if G == 0:
        raise ValueError("gamma_sum must be nonzero")
    z = -G * (tau - tau0) + z0
    t = -0.5 * G * tau * tau + (G * tau0 + z0) * tau
    return z, t


def tau_collision(gamma_sum: float, z0: float, tau0: float) -> tuple[float, float]:
    """``(tau, t)`` at which the regularized coordinate reaches zero."""
    G = float(gamma_sum)
    if G == 0:
        raise ValueError("gamma_sum must be nonzero")
    tau_c = tau0 + z0 / G
    return tau_c, 0.5 * G * (tau0 + z0 / G) ** 2
