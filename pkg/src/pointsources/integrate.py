"""Adaptive time stepping with collision detection and merging.

Sources generically collide in finite time.  The integrator advances the
state with a Dormand-Prince 5(4) pair, watches every pair separation, and
when one drops below the collision radius it refines the crossing time,
merges the cluster into a single particle carrying the summed intensity,
and carries on with the smaller system.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.optimize import brentq

from .model import (
    CoincidenceError,
    ComplexArray,
    SystemState,
    field_velocities,
)

log = logging.getLogger(__name__)

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
#: particles closer than CLUSTER_FACTOR * collision_radius at an event merge together
CLUSTER_FACTOR = 2.0


class MaxStepsExceeded(RuntimeError):
    pass


class NoCrossingError(ValueError):
    pass


@dataclass(frozen=True)
class IntegratorOptions:
    initial_step: float = 1e-3
    atol: float = 1e-12
    rtol: float = 1e-10
    collision_radius: float = 1e-6
    step_floor: float = 1e-18
    max_steps: int = 200_000
    direction: Literal["forward", "backward"] = "forward"

    def __post_init__(self) -> None:
        if not (self.initial_step > 0 and self.atol > 0 and self.rtol > 0):
            raise ValueError("initial_step and tolerances must be positive")
        if not self.collision_radius > 0:
            raise ValueError("collision_radius must be positive")
        if not 0 < self.step_floor < self.initial_step:
            raise ValueError("step_floor must be positive and below initial_step")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.direction not in ("forward", "backward"):
            raise ValueError("direction must be 'forward' or 'backward'")

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "forward" else -1.0


@dataclass(frozen=True)
class Event:
    """Something that interrupted smooth integration.

    ``participants`` holds particle ids.  For merge events ``before`` and
    ``after`` are the states on either side of the jump; ``after`` is
    ``None`` when the whole cluster annihilated and nothing is left.
    """

    kind: Literal["collision", "merge", "termination"]
    time: float
    participants: tuple[int, ...] = ()
    location: complex = complex("nan")
    reason: str = ""
    before: SystemState | None = field(default=None, repr=False, compare=False)
    after: SystemState | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind in ("collision", "merge") and not self.participants:
            raise ValueError(f"{self.kind} event needs participants")


@dataclass
class Trajectory:
    samples: list[SystemState] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.samples])

    @property
    def final(self) -> SystemState:
        return self.samples[-1]

    def extend(self, other: Trajectory) -> None:
        start = 0
        if self.samples and other.samples and other.samples[0].time == self.samples[-1].time:
            start = 1
        self.samples.extend(other.samples[start:])
        self.events.extend(other.events)

    def segments(self) -> list[list[SystemState]]:
        """Runs of consecutive samples sharing the same set of particles."""
        out: list[list[SystemState]] = []
        for s in self.samples:
            if out and out[-1][-1].ids == s.ids:
                out[-1].append(s)
            else:
                out.append([s])
        return out


# --------------------------------------------------------------------------
# single steps


def rk4_step(state: SystemState, h: float) -> SystemState:
    """One classical fourth-order Runge-Kutta step of size ``h``."""
    g = state.intensities
    z = state.positions
    k1 = field_velocities(z, g)
    k2 = field_velocities(z + 0.5 * h * k1, g)
    k3 = field_velocities(z + 0.5 * h * k2, g)
    k4 = field_velocities(z + h * k3, g)
    z_new = z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return state.replace(time=state.time + h, positions=z_new)


def dopri_step(
    f: Callable[[float, ComplexArray], ComplexArray],
    t: float,
    y: ComplexArray,
    h: float,
    k1: ComplexArray | None = None,
) -> tuple[ComplexArray, ComplexArray]:
    """Dormand-Prince step; returns the 5th-order solution and error estimate."""
    k = [f(t, y) if k1 is None else k1]
    for i in range(1, 7):
        yi = y + h * sum(a * kj for a, kj in zip(_A[i], k) if a != 0.0)
        k.append(f(t + _C[i] * h, yi))
    ks = np.stack(k)
    y5 = y + h * np.tensordot(_B5, ks, axes=1)
    err = h * np.tensordot(_E, ks, axes=1)
    return y5, err


def error_norm(err: ComplexArray, y0: ComplexArray, y1: ComplexArray, atol: float, rtol: float) -> float:
    """Max over components of ``|err| / (atol + rtol * max(|y0|, |y1|))``."""
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.max(np.abs(err) / scale)) if err.size else 0.0


@dataclass
class StepResult:
    t: float
    y: ComplexArray
    h_next: float


@dataclass
class AdaptiveStepper:
    """Error-controlled stepping of ``dy/dt = f(t, y)`` for complex vectors.

    Stage evaluations that raise :class:`CoincidenceError` reject the step
    and shrink it, since they mean the trial step jumped across a collision.
    """

    f: Callable[[float, ComplexArray], ComplexArray]
    atol: float
    rtol: float
    step_floor: float

    def step(self, t: float, y: ComplexArray, h: float, t_end: float) -> StepResult | None:
        """Take one accepted step towards ``t_end``; ``None`` if ``|h|`` fell below the floor."""
        sign = 1.0 if t_end >= t else -1.0
        h = sign * abs(h)
        while True:
            if abs(t_end - t) <= abs(h):
                h = t_end - t
            if abs(h) < self.step_floor or t + h == t:
                return None
            try:
                y_new, err = dopri_step(self.f, t, y, h)
                norm = error_norm(err, y, y_new, self.atol, self.rtol)
            except (CoincidenceError, FloatingPointError):
                h *= 0.25
                continue
            if not np.isfinite(norm):
                h *= 0.25
                continue
            if norm <= 1.0:
                factor = MAX_FACTOR if norm == 0 else min(MAX_FACTOR, SAFETY * norm ** -0.2)
                t_new = t_end if h == t_end - t else t + h
                return StepResult(t_new, y_new, h * max(1.0, factor))
            h *= max(MIN_FACTOR, SAFETY * norm ** -0.2)


# --------------------------------------------------------------------------
# collisions and merging


def _min_separation(z: ComplexArray) -> float:
    if z.size < 2:
        return float("inf")
    d = np.abs(z[:, None] - z[None, :])
    d[np.diag_indices(z.size)] = np.inf
    return float(d.min())


def locate_collision(
    state: SystemState, h: float, opts: IntegratorOptions
) -> tuple[Event, SystemState]:
    """Refine the time inside the step ``[t, t+h]`` at which a pair first reaches ``eps``.

    Partial steps are re-taken from ``state`` with the same Dormand-Prince
    formula, so the event state carries the step's accuracy.  Returns the
    collision event and the state at the event time.
    """
    eps = opts.collision_radius
    g = state.intensities

    def f(t, z):
        return field_velocities(z, g)

    def sub(theta: float) -> ComplexArray:
        if theta == 0.0:
            return state.positions
        return dopri_step(f, state.time, state.positions, theta * h)[0]

    def gap(theta: float) -> float:
        return _min_separation(sub(theta)) ** 2 - eps**2

    if gap(0.0) <= 0.0 or gap(1.0) > 0.0:
        raise NoCrossingError("no separation crosses the collision radius inside this step")
    theta = brentq(gap, 0.0, 1.0, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    # take the side of the root that is inside the collision radius
    for _ in range(60):
        if gap(theta) <= 0.0:
            break
        theta = min(1.0, theta + 1e-14)
    z = sub(theta)
    at = state.replace(time=state.time + theta * h, positions=z)
    cluster = collision_cluster(at, CLUSTER_FACTOR * eps)
    where = complex(np.mean(z[list(cluster)]))
    ev = Event(
        "collision",
        at.time,
        participants=tuple(at.ids[i] for i in cluster),
        location=where,
    )
    return ev, at


def collision_cluster(state: SystemState, radius: float) -> tuple[int, ...]:
    """Indices of the cluster, linked by separations ``<= radius``, around the closest pair."""
    (k, l), d = state.closest_pair()
    if d > radius:
        raise NoCrossingError("no pair lies within the cluster radius")
    z = state.positions
    members = {k, l}
    grew = True
    while grew:
        grew = False
        for j in range(state.n):
            if j not in members and np.min(np.abs(z[j] - z[list(members)])) <= radius:
                members.add(j)
                grew = True
    return tuple(sorted(members))


def merge_particles(
    state: SystemState, participants, new_id: int | None = None
) -> SystemState | None:
    """Replace a colliding cluster by one particle with the summed intensity.

    ``participants`` are indices into ``state``.  The merged particle sits at
    the intensity-weighted centroid, which keeps ``Z`` unchanged.  A cluster
    whose intensities sum to zero is removed; ``None`` is returned if that
    leaves no particles.
    """
    idx = sorted({int(i) for i in participants})
    if not idx:
        raise ValueError("merge needs at least one participant")
    keep = [i for i in range(state.n) if i not in idx]
    g = state.intensities[idx]
    z = state.positions[idx]
    total = complex(np.sum(g))
    positions = list(state.positions[keep])
    intensities = list(state.intensities[keep])
    ids = [state.ids[i] for i in keep]
    if total != 0:
        positions.append(complex(np.sum(g * z)) / total)
        intensities.append(total)
        ids.append(max(state.ids) + 1 if new_id is None else int(new_id))
    if not positions:
        return None
    return SystemState(state.time, positions, intensities, tuple(ids))


# --------------------------------------------------------------------------
# drivers


def _check_span(t0: float, t_end: float, opts: IntegratorOptions) -> None:
    if t_end == t0:
        raise ValueError("t_end must differ from the initial time")
    if (t_end - t0) * opts.sign < 0:
        raise ValueError(f"t_end={t_end} is not in the {opts.direction} direction from t={t0}")


def integrate_adaptive(
    state: SystemState, t_end: float, opts: IntegratorOptions = IntegratorOptions()
) -> Trajectory:
    """Integrate until ``t_end``, the first collision, or the step floor.

    Every accepted step is kept as a sample.  A collision ends the run with a
    ``collision`` event and the state at the event time as the last sample;
    hitting the step floor ends it with a ``termination`` event.

    Raises
    ------
    MaxStepsExceeded
        If ``opts.max_steps`` accepted steps do not reach ``t_end``.
    """
    _check_span(state.time, t_end, opts)
    g = state.intensities
    eps = opts.collision_radius
    traj = Trajectory([state])
    if state.n >= 2 and _min_separation(state.positions) <= eps:
        raise CoincidenceError(state.closest_pair()[0], state.closest_pair()[1])
    stepper = AdaptiveStepper(lambda t, z: field_velocities(z, g), opts.atol, opts.rtol, opts.step_floor)
    h = opts.initial_step
    current = state
    for _ in range(opts.max_steps):
        if current.time == t_end:
            return traj
        res = stepper.step(current.time, current.positions, h, t_end)
        if res is None:
            traj.events.append(
                Event(
                    "termination",
                    current.time,
                    location=complex(np.mean(current.positions)),
                    reason="step_floor: switch to the blow-up chart near this collision",
                )
            )
            log.warning("step floor reached at t=%.17g", current.time)
            return traj
        nxt = current.replace(time=res.t, positions=res.y)
        if nxt.n >= 2 and _min_separation(nxt.positions) < eps:
            ev, at = locate_collision(current, res.t - current.time, opts)
            traj.samples.append(at)
            traj.events.append(ev)
            return traj
        traj.samples.append(nxt)
        current = nxt
        h = res.h_next
    raise MaxStepsExceeded(f"{opts.max_steps} steps did not reach t={t_end}")


def simulate(
    state: SystemState, t_end: float, opts: IntegratorOptions = IntegratorOptions()
) -> Trajectory:
    """Integrate to ``t_end``, merging colliding clusters and continuing.

    Stops early when fewer than two particles remain (a lone particle is
    static, so a final sample at ``t_end`` is added for it) or when the step
    floor is hit.
    """
    _check_span(state.time, t_end, opts)
    traj = Trajectory()
    current = state
    next_id = max(state.ids) + 1
    while True:
        if current.n < 2:
            if current.time != t_end:
                traj.samples.append(current.replace(time=t_end))
            traj.events.append(Event("termination", traj.final.time, reason="fewer than two particles"))
            return traj
        seg = integrate_adaptive(current, t_end, opts)
        traj.extend(seg)
        last = seg.events[-1] if seg.events else None
        if last is None or last.kind != "collision":
            return traj
        at = seg.final
        idx = [at.ids.index(i) for i in last.participants]
        merged = merge_particles(at, idx, new_id=next_id)
        next_id += 1
        if merged is None:
            traj.events.append(
                Event("merge", at.time, last.participants, last.location, reason="annihilated", before=at)
            )
            traj.events.append(Event("termination", at.time, reason="no particles left"))
            return traj
        annihilated = merged.n == at.n - len(idx)
        where = last.location if annihilated else complex(merged.positions[-1])
        traj.events.append(
            Event(
                "merge",
                at.time,
                last.participants,
                where,
                reason="annihilated" if annihilated else "",
                before=at,
                after=merged,
            )
        )
        log.info("merged %s at t=%.17g", last.participants, at.time)
        if merged.time == t_end:
            return traj
        current = merged

