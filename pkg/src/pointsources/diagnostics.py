"""Executable checks of the first integrals and structural identities.

For a pure-source system with real weights ``w`` (normally ``w = Re G``):

* ``Z`` is conserved and the angular momentum ``A`` vanishes identically;
* ``I = sum w |z|^2`` changes at the constant rate ``-2 * virial(w)``, so
  it is conserved exactly when the virial vanishes and strictly monotone
  otherwise;
* ``w_k dz_k/dt`` is the gradient of ``H`` with respect to ``(x_k, y_k)``;
* the angle functional ``g = -sum w_k w_l theta_kl`` is locally constant.

The winding probe measures how far each pair angle ``theta_kl`` moves.  For
sources it is conjectured to stay below ``2 pi``; the probe only reports.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np

from .integrate import Trajectory
from .model import (
    SystemState,
    angular_momentum,
    hamiltonian_H,
    linear_momentum,
    moment_of_inertia,
    potential_G,
    velocity_field,
    virial,
)

TWO_PI = 2.0 * math.pi
#: largest angle change accepted between consecutive samples
MAX_ANGLE_JUMP = math.pi / 2


class ResolutionError(ValueError):
    """Samples are too far apart to follow a pair angle continuously."""


class EventInSpanError(ValueError):
    """The analysed span crosses a merge, where the particle set changes."""


def idot_constant(weights) -> float:
    """Rate of change of ``I`` along a pure-source solution: ``-2 * virial(w)``."""
    return -2.0 * virial(np.asarray(weights, dtype=np.float64))


def is_pure_source(state: SystemState) -> bool:
    return bool(np.all(state.intensities.imag == 0))


@dataclass(frozen=True)
class Winding:
    pairs: list[tuple[int, int]]
    delta: list[float]
    variation: list[float]
    angles: np.ndarray
    g_drift: float

    @property
    def conjecture_holds(self) -> bool:
        return all(v < TWO_PI for v in self.variation)


def winding_probe(traj: Trajectory | list[SystemState], weights=None) -> Winding:
    """Unwrapped pair angles ``theta_kl = arg(z_k - z_l)`` along the samples.

    ``delta`` is the net change of each angle, ``variation`` its full range
    (max - min).  ``g_drift`` is ``max |g(t) - g(0)|`` for the functional
    ``g = -sum_{k<l} w_k w_l theta_kl`` (weights default to ``Re G``).

    Raises
    ------
    ResolutionError
        If an angle moves by more than pi/2 between consecutive samples.
    """
    samples = _span(traj)
    first = samples[0]
    n = first.n
    pairs = list(combinations(range(n), 2))
    w = first.intensities.real if weights is None else np.asarray(weights, dtype=np.float64)
    if not pairs:
        return Winding([], [], [], np.zeros((len(samples), 0)), 0.0)
    k_idx = np.array([p[0] for p in pairs])
    l_idx = np.array([p[1] for p in pairs])
    z = np.array([s.positions for s in samples])
    raw = np.angle(z[:, k_idx] - z[:, l_idx])
    jumps = np.diff(raw, axis=0)
    wrapped = (jumps + math.pi) % TWO_PI - math.pi
    if wrapped.size and np.max(np.abs(wrapped)) > MAX_ANGLE_JUMP:
        i, j = np.unravel_index(int(np.argmax(np.abs(wrapped))), wrapped.shape)
        raise ResolutionError(
            f"pair {pairs[j]} turns by {wrapped[i, j]:.3f} rad between t={samples[i].time:.6g}"
            f" and t={samples[i + 1].time:.6g}; refine the sampling"
        )
    angles = np.vstack([raw[:1], raw[:1] + np.cumsum(wrapped, axis=0)])
    delta = angles[-1] - angles[0]
    variation = angles.max(axis=0) - angles.min(axis=0)
    coeff = -w[k_idx] * w[l_idx]
    g = angles @ coeff
    return Winding(
        pairs,
        [float(d) for d in delta],
        [float(v) for v in variation],
        angles,
        float(np.max(np.abs(g - g[0]))),
    )


def finite_difference_gradient(state: SystemState, weights, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``H`` (with ``weights``) as complex ``dH/dx_k + i dH/dy_k``."""
    z = state.positions
    grad = np.empty(state.n, dtype=np.complex128)
    for k in range(state.n):
        parts = []
        for d in (1.0, 1j):
            zp = z.copy()
            zm = z.copy()
            zp[k] += d * step
            zm[k] -= d * step
            hp = hamiltonian_H(state.replace(positions=zp), weights)
            hm = hamiltonian_H(state.replace(positions=zm), weights)
            parts.append((hp - hm) / (2 * step))
        grad[k] = parts[0] + 1j * parts[1]
    return grad


def gradient_check(state: SystemState, weights, velocities=None, step: float = 1e-5) -> float:
    """Max relative mismatch between ``w_k v_k`` and the finite-difference gradient of ``H``.

    ``velocities`` default to the full field of ``state``; pass the source
    part of a decomposed field to check it against the ``Re G`` weights.
    The error is normalised by the largest gradient component.
    """
    w = np.asarray(weights, dtype=np.float64)
    v = velocity_field(state) if velocities is None else np.asarray(velocities)
    grad = finite_difference_gradient(state, w, step)
    scale = float(np.max(np.abs(grad)))
    diff = float(np.max(np.abs(w * v - grad)))
    return diff / scale if scale > 0 else diff


@dataclass(frozen=True)
class InvariantReport:
    scope: str
    t_start: float
    t_end: float
    n_samples: int
    Z_initial: complex
    Z_drift: float
    max_abs_A: float
    max_rel_A: float
    virial: float
    virial_complex: complex
    idot_predicted: float | None
    idot_slope: float | None
    idot_residual: float | None
    I_monotone: bool | None
    I_range: float
    H_start: float
    H_end: float
    G_start: float
    G_end: float
    pairs: list[tuple[int, int]]
    winding: list[float]
    winding_variation: list[float]
    g_drift: float
    conjecture_holds: bool

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("Z_initial", "virial_complex"):
            c = complex(out.pop(key))
            out[key] = [c.real, c.imag]
        out["pairs"] = [list(p) for p in self.pairs]
        return out


def _span(traj: Trajectory | list[SystemState]) -> list[SystemState]:
    samples = traj.samples if isinstance(traj, Trajectory) else list(traj)
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    ids = samples[0].ids
    if any(s.ids != ids for s in samples):
        raise EventInSpanError("the particle set changes inside the span; analyse one segment")
    return samples


def invariant_drift_report(traj: Trajectory | list[SystemState], weights=None) -> InvariantReport:
    """Measure every first integral and identity along one merge-free span.

    ``weights`` default to ``Re G``.  The moment-of-inertia law is only
    claimed for pure sources; for other systems the ``idot_*`` fields and
    ``I_monotone`` are ``None`` and ``scope`` is ``"non-source"``.
    ``H`` uses the vortex weights ``Im G``, ``G`` the source weights ``Re G``.
    """
    samples = _span(traj)
    first, last = samples[0], samples[-1]
    w = first.intensities.real if weights is None else np.asarray(weights, dtype=np.float64)
    pure = is_pure_source(first)
    t = np.array([s.time for s in samples])

    Z = np.array([linear_momentum(s) for s in samples])
    Z0 = complex(Z[0])
    A_abs, A_rel = 0.0, 0.0
    for s in samples:
        v = velocity_field(s)
        a = abs(angular_momentum(s.positions, v, w))
        scale = float(np.sum(np.abs(w) * np.abs(s.positions) * np.abs(v)))
        A_abs = max(A_abs, a)
        A_rel = max(A_rel, a / scale if scale > 0 else a)
    I = np.array([moment_of_inertia(s, w) for s in samples])

    vir = virial(w) if first.n >= 2 else 0.0
    vir_c = virial(first.intensities) if first.n >= 2 else 0j
    slope = resid = predicted = None
    monotone = None
    if pure and first.n >= 2:
        predicted = idot_constant(w)
        coef, *_ = np.linalg.lstsq(np.vstack([t, np.ones_like(t)]).T, I, rcond=None)
        slope = float(coef[0])
        resid = float(np.max(np.abs(I - (coef[0] * t + coef[1]))))
        dI = np.diff(I) * np.sign(np.diff(t))
        monotone = bool(np.all(dI > 0) or np.all(dI < 0))

    win = winding_probe(samples, w)
    wv, ws = first.intensities.imag, first.intensities.real
    two = first.n >= 2
    return InvariantReport(
        scope="source" if pure else "non-source",
        t_start=float(t[0]),
        t_end=float(t[-1]),
        n_samples=len(samples),
        Z_initial=Z0,
        Z_drift=float(np.max(np.abs(Z - Z0))),
        max_abs_A=A_abs,
        max_rel_A=A_rel,
        virial=float(vir),
        virial_complex=complex(vir_c),
        idot_predicted=predicted,
        idot_slope=slope,
        idot_residual=resid,
        I_monotone=monotone,
        I_range=float(I.max() - I.min()),
        H_start=hamiltonian_H(first, wv) if two else 0.0,
        H_end=hamiltonian_H(last, wv) if two else 0.0,
        G_start=potential_G(first, ws) if two else 0.0,
        G_end=potential_G(last, ws) if two else 0.0,
        pairs=win.pairs,
        winding=win.delta,
        winding_variation=win.variation,
        g_drift=win.g_drift,
        conjecture_holds=win.conjecture_holds,
    )
