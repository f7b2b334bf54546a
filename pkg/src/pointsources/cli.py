"""Command-line driver.

Subcommands::

    pointsources simulate CONFIG [--print-config]
    pointsources blowup CONFIG
    pointsources report TRAJECTORY [--weights re|im|w1,w2,...] [--plot out.svg] [--output report.json]
    pointsources analytic --S 2+2j --r0 1 [--theta0 0] [--t-end T] [--samples N]

Exit codes: 0 success, 2 input or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import analytic
from .blowup import from_relative, integrate_blowup, to_relative
from .diagnostics import ResolutionError, invariant_drift_report
from .files import (
    TrajectoryFormatError,
    events_csv,
    fmt,
    read_trajectory,
    svg_paths,
    trajectory_csv,
)
from .integrate import Event, IntegratorOptions, MaxStepsExceeded, Trajectory, simulate
from .model import CoincidenceError, SystemState

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

log = logging.getLogger("pointsources")


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class ParticleSpec:
    x: float
    y: float
    gamma_re: float
    gamma_im: float


@dataclass(frozen=True)
class IntegratorSpec:
    initial_step: float = 1e-3
    atol: float = 1e-12
    rtol: float = 1e-10
    collision_radius: float = 1e-6
    step_floor: float = 1e-18
    max_steps: int = 200_000


@dataclass(frozen=True)
class BlowupSpec:
    enabled: bool = False
    base: int = -1
    selection: tuple[int, ...] = (0,)
    s_end: float = 10.0


@dataclass(frozen=True)
class OutputSpec:
    trajectory: str
    events: str
    report: str
    plot: str | None = None


@dataclass(frozen=True)
class RunConfig:
    particles: tuple[ParticleSpec, ...]
    t_end: float
    outputs: OutputSpec
    direction: str = "forward"
    integrator: IntegratorSpec = field(default_factory=IntegratorSpec)
    blowup: BlowupSpec = field(default_factory=BlowupSpec)
    sample_stride: int = 1

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["particles"] = [asdict(p) for p in self.particles]
        d["blowup"]["selection"] = list(self.blowup.selection)
        return d

    def options(self) -> IntegratorOptions:
        return IntegratorOptions(direction=self.direction, **asdict(self.integrator))

    def initial_state(self) -> SystemState:
        return SystemState(
            0.0,
            [complex(p.x, p.y) for p in self.particles],
            [complex(p.gamma_re, p.gamma_im) for p in self.particles],
        )


def _section(raw: Any, cls, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    required = [f.name for f in fields(cls) if f.default is MISSING and f.default_factory is MISSING]
    missing = [k for k in required if k not in raw]
    if missing:
        raise ConfigError(f"missing key(s) in {where}: {', '.join(missing)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _number(v: Any, where: str, integer: bool = False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where} must be a number")
    if integer and not float(v).is_integer():
        raise ConfigError(f"{where} must be an integer")
    if not math.isfinite(v):
        raise ConfigError(f"{where} must be finite")
    return int(v) if integer else float(v)


def parse_config(raw: Any) -> RunConfig:
    """Validate a decoded config document; raises :class:`ConfigError`."""
    cfg = _section(raw, RunConfig, "config")
    if not isinstance(cfg.particles, list) or not cfg.particles:
        raise ConfigError("particles must be a non-empty list")
    particles = []
    for i, p in enumerate(cfg.particles):
        spec = _section(p, ParticleSpec, f"particle {i}")
        vals = {k: _number(getattr(spec, k), f"particle {i} {k}") for k in ("x", "y", "gamma_re", "gamma_im")}
        if vals["gamma_re"] == 0 and vals["gamma_im"] == 0:
            raise ConfigError(f"particle {i} has zero intensity (gamma_re = gamma_im = 0)")
        particles.append(ParticleSpec(**vals))
    if len({(p.x, p.y) for p in particles}) != len(particles):
        raise ConfigError("particles must have distinct positions")

    integ = _section(raw.get("integrator", {}), IntegratorSpec, "integrator")
    integ = IntegratorSpec(
        **{
            f.name: _number(getattr(integ, f.name), f"integrator {f.name}", f.name == "max_steps")
            for f in fields(IntegratorSpec)
        }
    )
    blow = _section(raw.get("blowup", {}), BlowupSpec, "blowup")
    if not isinstance(blow.enabled, bool):
        raise ConfigError("blowup enabled must be true or false")
    sel = blow.selection
    if not isinstance(sel, (list, tuple)) or not sel:
        raise ConfigError("blowup selection must be a non-empty list")
    blow = BlowupSpec(
        blow.enabled,
        int(_number(blow.base, "blowup base", True)),
        tuple(int(_number(s, "blowup selection", True)) for s in sel),
        _number(blow.s_end, "blowup s_end"),
    )
    n = len(particles)
    if not -n <= blow.base < n:
        raise ConfigError(f"blowup base {blow.base} out of range for {n} particles")
    if any(not 0 <= s < max(n - 1, 1) for s in blow.selection):
        raise ConfigError("blowup selection must index the N-1 relative coordinates")

    out = _section(raw.get("outputs"), OutputSpec, "outputs")
    paths = [out.trajectory, out.events, out.report] + ([out.plot] if out.plot is not None else [])
    if not all(isinstance(p, str) and p for p in paths):
        raise ConfigError("output paths must be non-empty strings")
    if len(set(paths)) != len(paths):
        raise ConfigError("output paths must be distinct")

    if cfg.direction not in ("forward", "backward"):
        raise ConfigError("direction must be 'forward' or 'backward'")
    t_end = _number(cfg.t_end, "t_end")
    if t_end == 0 or (t_end > 0) != (cfg.direction == "forward"):
        raise ConfigError(f"t_end={t_end} does not lie in the {cfg.direction} direction from t=0")
    stride = _number(cfg.sample_stride, "sample_stride", True)
    if stride < 1:
        raise ConfigError("sample_stride must be at least 1")
    result = RunConfig(tuple(particles), t_end, out, cfg.direction, integ, blow, stride)
    try:
        result.options()
    except ValueError as exc:
        raise ConfigError(f"integrator: {exc}") from exc
    return result


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw)


def dump_json(obj: Any) -> str:
    return json.dumps(_clean(obj), indent=2) + "\n"


def _clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return float(fmt(x)) if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _thin(traj: Trajectory, stride: int) -> list[SystemState]:
    """Every ``stride``-th sample, always keeping the first and last of each segment."""
    keep = []
    segments = traj.segments()
    i = 0
    for seg in segments:
        for j, s in enumerate(seg):
            if j == 0 or j == len(seg) - 1 or i % stride == 0:
                keep.append(s)
            i += 1
    return keep


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _report_dict(samples: list[SystemState], weights=None) -> dict[str, Any]:
    seg = [s for s in samples if s.ids == samples[0].ids]
    if len(seg) < 2 or seg[0].n < 2:
        return {"scope": "empty", "segment_samples": len(seg)}
    rep = invariant_drift_report(seg, weights).to_dict()
    rep["segment_samples"] = len(seg)
    return rep


def run_simulate(config_path: str | Path, print_config: bool = False) -> int:
    cfg = load_config(config_path)
    if print_config:
        sys.stdout.write(dump_json(cfg.to_dict()))
        return EXIT_OK
    base = Path(config_path).resolve().parent
    try:
        traj = simulate(cfg.initial_state(), cfg.t_end, cfg.options())
    except (MaxStepsExceeded, CoincidenceError) as exc:
        raise NumericalFailure(str(exc)) from exc
    samples = _thin(traj, cfg.sample_stride)
    out = cfg.outputs
    _write(_resolve(base, out.trajectory), trajectory_csv(samples))
    _write(_resolve(base, out.events), events_csv(traj.events))
    report = _report_dict(traj.samples)
    report["events"] = [
        {"t": e.time, "kind": e.kind, "participants": list(e.participants), "reason": e.reason}
        for e in traj.events
    ]
    _write(_resolve(base, out.report), dump_json(report))
    if out.plot:
        _write(_resolve(base, out.plot), svg_paths(samples))
    floor = [e for e in traj.events if e.kind == "termination" and e.reason.startswith("step_floor")]
    if floor and not cfg.blowup.enabled:
        raise NumericalFailure(
            f"step floor reached at t={fmt(floor[0].time)}; enable blowup and rerun with 'blowup'"
        )
    return EXIT_OK


def run_blowup(config_path: str | Path) -> int:
    cfg = load_config(config_path)
    if not cfg.blowup.enabled:
        raise ConfigError("blowup section is not enabled in this config")
    state = cfg.initial_state()
    if state.n < 2:
        raise ConfigError("blow-up needs at least two particles")
    base = Path(config_path).resolve().parent
    rel = to_relative(state, cfg.blowup.base)
    try:
        bt = integrate_blowup(rel, cfg.blowup.selection, cfg.blowup.s_end, cfg.options())
    except (MaxStepsExceeded, CoincidenceError) as exc:
        raise NumericalFailure(str(exc)) from exc
    states = [from_relative(r) for r in bt.states]
    traj = Trajectory(states)
    samples = _thin(traj, cfg.sample_stride)
    last = bt.states[-1]
    reason = bt.terminated or "s_end reached"
    events = [Event("termination", last.t, location=complex(last.base_position), reason=reason)]
    out = cfg.outputs
    _write(_resolve(base, out.trajectory), trajectory_csv(samples))
    _write(_resolve(base, out.events), events_csv(events))
    report = _report_dict(states)
    report["blowup"] = {
        "base": rel.base,
        "selection": sorted(bt.selection),
        "s_final": last.s,
        "t_final": last.t,
        "xi_final_abs": [abs(complex(x)) for x in last.xi],
        "terminated": reason,
    }
    _write(_resolve(base, out.report), dump_json(report))
    if out.plot:
        _write(_resolve(base, out.plot), svg_paths(samples))
    if bt.terminated:
        raise NumericalFailure(f"blow-up integration stopped early: {bt.terminated}")
    return EXIT_OK


def _parse_weights(spec: str, samples: list[SystemState]):
    if spec == "re":
        return samples[0].intensities.real
    if spec == "im":
        return samples[0].intensities.imag
    try:
        w = [float(v) for v in spec.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad weights {spec!r}: use re, im or a comma list") from exc
    if len(w) != samples[0].n:
        raise ConfigError(f"{len(w)} weights given for {samples[0].n} particles")
    return np.array(w)


def run_report(
    trajectory: str | Path,
    weights: str = "re",
    plot: str | Path | None = None,
    output: str | Path | None = None,
) -> int:
    try:
        samples = read_trajectory(trajectory)
    except TrajectoryFormatError as exc:
        raise ConfigError(str(exc)) from exc
    w = _parse_weights(weights, samples)
    try:
        report = _report_dict(samples, w)
    except ResolutionError as exc:
        raise ConfigError(f"trajectory too coarse for the winding probe: {exc}") from exc
    text = dump_json(report)
    if output is None:
        sys.stdout.write(text)
    else:
        _write(Path(output), text)
    if plot is not None:
        _write(Path(plot), svg_paths(samples))
    return EXIT_OK


def run_analytic(S: complex, r0: float, theta0: float, t_end: float | None, samples: int) -> int:
    sol = analytic.TwoBodySolution(S, r0, theta0)
    if t_end is None:
        t_end = 0.9 * sol.t_star if sol.t_star is not None else 1.0
    if sol.t_star is not None and t_end >= sol.t_star:
        raise ConfigError(f"t_end={t_end} is not before the collision time {sol.t_star}")
    lines = ["t,r,theta,x,y"]
    for t in np.linspace(0.0, t_end, samples):
        z = analytic.two_body_state(sol, float(t))
        r = abs(z)
        theta = sol.theta0 if sol.S == 0 else sol.angle(float(t))
        lines.append(",".join(fmt(v) for v in (t, r, theta, z.real, z.imag)))
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pointsources", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a configuration with collision merging")
    p.add_argument("config")
    p.add_argument("--print-config", action="store_true", help="echo the normalised config and exit")

    p = sub.add_parser("blowup", help="integrate in the blown-up time s")
    p.add_argument("config")

    p = sub.add_parser("report", help="invariant report for a trajectory CSV")
    p.add_argument("trajectory")
    p.add_argument("--weights", default="re", help="re, im, or comma-separated reals (default re)")
    p.add_argument("--plot", default=None, help="write an SVG of the particle paths")
    p.add_argument("--output", default=None, help="write the JSON here instead of stdout")

    p = sub.add_parser("analytic", help="closed-form two-body samples as CSV")
    p.add_argument("--S", type=complex, required=True, help="summed intensity, e.g. 2+2j")
    p.add_argument("--r0", type=float, required=True)
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--samples", type=int, default=11)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            return run_simulate(args.config, args.print_config)
        if args.command == "blowup":
            return run_blowup(args.config)
        if args.command == "report":
            return run_report(args.trajectory, args.weights, args.plot, args.output)
        if args.command == "analytic":
            if args.samples < 2 or args.r0 <= 0:
                raise ConfigError("need --samples >= 2 and --r0 > 0")
            return run_analytic(args.S, args.r0, args.theta0, args.t_end, args.samples)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
