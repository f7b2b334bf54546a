"""Flat-file formats: trajectory and event CSVs, SVG path plots."""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable
from pathlib import Path

from .integrate import Event
from .model import SystemState

TRAJECTORY_HEADER = ["t", "particle_id", "x", "y", "gamma_re", "gamma_im"]
EVENTS_HEADER = ["t", "kind", "participants", "x", "y"]


class TrajectoryFormatError(ValueError):
    pass


def fmt(x: float) -> str:
    """17 significant digits: deterministic and round-trips every double."""
    x = float(x)
    if math.isnan(x):
        return ""
    if x == 0.0:
        return "0"
    return format(x, ".17g")


def trajectory_csv(samples: Iterable[SystemState]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_HEADER)
    for s in samples:
        for pid, z, g in zip(s.ids, s.positions, s.intensities):
            w.writerow([fmt(s.time), pid, fmt(z.real), fmt(z.imag), fmt(g.real), fmt(g.imag)])
    return buf.getvalue()


def events_csv(events: Iterable[Event]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENTS_HEADER)
    for e in events:
        parts = ";".join(str(p) for p in e.participants)
        w.writerow([fmt(e.time), e.kind, parts, fmt(e.location.real), fmt(e.location.imag)])
    return buf.getvalue()


def read_trajectory(path: str | Path) -> list[SystemState]:
    """Parse a trajectory CSV back into states, one per distinct time row block."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise TrajectoryFormatError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise TrajectoryFormatError(f"{path} is empty")
    if rows[0] != TRAJECTORY_HEADER:
        raise TrajectoryFormatError(f"{path}: expected header {','.join(TRAJECTORY_HEADER)}")
    blocks: list[tuple[float, list[tuple[int, complex, complex]]]] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(TRAJECTORY_HEADER):
            raise TrajectoryFormatError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
        try:
            t = float(row[0])
            pid = int(row[1])
            z = complex(float(row[2]), float(row[3]))
            g = complex(float(row[4]), float(row[5]))
        except ValueError as exc:
            raise TrajectoryFormatError(f"{path}:{lineno}: {exc}") from exc
        if not blocks or blocks[-1][0] != t:
            blocks.append((t, []))
        blocks[-1][1].append((pid, z, g))
    if not blocks:
        raise TrajectoryFormatError(f"{path} has no samples")
    try:
        return [
            SystemState(t, [p[1] for p in ps], [p[2] for p in ps], tuple(p[0] for p in ps))
            for t, ps in blocks
        ]
    except ValueError as exc:
        raise TrajectoryFormatError(f"{path}: {exc}") from exc


def svg_paths(samples: list[SystemState], size: int = 600) -> str:
    """One ``<path>`` per particle id; the viewBox covers the data plus a 5% margin."""
    tracks: dict[int, list[complex]] = {}
    for s in samples:
        for pid, z in zip(s.ids, s.positions):
            tracks.setdefault(pid, []).append(complex(z))
    pts = [z for track in tracks.values() for z in track]
    xs = [z.real for z in pts]
    ys = [-z.imag for z in pts]  # SVG y axis points down
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    span = max(x1 - x0, y1 - y0) or 1.0
    w = (x1 - x0) or span
    h = (y1 - y0) or span
    mx, my = 0.05 * w, 0.05 * h
    box = [x0 - mx, y0 - my, w + 2 * mx, h + 2 * my]
    stroke = fmt(0.004 * max(box[2], box[3]))
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="{" ".join(fmt(v) for v in box)}" preserveAspectRatio="xMidYMid meet">'
    ]
    for pid in sorted(tracks):
        track = tracks[pid]
        d = " ".join(
            ("M" if i == 0 else "L") + f"{fmt(z.real)},{fmt(-z.imag)}" for i, z in enumerate(track)
        )
        lines.append(
            f'<path id="p{pid}" d="{d}" fill="none" stroke="black" stroke-width="{stroke}"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
