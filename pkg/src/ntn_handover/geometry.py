"""Planar satellite/UE geometry and the cell-level handover-load formulas.

Everything lives on a flat 2-D ground plane measured in km.  Satellites are
represented by their sub-satellite point moving at constant velocity; the
coverage cell is a disc of radius ``footprint_radius`` around that point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "GroundPoint",
    "SatelliteTrack",
    "HandoffLoadQuery",
    "position_at",
    "distance",
    "in_footprint",
    "needs_handover",
    "intersect_area",
    "handoff_area",
    "expected_handoffs",
    "midline_crossing_time",
    "footprint_exit_time",
    "crossing_times",
    "exit_times",
]


@dataclass(frozen=True)
class GroundPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite ground point ({self.x}, {self.y})")


@dataclass(frozen=True)
class SatelliteTrack:
    """Sub-satellite point moving linearly over the ground plane.

    ``velocity`` is in km/s, so ``position_at`` takes seconds.
    """

    id: str
    initial_position: GroundPoint
    velocity: tuple[float, float]
    footprint_radius: float

    def __post_init__(self):
        if not self.footprint_radius > 0:
            raise ValueError("footprint_radius must be positive")


@dataclass(frozen=True)
class HandoffLoadQuery:
    ue_count: float
    cell_radius: float
    satellite_speed: float
    window: float

    def __post_init__(self):
        for name in ("ue_count", "cell_radius", "satellite_speed", "window"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


def position_at(track: SatelliteTrack, t: float) -> GroundPoint:
    if t < 0:
        raise ValueError("t must be non-negative")
    p = track.initial_position
    vx, vy = track.velocity
    return GroundPoint(p.x + vx * t, p.y + vy * t)


def distance(a: GroundPoint, b: GroundPoint) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def in_footprint(ue: GroundPoint, track: SatelliteTrack, t: float) -> bool:
    # boundary inclusive
    return distance(ue, position_at(track, t)) <= track.footprint_radius


def needs_handover(
    ue: GroundPoint,
    serving: SatelliteTrack,
    others: Sequence[SatelliteTrack],
    t: float,
) -> Optional[str]:
    """Return the id of a strictly closer satellite, or None.

    Only the nearest non-serving satellite is considered; equal distances
    keep the UE on its serving satellite.
    """
    d_serving = distance(ue, position_at(serving, t))
    best_id, best_d = None, math.inf
    for track in others:
        if track.id == serving.id:
            continue
        d = distance(ue, position_at(track, t))
        if d < best_d:
            best_id, best_d = track.id, d
    if best_id is not None and best_d < d_serving:
        return best_id
    return None


def _check_moved(cell_radius: float, moved: float) -> None:
    if cell_radius <= 0:
        raise ValueError("cell_radius must be positive")
    if moved < 0 or moved > 2 * cell_radius:
        raise ValueError(
            f"moved={moved} outside [0, 2*cell_radius={2 * cell_radius}]"
        )


def intersect_area(cell_radius: float, moved: float) -> float:
    """Overlap area of two equal discs whose centres are ``moved`` apart."""
    _check_moved(cell_radius, moved)
    r = cell_radius
    # clip guards the arccos argument against 1 + ulp at d == 2r
    c = min(1.0, moved / (2 * r))
    root = math.sqrt(max(0.0, r * r - moved * moved / 4))
    return 2 * r * r * math.acos(c) - moved * root


def handoff_area(cell_radius: float, moved: float) -> float:
    """Part of the old cell no longer covered after moving ``moved`` km."""
    a_circle = math.pi * cell_radius**2
    return max(0.0, a_circle - intersect_area(cell_radius, moved))


def expected_handoffs(q: HandoffLoadQuery) -> float:
    """Expected number of uniformly spread UEs leaving the cell in ``q.window``.

    Displacements beyond two radii clamp to every UE.
    """
    d = q.satellite_speed * q.window
    if d >= 2 * q.cell_radius:
        return float(q.ue_count)
    a_circle = math.pi * q.cell_radius**2
    return q.ue_count * handoff_area(q.cell_radius, d) / a_circle


# ---------------------------------------------------------------------------
# analytic event times used by the simulator in place of polling


def midline_crossing_time(
    ue: GroundPoint, serving: SatelliteTrack, target: SatelliteTrack
) -> Optional[float]:
    """Earliest t >= 0 at which ``target`` is strictly nearer than ``serving``.

    Both tracks must share a velocity (rigid constellation), which makes the
    squared-distance difference linear in t.  Returns None if that never
    happens.  At the returned instant the two distances are equal; any later
    instant satisfies ``needs_handover``.
    """
    if serving.velocity != target.velocity:
        raise ValueError("tracks must share one velocity vector")
    vx, vy = serving.velocity
    a, b = serving.initial_position, target.initial_position
    px, py = ue.x, ue.y
    # f(t) = |p - b - vt|^2 - |p - a - vt|^2 = f0 + f1*t ; handover when f < 0
    dx, dy = b.x - a.x, b.y - a.y
    f0 = (b.x * b.x + b.y * b.y) - (a.x * a.x + a.y * a.y) - 2 * (px * dx + py * dy)
    f1 = 2 * (vx * dx + vy * dy)
    if f0 < 0:
        return 0.0
    if f1 >= 0:
        return None
    return -f0 / f1


def footprint_exit_time(ue: GroundPoint, track: SatelliteTrack) -> Optional[float]:
    """Time at which ``ue`` leaves the footprint for good.

    None when the UE is never inside it for t >= 0; 0.0 when it is outside at
    t=0 but the disc is moving away.
    """
    vx, vy = track.velocity
    p = track.initial_position
    rx, ry = ue.x - p.x, ue.y - p.y
    r = track.footprint_radius
    a = vx * vx + vy * vy
    if a == 0:
        return None if rx * rx + ry * ry > r * r else math.inf
    # |rel - v t|^2 = r^2
    b = -2 * (rx * vx + ry * vy)
    c = rx * rx + ry * ry - r * r
    disc = b * b - 4 * a * c
    if disc < 0:
        return None
    t_out = (-b + math.sqrt(disc)) / (2 * a)
    if t_out < 0:
        return None
    return t_out


def crossing_times(
    xs: np.ndarray, ys: np.ndarray, serving: SatelliteTrack, target: SatelliteTrack
) -> np.ndarray:
    """Vectorised :func:`midline_crossing_time`; NaN where it never happens."""
    vx, vy = serving.velocity
    a, b = serving.initial_position, target.initial_position
    dx, dy = b.x - a.x, b.y - a.y
    f0 = (b.x**2 + b.y**2) - (a.x**2 + a.y**2) - 2 * (xs * dx + ys * dy)
    f1 = 2 * (vx * dx + vy * dy)
    if f1 >= 0:
        return np.where(f0 < 0, 0.0, np.nan)
    return np.maximum(0.0, -f0 / f1)


def exit_times(xs: np.ndarray, ys: np.ndarray, track: SatelliteTrack) -> np.ndarray:
    """Vectorised :func:`footprint_exit_time`; NaN where never covered."""
    vx, vy = track.velocity
    p = track.initial_position
    rx, ry = xs - p.x, ys - p.y
    r = track.footprint_radius
    a = vx * vx + vy * vy
    b = -2 * (rx * vx + ry * vy)
    c = rx * rx + ry * ry - r * r
    disc = b * b - 4 * a * c
    with np.errstate(invalid="ignore"):
        t_out = (-b + np.sqrt(disc)) / (2 * a)
    t_out = np.where(disc < 0, np.nan, t_out)
    return np.where(t_out < 0, np.nan, t_out)
