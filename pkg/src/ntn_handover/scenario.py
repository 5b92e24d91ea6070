"""Scenario configuration, seeded UE deployment and square grouping.

Configuration files are TOML.  Tables are only used for grouping keys; every
key lives in one flat namespace (``[delays] ground_satellite_ms = 3`` and a
top-level ``ground_satellite_ms = 3`` mean the same thing).  Units are part of
the key names.
"""

from __future__ import annotations

import dataclasses
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .engine import DelayModel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_PREFIX = "NTNHO_"
DEFAULT_SEEDS = (10, 20, 30, 40, 50)


class ConfigError(ValueError):
    """Raised for unreadable or invalid scenario configuration."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


_DELAY_FIELDS = {f.name for f in fields(DelayModel)}


@dataclass
class ScenarioConfig:
    protocol: str = "ho"
    ue_count: int = 10_000
    seed: int = 10

    # constellation
    satellites: int = 3
    satellite_speed_km_s: float = 7.56
    footprint_radius_km: float = 25.0
    inter_satellite_distance_km: float = 30.0
    lead_in_km: float = 40.0

    # delays and processing costs (ms)
    inter_satellite_ms: float = 1.0
    ground_satellite_ms: float = 3.0
    core_satellite_ms: float = 10.0
    transmission_us: float = 1.0
    physical_ms: float = 0.05
    logic_ms: float = 0.05
    encrypt_decrypt_ms: float = 0.1
    sign_verify_ms: float = 0.3
    hash_ms: float = 0.05
    batch_hash_ms: float = 0.1
    ground_broadcast_ms: float = 1.0
    propagation: str = "fixed"

    # satellite node
    queue_capacity: int = 500
    processors: int = 4
    push_out: bool = True
    packet_bytes: int = 3000

    # UE behaviour
    ho_timeout_ms: float = 30.0
    gho_timeout_ms: float = 35.0
    max_retransmissions: int = 15

    # UE field: ellipse (or rectangle) inscribed in region_width x region_height,
    # width measured along the ground track
    region_width_km: float = 50.0
    region_height_km: float = 36.0
    field_shape: str = "ellipse"

    # grouping / GHO
    square_width_km: float = 1.0
    min_group_size: int = 2
    k_ga: int = 2
    threshold_fraction: float = 0.5
    notify_lead_km: float = 5.0
    gho_trigger: str = "group"
    idle_fraction: float = 0.0
    freshness_window_ms: float = 5000.0
    share_bytes: int = 16
    rand_bytes: int = 16
    hash_name: str = "sha256"

    # run control
    continuous_handover: bool = True
    t_end_ms: float = 0.0  # 0 = derive from geometry
    bucket_ms: float = 200.0

    def delay_model(self) -> DelayModel:
        return DelayModel(**{k: getattr(self, k) for k in _DELAY_FIELDS})

    def validate(self) -> "ScenarioConfig":
        problems = []

        def need(cond, msg):
            if not cond:
                problems.append(msg)

        need(self.protocol in ("ho", "gho"), f"protocol must be 'ho' or 'gho', got {self.protocol!r}")
        need(self.ue_count >= 1, "ue_count must be >= 1")
        need(self.satellites >= 2, "satellites must be >= 2")
        for name in (
            "satellite_speed_km_s",
            "footprint_radius_km",
            "inter_satellite_distance_km",
            "square_width_km",
            "region_width_km",
            "region_height_km",
            "ho_timeout_ms",
            "gho_timeout_ms",
            "bucket_ms",
        ):
            need(getattr(self, name) > 0, f"{name} must be > 0")
        for name in _DELAY_FIELDS - {"propagation"}:
            need(getattr(self, name) >= 0, f"{name} must be >= 0")
        need(self.propagation in ("fixed", "distance"), "propagation must be 'fixed' or 'distance'")
        need(self.queue_capacity >= 0, "queue_capacity must be >= 0")
        need(self.processors >= 1, "processors must be >= 1")
        need(self.packet_bytes > 0, "packet_bytes must be > 0")
        need(self.max_retransmissions >= 0, "max_retransmissions must be >= 0")
        need(self.min_group_size >= 1, "min_group_size must be >= 1")
        need(self.k_ga >= 1, "k_ga must be >= 1")
        need(0 < self.threshold_fraction < 1, "threshold_fraction must be in (0, 1)")
        need(self.notify_lead_km >= 0, "notify_lead_km must be >= 0")
        need(self.lead_in_km >= 0, "lead_in_km must be >= 0")
        need(self.gho_trigger in ("group", "individual"), "gho_trigger must be 'group' or 'individual'")
        need(self.field_shape in ("ellipse", "rect"), "field_shape must be 'ellipse' or 'rect'")
        need(0 <= self.idle_fraction < 1, "idle_fraction must be in [0, 1)")
        need(self.freshness_window_ms >= 0, "freshness_window_ms must be >= 0")
        need(self.share_bytes >= 1 and self.rand_bytes >= 1, "share/rand bytes must be >= 1")
        need(self.t_end_ms >= 0, "t_end_ms must be >= 0")
        if problems:
            raise ConfigError(problems)
        return self

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes).validate()


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}
_DEFAULTS = ScenarioConfig()


def _coerce(name: str, value):
    default = getattr(_DEFAULTS, name)
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("1", "true", "yes", "on", "0", "false", "no", "off"):
            return value.lower() in ("1", "true", "yes", "on")
        raise ConfigError(f"{name}: expected a boolean, got {value!r}")
    if isinstance(default, int):
        if isinstance(value, bool):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        if isinstance(value, float) and value.is_integer():
            return int(value)
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: expected an integer, got {value!r}") from None
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: expected a number, got {value!r}") from None
    return str(value)


def _flatten(doc: dict, problems: list, prefix="") -> dict:
    flat = {}
    for key, value in doc.items():
        if isinstance(value, dict):
            flat.update(_flatten(value, problems, prefix=f"{prefix}{key}."))
        else:
            if key in flat:
                problems.append(f"duplicate key {prefix}{key}")
            flat[key] = value
    return flat


def config_from_mapping(values: dict, base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    problems = []
    flat = _flatten(values, problems)
    unknown = sorted(k for k in flat if k not in _FIELD_TYPES)
    if unknown:
        problems.append("unknown keys: " + ", ".join(unknown))
    changes = {}
    for k, v in flat.items():
        if k in _FIELD_TYPES:
            try:
                changes[k] = _coerce(k, v)
            except ConfigError as e:
                problems.extend(e.problems)
    if problems:
        raise ConfigError(problems)
    base = base or ScenarioConfig()
    return dataclasses.replace(base, **changes).validate()


def load_config(source: Union[str, os.PathLike, None] = None, text: Optional[str] = None) -> ScenarioConfig:
    """Read a TOML document (path or ``text``); missing keys keep the defaults."""
    if source is not None and text is not None:
        raise ValueError("give a path or text, not both")
    if source is not None:
        try:
            text = Path(source).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read {source}: {e}") from e
    text = text or ""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        # message carries "(at line L, column C)"
        raise ConfigError(f"parse error: {e}") from e
    return config_from_mapping(doc)


def env_overrides(environ=None, prefix: str = ENV_PREFIX) -> dict:
    """Config keys found as ``NTNHO_<KEY>`` environment variables."""
    environ = os.environ if environ is None else environ
    out = {}
    for k, v in environ.items():
        if k.startswith(prefix):
            out[k[len(prefix):].lower()] = v
    return out


# ---------------------------------------------------------------------------
# deployment and grouping


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle; x runs along the ground track."""

    x0: float
    y0: float
    width: float
    height: float

    @classmethod
    def centered(cls, width: float, height: float, cx=0.0, cy=0.0) -> "Region":
        return cls(cx - width / 2, cy - height / 2, width, height)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x0 + self.width / 2, self.y0 + self.height / 2)

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, pts: np.ndarray) -> np.ndarray:
        x, y = pts[:, 0], pts[:, 1]
        return (x >= self.x0) & (x <= self.x0 + self.width) & (y >= self.y0) & (y <= self.y0 + self.height)


def deploy_ues(n: int, region: Region, seed: int, shape: str = "rect") -> np.ndarray:
    """``n`` i.i.d. uniform points, shape (n, 2), in the rectangle or its inscribed ellipse."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if shape == "rect":
        u = rng.random((n, 2))
        return np.column_stack((region.x0 + u[:, 0] * region.width, region.y0 + u[:, 1] * region.height))
    if shape != "ellipse":
        raise ValueError(f"unknown field shape {shape!r}")
    cx, cy = region.center
    a, b = region.width / 2, region.height / 2
    out = np.empty((0, 2))
    while len(out) < n:
        m = int((n - len(out)) * 1.35) + 16
        u = rng.random((m, 2)) * 2 - 1
        u = u[(u * u).sum(axis=1) <= 1.0]
        out = np.vstack((out, u))
    out = out[:n]
    return np.column_stack((cx + out[:, 0] * a, cy + out[:, 1] * b))


@dataclass(frozen=True)
class GroupAssignment:
    gid: str
    cell: tuple[int, int]
    members: tuple[int, ...]


def square_of(x: float, y: float, width: float) -> tuple[int, int]:
    return (math.floor(x / width), math.floor(y / width))


def assign_groups(
    positions: np.ndarray,
    square_width: float,
    min_group_size: int = 2,
    eligible: Optional[np.ndarray] = None,
) -> tuple[list[GroupAssignment], list[int]]:
    """Partition UEs by fixed square cells.

    Squares holding fewer than ``min_group_size`` eligible UEs are dissolved;
    their UEs (and any non-eligible UE) come back in the ungrouped list.
    """
    if square_width <= 0:
        raise ValueError("square_width must be > 0")
    n = len(positions)
    if eligible is None:
        eligible = np.ones(n, dtype=bool)
    ix = np.floor(positions[:, 0] / square_width).astype(np.int64)
    iy = np.floor(positions[:, 1] / square_width).astype(np.int64)
    cells: dict = {}
    ungrouped = []
    for u in range(n):
        if not eligible[u]:
            ungrouped.append(u)
            continue
        cells.setdefault((int(ix[u]), int(iy[u])), []).append(u)
    groups = []
    for cell in sorted(cells):
        members = cells[cell]
        if len(members) < min_group_size:
            ungrouped.extend(members)
            continue
        groups.append(GroupAssignment(f"G{cell[0]}:{cell[1]}", cell, tuple(members)))
    ungrouped.sort()
    return groups, ungrouped
