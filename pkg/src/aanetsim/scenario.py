"""Synthetic flight-data generation: corridors, airplane motion, snapshots.

A scenario is a rectangular airspace with circular no-fly zones, a set of
great-circle corridors whose endpoints sit on the airspace boundary, and
airplanes that fly the corridors at constant speed. A snapshot freezes
every node's position at one timestamp after adding per-airplane Gaussian
deviations from the scheduled positions, modeling the mismatch between
planned and actual tracks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import geo
from .geo import GeoPosition, GreatCirclePath

MAX_PATH_ATTEMPTS = 10_000
ARC_SAMPLE_SPACING_KM = 1.0
DATASET_FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    """Dataset file is malformed (truncated, bad counts, unparseable lines)."""


class DatasetVersionError(DatasetFormatError):
    """Dataset file carries an unsupported format version."""


class PathPlacementError(RuntimeError):
    """Rejection sampling could not place a corridor clear of the no-fly zones."""


@dataclass(frozen=True)
class NoFlyZone:
    center: GeoPosition
    radius_km: float
    height_km: float

    def __post_init__(self):
        object.__setattr__(self, "radius_km", float(self.radius_km))
        object.__setattr__(self, "height_km", float(self.height_km))
        if self.radius_km < 0 or self.height_km < 0:
            raise ValueError("zone radius and height must be non-negative")


def _default_zones() -> tuple[NoFlyZone, ...]:
    return (
        NoFlyZone(GeoPosition(-17.25, 40.0, 0.0), 500.0, 13.0),
        NoFlyZone(GeoPosition(-27.75, 44.5, 0.0), 500.0, 13.0),
    )


@dataclass(frozen=True)
class AirspaceSpec:
    """Scenario parameters; the defaults describe a North-Atlantic-style airspace."""

    lon_range: tuple[float, float] = (-40.0, -5.0)
    lat_range: tuple[float, float] = (25.0, 55.0)
    alt_range: tuple[float, float] = (0.0, 13.0)
    cruise_alt_range: tuple[float, float] = (9.0, 13.0)
    no_fly_zones: tuple[NoFlyZone, ...] = field(default_factory=_default_zones)
    n_paths: int = 40
    n_airplanes: int = 100
    cruise_speed_kmh: float = 900.0
    deviation_sigma_km: float = 100.0
    ground_station: GeoPosition = GeoPosition(-10.0, 52.0, 0.05)

    def __post_init__(self):
        object.__setattr__(self, "lon_range", tuple(float(v) for v in self.lon_range))
        object.__setattr__(self, "lat_range", tuple(float(v) for v in self.lat_range))
        object.__setattr__(self, "alt_range", tuple(float(v) for v in self.alt_range))
        object.__setattr__(self, "cruise_alt_range", tuple(float(v) for v in self.cruise_alt_range))
        object.__setattr__(self, "no_fly_zones", tuple(self.no_fly_zones))
        for name in ("lon_range", "lat_range", "alt_range", "cruise_alt_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must be a non-empty interval, got ({lo}, {hi})")
        if self.n_paths <= 0 or self.n_airplanes <= 0:
            raise ValueError("counts must be positive")
        if self.cruise_speed_kmh <= 0:
            raise ValueError("cruise speed must be positive")
        if self.deviation_sigma_km < 0:
            raise ValueError("deviation sigma must be non-negative")

    @property
    def n_nodes(self) -> int:
        """Airplanes plus the ground station."""
        return self.n_airplanes + 1


@dataclass(frozen=True)
class Snapshot:
    """One topology realization: node positions and queuing delays.

    Node ids index `positions`; the last entry is the ground station.
    """

    snapshot_id: int
    positions: tuple[GeoPosition, ...]
    queue_delay_ms: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(self.positions))
        object.__setattr__(self, "queue_delay_ms", tuple(float(q) for q in self.queue_delay_ms))
        if len(self.positions) != len(self.queue_delay_ms):
            raise ValueError("positions and queue delays must have equal length")
        if any(q < 0 for q in self.queue_delay_ms):
            raise ValueError("queue delays must be non-negative")

    @property
    def n_nodes(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class Dataset:
    spec: AirspaceSpec
    train: tuple[Snapshot, ...]
    test: tuple[Snapshot, ...]
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "test", tuple(self.test))
        ids = [s.snapshot_id for s in self.train + self.test]
        if len(set(ids)) != len(ids):
            raise ValueError("snapshot ids must be unique across the dataset")
        for s in self.train + self.test:
            if s.positions and s.positions[-1] != self.spec.ground_station:
                raise ValueError("last node of every snapshot must be the ground station")


def _boundary_point(spec: AirspaceSpec, rng: np.random.Generator) -> GeoPosition:
    lon_lo, lon_hi = spec.lon_range
    lat_lo, lat_hi = spec.lat_range
    w = lon_hi - lon_lo
    h = lat_hi - lat_lo
    u = rng.uniform(0.0, 2.0 * (w + h))
    if u < w:
        return GeoPosition(lon_lo + u, lat_lo, 0.0)
    u -= w
    if u < h:
        return GeoPosition(lon_hi, lat_lo + u, 0.0)
    u -= h
    if u < w:
        return GeoPosition(lon_hi - u, lat_hi, 0.0)
    u -= w
    return GeoPosition(lon_lo, lat_hi - u, 0.0)


def arc_sample(path: GreatCirclePath, spacing_km: float = ARC_SAMPLE_SPACING_KM) -> np.ndarray:
    """Lon/lat samples along the arc every `spacing_km`, endpoints included.

    Returns an (n, 2) array of (lon_deg, lat_deg).
    """
    n = max(2, int(math.ceil(path.length_km / spacing_km)) + 1)
    f = np.linspace(0.0, 1.0, n)
    u = np.array(geo._unit_vector(path.start))
    v = np.array(geo._unit_vector(path.end))
    cross = np.cross(u, v)
    omega = math.atan2(float(np.linalg.norm(cross)), float(np.dot(u, v)))
    s = math.sin(omega)
    xyz = (np.sin((1.0 - f) * omega)[:, None] * u + np.sin(f * omega)[:, None] * v) / s
    lat = np.degrees(np.arctan2(xyz[:, 2], np.hypot(xyz[:, 0], xyz[:, 1])))
    lon = np.degrees(np.arctan2(xyz[:, 1], xyz[:, 0]))
    return np.stack([lon, lat], axis=1)


def _ground_distances_to(points_lonlat: np.ndarray, center: GeoPosition) -> np.ndarray:
    lon = np.radians(points_lonlat[:, 0])
    lat = np.radians(points_lonlat[:, 1])
    clon = math.radians(center.lon_deg)
    clat = math.radians(center.lat_deg)
    h = (np.sin((clat - lat) / 2.0) ** 2
         + np.cos(lat) * math.cos(clat) * np.sin((clon - lon) / 2.0) ** 2)
    return 2.0 * geo.EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def min_arc_distance(path: GreatCirclePath, center: GeoPosition,
                     spacing_km: float = ARC_SAMPLE_SPACING_KM) -> float:
    """Minimum ground distance from the sampled arc to a point."""
    return float(_ground_distances_to(arc_sample(path, spacing_km), center).min())


def generate_paths(spec: AirspaceSpec, rng_seed) -> list[GreatCirclePath]:
    """Corridors with endpoints on the airspace boundary, clear of all no-fly zones.

    Rejection sampling, deterministic per seed; raises PathPlacementError
    with a diagnostic when a corridor cannot be placed within
    MAX_PATH_ATTEMPTS draws.
    """
    rng = np.random.default_rng(rng_seed)
    paths: list[GreatCirclePath] = []
    for path_idx in range(spec.n_paths):
        for _ in range(MAX_PATH_ATTEMPTS):
            a = _boundary_point(spec, rng)
            b = _boundary_point(spec, rng)
            if geo.great_circle_distance(a, b) == 0.0:
                continue
            path = GreatCirclePath.between(a, b)
            if all(min_arc_distance(path, z.center) > z.radius_km for z in spec.no_fly_zones):
                paths.append(path)
                break
        else:
            raise PathPlacementError(
                f"could not place corridor {path_idx} clear of {len(spec.no_fly_zones)} "
                f"no-fly zones after {MAX_PATH_ATTEMPTS} attempts"
            )
    return paths


@dataclass(frozen=True, eq=False)
class FlightSchedule:
    """Fixed assignment of airplanes to corridors, shared by all snapshots.

    Airplane i flies corridor i mod n_paths; its initial arc offset is a
    uniform draw and its cruise altitude is drawn once for the whole
    simulation.
    """

    paths: tuple[GreatCirclePath, ...]
    path_index: np.ndarray
    arc_offset: np.ndarray
    altitude_km: np.ndarray

    @property
    def n_airplanes(self) -> int:
        return len(self.path_index)


def assign_flights(paths: Sequence[GreatCirclePath], spec: AirspaceSpec,
                   rng_seed) -> FlightSchedule:
    rng = np.random.default_rng(rng_seed)
    n = spec.n_airplanes
    return FlightSchedule(
        paths=tuple(paths),
        path_index=np.arange(n, dtype=np.int64) % len(paths),
        arc_offset=rng.uniform(0.0, 1.0, n),
        altitude_km=rng.uniform(spec.cruise_alt_range[0], spec.cruise_alt_range[1], n),
    )


def scheduled_positions(schedule: FlightSchedule, spec: AirspaceSpec,
                        t_hours: float) -> list[GeoPosition]:
    """Airplane positions at time t when flying exactly per plan.

    Each airplane advances along its corridor at the cruise speed and
    wraps at the corridor end, keeping the airplane count constant.
    """
    if t_hours < 0:
        raise ValueError("t_hours must be non-negative")
    out = []
    for i in range(schedule.n_airplanes):
        path = schedule.paths[schedule.path_index[i]]
        frac = (schedule.arc_offset[i] + spec.cruise_speed_kmh * t_hours / path.length_km) % 1.0
        out.append(geo.point_along_path(path, float(frac), float(schedule.altitude_km[i])))
    return out


def sample_snapshot(schedule: FlightSchedule, spec: AirspaceSpec, t_hours: float,
                    rng_seed, snapshot_id: int = 0,
                    queue_delay_ms: float = 5.0) -> Snapshot:
    """Scheduled positions plus Gaussian north/east deviations, clipped to the airspace.

    Deviations are drawn per airplane as kilometer displacements (sigma =
    spec.deviation_sigma_km) and converted to degrees at the airplane's
    scheduled latitude; altitude is not deviated. All queue delays start
    at `queue_delay_ms`.
    """
    rng = np.random.default_rng(rng_seed)
    scheduled = scheduled_positions(schedule, spec, t_hours)
    n = len(scheduled)
    north_km = rng.normal(0.0, spec.deviation_sigma_km, n)
    east_km = rng.normal(0.0, spec.deviation_sigma_km, n)
    positions = []
    for i, p in enumerate(scheduled):
        lat = p.lat_deg + north_km[i] / geo.KM_PER_DEG
        lon = p.lon_deg + east_km[i] / (geo.KM_PER_DEG * math.cos(math.radians(p.lat_deg)))
        lat = min(max(lat, spec.lat_range[0]), spec.lat_range[1])
        lon = min(max(lon, spec.lon_range[0]), spec.lon_range[1])
        positions.append(GeoPosition(lon, lat, p.alt_km))
    positions.append(spec.ground_station)
    return Snapshot(snapshot_id, tuple(positions), (queue_delay_ms,) * (n + 1))


def build_dataset(spec: AirspaceSpec, n_snapshots: int, train_fraction: float = 0.5,
                  rng_seed: int = 0, window_hours: float = 12.0,
                  queue_delay_ms: float = 5.0) -> Dataset:
    """Snapshots at timestamps spread uniformly over the simulation window.

    The train/test split interleaves timestamps so both sets cover the
    whole window; every snapshot gets an independent deviation seed.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction={train_fraction!r} outside (0, 1)")
    if n_snapshots < 2:
        raise ValueError("need at least two snapshots to split")
    n_train = round(n_snapshots * train_fraction)
    if not 0 < n_train < n_snapshots:
        raise ValueError("train_fraction leaves one side of the split empty")

    children = np.random.SeedSequence(rng_seed).spawn(2 + n_snapshots)
    paths = generate_paths(spec, children[0])
    schedule = assign_flights(paths, spec, children[1])

    train_ids = {j * n_snapshots // n_train for j in range(n_train)}
    train, test = [], []
    for i in range(n_snapshots):
        t = window_hours * (i + 0.5) / n_snapshots
        snap = sample_snapshot(schedule, spec, t, children[2 + i],
                               snapshot_id=i, queue_delay_ms=queue_delay_ms)
        (train if i in train_ids else test).append(snap)
    return Dataset(spec, tuple(train), tuple(test), rng_seed)


# ---------------------------------------------------------------------------
# dataset persistence: versioned line-oriented text format (see README)

def spec_to_dict(spec: AirspaceSpec) -> dict:
    return {
        "lon_range": list(spec.lon_range),
        "lat_range": list(spec.lat_range),
        "alt_range": list(spec.alt_range),
        "cruise_alt_range": list(spec.cruise_alt_range),
        "no_fly_zones": [
            {"center": [z.center.lon_deg, z.center.lat_deg, z.center.alt_km],
             "radius_km": z.radius_km, "height_km": z.height_km}
            for z in spec.no_fly_zones
        ],
        "n_paths": spec.n_paths,
        "n_airplanes": spec.n_airplanes,
        "cruise_speed_kmh": spec.cruise_speed_kmh,
        "deviation_sigma_km": spec.deviation_sigma_km,
        "ground_station": [spec.ground_station.lon_deg, spec.ground_station.lat_deg,
                           spec.ground_station.alt_km],
    }


def spec_from_dict(d: dict) -> AirspaceSpec:
    try:
        return AirspaceSpec(
            lon_range=tuple(d["lon_range"]),
            lat_range=tuple(d["lat_range"]),
            alt_range=tuple(d["alt_range"]),
            cruise_alt_range=tuple(d["cruise_alt_range"]),
            no_fly_zones=tuple(
                NoFlyZone(GeoPosition(*z["center"]), z["radius_km"], z["height_km"])
                for z in d["no_fly_zones"]
            ),
            n_paths=d["n_paths"],
            n_airplanes=d["n_airplanes"],
            cruise_speed_kmh=d["cruise_speed_kmh"],
            deviation_sigma_km=d["deviation_sigma_km"],
            ground_station=GeoPosition(*d["ground_station"]),
        )
    except (KeyError, TypeError) as exc:
        raise DatasetFormatError(f"bad airspace spec record: {exc}") from exc


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write(f"aanetsim-dataset {DATASET_FORMAT_VERSION}\n")
        f.write(f"seed {dataset.seed}\n")
        f.write("spec " + json.dumps(spec_to_dict(dataset.spec), sort_keys=True) + "\n")
        for split, snaps in (("train", dataset.train), ("test", dataset.test)):
            for s in snaps:
                f.write(f"snapshot {s.snapshot_id} {split} {s.n_nodes}\n")
                for nid, (p, q) in enumerate(zip(s.positions, s.queue_delay_ms)):
                    f.write(f"{nid} {p.lon_deg!r} {p.lat_deg!r} {p.alt_km!r} {q!r}\n")
        f.write("end\n")


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="ascii") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith("aanetsim-dataset"):
        raise DatasetFormatError("missing dataset header line")
    try:
        version = int(lines[0].split()[1])
    except (IndexError, ValueError) as exc:
        raise DatasetFormatError("unparseable dataset header") from exc
    if version != DATASET_FORMAT_VERSION:
        raise DatasetVersionError(
            f"dataset format version {version} unsupported "
            f"(expected {DATASET_FORMAT_VERSION})"
        )
    if len(lines) < 4 or lines[-1] != "end":
        raise DatasetFormatError("truncated dataset file (missing 'end' line)")

    def parse(idx: int, tag: str) -> str:
        if not lines[idx].startswith(tag + " "):
            raise DatasetFormatError(f"expected '{tag}' on line {idx + 1}")
        return lines[idx][len(tag) + 1:]

    seed = int(parse(1, "seed"))
    spec = spec_from_dict(json.loads(parse(2, "spec")))

    train: list[Snapshot] = []
    test: list[Snapshot] = []
    i = 3
    while i < len(lines) - 1:
        head = lines[i].split()
        if len(head) != 4 or head[0] != "snapshot":
            raise DatasetFormatError(f"expected snapshot header on line {i + 1}")
        sid, split, n = int(head[1]), head[2], int(head[3])
        if split not in ("train", "test"):
            raise DatasetFormatError(f"unknown split {split!r} on line {i + 1}")
        if i + n >= len(lines):
            raise DatasetFormatError("truncated snapshot block")
        positions, queues = [], []
        for k in range(n):
            parts = lines[i + 1 + k].split()
            if len(parts) != 5 or int(parts[0]) != k:
                raise DatasetFormatError(f"bad node record on line {i + 2 + k}")
            positions.append(GeoPosition(float(parts[1]), float(parts[2]), float(parts[3])))
            queues.append(float(parts[4]))
        snap = Snapshot(sid, tuple(positions), tuple(queues))
        (train if split == "train" else test).append(snap)
        i += 1 + n
    return Dataset(spec, tuple(train), tuple(test), seed)
