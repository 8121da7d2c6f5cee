"""Spherical-earth geometry: distances, great-circle paths, radio horizon.

All interfaces take degrees (longitude East, latitude North) and
kilometers; radians are internal only. The earth is modeled as a perfect
sphere of radius 6371 km.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_KM = 6371.0

# ground distance subtended by one degree of a great circle
KM_PER_DEG = EARTH_RADIUS_KM * math.pi / 180.0

# 4/3-earth refraction factor used for line-of-sight range
DEFAULT_EFFECTIVE_EARTH_FACTOR = 4.0 / 3.0

_LON_RANGE = (-180.0, 180.0)
_LAT_RANGE = (-90.0, 90.0)
_ALT_RANGE = (0.0, 20.0)


@dataclass(frozen=True)
class GeoPosition:
    """A point given as (longitude East [deg], latitude North [deg], altitude [km])."""

    lon_deg: float
    lat_deg: float
    alt_km: float = 0.0

    def __post_init__(self):
        for name, (lo, hi) in (
            ("lon_deg", _LON_RANGE),
            ("lat_deg", _LAT_RANGE),
            ("alt_km", _ALT_RANGE),
        ):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and lo <= value <= hi):
                raise ValueError(f"{name}={value!r} outside [{lo}, {hi}]")
            object.__setattr__(self, name, value)


def great_circle_distance(a: GeoPosition, b: GeoPosition) -> float:
    """Haversine ground distance in km between two points, altitude ignored."""
    lat1 = math.radians(a.lat_deg)
    lat2 = math.radians(b.lat_deg)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon_deg - a.lon_deg)
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def _ecef_km(p: GeoPosition) -> tuple[float, float, float]:
    """Earth-centered Cartesian coordinates of a point at radius R_e + altitude."""
    r = EARTH_RADIUS_KM + p.alt_km
    lat = math.radians(p.lat_deg)
    lon = math.radians(p.lon_deg)
    c = r * math.cos(lat)
    return (c * math.cos(lon), c * math.sin(lon), r * math.sin(lat))


def slant_distance(a: GeoPosition, b: GeoPosition) -> float:
    """3-D chord distance in km between two points, altitude included."""
    ax, ay, az = _ecef_km(a)
    bx, by, bz = _ecef_km(b)
    dx = ax - bx
    dy = ay - by
    dz = az - bz
    return math.sqrt((dx * dx + dy * dy) + dz * dz)


def radio_horizon_range(alt_a_km: float, alt_b_km: float,
                        k: float = DEFAULT_EFFECTIVE_EARTH_FACTOR) -> float:
    """Maximum ground range (km) at which two nodes keep line of sight.

    Standard effective-earth formula sqrt(2*k*R*h_a) + sqrt(2*k*R*h_b);
    monotonically increasing in each altitude, zero when both are on the
    ground. Altitudes must be non-negative.
    """
    two_kr = 2.0 * k * EARTH_RADIUS_KM
    return math.sqrt(two_kr * alt_a_km) + math.sqrt(two_kr * alt_b_km)


def is_visible(a: GeoPosition, b: GeoPosition,
               k: float = DEFAULT_EFFECTIVE_EARTH_FACTOR) -> bool:
    """True when the ground distance between a and b is within the radio horizon."""
    return great_circle_distance(a, b) <= radio_horizon_range(a.alt_km, b.alt_km, k)


@dataclass(frozen=True)
class GreatCirclePath:
    """Shorter great-circle arc between two distinct surface points.

    `length_km` must match the great-circle distance of the endpoints to
    within 1e-6 km; use `between()` to construct paths safely. Altitudes
    of the endpoints are ignored.
    """

    start: GeoPosition
    end: GeoPosition
    length_km: float

    def __post_init__(self):
        expected = great_circle_distance(self.start, self.end)
        if expected == 0.0:
            raise ValueError("degenerate path: start and end coincide")
        if abs(self.length_km - expected) > 1e-6:
            raise ValueError(
                f"length_km={self.length_km!r} does not match endpoint distance {expected!r}"
            )

    @classmethod
    def between(cls, start: GeoPosition, end: GeoPosition) -> "GreatCirclePath":
        return cls(start, end, great_circle_distance(start, end))


def point_along_path(path: GreatCirclePath, arc_fraction: float,
                     alt_km: float = 0.0) -> GeoPosition:
    """Position at the given fraction of the path's arc length.

    Fraction 0 returns the start point and 1 the end point (exactly);
    the altitude of the returned position is `alt_km`, chosen by the
    caller. Fractions outside [0, 1] are rejected.
    """
    if not 0.0 <= arc_fraction <= 1.0:
        raise ValueError(f"arc_fraction={arc_fraction!r} outside [0, 1]")
    if arc_fraction == 0.0:
        return GeoPosition(path.start.lon_deg, path.start.lat_deg, alt_km)
    if arc_fraction == 1.0:
        return GeoPosition(path.end.lon_deg, path.end.lat_deg, alt_km)

    ux, uy, uz = _unit_vector(path.start)
    vx, vy, vz = _unit_vector(path.end)
    dot = ux * vx + uy * vy + uz * vz
    cx = uy * vz - uz * vy
    cy = uz * vx - ux * vz
    cz = ux * vy - uy * vx
    omega = math.atan2(math.sqrt(cx * cx + cy * cy + cz * cz), dot)
    s = math.sin(omega)
    w_start = math.sin((1.0 - arc_fraction) * omega) / s
    w_end = math.sin(arc_fraction * omega) / s
    x = w_start * ux + w_end * vx
    y = w_start * uy + w_end * vy
    z = w_start * uz + w_end * vz
    lat = math.degrees(math.atan2(z, math.hypot(x, y)))
    lon = math.degrees(math.atan2(y, x))
    return GeoPosition(lon, lat, alt_km)


def _unit_vector(p: GeoPosition) -> tuple[float, float, float]:
    lat = math.radians(p.lat_deg)
    lon = math.radians(p.lon_deg)
    c = math.cos(lat)
    return (c * math.cos(lon), c * math.sin(lon), math.sin(lat))
