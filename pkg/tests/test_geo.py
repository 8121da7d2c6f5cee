import math

import numpy as np
import pytest

from aanetsim import geo
from aanetsim.geo import GeoPosition, GreatCirclePath

R = geo.EARTH_RADIUS_KM


# --- independent oracles (different formulas than the implementation) ------

def gc_oracle(a, b):
    """Great-circle distance via the atan2 (Vincenty sphere) form."""
    p1, l1 = math.radians(a.lat_deg), math.radians(a.lon_deg)
    p2, l2 = math.radians(b.lat_deg), math.radians(b.lon_deg)
    dl = l2 - l1
    y = math.hypot(
        math.cos(p2) * math.sin(dl),
        math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl),
    )
    x = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return R * math.atan2(y, x)


def slant_oracle(a, b):
    def xyz(p):
        r = R + p.alt_km
        lat, lon = math.radians(p.lat_deg), math.radians(p.lon_deg)
        return np.array([r * math.cos(lat) * math.cos(lon),
                         r * math.cos(lat) * math.sin(lon),
                         r * math.sin(lat)])
    return float(np.linalg.norm(xyz(a) - xyz(b)))


def random_positions(rng, n):
    return [GeoPosition(rng.uniform(-180, 180), rng.uniform(-90, 90), rng.uniform(0, 20))
            for _ in range(n)]


# --- great_circle_distance --------------------------------------------------

def test_identical_points_distance_zero():
    p = GeoPosition(10, 20, 0)
    assert geo.great_circle_distance(p, p) == 0.0


def test_quarter_circumference():
    d = geo.great_circle_distance(GeoPosition(0, 0), GeoPosition(0, 90))
    assert abs(d - 10007.543) < 0.01


def test_atlantic_pair_against_oracle():
    a, b = GeoPosition(-40, 25), GeoPosition(-5, 55)
    d = geo.great_circle_distance(a, b)
    assert abs(d - gc_oracle(a, b)) <= 1e-6 * gc_oracle(a, b)


def test_great_circle_matches_oracle_on_random_pairs(rng):
    pts = random_positions(rng, 500)
    for a, b in zip(pts, reversed(pts)):
        expected = gc_oracle(a, b)
        assert abs(geo.great_circle_distance(a, b) - expected) <= 1e-6 * max(expected, 1e-9)


def test_symmetry_exact(rng):
    for a, b in zip(random_positions(rng, 100), random_positions(rng, 100)):
        assert geo.great_circle_distance(a, b) == geo.great_circle_distance(b, a)
        assert geo.slant_distance(a, b) == geo.slant_distance(b, a)
        assert geo.is_visible(a, b) == geo.is_visible(b, a)


def test_triangle_inequality(rng):
    for _ in range(200):
        a, b, c = random_positions(rng, 3)
        ab = geo.great_circle_distance(a, b)
        bc = geo.great_circle_distance(b, c)
        ac = geo.great_circle_distance(a, c)
        assert ac <= ab + bc + 1e-9 * (ab + bc + ac)


# --- slant_distance ----------------------------------------------------------

def test_slant_identical_zero():
    p = GeoPosition(3, 4, 5)
    assert geo.slant_distance(p, p) == 0.0


def test_slant_vertical_separation():
    a, b = GeoPosition(7, -3, 0), GeoPosition(7, -3, 13)
    assert abs(geo.slant_distance(a, b) - 13.0) < 1e-9


def test_slant_matches_cartesian_oracle(rng):
    pts = random_positions(rng, 400)
    for a, b in zip(pts[::2], pts[1::2]):
        expected = slant_oracle(a, b)
        assert abs(geo.slant_distance(a, b) - expected) <= 1e-9 * max(expected, 1e-12)


def test_slant_bounds_altitude_difference(rng):
    for a, b in zip(random_positions(rng, 100), random_positions(rng, 100)):
        assert geo.slant_distance(a, b) >= abs(a.alt_km - b.alt_km) - 1e-12


# --- radio horizon & visibility ----------------------------------------------

def test_horizon_ground_zero():
    assert geo.radio_horizon_range(0, 0) == 0.0


def test_horizon_known_values():
    assert abs(geo.radio_horizon_range(10, 0) - 412.2) < 0.1
    assert abs(geo.radio_horizon_range(10, 10) - 824.4) < 0.1


def test_horizon_monotonic(rng):
    for _ in range(100):
        a, b = rng.uniform(0, 15, 2)
        base = geo.radio_horizon_range(a, b)
        assert geo.radio_horizon_range(a + 1, b) > base
        assert geo.radio_horizon_range(a, b + 1) > base


def test_visibility_cases():
    assert geo.is_visible(GeoPosition(5, 5, 10), GeoPosition(5, 5, 10))
    # pure-horizon rule: two ground nodes never see each other
    near = 1.0 / geo.KM_PER_DEG
    assert not geo.is_visible(GeoPosition(0, 0, 0), GeoPosition(0, near, 0))
    # two cruise-altitude nodes 800 km apart are within the 824 km horizon
    d800 = 800.0 / geo.KM_PER_DEG
    a, b = GeoPosition(0, 0, 10), GeoPosition(0, d800, 10)
    assert abs(geo.great_circle_distance(a, b) - 800.0) < 0.5
    assert geo.is_visible(a, b)


# --- paths -------------------------------------------------------------------

def test_point_along_path_endpoints_exact():
    path = GreatCirclePath.between(GeoPosition(-30, 40), GeoPosition(12, -8))
    start = geo.point_along_path(path, 0.0, alt_km=11.0)
    end = geo.point_along_path(path, 1.0)
    assert (start.lon_deg, start.lat_deg, start.alt_km) == (-30, 40, 11.0)
    assert (end.lon_deg, end.lat_deg) == (12, -8)


def test_point_along_path_equatorial_midpoint():
    path = GreatCirclePath.between(GeoPosition(0, 0), GeoPosition(90, 0))
    mid = geo.point_along_path(path, 0.5)
    assert abs(mid.lon_deg - 45.0) < 1e-6
    assert abs(mid.lat_deg) < 1e-6


def test_point_along_path_proportional(rng):
    for _ in range(50):
        a, b = random_positions(rng, 2)
        if geo.great_circle_distance(a, b) == 0.0:
            continue
        path = GreatCirclePath.between(a, b)
        for f in rng.uniform(0, 1, 5):
            p = geo.point_along_path(path, float(f))
            d = geo.great_circle_distance(GeoPosition(a.lon_deg, a.lat_deg), p)
            assert abs(d - f * path.length_km) < 1e-6


def test_point_along_path_rejects_bad_fraction():
    path = GreatCirclePath.between(GeoPosition(0, 0), GeoPosition(10, 10))
    with pytest.raises(ValueError):
        geo.point_along_path(path, -0.01)
    with pytest.raises(ValueError):
        geo.point_along_path(path, 1.01)


# --- validation ---------------------------------------------------------------

@pytest.mark.parametrize("lon,lat,alt", [
    (181, 0, 0), (-181, 0, 0), (0, 91, 0), (0, -91, 0),
    (0, 0, -0.1), (0, 0, 21), (float("nan"), 0, 0), (0, float("inf"), 0),
])
def test_position_validation(lon, lat, alt):
    with pytest.raises(ValueError):
        GeoPosition(lon, lat, alt)


def test_degenerate_path_rejected():
    p = GeoPosition(5, 5, 0)
    with pytest.raises(ValueError):
        GreatCirclePath.between(p, GeoPosition(5, 5, 13))


def test_path_length_invariant_enforced():
    a, b = GeoPosition(0, 0), GeoPosition(10, 0)
    with pytest.raises(ValueError):
        GreatCirclePath(a, b, geo.great_circle_distance(a, b) + 1e-3)
