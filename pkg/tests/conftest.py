"""Shared hand-built worlds and helpers for the test suite.

Coordinates are (lon_deg, lat_deg, alt_km) near the equator where one
degree is ~111.2 km of ground distance; with the default rate table all
10-km-altitude pairs within ~6.65 deg are linked, the terminal rate
bucket ends at 740 km, and a 10 km / 0.05 km pair must sit within
~441 km (~3.97 deg) to be linked.
"""

import numpy as np
import pytest

from aanetsim import netmodel, rlcore, scenario
from aanetsim.geo import GeoPosition
from aanetsim.scenario import AirspaceSpec, Snapshot

# Communication void at S: both neighbors (A up, B down) are farther from
# the destination T, so greedy fails and the perimeter walk goes clockwise
# around the lower rim (B, C1, C2) before greedy resumes at C2. The upper
# relays F1/F2 give the optimal route a 4-hop path the walk never sees:
#   optimal  S A F1 F2 T   (4 hops)
#   gpsr     S B C1 C2 D T (5 hops)
VOID_COORDS = (
    (0.0, 0.0, 10.0),     # 0 S
    (-0.5, 3.8, 10.0),    # 1 A
    (-1.0, -4.0, 10.0),   # 2 B
    (1.5, -6.5, 10.0),    # 3 C1
    (5.8, -6.0, 10.0),    # 4 C2
    (8.0, -3.5, 10.0),    # 5 D
    (3.2, 6.0, 10.0),     # 6 F1
    (6.8, 3.0, 10.0),     # 7 F2
    (10.0, 0.0, 10.0),    # 8 T (destination)
)
VOID_NAMES = ("S", "A", "B", "C1", "C2", "D", "F1", "F2", "T")

# The 6-node lower rim alone: enters perimeter mode at S, walks the rim,
# exits to greedy at C2.
RIM_COORDS = tuple(VOID_COORDS[i] for i in (0, 2, 3, 4, 5, 8))

# Two relay chains toward a ground station: the top chain (via a1) is the
# delay optimum under uniform queues; the bottom chain (b1, b2) is the
# bypass when a1 gets congested.
CHAIN_COORDS = (
    (0.0, 0.0, 10.0),     # 0 S
    (5.3, 0.5, 10.0),     # 1 a1
    (4.5, -2.5, 10.0),    # 2 b1
    (7.5, -1.8, 10.0),    # 3 b2
    (9.0, 0.0, 0.05),     # 4 ground station
)


def make_snapshot(coords, queue_ms=5.0, snapshot_id=0) -> Snapshot:
    positions = tuple(GeoPosition(*c) for c in coords)
    if np.isscalar(queue_ms):
        queue = (float(queue_ms),) * len(positions)
    else:
        queue = tuple(float(q) for q in queue_ms)
    return Snapshot(snapshot_id, positions, queue)


def world_spec(coords, margin_deg=2.0) -> AirspaceSpec:
    """Airspace box containing the fixture, ground station = last node."""
    lons = [c[0] for c in coords]
    lats = [c[1] for c in coords]
    return AirspaceSpec(
        lon_range=(min(lons) - margin_deg, max(lons) + margin_deg),
        lat_range=(min(lats) - margin_deg, max(lats) + margin_deg),
        no_fly_zones=(),
        n_paths=1,
        n_airplanes=len(coords) - 1,
        ground_station=GeoPosition(*coords[-1]),
    )


def make_env(coords, queue_override=None, k=10, link_params=None) -> rlcore.RoutingEnv:
    snap = make_snapshot(coords)
    return rlcore.RoutingEnv(snap, world_spec(coords), link_params or netmodel.LinkParams(),
                             k, queue_override=queue_override)


def dense_cluster(rng, n, center=(0.0, 0.0), spread_deg=1.5, alt=10.0):
    """Coordinates of n mutually visible airborne nodes around a center."""
    return tuple(
        (center[0] + rng.uniform(-spread_deg, spread_deg),
         center[1] + rng.uniform(-spread_deg, spread_deg), alt)
        for _ in range(n)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def chain_dataset() -> scenario.Dataset:
    """One-snapshot train/test dataset over the two-chain world."""
    spec = world_spec(CHAIN_COORDS)
    return scenario.Dataset(spec, (make_snapshot(CHAIN_COORDS, snapshot_id=0),),
                            (make_snapshot(CHAIN_COORDS, snapshot_id=1),), seed=0)
