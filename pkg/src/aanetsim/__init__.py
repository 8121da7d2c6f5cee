"""Packet-routing simulator and learning harness for airborne ad-hoc meshes."""

__version__ = "0.1.0"

from .geo import GeoPosition, GreatCirclePath
from .netmodel import LinkParams, RateTable, Route, TopologyGraph
from .scenario import AirspaceSpec, Dataset, NoFlyZone, Snapshot

__all__ = [
    "AirspaceSpec",
    "Dataset",
    "GeoPosition",
    "GreatCirclePath",
    "LinkParams",
    "NoFlyZone",
    "RateTable",
    "Route",
    "Snapshot",
    "TopologyGraph",
    "__version__",
]
