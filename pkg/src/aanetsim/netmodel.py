"""Link-delay model, topology graphs, candidate ranking, shortest-delay oracle.

A link i->j carries a packet after a propagation delay d/c plus a
transmission delay S/R(d), where the data rate R(d) comes from a
distance-bucketed rate table. End-to-end delay of a route is the sum
over hops of the transmitting node's queuing delay plus the link delay;
the destination's queuing delay is never counted.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geo
from .geo import GeoPosition

SPEED_OF_LIGHT_KM_PER_MS = 299.792458

# Illustrative distance/rate buckets (km -> Mbit/s). The real adaptive
# coding and modulation table of the target radio is not public; rates
# only need to be positive and non-increasing with distance, and the
# terminal distance caps the communication range.
DEFAULT_RATE_BUCKETS = (
    (100.0, 100.0),
    (200.0, 80.0),
    (300.0, 60.0),
    (450.0, 40.0),
    (600.0, 20.0),
    (740.0, 10.0),
)


@dataclass(frozen=True)
class RateTable:
    """Ordered (max_distance_km, rate_mbps) buckets; the last distance is the max range."""

    buckets: tuple[tuple[float, float], ...] = DEFAULT_RATE_BUCKETS

    def __post_init__(self):
        if not self.buckets:
            raise ValueError("rate table needs at least one bucket")
        object.__setattr__(self, "buckets", tuple((float(d), float(r)) for d, r in self.buckets))
        dists = [d for d, _ in self.buckets]
        rates = [r for _, r in self.buckets]
        if any(b <= a for a, b in zip(dists, dists[1:])):
            raise ValueError("bucket distances must be strictly increasing")
        if any(r <= 0 for r in rates):
            raise ValueError("rates must be positive")
        if any(b > a for a, b in zip(rates, rates[1:])):
            raise ValueError("rates must be non-increasing with distance")

    @property
    def max_range_km(self) -> float:
        return self.buckets[-1][0]

    def rate_for_distance(self, distance_km: float) -> Optional[float]:
        """Rate of the bucket containing the distance; None beyond the last bucket."""
        for max_km, rate in self.buckets:
            if distance_km <= max_km:
                return rate
        return None


@dataclass(frozen=True)
class LinkParams:
    """Physical-layer constants of the delay model."""

    packet_size_kb: float = 15.0
    speed_of_light_km_per_ms: float = SPEED_OF_LIGHT_KM_PER_MS
    rate_table: RateTable = field(default_factory=RateTable)
    train_queue_delay_ms: float = 5.0
    effective_earth_factor: float = geo.DEFAULT_EFFECTIVE_EARTH_FACTOR

    def __post_init__(self):
        if self.packet_size_kb <= 0:
            raise ValueError("packet size must be positive")

    def transmission_ms(self, rate_mbps: float) -> float:
        # KB -> kilobit, then kilobit / (Mbit/s) = ms
        return self.packet_size_kb * 8.0 / rate_mbps


def link_delay(a: GeoPosition, b: GeoPosition, params: LinkParams) -> Optional[float]:
    """One-hop delay in ms, or None when no link exists.

    No link when the nodes are below their mutual radio horizon or the
    slant distance exceeds the rate table's terminal distance.
    """
    if not geo.is_visible(a, b, params.effective_earth_factor):
        return None
    d = geo.slant_distance(a, b)
    rate = params.rate_table.rate_for_distance(d)
    if rate is None:
        return None
    return d / params.speed_of_light_km_per_ms + params.transmission_ms(rate)


class TopologyGraph:
    """Directed-weight view of one snapshot: per-edge link delay, per-node queue delay.

    `delay_ms[i, j]` is +inf where no link exists; link existence is
    symmetric, delays of present edges are finite and positive, and the
    diagonal is +inf (no self edges).
    """

    def __init__(self, delay_ms: np.ndarray, queue_ms: np.ndarray):
        delay_ms = np.asarray(delay_ms, dtype=np.float64)
        queue_ms = np.asarray(queue_ms, dtype=np.float64)
        n = delay_ms.shape[0]
        if delay_ms.shape != (n, n):
            raise ValueError("delay matrix must be square")
        if queue_ms.shape != (n,):
            raise ValueError("queue vector length must match the node count")
        if np.any(queue_ms < 0):
            raise ValueError("queue delays must be non-negative")
        present = np.isfinite(delay_ms)
        if np.any(present != present.T):
            raise ValueError("link existence must be symmetric")
        if np.any(np.diagonal(present)):
            raise ValueError("self edges are not allowed")
        if np.any(delay_ms[present] <= 0):
            raise ValueError("present edges must have positive delay")
        self.delay_ms = delay_ms
        self.queue_ms = queue_ms

    @property
    def n_nodes(self) -> int:
        return self.delay_ms.shape[0]

    def has_edge(self, i: int, j: int) -> bool:
        return bool(np.isfinite(self.delay_ms[i, j]))

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.delay_ms[i]))

    def edge_count(self) -> int:
        """Number of undirected links."""
        return int(np.count_nonzero(np.isfinite(self.delay_ms))) // 2


def build_graph(snapshot, params: LinkParams) -> TopologyGraph:
    """Topology of a snapshot: edge (i, j) present iff link_delay(x_i, x_j) exists."""
    positions = snapshot.positions
    n = len(positions)
    if n == 0:
        return TopologyGraph(np.zeros((0, 0)), np.zeros(0))

    lon = np.radians([p.lon_deg for p in positions])
    lat = np.radians([p.lat_deg for p in positions])
    alt = np.array([p.alt_km for p in positions], dtype=np.float64)

    # ground distance (haversine, same formula as geo.great_circle_distance)
    h = (np.sin((lat[None, :] - lat[:, None]) / 2.0) ** 2
         + np.cos(lat)[:, None] * np.cos(lat)[None, :]
         * np.sin((lon[None, :] - lon[:, None]) / 2.0) ** 2)
    ground = 2.0 * geo.EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))

    # 3-D chord distance
    r = geo.EARTH_RADIUS_KM + alt
    c = r * np.cos(lat)
    xyz = np.stack([c * np.cos(lon), c * np.sin(lon), r * np.sin(lat)], axis=1)
    diff = xyz[:, None, :] - xyz[None, :, :]
    chord = np.sqrt((diff[..., 0] ** 2 + diff[..., 1] ** 2) + diff[..., 2] ** 2)

    horizon = np.sqrt(2.0 * params.effective_earth_factor * geo.EARTH_RADIUS_KM * alt)
    visible = ground <= (horizon[:, None] + horizon[None, :])

    maxs = np.array([d for d, _ in params.rate_table.buckets])
    rates = np.array([r_ for _, r_ in params.rate_table.buckets])
    bucket = np.searchsorted(maxs, chord, side="left")
    in_range = bucket < len(maxs)

    linked = visible & in_range
    np.fill_diagonal(linked, False)

    delay = np.full((n, n), np.inf)
    rate = rates[np.where(in_range, bucket, 0)]
    all_delay = chord / params.speed_of_light_km_per_ms + params.packet_size_kb * 8.0 / rate
    delay[linked] = all_delay[linked]

    return TopologyGraph(delay, np.asarray(snapshot.queue_delay_ms, dtype=np.float64))


def candidates(g: TopologyGraph, snapshot, i: int, dest: int, k: int) -> list[int]:
    """Up to k neighbors of i ranked by slant distance to the destination.

    Ascending distance, ties broken by ascending node id; an empty list
    means a communication dead-end.
    """
    if i == dest:
        raise ValueError("candidates are undefined at the destination")
    nbrs = g.neighbors(i)
    if nbrs.size == 0:
        return []
    dest_pos = snapshot.positions[dest]
    dists = np.array([geo.slant_distance(snapshot.positions[j], dest_pos) for j in nbrs])
    order = np.argsort(dists, kind="stable")  # nbrs ascending, so ties resolve by id
    return [int(j) for j in nbrs[order][:k]]


@dataclass(frozen=True)
class Route:
    """A loop-free node sequence plus its end-to-end delay."""

    nodes: tuple[int, ...]
    total_delay_ms: float

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ValueError("a route has at least two nodes")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("route revisits a node")

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1


def route_delay(g: TopologyGraph, nodes: Sequence[int]) -> float:
    """Canonical delay of a node sequence: sum of queue(transmitter) + link per hop.

    Accumulated left to right; raises if any consecutive pair is not adjacent.
    """
    total = 0.0
    for i, j in zip(nodes, nodes[1:]):
        d = float(g.delay_ms[i, j])
        if not math.isfinite(d):
            raise ValueError(f"nodes {i} and {j} are not adjacent")
        total += float(g.queue_ms[i]) + d
    return total


def make_route(g: TopologyGraph, nodes: Sequence[int]) -> Route:
    return Route(tuple(int(v) for v in nodes), route_delay(g, nodes))


def optimal_route(g: TopologyGraph, src: int, dest: int) -> Optional[Route]:
    """Minimum-delay route via Dijkstra, or None when dest is unreachable.

    Hop i->j weighs queue(i) + link(i, j): the source's queue counts, the
    destination's does not. Ties in total delay resolve toward smaller
    node ids for reproducibility.
    """
    if src == dest:
        raise ValueError("src and dest must differ")
    n = g.n_nodes
    dist = np.full(n, np.inf)
    prev = np.full(n, -1, dtype=np.int64)
    dist[src] = 0.0
    heap = [(0.0, src)]
    done = np.zeros(n, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        if u == dest:
            break
        done[u] = True
        base = d + g.queue_ms[u]
        for v in g.neighbors(u):
            if done[v]:
                continue
            alt = base + g.delay_ms[u, v]
            if alt < dist[v] or (alt == dist[v] and u < prev[v]):
                dist[v] = alt
                prev[v] = u
                heapq.heappush(heap, (alt, v))
    if not math.isfinite(dist[dest]):
        return None
    nodes = [dest]
    while nodes[-1] != src:
        nodes.append(int(prev[nodes[-1]]))
    nodes.reverse()
    return make_route(g, nodes)


def floyd_warshall(g: TopologyGraph) -> tuple[np.ndarray, np.ndarray]:
    """All-pairs minimum delay (matrix) and next-hop successor matrix.

    Validates optimal_route: both must report identical optimal delays.
    `next_hop[i, j]` is the successor of i on a best i->j route, -1 when
    unreachable; follow it to reconstruct the route.
    """
    n = g.n_nodes
    dist = g.delay_ms + g.queue_ms[:, None]
    dist = np.where(np.isfinite(g.delay_ms), dist, np.inf)
    np.fill_diagonal(dist, 0.0)
    next_hop = np.where(np.isfinite(g.delay_ms), np.arange(n)[None, :], -1)
    np.fill_diagonal(next_hop, np.arange(n))
    for k in range(n):
        alt = dist[:, k, None] + dist[None, k, :]
        better = alt < dist
        dist = np.where(better, alt, dist)
        next_hop = np.where(better, next_hop[:, k, None], next_hop)
    return dist, next_hop


def route_from_next_hop(g: TopologyGraph, next_hop: np.ndarray,
                        src: int, dest: int) -> Optional[Route]:
    """Reconstruct a Route from a floyd_warshall successor matrix."""
    if src == dest:
        raise ValueError("src and dest must differ")
    if next_hop[src, dest] < 0:
        return None
    nodes = [src]
    while nodes[-1] != dest:
        nodes.append(int(next_hop[nodes[-1], dest]))
        if len(nodes) > g.n_nodes:
            raise RuntimeError("successor matrix contains a cycle")
    return make_route(g, nodes)
