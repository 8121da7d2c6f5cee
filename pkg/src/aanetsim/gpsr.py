"""Greedy geographic forwarding with perimeter-mode recovery.

Greedy mode hands the packet to the neighbor closest to the destination
(3-D slant distance) as long as that neighbor is strictly closer than the
current node; when no neighbor qualifies (a communication void), the
packet switches to perimeter mode and walks the faces of a planarized
subgraph by the right-hand rule until it reaches a node strictly closer
to the destination than where the void was met.

Perimeter geometry uses the plain lon/lat projection; altitude matters
only for the distance-to-destination test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geo, netmodel
from .geo import GeoPosition
from .netmodel import Route, TopologyGraph


def greedy_next(g: TopologyGraph, snapshot, current: int, dest: int) -> Optional[int]:
    """Neighbor closest to the destination, or None at a communication void.

    Only neighbors strictly closer to the destination than the current
    node qualify; ties resolve to the smallest node id.
    """
    if current == dest:
        raise ValueError("greedy_next is undefined at the destination")
    dest_pos = snapshot.positions[dest]
    here = geo.slant_distance(snapshot.positions[current], dest_pos)
    best, best_d = None, here
    for j in g.neighbors(current):
        d = geo.slant_distance(snapshot.positions[j], dest_pos)
        if d < best_d:
            best, best_d = int(j), d
    return best


def planarize(g: TopologyGraph, snapshot) -> TopologyGraph:
    """Gabriel-graph subgraph in the lon/lat projection.

    Edge (u, v) survives iff no third node lies strictly inside the disk
    whose diameter is uv. The result is a subgraph of g (same delays on
    kept edges) and planar in the projection.
    """
    pts = np.array([[p.lon_deg, p.lat_deg] for p in snapshot.positions])
    delay = g.delay_ms.copy()
    n = g.n_nodes
    for u in range(n):
        for v in g.neighbors(u):
            if v <= u:
                continue
            mid = (pts[u] + pts[v]) / 2.0
            r2 = ((pts[u] - pts[v]) ** 2).sum() / 4.0
            inside = ((pts - mid) ** 2).sum(axis=1) < r2
            inside[u] = inside[v] = False
            if inside.any():
                delay[u, v] = delay[v, u] = np.inf
    return TopologyGraph(delay, g.queue_ms)


@dataclass
class GpsrState:
    """Per-packet forwarding state.

    `entry_point` and `first_edge` are set while in perimeter mode:
    the position where the void was met and the first face edge walked
    (re-walking it means the face closed without progress). `prev_node`
    is the face-walk predecessor, None right after entering perimeter
    mode.
    """

    mode: str = "greedy"
    entry_point: Optional[GeoPosition] = None
    first_edge: Optional[tuple[int, int]] = None
    prev_node: Optional[int] = None
    visited: set = field(default_factory=set)


def _angle(frm: GeoPosition, to: GeoPosition) -> float:
    return math.atan2(to.lat_deg - frm.lat_deg, to.lon_deg - frm.lon_deg)


def perimeter_next(planar_g: TopologyGraph, snapshot, state: GpsrState,
                   current: int, dest: int) -> Optional[int]:
    """Right-hand-rule successor on the planar graph, None when stuck.

    The sweep starts from the line to the face-walk predecessor (or to
    the destination right after entering perimeter mode) and takes the
    first planar neighbor clockwise; the predecessor itself is a last
    resort. None only when the node has no planar neighbors.
    """
    if state.mode != "perimeter":
        raise ValueError("perimeter_next requires perimeter mode")
    nbrs = planar_g.neighbors(current)
    if nbrs.size == 0:
        return None
    here = snapshot.positions[current]
    if state.prev_node is None:
        ref = _angle(here, snapshot.positions[dest])
    else:
        ref = _angle(here, snapshot.positions[state.prev_node])
    two_pi = 2.0 * math.pi
    best, best_sweep = None, math.inf
    for j in nbrs:
        j = int(j)
        if j == state.prev_node:
            sweep = two_pi  # reuse the arrival edge only when nothing else exists
        else:
            sweep = (ref - _angle(here, snapshot.positions[j])) % two_pi
            if sweep == 0.0:
                sweep = two_pi
        if sweep < best_sweep:
            best, best_sweep = j, sweep
    return best


def gpsr_route(g: TopologyGraph, snapshot, src: int, dest: int, t_max: int,
               planar_g: Optional[TopologyGraph] = None) -> Optional[Route]:
    """Greedy route with perimeter recovery, or None when forwarding fails.

    Failure cases: a void with no planar way out, a face walk that closes
    on its first edge or returns to an already visited node, or t_max
    hops without delivery. The planarized graph is computed lazily and
    can be passed in when cached by the caller.
    """
    if src == dest:
        raise ValueError("src and dest must differ")
    dest_pos = snapshot.positions[dest]
    state = GpsrState(visited={src})
    nodes = [src]
    current = src
    while len(nodes) - 1 < t_max:
        if state.mode == "perimeter":
            here = geo.slant_distance(snapshot.positions[current], dest_pos)
            entry = geo.slant_distance(state.entry_point, dest_pos)
            if here < entry:
                state.mode = "greedy"
                state.entry_point = None
                state.first_edge = None
                state.prev_node = None

        if state.mode == "greedy":
            nxt = greedy_next(g, snapshot, current, dest)
            if nxt is None:
                if planar_g is None:
                    planar_g = planarize(g, snapshot)
                state.mode = "perimeter"
                state.entry_point = snapshot.positions[current]
                state.prev_node = None
                nxt = perimeter_next(planar_g, snapshot, state, current, dest)
                if nxt is None:
                    return None
                state.first_edge = (current, nxt)
        else:
            nxt = perimeter_next(planar_g, snapshot, state, current, dest)
            if nxt is None:
                return None
            if (current, nxt) == state.first_edge:
                return None  # face walk closed without progress
        if nxt in state.visited:
            return None  # refuse to revisit: emitted routes stay loop-free
        if state.mode == "perimeter":
            state.prev_node = current
        state.visited.add(nxt)
        nodes.append(nxt)
        current = nxt
        if current == dest:
            return netmodel.make_route(g, nodes)
    return None
