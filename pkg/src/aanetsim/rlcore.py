"""Learning core: local observations, rewards, replay, targets, training loops.

The forwarding agent travels with the packet. At each hop it sees only
local geography: its own position, the positions of up to K next-hop
candidates (neighbors ranked by distance to the destination), and the
destination, all normalized to [-1, 1] by the airspace bounds. Two
learned policies share this observation:

* an action-value net with K outputs, trained model-free on [s, a, r, s']
  experiences with a soft-updated target copy and double-style targets;
* a state-value net with one output that exploits the known transition
  (the next state is the chosen candidate's own observation): experiences
  store all candidate states and rewards, and the online decision ranks
  candidates by reward-plus-value feedback, which lets it react to
  real-time queue delays the action-value net never sees.

Episode delay accounting always follows the end-to-end convention
(transmitting node's queue plus link delay per hop) so every policy is
scored identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geo, gpsr, netmodel, nnet
from .netmodel import LinkParams, TopologyGraph
from .scenario import AirspaceSpec, Snapshot

POLICIES = ("optimal", "gpsr", "dqn", "dvn")


class ObservationState:
    """Flat normalized state vector of length 3*(K+2) plus a K-slot validity mask.

    Layout: forwarding node, K candidate slots, destination; invalid
    slots repeat the forwarding node's coordinates and are masked False.
    `candidate_ids` maps action index -> node id (-1 on masked slots).
    """

    __slots__ = ("vector", "mask", "candidate_ids")

    def __init__(self, vector: np.ndarray, mask: np.ndarray, candidate_ids: np.ndarray):
        self.vector = vector
        self.mask = mask
        self.candidate_ids = candidate_ids


@dataclass(frozen=True)
class EpsilonSchedule:
    """Piecewise-linear exploration schedule: full explore, linear decay, floor."""

    episodes_full_explore: int = 100
    decay_episodes: int = 400
    floor: float = 0.1


def epsilon(schedule: EpsilonSchedule, episode: int) -> float:
    if episode < 1:
        raise ValueError("episodes count from 1")
    past = episode - schedule.episodes_full_explore
    if past <= 0:
        return 1.0
    if past >= schedule.decay_episodes:
        return schedule.floor
    return 1.0 + (schedule.floor - 1.0) * past / schedule.decay_episodes


@dataclass
class DqnExperience:
    s: ObservationState
    a: int
    r: float
    s_next: ObservationState
    terminal: bool


@dataclass
class DvnExperience:
    """All-candidate record: states, rewards, terminal flags per candidate slot."""

    s: ObservationState
    cand_states: np.ndarray      # (K, state_dim), zero rows on masked slots
    cand_rewards: np.ndarray     # (K,)
    cand_mask: np.ndarray        # (K,) bool
    cand_terminal: np.ndarray    # (K,) bool


class ReplayMemory:
    """Bounded ring of experiences with uniform without-replacement batches."""

    def __init__(self, capacity: int = 100_000):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._buf: list = []
        self._pos = 0

    def __len__(self) -> int:
        return len(self._buf)

    def append(self, experience) -> None:
        if len(self._buf) < self.capacity:
            self._buf.append(experience)
        else:
            self._buf[self._pos] = experience
            self._pos = (self._pos + 1) % self.capacity

    def sample(self, rng: np.random.Generator, k: int) -> list:
        n = len(self._buf)
        if k > n:
            raise ValueError(f"cannot sample {k} of {n} experiences")
        if 3 * k >= n:
            idx = rng.permutation(n)[:k]
        else:
            chosen: list[int] = []
            seen = set()
            while len(chosen) < k:
                i = int(rng.integers(n))
                if i not in seen:
                    seen.add(i)
                    chosen.append(i)
            idx = chosen
        return [self._buf[i] for i in idx]

    def contents(self) -> list:
        """Stored experiences, oldest slot first (inspection only)."""
        return list(self._buf)


@dataclass(frozen=True)
class EpisodeResult:
    """Outcome of one packet: the walked route and its delay accounting.

    `delay_ms` is None when the packet failed (dead end or hop budget);
    `hops` counts edges walked, and for delivered packets the delay
    equals the sum of `per_hop_rewards` exactly.
    """

    route: tuple[int, ...]
    delay_ms: Optional[float]
    hops: int
    per_hop_rewards: tuple[float, ...]
    feedback_messages: int = 0

    @property
    def delivered(self) -> bool:
        return self.delay_ms is not None


class RoutingEnv:
    """Per-snapshot caches shared by every episode on that snapshot.

    Builds the topology once and precomputes candidate rankings toward
    the fixed destination, normalized coordinates, and one observation
    per node. `queue_override` replaces the snapshot's queuing delays
    (a scalar for training's uniform constant, or a per-node array for
    evaluation with congested nodes).
    """

    def __init__(self, snapshot: Snapshot, spec: AirspaceSpec, params: LinkParams,
                 k: int, queue_override=None):
        self.snapshot = snapshot
        self.spec = spec
        self.link_params = params
        self.k = k
        n = snapshot.n_nodes
        self.dest = n - 1

        graph = netmodel.build_graph(snapshot, params)
        if queue_override is not None:
            queue = np.broadcast_to(np.asarray(queue_override, dtype=np.float64), (n,)).copy()
            graph = TopologyGraph(graph.delay_ms, queue)
        self.graph = graph

        lon = np.array([p.lon_deg for p in snapshot.positions])
        lat = np.array([p.lat_deg for p in snapshot.positions])
        alt = np.array([p.alt_km for p in snapshot.positions])
        self.norm_coords = np.stack([
            _normalize(lon, spec.lon_range),
            _normalize(lat, spec.lat_range),
            _normalize(alt, spec.alt_range),
        ], axis=1)

        dest_pos = snapshot.positions[self.dest]
        self.slant_to_dest = np.array(
            [geo.slant_distance(p, dest_pos) for p in snapshot.positions])

        self.cand_ids = np.full((n, k), -1, dtype=np.int64)
        self.cand_mask = np.zeros((n, k), dtype=bool)
        for i in range(n):
            if i == self.dest:
                continue
            nbrs = graph.neighbors(i)
            if nbrs.size == 0:
                continue
            order = np.argsort(self.slant_to_dest[nbrs], kind="stable")
            top = nbrs[order][:k]
            self.cand_ids[i, :top.size] = top
            self.cand_mask[i, :top.size] = True

        filled = np.where(self.cand_ids >= 0, self.cand_ids,
                          np.arange(n)[:, None])
        cand_coords = self.norm_coords[filled]                      # (n, k, 3)
        dest_coords = np.broadcast_to(self.norm_coords[self.dest], (n, 1, 3))
        obs = np.concatenate([self.norm_coords[:, None, :], cand_coords,
                              dest_coords], axis=1)
        self.obs_matrix = np.ascontiguousarray(obs.reshape(n, 3 * (k + 2)))
        self.obs_matrix.flags.writeable = False
        self.cand_ids.flags.writeable = False
        self.cand_mask.flags.writeable = False

        self._observations = [
            ObservationState(self.obs_matrix[i], self.cand_mask[i], self.cand_ids[i])
            for i in range(n)
        ]
        self._planar: Optional[TopologyGraph] = None

    @property
    def n_nodes(self) -> int:
        return self.snapshot.n_nodes

    @property
    def state_dim(self) -> int:
        return 3 * (self.k + 2)

    def observe(self, i: int) -> ObservationState:
        return self._observations[i]

    def reward(self, i: int, j: int, convention: str) -> float:
        """Per-hop delay: queue(i) + link for 'forwarder', link + queue(j) for 'nexthop'."""
        d = self.graph.delay_ms[i, j]
        if not math.isfinite(d):
            raise ValueError(f"no link between nodes {i} and {j}")
        if convention == "forwarder":
            return float(self.graph.queue_ms[i] + d)
        if convention == "nexthop":
            return float(d + self.graph.queue_ms[j])
        raise ValueError(f"unknown reward convention {convention!r}")

    @property
    def planar_graph(self) -> TopologyGraph:
        if self._planar is None:
            self._planar = gpsr.planarize(self.graph, self.snapshot)
        return self._planar

    def has_exit(self, j: int, visited) -> bool:
        """True when node j has at least one valid candidate outside `visited`."""
        row = self.cand_ids[j]
        return any(c >= 0 and c not in visited for c in row)


def _normalize(values: np.ndarray, bounds: tuple[float, float]) -> np.ndarray:
    lo, hi = bounds
    return (values - (lo + hi) / 2.0) / ((hi - lo) / 2.0)


def observe(env: RoutingEnv, i: int) -> ObservationState:
    return env.observe(i)


def reward_hop(env: RoutingEnv, i: int, j: int, convention: str) -> float:
    return env.reward(i, j, convention)


# ---------------------------------------------------------------------------
# bootstrap targets

def dqn_target(batch: Sequence[DqnExperience], main: nnet.NetParams,
               target_net: nnet.NetParams, gamma: float = 1.0) -> np.ndarray:
    """Double-style targets: action from the main net, value from the target net."""
    y = np.array([e.r for e in batch], dtype=np.float64)
    nonterm = [i for i, e in enumerate(batch) if not e.terminal]
    if not nonterm:
        return y
    sn = np.stack([batch[i].s_next.vector for i in nonterm])
    masks = np.stack([batch[i].s_next.mask for i in nonterm])
    if not masks.any(axis=1).all():
        raise ValueError("non-terminal sample with an all-masked next state")
    q_main = nnet.forward_batch(main, sn)
    a_star = np.where(masks, q_main, np.inf).argmin(axis=1)
    q_target = nnet.forward_batch(target_net, sn)
    y[nonterm] += gamma * q_target[np.arange(len(nonterm)), a_star]
    return y


def dvn_target(batch: Sequence[DvnExperience], main: nnet.NetParams,
               target_net: nnet.NetParams) -> np.ndarray:
    """Candidate chosen by reward + main-net value; bootstrap from the target net.

    Terminal candidates (destination, dead ends) contribute their reward
    alone, both to the selection score and to the target.
    """
    b = len(batch)
    states = np.stack([e.cand_states for e in batch])
    rewards = np.stack([e.cand_rewards for e in batch])
    mask = np.stack([e.cand_mask for e in batch])
    terminal = np.stack([e.cand_terminal for e in batch])
    if not mask.any(axis=1).all():
        raise ValueError("sample with an all-masked candidate set")
    k = states.shape[1]
    flat = states.reshape(b * k, states.shape[2])
    v_main = nnet.forward_batch(main, flat).reshape(b, k)
    v_target = nnet.forward_batch(target_net, flat).reshape(b, k)
    score = np.where(mask, rewards + np.where(terminal, 0.0, v_main), np.inf)
    a_star = score.argmin(axis=1)
    rows = np.arange(b)
    boot = np.where(terminal[rows, a_star], 0.0, v_target[rows, a_star])
    return rewards[rows, a_star] + boot


def bellman_residual(batch, algo: str, main: nnet.NetParams,
                     target_net: nnet.NetParams, gamma: float = 1.0) -> float:
    """Mean squared residual between bootstrap targets and current predictions."""
    x = np.stack([e.s.vector for e in batch])
    if algo == "dqn":
        y = dqn_target(batch, main, target_net, gamma)
        q = nnet.forward_batch(main, x)
        pred = q[np.arange(len(batch)), [e.a for e in batch]]
    elif algo == "dvn":
        y = dvn_target(batch, main, target_net)
        pred = nnet.forward_batch(main, x)[:, 0]
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    return float(np.mean((y - pred) ** 2))


# ---------------------------------------------------------------------------
# decisions

def dqn_decide(params: nnet.NetParams, state: ObservationState,
               visited=frozenset()) -> Optional[int]:
    """Masked argmin over valid, not-yet-visited candidates; None when stuck."""
    valid = state.mask.copy()
    for a, c in enumerate(state.candidate_ids):
        if valid[a] and c in visited:
            valid[a] = False
    if not valid.any():
        return None
    q = nnet.forward_batch(params, state.vector[None, :])[0]
    return int(np.where(valid, q, np.inf).argmin())


def dvn_decide(params: nnet.NetParams, env: RoutingEnv, i: int,
               visited=frozenset()) -> tuple[Optional[int], int]:
    """Feedback-ranked decision: argmin of reward + value over queried candidates.

    Each valid unvisited candidate is queried once (one signaling message
    each, returned as the second element): it reports its real-time
    next-hop reward (link delay plus its own current queue delay) plus
    the value of its own observation. The destination reports its link
    delay alone: the packet terminates there, so neither its transmit
    queue nor any remaining-delay estimate is on the critical path.
    Returns (None, 0) when every candidate is masked or visited.
    """
    state = env.observe(i)
    queried = [a for a, c in enumerate(state.candidate_ids)
               if state.mask[a] and c not in visited]
    if not queried:
        return None, 0
    cands = state.candidate_ids[queried]
    airborne = cands != env.dest
    scores = np.array([env.reward(i, int(c), "nexthop") if c != env.dest
                       else float(env.graph.delay_ms[i, c]) for c in cands])
    if airborne.any():
        values = nnet.forward_batch(params, env.obs_matrix[cands[airborne]])[:, 0]
        scores[airborne] += values
    return queried[int(scores.argmin())], len(queried)


# ---------------------------------------------------------------------------
# episodes

def run_episode(env: RoutingEnv, policy: str, src: int, t_max: int,
                params: Optional[nnet.NetParams] = None) -> EpisodeResult:
    """Roll one packet under the given policy with end-to-end delay scoring.

    All policies accumulate queue(transmitter) + link delay per hop, no
    matter which reward convention they use internally.
    """
    if src == env.dest:
        raise ValueError("src and dest must differ")
    if policy == "optimal":
        route = netmodel.optimal_route(env.graph, src, env.dest)
        if route is None or route.hops > t_max:
            return EpisodeResult((src,), None, 0, ())
        return _result_from_nodes(env, route.nodes)
    if policy == "gpsr":
        route = gpsr.gpsr_route(env.graph, env.snapshot, src, env.dest, t_max,
                                env.planar_graph)
        if route is None:
            return EpisodeResult((src,), None, 0, ())
        return _result_from_nodes(env, route.nodes)
    if policy not in ("dqn", "dvn"):
        raise ValueError(f"unknown policy {policy!r}")
    if params is None:
        raise ValueError(f"policy {policy!r} needs trained parameters")

    nodes = [src]
    rewards: list[float] = []
    visited = {src}
    feedback = 0
    current = src
    while len(nodes) - 1 < t_max:
        if policy == "dqn":
            action = dqn_decide(params, env.observe(current), visited)
        else:
            action, n_queried = dvn_decide(params, env, current, visited)
            feedback += n_queried
        if action is None:
            return EpisodeResult(tuple(nodes), None, len(nodes) - 1, tuple(rewards),
                                 feedback)
        nxt = int(env.cand_ids[current, action])
        rewards.append(env.reward(current, nxt, "forwarder"))
        nodes.append(nxt)
        visited.add(nxt)
        current = nxt
        if current == env.dest:
            return EpisodeResult(tuple(nodes), _left_sum(rewards), len(nodes) - 1,
                                 tuple(rewards), feedback)
    return EpisodeResult(tuple(nodes), None, len(nodes) - 1, tuple(rewards), feedback)


def _result_from_nodes(env: RoutingEnv, nodes: Sequence[int]) -> EpisodeResult:
    rewards = [env.reward(i, j, "forwarder") for i, j in zip(nodes, nodes[1:])]
    return EpisodeResult(tuple(nodes), _left_sum(rewards), len(nodes) - 1,
                         tuple(rewards))


def _left_sum(values: Sequence[float]) -> float:
    total = 0.0
    for v in values:
        total += v
    return total


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    snapshot_id: int
    src: int
    delivered: bool
    delay_ms: float          # nan when not delivered
    hops: int
    route: Optional[tuple[int, ...]] = None


@dataclass
class TrainingResult:
    algo: str
    params: nnet.NetParams
    episodes: list[EpisodeRecord] = field(default_factory=list)
    probe_residuals: list[tuple[int, float]] = field(default_factory=list)
    replay: Optional[ReplayMemory] = None


def net_spec_for(algo: str, config) -> nnet.NetSpec:
    dim = 3 * (config.k_candidates + 2)
    if algo == "dqn":
        return nnet.NetSpec(dim, tuple(config.dqn_hidden), config.k_candidates)
    if algo == "dvn":
        return nnet.NetSpec(dim, tuple(config.dvn_hidden), 1)
    raise ValueError(f"unknown algorithm {algo!r}")


def build_env_cache(snapshots: Sequence[Snapshot], spec: AirspaceSpec,
                    link_params: LinkParams, k: int, queue_override=None) -> dict:
    return {s.snapshot_id: RoutingEnv(s, spec, link_params, k, queue_override)
            for s in snapshots}


def run_training(dataset, algo: str, config, rng_seed,
                 link_params: Optional[LinkParams] = None,
                 record_routes: bool = False,
                 probe_batch=None, probe_every: int = 100) -> TrainingResult:
    """Offline training over the dataset's train snapshots.

    Per episode: sample a snapshot, pick a random airplane as source with
    the ground station as destination, and forward epsilon-greedily under
    uniform constant queue delays, excluding already visited nodes. Every
    hop stores one experience and, once the replay holds a full batch,
    applies one gradient step plus a soft target update. An episode ends
    on delivery, on a dead end (the entering hop is stored as terminal
    with the fail penalty added), or after t_max hops. Deterministic per
    (dataset, rng_seed).

    `probe_batch` is an optional held-out experience batch of the same
    algorithm; its Bellman residual is recorded every `probe_every`
    episodes.
    """
    if algo not in ("dqn", "dvn"):
        raise ValueError(f"unknown algorithm {algo!r}")
    if not dataset.train:
        raise ValueError("dataset has no training snapshots")
    link_params = link_params or LinkParams()
    init_seed, run_seed = np.random.SeedSequence(rng_seed).spawn(2)
    rng = np.random.default_rng(run_seed)

    spec = net_spec_for(algo, config)
    main = nnet.init_params(spec, init_seed)
    target = main.copy()
    replay = ReplayMemory(config.replay_capacity)
    schedule = EpsilonSchedule(config.eps_full_explore, config.eps_decay,
                               config.eps_floor)
    envs = build_env_cache(dataset.train, dataset.spec, link_params,
                           config.k_candidates,
                           queue_override=link_params.train_queue_delay_ms)
    result = TrainingResult(algo, main, replay=replay)

    for episode in range(1, config.episodes + 1):
        snap = dataset.train[int(rng.integers(len(dataset.train)))]
        env = envs[snap.snapshot_id]
        src = int(rng.integers(env.n_nodes - 1))
        eps = epsilon(schedule, episode)

        nodes = [src]
        visited = {src}
        scored: list[float] = []
        delivered = False
        current = src
        while len(nodes) - 1 < config.t_max:
            state = env.observe(current)
            valid = [a for a, c in enumerate(state.candidate_ids)
                     if state.mask[a] and c not in visited]
            if not valid:
                break  # source with no way out, or a dead end entered below
            if rng.random() < eps:
                action = valid[int(rng.integers(len(valid)))]
            elif algo == "dqn":
                action = dqn_decide(main, state, visited)
            else:
                action, _ = dvn_decide(main, env, current, visited)
            nxt = int(state.candidate_ids[action])
            visited.add(nxt)
            terminal = nxt == env.dest
            dead_end = not terminal and not env.has_exit(nxt, visited)

            if algo == "dqn":
                r = env.reward(current, nxt, "forwarder")
                if dead_end:
                    r += config.fail_penalty_ms
                replay.append(DqnExperience(state, action, r, env.observe(nxt),
                                            terminal or dead_end))
            else:
                replay.append(_dvn_experience(env, state, current, visited,
                                              dead_end_cand=nxt if dead_end else None,
                                              penalty=config.fail_penalty_ms))
            scored.append(env.reward(current, nxt, "forwarder"))
            nodes.append(nxt)
            current = nxt

            if len(replay) >= config.batch_size:
                batch = replay.sample(rng, config.batch_size)
                x = np.stack([e.s.vector for e in batch])
                if algo == "dqn":
                    y = dqn_target(batch, main, target, config.gamma)
                    nnet.train_step(main, x, y, [e.a for e in batch],
                                    config.learning_rate)
                else:
                    y = dvn_target(batch, main, target)
                    nnet.train_step(main, x, y, None, config.learning_rate)
                nnet.soft_update(target, main, config.tau)

            if terminal:
                delivered = True
                break
            if dead_end:
                break

        result.episodes.append(EpisodeRecord(
            episode, snap.snapshot_id, src, delivered,
            _left_sum(scored) if delivered else math.nan,
            len(nodes) - 1, tuple(nodes) if record_routes else None))

        if probe_batch is not None and episode % probe_every == 0:
            result.probe_residuals.append(
                (episode, bellman_residual(probe_batch, algo, main, target,
                                           config.gamma)))
    return result


def _dvn_experience(env: RoutingEnv, state: ObservationState, i: int, visited,
                    dead_end_cand: Optional[int], penalty: float) -> DvnExperience:
    k = env.k
    cand_states = np.zeros((k, env.state_dim))
    cand_rewards = np.zeros(k)
    cand_terminal = np.zeros(k, dtype=bool)
    mask = state.mask.copy()
    for a in range(k):
        if not mask[a]:
            continue
        c = int(state.candidate_ids[a])
        cand_states[a] = env.obs_matrix[c]
        cand_rewards[a] = env.reward(i, c, "nexthop")
        cand_terminal[a] = c == env.dest
        if c == dead_end_cand:
            cand_rewards[a] += penalty
            cand_terminal[a] = True
    return DvnExperience(state, cand_states, cand_rewards, mask, cand_terminal)
