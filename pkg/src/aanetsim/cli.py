"""Experiment driver: generate | train | evaluate | trace.

Every command reads a config (profile defaults, optionally merged with a
JSON file), writes its outputs as delimited text with header rows into
--out, and drops a manifest (the fully resolved config plus its hash).
Re-running a command with its manifest as --config reproduces the output
files byte for byte.

Exit codes: 0 success, 1 usage, 2 config, 3 runtime.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import netmodel, nnet, rlcore, scenario
from .config import ConfigError, ExperimentConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

SMOOTH_WINDOW = 40

_SCHEMA = """\
aanetsim output files (tab-separated, one header row; floats use Python repr)

dataset.txt             versioned line-oriented dataset container, see README
<algo>_seed<seed>.npz   trained network parameters (versioned .npz)
<algo>_seed<seed>_curve.tsv
    episode             1-based training episode index
    raw_delay_ms        delivered end-to-end delay of the episode, nan if failed
    smoothed_delay_ms   mean of delivered delays over the trailing 40-episode
                        window, nan before the window fills or when it holds
                        no delivery
    delivered           1 delivered, 0 failed
<algo>_curve_agg.tsv
    episode             1-based training episode index
    mean_smoothed_ms    mean of smoothed_delay_ms over seeds (nan-aware)
    std_smoothed_ms     population std of smoothed_delay_ms over seeds
eval_episodes.tsv
    episode             0-based evaluation episode index
    snapshot_id         test snapshot the episode ran on
    src                 source node id (destination is always the ground station)
    policy              optimal | gpsr | dqn | dvn
    seed                training seed whose parameters served this episode
    delivered           1 delivered, 0 failed
    delay_queue_ms      end-to-end delay incl. queuing delays, nan if failed
    delay_linkonly_ms   same route scored by link delays only (for the optimal
                        policy: the link-only optimal route), nan if failed
    hops                edges walked
    feedback_msgs       candidate feedback messages sent (dvn only, else 0)
cdf_<policy>_queue.tsv / cdf_<policy>_linkonly.tsv
    delay_ms            sorted delivered delays in the given scoring mode
    cum_prob            empirical cumulative probability (i+1)/n
summary.tsv             per-policy delivery ratio and delay statistics
trace_<snapshot>_<src>.tsv
    policy delivered hop node_id lon_deg lat_deg alt_km queue_ms
zones.tsv
    center_lon_deg center_lat_deg radius_km height_km
manifest_<command>.json resolved config + sha256; pass as --config to re-run
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aanetsim",
                     description="Packet-routing experiments over synthetic "
                                 "airborne mesh snapshots")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("generate", "generate and store the snapshot dataset"),
        ("train", "train the learned policies and emit learning curves"),
        ("evaluate", "run all policies over the test set and emit CDF data"),
        ("trace", "dump the routes of every policy on one snapshot"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, default=None,
                       help="JSON config or a manifest from a previous run")
        p.add_argument("--profile", choices=cfgmod.PROFILES, default="desk",
                       help="base profile when --config does not name one")
        p.add_argument("--seed", type=int, action="append", default=None,
                       metavar="N", help="training seed (repeatable), overrides config")
        p.add_argument("--out", type=Path, default=Path("results"),
                       help="output directory (default: results)")
        if name == "trace":
            p.add_argument("--snapshot", type=int, required=True,
                           help="snapshot id to trace")
            p.add_argument("--src", type=int, required=True,
                           help="source node id")
    return parser


def _resolve_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = cfgmod.load_config(args.config, args.profile)
    else:
        cfg = cfgmod.default_config(args.profile)
    if args.seed:
        cfg = dataclasses.replace(cfg, seeds=tuple(args.seed))
    return cfg


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    return str(value)


def _write_tsv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write("\t".join(header) + "\n")
        for row in rows:
            f.write("\t".join(_fmt(v) for v in row) + "\n")


def _write_manifest(out: Path, command: str, cfg: ExperimentConfig) -> None:
    doc = {
        "command": command,
        "config_sha256": cfgmod.config_hash(cfg),
        "config": cfgmod.to_dict(cfg),
    }
    (out / f"manifest_{command}.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="ascii")
    (out / "schema.txt").write_text(_SCHEMA, encoding="ascii")


def _load_dataset(out: Path) -> scenario.Dataset:
    path = out / "dataset.txt"
    if not path.exists():
        raise ConfigError(f"no dataset at {path}; run 'aanetsim generate' first")
    return scenario.load_dataset(path)


def smooth_curve(raw_delays, window: int = SMOOTH_WINDOW) -> list[float]:
    """Trailing-window mean over delivered (non-nan) entries; nan until full."""
    out = []
    for i in range(len(raw_delays)):
        if i + 1 < window:
            out.append(math.nan)
            continue
        delivered = [v for v in raw_delays[i + 1 - window:i + 1] if not math.isnan(v)]
        out.append(sum(delivered) / len(delivered) if delivered else math.nan)
    return out


def eval_queue_delays(snapshot: scenario.Snapshot, cfg: ExperimentConfig) -> np.ndarray:
    """Per-snapshot congestion marking, seeded so all policies see the same draw."""
    queue = np.asarray(snapshot.queue_delay_ms, dtype=np.float64).copy()
    n_congested = round(cfg.congested_fraction * snapshot.n_nodes)
    if n_congested:
        rng = np.random.default_rng(
            np.random.SeedSequence([cfg.eval_seed, snapshot.snapshot_id]))
        marked = rng.choice(snapshot.n_nodes, size=n_congested, replace=False)
        queue[marked] = cfg.congested_queue_ms
    return queue


# ---------------------------------------------------------------------------
# commands

def cmd_generate(cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    dataset = scenario.build_dataset(
        cfg.airspace, cfg.n_snapshots, cfg.train_fraction, cfg.dataset_seed,
        cfg.window_hours, cfg.link.train_queue_delay_ms)
    scenario.save_dataset(dataset, out / "dataset.txt")
    _write_manifest(out, "generate", cfg)

    sample = (dataset.train + dataset.test)[:10]
    degrees = []
    for snap in sample:
        g = netmodel.build_graph(snap, cfg.link)
        degrees.append(2.0 * g.edge_count() / g.n_nodes)
    print(f"dataset: {len(dataset.train)} train + {len(dataset.test)} test snapshots, "
          f"{cfg.airspace.n_nodes} nodes each "
          f"({cfg.airspace.n_airplanes} airplanes + ground station)")
    print(f"mean node degree over {len(sample)} sampled snapshots: "
          f"{sum(degrees) / len(degrees):.2f}")
    print(f"wrote {out / 'dataset.txt'}")


def _params_path(out: Path, algo: str, seed: int) -> Path:
    return out / f"{algo}_seed{seed}.npz"


def cmd_train(cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    dataset = _load_dataset(out)
    for algo in cfg.learned_policies:
        smoothed_per_seed = []
        for seed in cfg.seeds:
            result = rlcore.run_training(dataset, algo, cfg.rl, seed,
                                         link_params=cfg.link)
            nnet.save_params(result.params, _params_path(out, algo, seed))
            raw = [rec.delay_ms for rec in result.episodes]
            smoothed = smooth_curve(raw)
            smoothed_per_seed.append(smoothed)
            _write_tsv(out / f"{algo}_seed{seed}_curve.tsv",
                       ["episode", "raw_delay_ms", "smoothed_delay_ms", "delivered"],
                       [(rec.episode, rec.delay_ms, smoothed[i], rec.delivered)
                        for i, rec in enumerate(result.episodes)])
            n_delivered = sum(rec.delivered for rec in result.episodes)
            print(f"{algo} seed {seed}: {len(result.episodes)} episodes, "
                  f"{n_delivered} delivered, final smoothed delay "
                  f"{smoothed[-1]:.2f} ms")
        agg_rows = []
        for i in range(cfg.rl.episodes):
            vals = [s[i] for s in smoothed_per_seed if not math.isnan(s[i])]
            if vals:
                mean = sum(vals) / len(vals)
                std = math.sqrt(sum((v - mean) ** 2 for v in vals) / len(vals))
            else:
                mean = std = math.nan
            agg_rows.append((i + 1, mean, std))
        _write_tsv(out / f"{algo}_curve_agg.tsv",
                   ["episode", "mean_smoothed_ms", "std_smoothed_ms"], agg_rows)
    _write_manifest(out, "train", cfg)


def _load_learned_params(cfg: ExperimentConfig, out: Path) -> dict:
    params: dict = {}
    missing: dict[str, list[str]] = {}
    for algo in cfg.learned_policies:
        spec = rlcore.net_spec_for(algo, cfg.rl)
        params[algo] = {}
        for seed in cfg.seeds:
            path = _params_path(out, algo, seed)
            if not path.exists():
                missing.setdefault(algo, []).append(str(path))
                continue
            params[algo][seed] = nnet.load_params(path, expected_spec=spec)
    if missing:
        lines = "; ".join(f"{algo}: {', '.join(paths)}" for algo, paths in missing.items())
        raise ConfigError(f"missing parameter files ({lines}); run 'aanetsim train' first")
    return params


def _link_only_graph(env: rlcore.RoutingEnv) -> netmodel.TopologyGraph:
    return netmodel.TopologyGraph(env.graph.delay_ms,
                                  np.zeros(env.graph.n_nodes))


def _episode_scores(env: rlcore.RoutingEnv, policy: str, src: int, t_max: int,
                    params) -> tuple[rlcore.EpisodeResult, float, float]:
    """Run one episode; returns (result, queue-inclusive delay, link-only delay)."""
    result = rlcore.run_episode(env, policy, src, t_max, params)
    if not result.delivered:
        return result, math.nan, math.nan
    link_only = netmodel.route_delay(_link_only_graph(env), result.route)
    return result, result.delay_ms, link_only


def cmd_evaluate(cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    dataset = _load_dataset(out)
    if not dataset.test:
        raise ConfigError("dataset has no test snapshots")
    params = _load_learned_params(cfg, out)

    envs: dict[int, rlcore.RoutingEnv] = {}
    link_only_graphs: dict[int, netmodel.TopologyGraph] = {}
    rng = np.random.default_rng(np.random.SeedSequence(cfg.eval_seed))
    rows = []
    samples = {p: {"queue": [], "linkonly": [], "delivered": 0, "feedback": []}
               for p in cfg.policies}
    for episode in range(cfg.eval_episodes):
        snap = dataset.test[int(rng.integers(len(dataset.test)))]
        if snap.snapshot_id not in envs:
            envs[snap.snapshot_id] = rlcore.RoutingEnv(
                snap, dataset.spec, cfg.link, cfg.rl.k_candidates,
                queue_override=eval_queue_delays(snap, cfg))
            link_only_graphs[snap.snapshot_id] = _link_only_graph(envs[snap.snapshot_id])
        env = envs[snap.snapshot_id]
        src = int(rng.integers(env.n_nodes - 1))
        seed = cfg.seeds[episode % len(cfg.seeds)]
        for policy in cfg.policies:
            p = params.get(policy, {}).get(seed)
            result, delay_q, delay_l = _episode_scores(env, policy, src,
                                                       cfg.rl.t_max, p)
            if policy == "optimal" and result.delivered:
                # the link-only scoring mode compares against the link-only optimum
                link_route = netmodel.optimal_route(
                    link_only_graphs[snap.snapshot_id], src, env.dest)
                delay_l = link_route.total_delay_ms
            rows.append((episode, snap.snapshot_id, src, policy, seed,
                         result.delivered, delay_q, delay_l, result.hops,
                         result.feedback_messages))
            if result.delivered:
                samples[policy]["queue"].append(delay_q)
                samples[policy]["linkonly"].append(delay_l)
                samples[policy]["delivered"] += 1
            samples[policy]["feedback"].append(result.feedback_messages)

    _write_tsv(out / "eval_episodes.tsv",
               ["episode", "snapshot_id", "src", "policy", "seed", "delivered",
                "delay_queue_ms", "delay_linkonly_ms", "hops", "feedback_msgs"],
               rows)

    summary_rows = []
    for policy in cfg.policies:
        rec = samples[policy]
        for mode in ("queue", "linkonly"):
            ordered = sorted(rec[mode])
            _write_tsv(out / f"cdf_{policy}_{mode}.tsv", ["delay_ms", "cum_prob"],
                       [(v, (i + 1) / len(ordered)) for i, v in enumerate(ordered)])
        stats = []
        for mode in ("queue", "linkonly"):
            vals = np.array(rec[mode]) if rec[mode] else np.array([math.nan])
            stats += [float(np.median(vals)), float(np.mean(vals)),
                      float(np.percentile(vals, 95))]
        ratio = rec["delivered"] / cfg.eval_episodes
        mean_feedback = sum(rec["feedback"]) / cfg.eval_episodes
        summary_rows.append((policy, cfg.eval_episodes, rec["delivered"], ratio,
                             *stats, mean_feedback))
    header = ["policy", "episodes", "delivered", "delivery_ratio",
              "median_queue_ms", "mean_queue_ms", "p95_queue_ms",
              "median_linkonly_ms", "mean_linkonly_ms", "p95_linkonly_ms",
              "mean_feedback_msgs"]
    _write_tsv(out / "summary.tsv", header, summary_rows)
    _write_manifest(out, "evaluate", cfg)

    print("\t".join(header))
    for row in summary_rows:
        print("\t".join(f"{v:.3f}" if isinstance(v, float) else str(v) for v in row))


def cmd_trace(cfg: ExperimentConfig, out: Path, snapshot_id: int, src: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    dataset = _load_dataset(out)
    by_id = {s.snapshot_id: s for s in dataset.test + dataset.train}
    if snapshot_id not in by_id:
        raise ConfigError(f"unknown snapshot id {snapshot_id}")
    snap = by_id[snapshot_id]
    if not 0 <= src < snap.n_nodes - 1:
        raise ConfigError(f"src must be an airplane id in [0, {snap.n_nodes - 2}]")

    params = _load_learned_params(cfg, out)
    seed = cfg.seeds[0]
    env = rlcore.RoutingEnv(snap, dataset.spec, cfg.link, cfg.rl.k_candidates,
                            queue_override=eval_queue_delays(snap, cfg))
    rows = []
    for policy in cfg.policies:
        p = params.get(policy, {}).get(seed)
        result = rlcore.run_episode(env, policy, src, cfg.rl.t_max, p)
        for hop, node in enumerate(result.route):
            pos = snap.positions[node]
            rows.append((policy, result.delivered, hop, node, pos.lon_deg,
                         pos.lat_deg, pos.alt_km, float(env.graph.queue_ms[node])))
    _write_tsv(out / f"trace_{snapshot_id}_{src}.tsv",
               ["policy", "delivered", "hop", "node_id", "lon_deg", "lat_deg",
                "alt_km", "queue_ms"], rows)
    _write_tsv(out / "zones.tsv",
               ["center_lon_deg", "center_lat_deg", "radius_km", "height_km"],
               [(z.center.lon_deg, z.center.lat_deg, z.radius_km, z.height_km)
                for z in dataset.spec.no_fly_zones])
    _write_manifest(out, "trace", cfg)
    print(f"wrote {out / f'trace_{snapshot_id}_{src}.tsv'}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if args.command == "generate":
            cmd_generate(cfg, args.out)
        elif args.command == "train":
            cmd_train(cfg, args.out)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.out)
        else:
            cmd_trace(cfg, args.out, args.snapshot, args.src)
    except (ConfigError, scenario.DatasetFormatError, nnet.ParamsFileError,
            nnet.ParamsShapeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
