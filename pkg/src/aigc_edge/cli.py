"""Command-line interface: train / evaluate / sweep."""
from __future__ import annotations

import argparse
import os
import sys

from . import harness
from .config import SimConfig
from .harness import ALGOS


def _load_config(path) -> SimConfig:
    if path is None:
        return SimConfig()
    try:
        with open(path) as fh:
            return SimConfig.from_json(fh.read())
    except (OSError, ValueError) as exc:
        raise SystemExit(f"error: cannot read config {path}: {exc}")


def _apply_overrides(cfg: SimConfig, args) -> SimConfig:
    overrides = {}
    if getattr(args, "users", None) is not None:
        overrides["users"] = args.users
    if getattr(args, "capacity_gb", None) is not None:
        overrides["capacity_gb"] = args.capacity_gb
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "episodes", None) is not None:
        overrides["episodes"] = args.episodes
    return cfg.replace(**overrides) if overrides else cfg


def _add_common(p):
    p.add_argument("--config", help="JSON config file (defaults embedded)")
    p.add_argument("--algo", choices=ALGOS, default="t2drl")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--users", type=int, default=None)
    p.add_argument("--capacity-gb", dest="capacity_gb", type=float, default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--plot", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aigc-edge",
        description="Edge AIGC caching/allocation simulator and learners")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "evaluate"):
        _add_common(sub.add_parser(name))
    sw = sub.add_parser("sweep")
    _add_common(sw)
    sw.add_argument("--algos", nargs="+", choices=ALGOS, default=None,
                    help="algorithms to sweep (default: --algo)")
    sw.add_argument("--seeds", nargs="+", type=int, default=None)
    sw.add_argument("--users-sweep", nargs="+", type=int, default=None)
    sw.add_argument("--capacity-sweep", nargs="+", type=float, default=None)
    return parser


def _single_run(args, train: bool) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    cfg.validate()
    try:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "config.echo.json"), "w") as fh:
            fh.write(cfg.to_json())
    except OSError as exc:
        print(f"error: cannot write to {args.out}: {exc}", file=sys.stderr)
        return 1
    metrics, comps, _ = harness.run_training(args.algo, cfg, cfg.seed,
                                             train=train)
    harness.write_metrics_csv(os.path.join(args.out, "metrics.csv"), metrics)
    harness.write_summary_csv(
        os.path.join(args.out, "summary.csv"),
        [harness.summary_row(metrics, cfg, cfg.episodes)])
    if comps.slot_agent is not None and train:
        from .neural import save_net
        actor_net = comps.slot_agent._actor_params()
        save_net(actor_net, os.path.join(args.out, "actor.npz"))
        save_net(comps.slot_agent.critic, os.path.join(args.out, "critic.npz"))
    if comps.frame_agent is not None and train:
        from .neural import save_net
        save_net(comps.frame_agent.q, os.path.join(args.out, "qnet.npz"))
    if args.plot:
        pts = [(float(i), float(v))
               for i, v in enumerate(metrics.episode_rewards())]
        svg = harness.svg_line_chart({args.algo: pts}, "Episodic reward",
                                     "episode", "mean slot reward")
        with open(os.path.join(args.out, "reward.svg"), "w") as fh:
            fh.write(svg)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("train", "evaluate"):
        return _single_run(args, train=args.command == "train")
    cfg = _apply_overrides(_load_config(args.config), args)
    cfg.validate()
    try:
        harness.run_experiment(
            cfg,
            algos=args.algos or [args.algo],
            seeds=args.seeds or [cfg.seed],
            out_dir=args.out,
            episodes=args.episodes,
            users_sweep=args.users_sweep,
            capacity_sweep=args.capacity_sweep,
            plot=args.plot)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
