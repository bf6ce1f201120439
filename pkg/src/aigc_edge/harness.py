"""Two-timescale training loop, metrics, persistence, and sweeps.

The only module with I/O. A run is fully determined by (seed, config):
the environment realization is drawn from the seed alone so different
algorithms compare on matched environments, while each algorithm gets
its own decision stream.
"""
from __future__ import annotations

import csv
import io
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .agents import (D3PGAgent, DDQNAgent, amend_continuous, build_slot_state,
                     decode_caching_action, frame_reward)
from .baselines import (DDPGAgent, rcars_allocation, rcars_cache,
                        schrs_allocate, schrs_cache)
from .config import SimConfig
from .env import EdgeEnv

ALGOS = ("t2drl", "ddpg", "schrs", "rcars")

CSV_COLUMNS = ("algo", "seed", "episode", "frame", "slot", "reward",
               "utility", "hit_ratio", "violations", "wall_ms")

# Fixed stream tags so env realization/trajectory are shared across algos.
_STREAM_ENV_BUILD = 101
_STREAM_TRAJECTORY = 202
_STREAM_AGENT = 303


@dataclass
class SlotRecord:
    episode: int
    frame: int
    slot: int
    reward: float
    utility: float
    hit_ratio: float
    violations: int
    wall_ms: float


@dataclass
class RunMetrics:
    algo: str
    seed: int
    rows: list = field(default_factory=list)

    def episode_rewards(self) -> np.ndarray:
        """Mean slot reward per episode, episode-ordered."""
        episodes = sorted({r.episode for r in self.rows})
        return np.array([
            np.mean([r.reward for r in self.rows if r.episode == ep])
            for ep in episodes])

    def episode_utilities(self) -> np.ndarray:
        episodes = sorted({r.episode for r in self.rows})
        return np.array([
            np.mean([r.utility for r in self.rows if r.episode == ep])
            for ep in episodes])

    def hit_ratio(self) -> float:
        return float(np.mean([r.hit_ratio for r in self.rows]))

    def mean_utility(self) -> float:
        return float(np.mean([r.utility for r in self.rows]))


def make_rngs(seed: int, algo: str):
    """(env-build, trajectory, agent) generators for one run."""
    algo_tag = ALGOS.index(algo)
    return (np.random.default_rng([seed, _STREAM_ENV_BUILD]),
            np.random.default_rng([seed, _STREAM_TRAJECTORY]),
            np.random.default_rng([seed, _STREAM_AGENT, algo_tag]))


@dataclass
class RunComponents:
    slot_agent: object = None      # D3PG or DDPG agent
    frame_agent: object = None     # DDQN agent
    static_cache: np.ndarray = None


def make_components(algo: str, cfg: SimConfig, env: EdgeEnv, agent_rng):
    if algo == "t2drl":
        return RunComponents(slot_agent=D3PGAgent(cfg, agent_rng),
                             frame_agent=DDQNAgent(cfg, agent_rng))
    if algo == "ddpg":
        return RunComponents(slot_agent=DDPGAgent(cfg, agent_rng),
                             frame_agent=DDQNAgent(cfg, agent_rng))
    if algo == "schrs":
        return RunComponents(static_cache=schrs_cache(env.specs, cfg))
    if algo == "rcars":
        return RunComponents()
    raise ValueError(f"unknown algorithm {algo!r}")


def _schedules(cfg: SimConfig, episode: int, episodes: int):
    """(exploration sigma, epsilon-greedy) for the given episode index."""
    progress = episode / max(episodes - 1, 1)
    sigma = cfg.sigma_expl_start + (cfg.sigma_expl_end
                                    - cfg.sigma_expl_start) * progress
    decay_span = max(cfg.eps_greedy_frac * episodes, 1.0)
    frac = min(episode / decay_span, 1.0)
    eps = cfg.eps_greedy_start + (cfg.eps_greedy_end
                                  - cfg.eps_greedy_start) * frac
    return sigma, eps


def run_episode(algo: str, comps: RunComponents, env: EdgeEnv, cfg: SimConfig,
                traj_rng, agent_rng, episode: int, episodes: int,
                train: bool = True) -> list[SlotRecord]:
    """One episode of Algorithm-1 style nested loops.

    The environment chains and user population are re-drawn; agent
    parameters and replay persist across episodes.
    """
    rows = []
    env.reset()
    sigma, eps_greedy = _schedules(cfg, episode, episodes) if train else (0.0, 0.0)
    pending_slot = None     # (state, raw_action_amended, reward)
    pending_frame = None    # (gamma_idx, action, reward)

    for t in range(cfg.frames):
        gamma_idx = env.begin_frame(traj_rng)

        if comps.frame_agent is not None:
            cache_action = comps.frame_agent.act(gamma_idx, agent_rng, eps_greedy)
            cache = decode_caching_action(cache_action, cfg.model_count)
        elif comps.static_cache is not None:
            cache = comps.static_cache
        else:
            cache_action = None
            cache = rcars_cache(env.specs, cfg, agent_rng)

        if pending_frame is not None and comps.frame_agent is not None:
            s_prev, a_prev, r_prev = pending_frame
            comps.frame_agent.remember(s_prev, a_prev, r_prev, gamma_idx)
            if train:
                comps.frame_agent.train_step(agent_rng)
            pending_frame = None

        slot_rewards = []
        for k in range(cfg.slots):
            snapshots = env.sample_slot(traj_rng)
            model_ids = [s.request.model_id for s in snapshots]
            state = build_slot_state(snapshots, cache, env.specs, cfg)

            started = time.perf_counter()
            if comps.slot_agent is not None:
                raw = comps.slot_agent.act(state, agent_rng,
                                           sigma if train else 0.0)
                alloc = amend_continuous(raw, cache, model_ids)
            elif algo == "schrs":
                alloc = schrs_allocate(snapshots, cache, env.specs, cfg,
                                       agent_rng)
            else:
                alloc = rcars_allocation(cache, model_ids)
            wall_ms = (time.perf_counter() - started) * 1e3

            outcome = env.evaluate_slot(snapshots, cache, alloc)
            reward = outcome.slot_reward
            if not np.isfinite(reward):
                raise FloatingPointError("non-finite slot reward; run aborted")
            slot_rewards.append(reward)

            if comps.slot_agent is not None:
                if pending_slot is not None:
                    s_prev, a_prev, r_prev = pending_slot
                    comps.slot_agent.remember(s_prev, a_prev, r_prev, state)
                action_vec = np.concatenate([alloc.b, alloc.xi])
                pending_slot = (state, action_vec, reward)
                if train:
                    out = comps.slot_agent.train_step(agent_rng)
                    if out is not None and not all(np.isfinite(v) for v in out):
                        raise FloatingPointError("non-finite loss; run aborted")

            rows.append(SlotRecord(
                episode=episode, frame=t, slot=k, reward=reward,
                utility=outcome.mean_utility,
                hit_ratio=outcome.hit_count / cfg.users,
                violations=int(outcome.deadline_violated.sum()),
                wall_ms=wall_ms if cfg.record_timing else 0.0))

        r_frame = frame_reward(slot_rewards, cache, env.specs, cfg)
        if comps.frame_agent is not None:
            pending_frame = (gamma_idx, cache_action, r_frame)
    return rows


def run_training(algo: str, cfg: SimConfig, seed: int,
                 episodes: int | None = None, env: EdgeEnv | None = None,
                 train: bool = True):
    """Full multi-episode run. Returns (RunMetrics, components, env)."""
    if algo not in ALGOS:
        raise ValueError(f"unknown algorithm {algo!r}")
    cfg.validate()
    episodes = cfg.episodes if episodes is None else episodes
    build_rng, traj_rng, agent_rng = make_rngs(seed, algo)
    if env is None:
        env = EdgeEnv(cfg, build_rng)
    comps = make_components(algo, cfg, env, agent_rng)
    metrics = RunMetrics(algo=algo, seed=seed)
    for ep in range(episodes):
        metrics.rows.extend(run_episode(algo, comps, env, cfg, traj_rng,
                                        agent_rng, ep, episodes, train=train))
    return metrics, comps, env


def model_hit_ratio(trace) -> float:
    """Fraction of requests served from the edge cache.

    trace: iterable of (cached: bool) flags or (cache, model_id) pairs.
    """
    flags = []
    for item in trace:
        if isinstance(item, (bool, np.bool_, int, np.integer)):
            flags.append(bool(item))
        else:
            cache, model_id = item
            flags.append(bool(cache[model_id - 1]))
    if not flags:
        raise ValueError("empty trace")
    return float(np.mean(flags))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def write_metrics_csv(path, metrics: RunMetrics):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in metrics.rows:
            writer.writerow([metrics.algo, metrics.seed, r.episode, r.frame,
                             r.slot, _fmt(r.reward), _fmt(r.utility),
                             _fmt(r.hit_ratio), r.violations, _fmt(r.wall_ms)])


SUMMARY_COLUMNS = ("algo", "seed", "users", "capacity_gb", "episodes",
                   "mean_reward", "final_reward", "mean_utility",
                   "hit_ratio", "mean_wall_ms")


def summary_row(metrics: RunMetrics, cfg: SimConfig, episodes: int):
    ep_rewards = metrics.episode_rewards()
    tail = ep_rewards[-min(10, len(ep_rewards)):]
    return [metrics.algo, metrics.seed, cfg.users, _fmt(cfg.capacity_gb),
            episodes, _fmt(float(ep_rewards.mean())),
            _fmt(float(tail.mean())), _fmt(metrics.mean_utility()),
            _fmt(metrics.hit_ratio()),
            _fmt(float(np.mean([r.wall_ms for r in metrics.rows])))]


def write_summary_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# hand-rolled SVG line charts (CSV stays the ground truth)
# ---------------------------------------------------------------------------

def svg_line_chart(series: dict, title: str, x_label: str, y_label: str,
                   width: int = 640, height: int = 400) -> str:
    """Self-contained SVG with axes and one polyline per series."""
    pad = 60
    xs_all = [x for pts in series.values() for x, _ in pts]
    ys_all = [y for pts in series.values() for _, y in pts]
    if not xs_all:
        raise ValueError("nothing to plot")
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def sx(x):
        return pad + (x - x_lo) / x_span * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_lo) / y_span * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" '
        f'font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
        f'stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 15}" text-anchor="middle" '
        f'font-size="12">{x_label}</text>',
        f'<text x="15" y="{height / 2:.0f}" font-size="12" '
        f'transform="rotate(-90 15 {height / 2:.0f})" '
        f'text-anchor="middle">{y_label}</text>',
        f'<text x="{pad}" y="{height - pad + 15}" font-size="10">{_fmt(float(x_lo))}</text>',
        f'<text x="{width - pad}" y="{height - pad + 15}" font-size="10" '
        f'text-anchor="end">{_fmt(float(x_hi))}</text>',
        f'<text x="{pad - 5}" y="{height - pad}" font-size="10" '
        f'text-anchor="end">{_fmt(float(y_lo))}</text>',
        f'<text x="{pad - 5}" y="{pad}" font-size="10" '
        f'text-anchor="end">{_fmt(float(y_hi))}</text>',
    ]
    for i, (name, pts) in enumerate(series.items()):
        color = colors[i % len(colors)]
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in sorted(pts))
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="1.5" points="{path}"/>')
        parts.append(f'<text x="{width - pad + 5}" y="{pad + 15 * i}" '
                     f'font-size="11" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

def run_experiment(cfg: SimConfig, algos, seeds, out_dir, episodes=None,
                   users_sweep=None, capacity_sweep=None, plot=False,
                   train=True) -> list:
    """Execute (algos x sweep x seeds); write per-run metrics plus a summary.

    Returns the summary rows. Sweep axes default to the configured
    single point.
    """
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.echo.json"), "w") as fh:
        fh.write(cfg.to_json())
    users_axis = users_sweep or [cfg.users]
    capacity_axis = capacity_sweep or [cfg.capacity_gb]
    summary = []
    reward_series = {}
    for algo in algos:
        for users in users_axis:
            for capacity in capacity_axis:
                run_cfg = cfg.replace(users=users, capacity_gb=capacity)
                for seed in seeds:
                    metrics, _, _ = run_training(algo, run_cfg, seed,
                                                 episodes=episodes,
                                                 train=train)
                    tag = f"{algo}_u{users}_c{capacity:g}_s{seed}"
                    write_metrics_csv(
                        os.path.join(out_dir, f"metrics_{tag}.csv"), metrics)
                    n_eps = episodes if episodes is not None else run_cfg.episodes
                    summary.append(summary_row(metrics, run_cfg, n_eps))
                    reward_series[tag] = [
                        (float(i), float(v))
                        for i, v in enumerate(metrics.episode_rewards())]
    write_summary_csv(os.path.join(out_dir, "summary.csv"), summary)
    if plot:
        svg = svg_line_chart(reward_series, "Episodic reward", "episode",
                             "mean slot reward")
        with open(os.path.join(out_dir, "reward.svg"), "w") as fh:
            fh.write(svg)
    return summary
