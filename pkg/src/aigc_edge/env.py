"""Edge-network physics: channels, delays, generation quality, rewards.

Everything here is a pure function of its inputs plus an injected RNG;
no learning code. EdgeEnv bundles the stochastic processes (popularity
and mobility Markov chains, fading, request arrivals) behind a seeded
state-transition interface consumed by the harness.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig

MB_TO_BITS = 8e6
# Finite stand-in for an infinite delay (zero-rate link); keeps reward
# arithmetic finite while guaranteeing a deadline violation.
DELAY_SENTINEL = 1e6


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass
class GenAiModelSpec:
    """Per-model constants: storage cost, quality curve, delay curve."""
    model_id: int            # 1-based index
    storage_gb: float
    a1: float                # steps where quality starts improving
    a2: float                # worst TV value
    a3: float                # steps where quality saturates
    a4: float                # best TV value
    b1: float                # delay slope (s/step)
    b2: float                # delay intercept (s)
    d_out_bits: float

    def __post_init__(self):
        if not (self.a1 < self.a3 and self.a4 < self.a2):
            raise ValueError("model spec needs a1 < a3 and a4 < a2")
        if min(self.b1, self.b2, self.storage_gb) <= 0:
            raise ValueError("b1, b2, storage_gb must be positive")


@dataclass
class MarkovChain:
    """Finite-state chain with a row-stochastic transition matrix."""
    states: list
    transition: np.ndarray
    current: int = 0

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=float)
        n = len(self.states)
        if self.transition.shape != (n, n):
            raise ValueError("transition matrix shape mismatch")
        if np.any(self.transition < 0):
            raise ValueError("negative transition probability")
        if np.max(np.abs(self.transition.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("transition rows must sum to 1")

    @property
    def value(self):
        return self.states[self.current]


@dataclass
class ServiceRequest:
    user_id: int
    model_id: int            # 1-based
    d_in_bits: float


@dataclass
class UserSnapshot:
    position: tuple
    fading_power: float
    channel_gain: float
    request: ServiceRequest


@dataclass
class Allocation:
    b: np.ndarray            # bandwidth ratios, length U
    xi: np.ndarray           # denoising-step ratios, length U


@dataclass
class SlotOutcome:
    d_up: np.ndarray
    d_dw: np.ndarray
    d_gt: np.ndarray
    d_tl: np.ndarray
    b_gt: np.ndarray         # TV values
    g: np.ndarray            # per-user utilities
    deadline_violated: np.ndarray
    mean_utility: float
    slot_reward: float
    hit_count: int
    hit_flags: np.ndarray = field(default=None)


# ---------------------------------------------------------------------------
# stochastic processes
# ---------------------------------------------------------------------------

def zipf_pmf(gamma: float, m_count: int) -> np.ndarray:
    """Zipf popularity over model ranks 1..M with skewness gamma."""
    if m_count < 1:
        raise ValueError("m_count must be >= 1")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    weights = np.arange(1, m_count + 1, dtype=float) ** (-gamma)
    return weights / weights.sum()


def step_markov(chain: MarkovChain, rng) -> int:
    """Advance the chain one step via inverse-CDF on a single uniform draw."""
    row = chain.transition[chain.current]
    cum = np.cumsum(row)
    u = rng.random()
    chain.current = int(np.searchsorted(cum, u, side="left"))
    return chain.current


def sample_positions(state_label: str, user_count: int, area_m: float, rng,
                     sigma_m: float = 25.0, band_m: float = 25.0) -> np.ndarray:
    """Sample (x, y) user positions for the given mobility regime.

    uniform: i.i.d. uniform over the square; concentrated: isotropic
    Gaussian at the center truncated to the square by rejection;
    boundary: uniform over the band of width band_m along the perimeter.
    """
    if user_count < 1:
        raise ValueError("user_count must be >= 1")
    if state_label == "uniform":
        return rng.uniform(0.0, area_m, size=(user_count, 2))
    if state_label == "concentrated":
        center = area_m / 2.0
        out = np.empty((user_count, 2))
        filled = 0
        while filled < user_count:
            cand = rng.normal(center, sigma_m, size=(user_count, 2))
            ok = np.all((cand >= 0.0) & (cand <= area_m), axis=1)
            take = cand[ok][:user_count - filled]
            out[filled:filled + len(take)] = take
            filled += len(take)
        return out
    if state_label == "boundary":
        # Split the band into four edge rectangles and pick by area.
        pts = np.empty((user_count, 2))
        inner = area_m - 2 * band_m
        areas = np.array([band_m * area_m, band_m * area_m,
                          band_m * inner, band_m * inner])
        sides = rng.choice(4, size=user_count, p=areas / areas.sum())
        u = rng.uniform(0.0, 1.0, size=(user_count, 2))
        for i, side in enumerate(sides):
            if side == 0:      # bottom strip, full width
                pts[i] = (u[i, 0] * area_m, u[i, 1] * band_m)
            elif side == 1:    # top strip, full width
                pts[i] = (u[i, 0] * area_m, area_m - u[i, 1] * band_m)
            elif side == 2:    # left strip, inner height
                pts[i] = (u[i, 0] * band_m, band_m + u[i, 1] * inner)
            else:              # right strip, inner height
                pts[i] = (area_m - u[i, 0] * band_m, band_m + u[i, 1] * inner)
        return pts
    raise ValueError(f"unknown position label: {state_label}")


# ---------------------------------------------------------------------------
# channel model
# ---------------------------------------------------------------------------

def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def path_loss_db(distance_m: float) -> float:
    """3GPP macro path loss; the distance unit of the model is kilometers."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    return -128.1 - 37.6 * np.log10(distance_m / 1000.0)


def uplink_rate(b_u, channel_gain, cfg: SimConfig):
    """Shannon uplink rate (bits/s) for bandwidth share b_u.

    At b_u = 0 the expression is 0/0; the continuity limit is 0.
    Accepts scalars or aligned arrays.
    """
    b_u = np.asarray(b_u, dtype=float)
    channel_gain = np.asarray(channel_gain, dtype=float)
    if np.any(b_u < 0) or np.any(channel_gain <= 0):
        raise ValueError("need b_u >= 0 and channel_gain > 0")
    p = dbm_to_watt(cfg.p_user_dbm)
    n0 = dbm_to_watt(cfg.n0_dbm_hz)
    bw = b_u * cfg.w_up_hz
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = p * channel_gain / (n0 * bw)
        rate = np.where(bw > 0, bw * np.log2(1.0 + snr), 0.0)
    return float(rate) if rate.ndim == 0 else rate


def downlink_rate(channel_gain, cfg: SimConfig):
    """Shannon downlink rate (bits/s); fixed per-user bandwidth."""
    channel_gain = np.asarray(channel_gain, dtype=float)
    if np.any(channel_gain <= 0):
        raise ValueError("channel_gain must be positive")
    p = dbm_to_watt(cfg.p_bs_dbm)
    n0 = dbm_to_watt(cfg.n0_dbm_hz)
    snr = p * channel_gain / (n0 * cfg.w_dw_hz)
    rate = cfg.w_dw_hz * np.log2(1.0 + snr)
    return float(rate) if rate.ndim == 0 else rate


# ---------------------------------------------------------------------------
# service model
# ---------------------------------------------------------------------------

def service_delays(request: ServiceRequest, cached: bool, b_u: float,
                   xi_u: float, channel_gain: float, spec: GenAiModelSpec,
                   cfg: SimConfig):
    """(d_up, d_dw, d_gt) in seconds for one request.

    Uncached requests pay the backhaul round trip and run at the cloud's
    quality-saturating step count a3.
    """
    r_up = uplink_rate(b_u, channel_gain, cfg)
    r_dw = downlink_rate(channel_gain, cfg)
    d_up = request.d_in_bits / r_up if r_up > 0 else DELAY_SENTINEL
    d_dw = spec.d_out_bits / r_dw if r_dw > 0 else DELAY_SENTINEL
    if cached:
        d_gt = spec.b1 * xi_u * cfg.edge_denoise_steps + spec.b2
    else:
        if xi_u != 0:
            raise ValueError("uncached request must have xi_u = 0")
        d_up = min(d_up + request.d_in_bits / cfg.r_bc_bps, DELAY_SENTINEL)
        d_dw = min(d_dw + spec.d_out_bits / cfg.r_cb_bps, DELAY_SENTINEL)
        d_gt = spec.b1 * spec.a3 + spec.b2
    return d_up, d_dw, d_gt


def gen_quality(xi_u: float, cached: bool, spec: GenAiModelSpec,
                cfg: SimConfig) -> float:
    """TV value of the generated image (lower is better)."""
    if not (0.0 <= xi_u <= 1.0):
        raise ValueError("xi_u must lie in [0, 1]")
    if not cached:
        return spec.a4
    steps = xi_u * cfg.edge_denoise_steps
    if steps <= spec.a1:
        return spec.a2
    if steps >= spec.a3:
        return spec.a4
    return (spec.a4 - spec.a2) / (spec.a3 - spec.a1) * (steps - spec.a1) + spec.a2


def slot_utility_and_reward(g: np.ndarray, d_tl: np.ndarray,
                            cfg: SimConfig) -> tuple[float, float]:
    """Mean utility and the penalized slot reward."""
    violated = d_tl > cfg.slot_seconds
    reward = -float(np.mean(g + violated * cfg.deadline_penalty))
    return float(np.mean(g)), reward


def evaluate_slot(snapshots: list[UserSnapshot], cache: np.ndarray,
                  alloc: Allocation, specs: list[GenAiModelSpec],
                  cfg: SimConfig) -> SlotOutcome:
    """Score one slot: delays, quality, utility, reward, hit count."""
    n = len(snapshots)
    ids = np.fromiter((s.request.model_id - 1 for s in snapshots), int, n)
    gains = np.fromiter((s.channel_gain for s in snapshots), float, n)
    d_in = np.fromiter((s.request.d_in_bits for s in snapshots), float, n)
    a1 = np.fromiter((specs[i].a1 for i in ids), float, n)
    a2 = np.fromiter((specs[i].a2 for i in ids), float, n)
    a3 = np.fromiter((specs[i].a3 for i in ids), float, n)
    a4 = np.fromiter((specs[i].a4 for i in ids), float, n)
    b1 = np.fromiter((specs[i].b1 for i in ids), float, n)
    b2 = np.fromiter((specs[i].b2 for i in ids), float, n)
    d_out = np.fromiter((specs[i].d_out_bits for i in ids), float, n)
    hits = np.asarray(cache, dtype=float)[ids] > 0
    xi = np.where(hits, alloc.xi, 0.0)

    r_up = uplink_rate(alloc.b, gains, cfg)
    r_dw = downlink_rate(gains, cfg)
    with np.errstate(divide="ignore"):
        d_up = np.where(r_up > 0, d_in / np.where(r_up > 0, r_up, 1.0),
                        DELAY_SENTINEL)
        d_dw = np.where(r_dw > 0, d_out / np.where(r_dw > 0, r_dw, 1.0),
                        DELAY_SENTINEL)
    # Uncached requests pay the backhaul round trip and run at the cloud.
    d_up = np.where(hits, d_up,
                    np.minimum(d_up + d_in / cfg.r_bc_bps, DELAY_SENTINEL))
    d_dw = np.where(hits, d_dw,
                    np.minimum(d_dw + d_out / cfg.r_cb_bps, DELAY_SENTINEL))
    d_gt = np.where(hits, b1 * xi * cfg.edge_denoise_steps + b2,
                    b1 * a3 + b2)
    steps = xi * cfg.edge_denoise_steps
    edge_q = np.where(steps <= a1, a2,
                      np.where(steps >= a3, a4,
                               (a4 - a2) / (a3 - a1) * (steps - a1) + a2))
    b_gt = np.where(hits, edge_q, a4)
    d_tl = d_up + d_dw + d_gt
    g = cfg.alpha * d_tl + (1.0 - cfg.alpha) * b_gt
    mean_utility, reward = slot_utility_and_reward(g, d_tl, cfg)
    return SlotOutcome(
        d_up=d_up, d_dw=d_dw, d_gt=d_gt, d_tl=d_tl, b_gt=b_gt, g=g,
        deadline_violated=d_tl > cfg.slot_seconds,
        mean_utility=mean_utility, slot_reward=reward,
        hit_count=int(hits.sum()), hit_flags=hits)


# ---------------------------------------------------------------------------
# feasibility
# ---------------------------------------------------------------------------

def check_feasibility(cache: np.ndarray, alloc: Allocation,
                      specs: list[GenAiModelSpec], model_ids: list[int],
                      cfg: SimConfig) -> dict:
    """Report (satisfied, margin) for constraints 11a-11g.

    margin > 0 means the constraint is violated by that amount.
    """
    cache = np.asarray(cache)
    report = {}
    bad_binary = np.abs(cache * (cache - 1)).max() if cache.size else 0.0
    report["11a"] = (bad_binary == 0, float(bad_binary))
    b_out = max(0.0, float(np.max(np.maximum(alloc.b - 1.0, -alloc.b), initial=0.0)))
    xi_out = max(0.0, float(np.max(np.maximum(alloc.xi - 1.0, -alloc.xi), initial=0.0)))
    report["11b"] = (b_out == 0.0, b_out)
    report["11c"] = (xi_out == 0.0, xi_out)
    used = float(sum(s.storage_gb for s, flag in zip(specs, cache) if flag))
    report["11d"] = (used <= cfg.capacity_gb, max(0.0, used - cfg.capacity_gb))
    b_sum = float(alloc.b.sum())
    xi_sum = float(alloc.xi.sum())
    report["11e"] = (b_sum <= 1.0 + 1e-9, max(0.0, b_sum - 1.0))
    report["11f"] = (xi_sum <= 1.0 + 1e-9, max(0.0, xi_sum - 1.0))
    worst = 0.0
    for xi_u, m in zip(alloc.xi, model_ids):
        if not cache[m - 1]:
            worst = max(worst, float(xi_u))
    report["11g"] = (worst == 0.0, worst)
    return report


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------

def draw_model_specs(cfg: SimConfig, rng) -> list[GenAiModelSpec]:
    """Draw per-model constants once per run (rejection keeps a1<a3, a4<a2)."""
    specs = []
    for m in range(1, cfg.model_count + 1):
        while True:
            a1 = rng.uniform(*cfg.a1_range)
            a2 = rng.uniform(*cfg.a2_range)
            a3 = rng.uniform(*cfg.a3_range)
            a4 = rng.uniform(*cfg.a4_range)
            b1 = rng.uniform(*cfg.b1_range)
            b2 = rng.uniform(*cfg.b2_range)
            if a1 < a3 and a4 < a2 and b1 > 0 and b2 > 0 and a4 > 0:
                break
        specs.append(GenAiModelSpec(
            model_id=m,
            storage_gb=rng.uniform(*cfg.storage_gb_range),
            a1=a1, a2=a2, a3=a3, a4=a4, b1=b1, b2=b2,
            d_out_bits=rng.uniform(*cfg.d_out_mb_range) * MB_TO_BITS))
    return specs


class EdgeEnv:
    """Seeded edge-network simulator advanced frame-by-frame, slot-by-slot."""

    def __init__(self, cfg: SimConfig, build_rng, specs=None):
        self.cfg = cfg
        self.specs = specs if specs is not None else draw_model_specs(cfg, build_rng)
        self.popularity = MarkovChain(list(cfg.gamma_states),
                                      np.asarray(cfg.gamma_transition))
        self.mobility = MarkovChain(list(cfg.mobility_states),
                                    np.asarray(cfg.mobility_transition))
        self._bs_pos = np.array([cfg.area_m / 2.0, cfg.area_m / 2.0])
        self._init_pop = int(build_rng.integers(len(cfg.gamma_states)))
        self._init_mob = int(build_rng.integers(len(cfg.mobility_states)))
        self.reset()

    def reset(self):
        self.popularity.current = self._init_pop
        self.mobility.current = self._init_mob

    def begin_frame(self, rng) -> int:
        """Advance the popularity chain; returns the new gamma-state index."""
        return step_markov(self.popularity, rng)

    @property
    def gamma(self) -> float:
        return float(self.popularity.value)

    def sample_slot(self, rng) -> list[UserSnapshot]:
        """Advance mobility, then draw positions, fading, and requests."""
        cfg = self.cfg
        step_markov(self.mobility, rng)
        positions = sample_positions(self.mobility.value, cfg.users, cfg.area_m,
                                     rng, cfg.concentrated_sigma_m,
                                     cfg.boundary_band_m)
        pmf = zipf_pmf(self.gamma, cfg.model_count)
        models = rng.choice(cfg.model_count, size=cfg.users, p=pmf) + 1
        fading = rng.exponential(1.0, size=cfg.users)
        d_in = rng.uniform(*cfg.d_in_mb_range, size=cfg.users) * MB_TO_BITS
        snaps = []
        for u in range(cfg.users):
            dist = float(np.hypot(*(positions[u] - self._bs_pos)))
            dist = max(dist, 1.0)   # guard a user standing on the BS
            gain = 10.0 ** (path_loss_db(dist) / 10.0) * fading[u]
            snaps.append(UserSnapshot(
                position=(float(positions[u, 0]), float(positions[u, 1])),
                fading_power=float(fading[u]),
                channel_gain=float(gain),
                request=ServiceRequest(user_id=u, model_id=int(models[u]),
                                       d_in_bits=float(d_in[u]))))
        return snaps

    def evaluate_slot(self, snapshots, cache, alloc) -> SlotOutcome:
        return evaluate_slot(snapshots, cache, alloc, self.specs, self.cfg)
