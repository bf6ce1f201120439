"""Simulation configuration: every table parameter plus algorithm hyperparameters.

A (seed, SimConfig) pair fully determines a run. The config is a flat
dataclass so it serializes to/from JSON without surprises.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field


def _gamma_transition():
    return [[0.6, 0.2, 0.2],
            [0.1, 0.7, 0.2],
            [0.2, 0.3, 0.5]]


def _mobility_transition():
    return [[0.6, 0.1, 0.3],
            [0.3, 0.6, 0.1],
            [0.1, 0.3, 0.6]]


@dataclass
class SimConfig:
    # --- timescales ---
    frames: int = 10                  # T, frames per episode
    slots: int = 10                   # K, slots per frame
    slot_seconds: float = 20.0        # tau, deadline per slot
    episodes: int = 500               # H

    # --- network layout ---
    users: int = 10                   # U
    area_m: float = 250.0             # square side length, BS at center
    model_count: int = 10             # M

    # --- radio / backhaul ---
    w_up_hz: float = 20e6
    w_dw_hz: float = 40e6
    p_user_dbm: float = 23.0
    p_bs_dbm: float = 43.0
    n0_dbm_hz: float = -176.0
    r_bc_bps: float = 100e6           # BS -> cloud
    r_cb_bps: float = 100e6           # cloud -> BS

    # --- service model ---
    edge_denoise_steps: float = 1000.0    # L-script, denoising-step budget at the BS
    capacity_gb: float = 20.0             # C
    alpha: float = 0.7                    # delay/quality preference weight
    deadline_penalty: float = 10.0        # chi, slot reward penalty
    capacity_penalty: float = 100.0       # Xi, frame reward penalty
    d_in_mb_range: tuple[float, float] = (5.0, 10.0)
    d_out_mb_range: tuple[float, float] = (5.0, 10.0)

    # --- per-model constant ranges (drawn once per run) ---
    a1_range: tuple[float, float] = (50.0, 100.0)
    a2_range: tuple[float, float] = (100.0, 150.0)
    a3_range: tuple[float, float] = (150.0, 200.0)
    a4_range: tuple[float, float] = (0.0, 50.0)
    b1_range: tuple[float, float] = (0.0, 0.5)
    b2_range: tuple[float, float] = (0.0, 10.0)
    storage_gb_range: tuple[float, float] = (2.0, 10.0)

    # --- stochastic processes ---
    gamma_states: tuple[float, ...] = (0.2, 0.5, 0.7)
    gamma_transition: list = field(default_factory=_gamma_transition)
    mobility_states: tuple[str, ...] = ("uniform", "concentrated", "boundary")
    mobility_transition: list = field(default_factory=_mobility_transition)
    concentrated_sigma_m: float = 25.0
    boundary_band_m: float = 25.0

    # --- learning (desk-scale defaults; the paper's 1e-6 is selectable) ---
    learning_rate: float = 1e-3
    discount_slot: float = 0.95       # omega, D3PG
    discount_frame: float = 0.95      # rho, DDQN
    batch_slot: int = 32              # E
    batch_frame: int = 64             # F
    replay_slot: int = 100_000
    replay_frame: int = 10_000
    warmup_batches: int = 10
    warmup_batches_frame: int = 10
    target_rate_slot: float = 0.005   # epsilon, D3PG soft update
    target_rate_frame: float = 0.005  # kappa, DDQN soft update
    actor_hidden: tuple[int, ...] = (128, 128)
    critic_hidden: tuple[int, ...] = (128, 128)
    q_hidden: tuple[int, ...] = (64, 64)

    # --- diffusion actor ---
    denoise_steps: int = 5            # L, reverse-chain length
    beta_min: float = 0.1
    beta_max: float = 10.0
    actor_x_clip: float = 3.0         # per-step chain clamp; 0 disables

    # --- exploration ---
    sigma_expl_start: float = 0.1
    sigma_expl_end: float = 0.01
    eps_greedy_start: float = 1.0
    eps_greedy_end: float = 0.05
    eps_greedy_frac: float = 0.6      # fraction of episodes over which eps decays

    # --- genetic algorithm (SCHRS) ---
    ga_population: int = 40
    ga_generations: int = 60
    ga_crossover_prob: float = 0.9
    ga_eta_crossover: float = 15.0
    ga_mutation_prob: float | None = None   # None -> 1/(2U)
    ga_eta_mutation: float = 20.0

    # --- conventions ---
    frame_reward_paper_sign: bool = False   # True reproduces Eq. (32) as printed
    record_timing: bool = False             # wall_ms column stays 0.0 when False
    seed: int = 0

    def validate(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1]")
        for name in ("frames", "slots", "episodes", "users", "model_count",
                     "denoise_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("slot_seconds", "area_m", "w_up_hz", "w_dw_hz",
                     "r_bc_bps", "r_cb_bps", "edge_denoise_steps",
                     "capacity_gb", "learning_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.beta_min < self.beta_max):
            raise ValueError("need 0 < beta_min < beta_max")
        for mat, n in ((self.gamma_transition, len(self.gamma_states)),
                       (self.mobility_transition, len(self.mobility_states))):
            if len(mat) != n:
                raise ValueError("transition matrix shape mismatch")
            for row in mat:
                if len(row) != n or any(p < 0 for p in row):
                    raise ValueError("transition rows must be non-negative")
                if abs(sum(row) - 1.0) > 1e-12:
                    raise ValueError("transition rows must sum to 1")
        return self

    @property
    def ga_pm(self) -> float:
        if self.ga_mutation_prob is not None:
            return self.ga_mutation_prob
        return 1.0 / (2 * self.users)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        raw = json.loads(text)
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(raw) - set(fields)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, val in raw.items():
            if isinstance(val, list) and not key.endswith("transition"):
                val = tuple(val)
            kwargs[key] = val
        return cls(**kwargs).validate()

    def replace(self, **kw) -> "SimConfig":
        return dataclasses.replace(self, **kw)
