"""The two learners: diffusion-actor DDPG for per-slot resource allocation
and a double DQN for per-frame model caching, plus the action amenders
and replay buffers they share with the baselines.
"""
from __future__ import annotations

import numpy as np

from . import diffusion, neural
from .config import SimConfig
from .env import MB_TO_BITS, Allocation, GenAiModelSpec, UserSnapshot
from .neural import (AdamState, DenseNet, adam_step, backward, forward,
                     init_dense, sigmoid, sigmoid_grad, soft_update)


# ---------------------------------------------------------------------------
# observations and amenders
# ---------------------------------------------------------------------------

def build_slot_state(snapshots: list[UserSnapshot], cache: np.ndarray,
                     specs: list[GenAiModelSpec], cfg: SimConfig) -> np.ndarray:
    """4U+M observation: [h, phi, rho, d_in, d_out], each block normalized.

    Channel gains are log10-compressed relative to 1e-9 (raw gains span
    ten orders of magnitude); model indices map to m/M; data sizes are
    min-max normalized by their configured ranges.
    """
    u = len(snapshots)
    h = np.array([np.log10(max(s.channel_gain, 1e-30) / 1e-9) for s in snapshots])
    phi = np.array([s.request.model_id / cfg.model_count for s in snapshots])
    lo_in, hi_in = (v * MB_TO_BITS for v in cfg.d_in_mb_range)
    lo_out, hi_out = (v * MB_TO_BITS for v in cfg.d_out_mb_range)
    d_in = np.array([(s.request.d_in_bits - lo_in) / (hi_in - lo_in)
                     for s in snapshots])
    d_out = np.array([(specs[s.request.model_id - 1].d_out_bits - lo_out)
                      / (hi_out - lo_out) for s in snapshots])
    state = np.concatenate([h, phi, np.asarray(cache, dtype=float), d_in, d_out])
    assert state.shape == (4 * u + cfg.model_count,)
    return state


def amend_continuous(raw: np.ndarray, cache: np.ndarray,
                     model_ids: list[int]) -> Allocation:
    """Project raw (b~, xi~) in [0,1]^{2U} onto the feasible set.

    b is normalized to sum to 1 (equal split if the raw block is all
    zero); xi is masked to users whose model is cached, then normalized
    over the masked set, falling back to all-zero when the masked sum
    vanishes.
    """
    raw = np.asarray(raw, dtype=float)
    u = raw.size // 2
    b_raw, xi_raw = raw[:u], raw[u:]
    b_sum = b_raw.sum()
    b = b_raw / b_sum if b_sum > 0 else np.full(u, 1.0 / u)
    mask = np.array([bool(cache[m - 1]) for m in model_ids], dtype=float)
    masked = xi_raw * mask
    m_sum = masked.sum()
    xi = masked / m_sum if m_sum > 0 else np.zeros(u)
    return Allocation(b=b, xi=xi)


def amend_from_state(raw: np.ndarray, state: np.ndarray, users: int,
                     model_count: int) -> Allocation:
    """Amend using the phi and rho blocks embedded in a slot state."""
    phi = state[users:2 * users]
    cache = state[2 * users:2 * users + model_count]
    model_ids = [int(round(p * model_count)) for p in phi]
    return amend_continuous(raw, cache, model_ids)


def amend_batch(raw: np.ndarray, states: np.ndarray, users: int,
                model_count: int) -> np.ndarray:
    """Row-wise amend_from_state over a batch; returns (n, 2U) [b, xi]."""
    raw = np.asarray(raw, dtype=float)
    states = np.asarray(states, dtype=float)
    n, u = raw.shape[0], users
    phi = states[:, u:2 * u]
    cache = states[:, 2 * u:2 * u + model_count]
    ids = np.rint(phi * model_count).astype(int)
    mask = cache[np.arange(n)[:, None], ids - 1]
    b_raw, xi_raw = raw[:, :u], raw[:, u:]
    b_sum = b_raw.sum(axis=1, keepdims=True)
    b = np.where(b_sum > 0, np.divide(b_raw, b_sum, where=b_sum > 0),
                 1.0 / u)
    masked = xi_raw * mask
    m_sum = masked.sum(axis=1, keepdims=True)
    xi = np.where(m_sum > 0, np.divide(masked, m_sum, where=m_sum > 0), 0.0)
    return np.concatenate([b, xi], axis=1)


def decode_caching_action(action: int, model_count: int) -> np.ndarray:
    """Binary expansion of the action index; MSB is model 1."""
    if not (0 <= action < 2 ** model_count):
        raise ValueError("caching action out of range")
    return np.array([(action >> (model_count - m)) & 1
                     for m in range(1, model_count + 1)], dtype=float)


def frame_reward(slot_rewards, cache: np.ndarray, specs: list[GenAiModelSpec],
                 cfg: SimConfig) -> float:
    """Mean of the frame's slot rewards minus the cache-capacity penalty.

    With frame_reward_paper_sign the mean enters negated, reproducing
    the printed formula (which flips the optimization direction).
    """
    mean = float(np.mean(slot_rewards))
    if cfg.frame_reward_paper_sign:
        mean = -mean
    used = sum(s.storage_gb for s, flag in zip(specs, cache) if flag)
    penalty = cfg.capacity_penalty if used > cfg.capacity_gb else 0.0
    return mean - penalty


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

class ReplayBuffer:
    """Fixed-capacity ring buffer of transition tuples."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items = []
        self._cursor = 0

    def push(self, item):
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._cursor] = item
        self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, rng, n: int):
        if n > len(self._items):
            raise ValueError("not enough transitions to sample")
        idx = rng.integers(len(self._items), size=n)
        return [self._items[i] for i in idx]

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)


# ---------------------------------------------------------------------------
# D3PG (diffusion actor + MLP critic)
# ---------------------------------------------------------------------------

class D3PGAgent:
    """DDPG whose actor is a conditional reverse-diffusion sampler."""

    def __init__(self, cfg: SimConfig, rng):
        self.cfg = cfg
        self.users = cfg.users
        self.state_dim = 4 * cfg.users + cfg.model_count
        self.action_dim = 2 * cfg.users
        self.schedule = diffusion.build_schedule(cfg.denoise_steps,
                                                 cfg.beta_min, cfg.beta_max)
        self._build_actor(rng)
        self.critic = init_dense(
            [self.state_dim + self.action_dim, *cfg.critic_hidden, 1], rng)
        self.critic_target = self.critic.clone()
        self.critic_adam = AdamState(self.critic, cfg.learning_rate)
        self.replay = ReplayBuffer(cfg.replay_slot)
        self.min_replay = cfg.warmup_batches * cfg.batch_slot

    def _build_actor(self, rng):
        self.actor = diffusion.Denoiser(self.action_dim, self.state_dim,
                                        self.cfg.denoise_steps,
                                        self.cfg.actor_hidden, rng)
        self.actor_target = self.actor.clone()
        self.actor_adam = AdamState(self.actor.net, self.cfg.learning_rate)

    # --- policy hooks (overridden by the MLP-actor baseline) ---

    @property
    def _x_clip(self):
        return self.cfg.actor_x_clip if self.cfg.actor_x_clip > 0 else None

    def _policy(self, states, rng, deterministic, target=False):
        net = self.actor_target if target else self.actor
        return diffusion.sample_action(net, states, self.schedule, rng,
                                       deterministic=deterministic,
                                       x_clip=self._x_clip)

    def _policy_with_cache(self, states, rng):
        return diffusion.sample_action(self.actor, states, self.schedule, rng,
                                       deterministic=False, want_cache=True,
                                       x_clip=self._x_clip)

    def _actor_gradient(self, cache, dq_da):
        return diffusion.chain_gradient(self.actor, cache, self.schedule, dq_da)

    def _actor_params(self):
        return self.actor.net

    def _actor_target_update(self):
        soft_update(self.actor_target.net, self.actor.net,
                    self.cfg.target_rate_slot)

    # --- public API ---

    def act(self, state, rng, explore_sigma: float = 0.0) -> np.ndarray:
        """Raw action in [0,1]^{2U}; pass through an amender before use."""
        raw = self._policy(state, rng, deterministic=explore_sigma == 0.0)
        if explore_sigma > 0.0:
            # Clip to the policy's reachable range so exploration cannot
            # produce an exact-zero allocation share.
            lo = sigmoid(-self._x_clip) if self._x_clip else 1e-3
            raw = np.clip(raw + rng.normal(0.0, explore_sigma, raw.shape),
                          lo, 1.0 - lo)
        return raw

    def remember(self, state, action, reward, next_state):
        self.replay.push((np.asarray(state, dtype=float),
                          np.asarray(action, dtype=float),
                          float(reward),
                          np.asarray(next_state, dtype=float)))

    def train_step(self, rng):
        """One critic + actor update from replay; None while warming up."""
        cfg = self.cfg
        if len(self.replay) < max(self.min_replay, cfg.batch_slot):
            return None
        batch = self.replay.sample(rng, cfg.batch_slot)
        s = np.stack([b[0] for b in batch])
        a = np.stack([b[1] for b in batch])
        r = np.array([b[2] for b in batch])
        s2 = np.stack([b[3] for b in batch])
        e = cfg.batch_slot

        # Critic: TD target via target actor (deterministic) + target critic.
        a2_raw = self._policy(s2, rng, deterministic=True, target=True)
        a2 = amend_batch(a2_raw, s2, self.users, cfg.model_count)
        q_next, _ = forward(self.critic_target, np.concatenate([s2, a2], axis=1))
        y_hat = r + cfg.discount_slot * q_next[:, 0]
        q_pred, ccache = forward(self.critic, np.concatenate([s, a], axis=1))
        diff = q_pred[:, 0] - y_hat
        critic_loss = float(0.5 * np.mean(diff ** 2))
        gout = (diff / e)[:, None]
        cgrads, _ = backward(self.critic, ccache, gout)
        adam_step(self.critic_adam, self.critic, cgrads)

        # Actor: ascend mean Q over fresh (frozen-noise) policy samples.
        a_pi, acache = self._policy_with_cache(s, rng)
        q_pi, qcache = forward(self.critic, np.concatenate([s, a_pi], axis=1))
        actor_objective = float(np.mean(q_pi))
        _, gin = backward(self.critic, qcache, np.full((e, 1), 1.0 / e))
        dq_da = gin[:, self.state_dim:]
        agrads = self._actor_gradient(acache, dq_da)
        neg = [(-gw, -gb) for gw, gb in agrads]
        adam_step(self.actor_adam, self._actor_params(), neg)

        self._actor_target_update()
        soft_update(self.critic_target, self.critic, cfg.target_rate_slot)
        return critic_loss, actor_objective


def _concat_alloc(alloc: Allocation) -> np.ndarray:
    return np.concatenate([alloc.b, alloc.xi])


# ---------------------------------------------------------------------------
# DDQN (frame-level caching)
# ---------------------------------------------------------------------------

def double_q_targets(q_online_next: np.ndarray, q_target_next: np.ndarray,
                     rewards: np.ndarray, discount: float) -> np.ndarray:
    """y = r + discount * Q_target(s', argmax_a Q_online(s', a))."""
    best = np.argmax(q_online_next, axis=1)
    return rewards + discount * q_target_next[np.arange(len(rewards)), best]


class DDQNAgent:
    """Double DQN over the 2^M caching actions.

    The Q-net scores one (gamma one-hot, cache bits) pair at a time, as
    the frame state has only J values while the action space is huge;
    argmax batches all 2^M bit patterns through the net.
    """

    def __init__(self, cfg: SimConfig, rng):
        self.cfg = cfg
        self.j = len(cfg.gamma_states)
        self.m = cfg.model_count
        self.n_actions = 2 ** cfg.model_count
        self.q = init_dense([self.j + self.m, *cfg.q_hidden, 1], rng)
        self.q_target = self.q.clone()
        self.adam = AdamState(self.q, cfg.learning_rate)
        self.replay = ReplayBuffer(cfg.replay_frame)
        self.min_replay = cfg.warmup_batches_frame * cfg.batch_frame
        self._bits = np.array([decode_caching_action(a, self.m)
                               for a in range(self.n_actions)])

    def _inputs(self, state_idx, actions):
        onehot = np.zeros((len(actions), self.j))
        onehot[:, state_idx] = 1.0
        return np.concatenate([onehot, self._bits[actions]], axis=1)

    def q_values(self, net: DenseNet, state_idx: int) -> np.ndarray:
        """Q(s, a) for every caching action, one forward batch."""
        out, _ = forward(net, self._inputs(state_idx, np.arange(self.n_actions)))
        return out[:, 0]

    def act(self, state_idx: int, rng, eps_greedy: float) -> int:
        if rng.random() < eps_greedy:
            return int(rng.integers(self.n_actions))
        return int(np.argmax(self.q_values(self.q, state_idx)))

    def remember(self, state_idx, action, reward, next_state_idx):
        self.replay.push((int(state_idx), int(action), float(reward),
                          int(next_state_idx)))

    def train_step(self, rng):
        cfg = self.cfg
        if len(self.replay) < max(self.min_replay, cfg.batch_frame):
            return None
        batch = self.replay.sample(rng, cfg.batch_frame)
        s = np.array([b[0] for b in batch])
        a = np.array([b[1] for b in batch])
        r = np.array([b[2] for b in batch])
        s2 = np.array([b[3] for b in batch])
        f = cfg.batch_frame

        # Per distinct next state, score all actions with both nets.
        y_hat = np.empty(f)
        for idx in np.unique(s2):
            sel = s2 == idx
            q_on = self.q_values(self.q, int(idx))
            best = int(np.argmax(q_on))
            q_tg = self.q_values(self.q_target, int(idx))
            y_hat[sel] = r[sel] + cfg.discount_frame * q_tg[best]

        inputs = self._stack_inputs(s, a)
        q_pred, cache = forward(self.q, inputs)
        diff = q_pred[:, 0] - y_hat
        loss = float(0.5 * np.mean(diff ** 2))
        grads, _ = backward(self.q, cache, (diff / f)[:, None])
        adam_step(self.adam, self.q, grads)
        soft_update(self.q_target, self.q, cfg.target_rate_frame)
        return loss

    def _stack_inputs(self, state_idx: np.ndarray, actions: np.ndarray):
        onehot = np.zeros((len(actions), self.j))
        onehot[np.arange(len(actions)), state_idx] = 1.0
        return np.concatenate([onehot, self._bits[actions]], axis=1)
