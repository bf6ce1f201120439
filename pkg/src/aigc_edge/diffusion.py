"""Conditional reverse-diffusion sampler used as the continuous actor.

The denoiser is a dense net taking (noisy action, one-hot step index,
observation) and predicting the noise to strip at that step. Sampling
runs the reverse chain from x^L ~ N(0, I) down to x^0, then squashes to
(0, 1) with a logistic so the policy gradient stays informative at the
box edges. chain_gradient() backpropagates through the whole chain with
the injected noises held fixed (pathwise reparameterized derivative).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import neural
from .neural import DenseNet, backward, forward, init_dense, sigmoid, sigmoid_grad


# Pre-squash magnitude above which float64 sigmoid rounds to exactly 0 or 1.
_SQUASH_LIMIT = 36.0


@dataclass
class NoiseSchedule:
    """beta / alpha / alpha-bar / posterior-variance tables, index l-1."""
    step_count: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_bar: np.ndarray


def build_schedule(step_count: int, beta_min: float, beta_max: float) -> NoiseSchedule:
    """Exponential-in-l diffusion-rate schedule with alpha_bar_0 = 1."""
    if step_count < 1:
        raise ValueError("step_count must be >= 1")
    if not (0.0 < beta_min < beta_max):
        raise ValueError("need 0 < beta_min < beta_max")
    L = step_count
    l = np.arange(1, L + 1, dtype=float)
    beta = 1.0 - np.exp(-beta_min / L - (2 * l - 1) / (2 * L * L) * (beta_max - beta_min))
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    prev_bar = np.concatenate(([1.0], alpha_bar[:-1]))
    beta_bar = (1.0 - prev_bar) / (1.0 - alpha_bar) * beta
    return NoiseSchedule(L, beta, alpha, alpha_bar, beta_bar)


def forward_marginal(x0, l: int, schedule: NoiseSchedule, noise):
    """Closed-form noising marginal; test oracle only (never trained on)."""
    if not (1 <= l <= schedule.step_count):
        raise ValueError("step index out of range")
    ab = schedule.alpha_bar[l - 1]
    return np.sqrt(ab) * np.asarray(x0) + np.sqrt(1.0 - ab) * np.asarray(noise)


class Denoiser:
    """Noise-prediction net conditioned on the step index and observation."""

    def __init__(self, action_dim: int, state_dim: int, step_count: int,
                 hidden, rng):
        self.action_dim = action_dim
        self.state_dim = state_dim
        self.step_count = step_count
        dims = [action_dim + step_count + state_dim, *hidden, action_dim]
        self.net = init_dense(dims, rng)

    def clone(self):
        import copy
        return copy.deepcopy(self)

    def _inputs(self, x, l, state):
        x = np.atleast_2d(x)
        state = np.atleast_2d(state)
        onehot = np.zeros((x.shape[0], self.step_count))
        onehot[:, l - 1] = 1.0
        return np.concatenate([x, onehot, state], axis=1)

    def predict(self, x, l: int, state):
        """Predicted noise eps_hat at step l; returns (eps_hat, net cache)."""
        return forward(self.net, self._inputs(x, l, state))


def reverse_mean(denoiser: Denoiser, x_l, l: int, state,
                 schedule: NoiseSchedule):
    """Posterior mean of the reverse step at l (2D in, 2D out)."""
    if not (1 <= l <= schedule.step_count):
        raise ValueError("step index out of range")
    eps_hat, _ = denoiser.predict(x_l, l, state)
    a = schedule.alpha[l - 1]
    ab = schedule.alpha_bar[l - 1]
    return (np.atleast_2d(x_l) - (1.0 - a) / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(a)


@dataclass
class ChainCache:
    """Everything needed to re-run the chain backwards with frozen noise."""
    x_steps: list          # x^L .. x^1, each (batch, action_dim)
    net_caches: list       # denoiser forward caches, l = L .. 1
    clip_masks: list       # 1 where the step output was not clamped
    x0: np.ndarray         # pre-squash
    action: np.ndarray     # post-squash


def sample_action(denoiser: Denoiser, state, schedule: NoiseSchedule,
                  rng=None, deterministic: bool = False, x_init=None,
                  want_cache: bool = False, x_clip: float | None = None):
    """Run the reverse chain; returns actions in (0, 1).

    deterministic zeroes the per-step noise so the result is a pure
    function of (parameters, state, x^L). x_init overrides the initial
    Gaussian draw (used by tests and by frozen-noise gradients). With
    x_clip set, each step output is clamped to [-x_clip, x_clip]; an
    untrained denoiser otherwise expands the chain by prod(1/sqrt(a_l))
    and saturates the squash.
    """
    state2 = np.atleast_2d(np.asarray(state, dtype=float))
    squeeze = np.asarray(state).ndim == 1
    batch = state2.shape[0]
    if x_init is not None:
        x = np.atleast_2d(np.asarray(x_init, dtype=float)).copy()
    else:
        if rng is None:
            raise ValueError("need rng when x_init is not given")
        x = rng.standard_normal((batch, denoiser.action_dim))
    x_steps, net_caches, clip_masks = [], [], []
    for l in range(schedule.step_count, 0, -1):
        x_steps.append(x)
        eps_hat, cache = denoiser.predict(x, l, state2)
        net_caches.append(cache)
        a = schedule.alpha[l - 1]
        ab = schedule.alpha_bar[l - 1]
        mu = (x - (1.0 - a) / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(a)
        sd = np.sqrt(schedule.beta_bar[l - 1])
        if deterministic or l == 1 or sd == 0.0:
            x = mu
        else:
            x = mu + sd * rng.standard_normal(x.shape)
        if x_clip is not None:
            inside = (np.abs(x) < x_clip).astype(float)
            x = np.clip(x, -x_clip, x_clip)
        else:
            inside = np.ones_like(x)
        clip_masks.append(inside)
    # |x| <= 36 keeps the logistic strictly inside (0, 1) in float64; an
    # unclipped untrained chain can otherwise saturate the squash exactly.
    np.clip(x, -_SQUASH_LIMIT, _SQUASH_LIMIT, out=x)
    action = sigmoid(x)
    if squeeze:
        action_out = action[0]
    else:
        action_out = action
    if want_cache:
        return action_out, ChainCache(x_steps, net_caches, clip_masks, x, action)
    return action_out


def chain_gradient(denoiser: Denoiser, cache: ChainCache, schedule: NoiseSchedule,
                   grad_action):
    """d(scalar)/d(theta) through the full chain, noises frozen.

    grad_action is d(scalar)/d(action) with the same shape as
    cache.action; parameter gradients are summed over the batch.
    """
    if len(cache.net_caches) != schedule.step_count:
        raise ValueError("cache does not match schedule length")
    g = np.atleast_2d(np.asarray(grad_action, dtype=float)) * sigmoid_grad(cache.action)
    pgrads = neural.zero_grads(denoiser.net)
    # Walk steps in sampling order reversed: l = 1 .. L.
    for idx in range(schedule.step_count - 1, -1, -1):
        l = schedule.step_count - idx
        a = schedule.alpha[l - 1]
        ab = schedule.alpha_bar[l - 1]
        coef = (1.0 - a) / np.sqrt(1.0 - ab)
        g = g * cache.clip_masks[idx]
        # x_{l-1} = (x_l - coef * eps_hat(x_l, l, s)) / sqrt(a) + noise term
        g_eps = -coef / np.sqrt(a) * g
        step_grads, g_in = backward(denoiser.net, cache.net_caches[idx], g_eps)
        neural.add_grads(pgrads, step_grads)
        g = g / np.sqrt(a) + g_in[:, :denoiser.action_dim]
    return pgrads
