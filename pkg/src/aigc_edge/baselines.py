"""Comparison methods: MLP-actor DDPG, static-cache + genetic search
(SCHRS), and random caching with equal resource splits (RCARS).
"""
from __future__ import annotations

import numpy as np

from . import neural
from .agents import D3PGAgent, amend_continuous
from .config import SimConfig
from .env import Allocation, GenAiModelSpec, evaluate_slot
from .neural import (AdamState, backward, forward, init_dense, sigmoid,
                     sigmoid_grad, soft_update)


# ---------------------------------------------------------------------------
# DDPG-based T2DRL (conventional MLP actor, same shell as D3PG)
# ---------------------------------------------------------------------------

class MlpActor:
    """Dense policy net with a logistic output squash to [0,1]^{2U}."""

    def __init__(self, state_dim, action_dim, hidden, rng):
        self.net = init_dense([state_dim, *hidden, action_dim], rng)

    def clone(self):
        import copy
        return copy.deepcopy(self)

    def forward(self, states):
        out, cache = forward(self.net, np.atleast_2d(states))
        act = sigmoid(out)
        return act, (cache, act)

    def gradient(self, cache, dq_da):
        net_cache, act = cache
        g = np.atleast_2d(dq_da) * sigmoid_grad(act)
        grads, _ = backward(self.net, net_cache, g)
        return grads


class DDPGAgent(D3PGAgent):
    """Same critic/replay/amender plumbing; plain network actor."""

    def _build_actor(self, rng):
        self.actor = MlpActor(self.state_dim, self.action_dim,
                              self.cfg.actor_hidden, rng)
        self.actor_target = self.actor.clone()
        self.actor_adam = AdamState(self.actor.net, self.cfg.learning_rate)

    def _policy(self, states, rng, deterministic, target=False):
        net = self.actor_target if target else self.actor
        act, _ = net.forward(states)
        return act[0] if np.asarray(states).ndim == 1 else act

    def _policy_with_cache(self, states, rng):
        return self.actor.forward(states)

    def _actor_gradient(self, cache, dq_da):
        return self.actor.gradient(cache, dq_da)

    def _actor_params(self):
        return self.actor.net


# ---------------------------------------------------------------------------
# SCHRS: static popularity caching + genetic resource search
# ---------------------------------------------------------------------------

def schrs_cache(specs: list[GenAiModelSpec], cfg: SimConfig) -> np.ndarray:
    """Cache models greedily by ascending index (descending Zipf rank)."""
    cache = np.zeros(cfg.model_count)
    used = 0.0
    for spec in specs:
        if used + spec.storage_gb <= cfg.capacity_gb:
            cache[spec.model_id - 1] = 1.0
            used += spec.storage_gb
    return cache


def sbx_pair(p1: np.ndarray, p2: np.ndarray, eta: float, rng):
    """Simulated binary crossover per gene; children stay in [0,1]."""
    u = rng.uniform(size=p1.shape)
    beta = np.where(u <= 0.5,
                    (2.0 * u) ** (1.0 / (eta + 1.0)),
                    (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0)))
    c1 = 0.5 * ((1.0 + beta) * p1 + (1.0 - beta) * p2)
    c2 = 0.5 * ((1.0 - beta) * p1 + (1.0 + beta) * p2)
    return np.clip(c1, 0.0, 1.0), np.clip(c2, 0.0, 1.0)


def poly_mutate(genes: np.ndarray, prob: float, eta: float, rng) -> np.ndarray:
    """Polynomial mutation on unit-bounded genes."""
    out = genes.copy()
    hit = rng.uniform(size=genes.shape) < prob
    r = rng.uniform(size=genes.shape)
    delta = np.where(r < 0.5,
                     (2.0 * r) ** (1.0 / (eta + 1.0)) - 1.0,
                     1.0 - (2.0 * (1.0 - r)) ** (1.0 / (eta + 1.0)))
    out[hit] = np.clip(out[hit] + delta[hit], 0.0, 1.0)
    return out


def ga_optimize(fitness_fn, gene_count: int, rng, population: int,
                generations: int, p_crossover: float, eta_crossover: float,
                p_mutation: float, eta_mutation: float):
    """Minimize fitness_fn over [0,1]^gene_count.

    Binary tournament selection, SBX, polynomial mutation, one elite.
    Returns (best genes, best fitness).
    """
    if population < 2:
        raise ValueError("population must be >= 2")
    pop = rng.uniform(size=(population, gene_count))
    fit = np.array([fitness_fn(ind) for ind in pop])
    best_i = int(np.argmin(fit))
    best, best_fit = pop[best_i].copy(), float(fit[best_i])
    for _ in range(generations):
        children = [best.copy()]   # elite
        while len(children) < population:
            i1, i2 = rng.integers(population, size=2)
            j1, j2 = rng.integers(population, size=2)
            pa = pop[i1] if fit[i1] <= fit[i2] else pop[i2]
            pb = pop[j1] if fit[j1] <= fit[j2] else pop[j2]
            if rng.random() < p_crossover:
                c1, c2 = sbx_pair(pa, pb, eta_crossover, rng)
            else:
                c1, c2 = pa.copy(), pb.copy()
            children.append(poly_mutate(c1, p_mutation, eta_mutation, rng))
            if len(children) < population:
                children.append(poly_mutate(c2, p_mutation, eta_mutation, rng))
        pop = np.array(children)
        fit = np.array([fitness_fn(ind) for ind in pop])
        gen_best = int(np.argmin(fit))
        if fit[gen_best] < best_fit:
            best, best_fit = pop[gen_best].copy(), float(fit[gen_best])
    return best, best_fit


def slot_objective(snapshots, cache, alloc, specs, cfg: SimConfig) -> float:
    """Penalized slot objective minimized by the GA (= -slot reward)."""
    return -evaluate_slot(snapshots, cache, alloc, specs, cfg).slot_reward


def schrs_allocate(snapshots, cache, specs, cfg: SimConfig, rng) -> Allocation:
    """Per-slot GA search for the resource allocation under a fixed cache."""
    model_ids = [s.request.model_id for s in snapshots]

    def fitness(genes):
        alloc = amend_continuous(genes, cache, model_ids)
        return slot_objective(snapshots, cache, alloc, specs, cfg)

    best, _ = ga_optimize(
        fitness, 2 * cfg.users, rng,
        population=cfg.ga_population, generations=cfg.ga_generations,
        p_crossover=cfg.ga_crossover_prob, eta_crossover=cfg.ga_eta_crossover,
        p_mutation=cfg.ga_pm, eta_mutation=cfg.ga_eta_mutation)
    return amend_continuous(best, cache, model_ids)


# ---------------------------------------------------------------------------
# RCARS: random caching, equal splits
# ---------------------------------------------------------------------------

def rcars_cache(specs: list[GenAiModelSpec], cfg: SimConfig, rng) -> np.ndarray:
    """Shuffle the model order and cache while capacity allows."""
    cache = np.zeros(cfg.model_count)
    used = 0.0
    for idx in rng.permutation(cfg.model_count):
        spec = specs[idx]
        if used + spec.storage_gb <= cfg.capacity_gb:
            cache[idx] = 1.0
            used += spec.storage_gb
    return cache


def rcars_allocation(cache: np.ndarray, model_ids: list[int]) -> Allocation:
    """Equal bandwidth split; equal steps over users with cached models."""
    u = len(model_ids)
    b = np.full(u, 1.0 / u)
    mask = np.array([bool(cache[m - 1]) for m in model_ids], dtype=float)
    n_cached = mask.sum()
    xi = mask / n_cached if n_cached > 0 else np.zeros(u)
    return Allocation(b=b, xi=xi)
