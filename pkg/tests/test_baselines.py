import numpy as np
import pytest

from aigc_edge.agents import amend_continuous
from aigc_edge.baselines import (DDPGAgent, MlpActor, ga_optimize, poly_mutate,
                                 rcars_allocation, rcars_cache, sbx_pair,
                                 schrs_allocate, schrs_cache, slot_objective)
from aigc_edge.config import SimConfig
from aigc_edge.env import EdgeEnv, GenAiModelSpec, MB_TO_BITS, evaluate_slot
from aigc_edge.neural import forward


def make_specs(sizes):
    return [GenAiModelSpec(model_id=i + 1, storage_gb=s, a1=60.0, a2=110.0,
                           a3=170.0, a4=28.0, b1=0.18, b2=5.74,
                           d_out_bits=8.0 * MB_TO_BITS)
            for i, s in enumerate(sizes)]


# ---------------------------------------------------------------------------
# MLP actor
# ---------------------------------------------------------------------------

def test_mlp_actor_zero_net_outputs_half():
    actor = MlpActor(5, 4, (8,), np.random.default_rng(0))
    for p in actor.net.parameters():
        p[...] = 0.0
    act, _ = actor.forward(np.ones(5))
    assert np.allclose(act, 0.5)


def test_mlp_actor_outputs_in_unit_interval():
    actor = MlpActor(5, 4, (16, 16), np.random.default_rng(1))
    states = np.random.default_rng(2).standard_normal((10_000, 5))
    act, _ = actor.forward(states)
    assert np.all((act > 0) & (act < 1))


def test_mlp_actor_gradient_finite_difference():
    actor = MlpActor(4, 3, (8,), np.random.default_rng(3))
    rng = np.random.default_rng(4)
    states = rng.standard_normal((6, 4))
    dq_da = rng.standard_normal((6, 3))

    def value():
        act, _ = actor.forward(states)
        return float(np.sum(act * dq_da))

    _, cache = actor.forward(states)
    grads = actor.gradient(cache, dq_da)
    h, worst = 1e-5, 0.0
    for li in range(len(actor.net.weights)):
        for arr, ana in ((actor.net.weights[li], grads[li][0]),
                         (actor.net.biases[li], grads[li][1])):
            for _ in range(8):
                idx = tuple(rng.integers(s) for s in arr.shape)
                keep = arr[idx]
                arr[idx] = keep + h
                up = value()
                arr[idx] = keep - h
                dn = value()
                arr[idx] = keep
                fd = (up - dn) / (2 * h)
                scale = max(abs(fd), abs(ana[idx]), 1e-8)
                worst = max(worst, abs(fd - ana[idx]) / scale)
    assert worst < 1e-4


def test_ddpg_agent_trains():
    cfg = SimConfig(users=2, model_count=3, batch_slot=8, warmup_batches=1,
                    actor_hidden=(16,), critic_hidden=(16,))
    agent = DDPGAgent(cfg, np.random.default_rng(0))
    dim = 4 * cfg.users + cfg.model_count
    rng = np.random.default_rng(1)
    for _ in range(16):
        s = rng.random(dim)
        agent.remember(s, rng.random(4), rng.random(), rng.random(dim))
    out = agent.train_step(rng)
    assert out is not None
    loss, obj = out
    assert np.isfinite(loss) and np.isfinite(obj)


# ---------------------------------------------------------------------------
# SCHRS cache
# ---------------------------------------------------------------------------

def test_schrs_cache_everything_fits():
    cfg = SimConfig(model_count=10, capacity_gb=20.0)
    cache = schrs_cache(make_specs([2.0] * 10), cfg)
    assert np.array_equal(cache, np.ones(10))


def test_schrs_cache_greedy_by_index():
    cfg = SimConfig(model_count=5, capacity_gb=20.0)
    cache = schrs_cache(make_specs([10.0] * 5), cfg)
    assert np.array_equal(cache, [1, 1, 0, 0, 0])


def test_schrs_cache_zero_capacity():
    cfg = SimConfig(model_count=3, capacity_gb=1e-12)
    cache = schrs_cache(make_specs([2.0, 2.0, 2.0]), cfg)
    assert not cache.any()


# ---------------------------------------------------------------------------
# GA operators
# ---------------------------------------------------------------------------

def test_sbx_children_bounded_and_mean_preserving():
    rng = np.random.default_rng(0)
    p1, p2 = rng.uniform(size=50), rng.uniform(size=50)
    c1, c2 = sbx_pair(p1, p2, 15.0, rng)
    assert np.all((c1 >= 0) & (c1 <= 1) & (c2 >= 0) & (c2 <= 1))
    # absent clipping SBX preserves the parent mean gene-wise
    inner = (c1 > 0) & (c1 < 1) & (c2 > 0) & (c2 < 1)
    assert np.allclose((c1 + c2)[inner], (p1 + p2)[inner], atol=1e-12)


def test_poly_mutation_probability_and_bounds():
    rng = np.random.default_rng(1)
    genes = np.full(100_000, 0.5)
    out = poly_mutate(genes, 0.05, 20.0, rng)
    changed = np.mean(out != genes)
    assert changed == pytest.approx(0.05, abs=0.005)
    assert np.all((out >= 0) & (out <= 1))
    same = poly_mutate(genes, 0.0, 20.0, rng)
    assert np.array_equal(same, genes)


def test_ga_zero_generations_returns_initial_best():
    rng = np.random.default_rng(2)
    target = np.full(4, 0.3)

    def fitness(g):
        return float(np.sum((g - target) ** 2))

    pop_rng = np.random.default_rng(2)
    pop = pop_rng.uniform(size=(10, 4))
    expect = min(fitness(ind) for ind in pop)
    best, best_fit = ga_optimize(fitness, 4, rng, population=10, generations=0,
                                 p_crossover=0.9, eta_crossover=15.0,
                                 p_mutation=0.1, eta_mutation=20.0)
    assert best_fit == pytest.approx(expect)
    assert fitness(best) == pytest.approx(best_fit)


def test_ga_best_fitness_monotone():
    def fitness(g):
        return float(np.sum((g - 0.25) ** 2))

    for seed in range(20):
        rng = np.random.default_rng(seed)
        history = []

        def tracked(g):
            f = fitness(g)
            history.append(f)
            return f

        _, best = ga_optimize(tracked, 6, rng, population=12, generations=15,
                              p_crossover=0.9, eta_crossover=15.0,
                              p_mutation=1 / 12, eta_mutation=20.0)
        running = np.minimum.accumulate(history)
        assert best == pytest.approx(running[-1])
        # elitism: each generation carries the best-so-far individual
        gens = np.array(history).reshape(16, 12).min(axis=1)
        assert np.all(np.diff(gens) <= 1e-12)


def test_ga_converges_near_optimum():
    def fitness(g):
        return float(np.sum((g - 0.7) ** 2))

    best, best_fit = ga_optimize(fitness, 5, np.random.default_rng(7),
                                 population=40, generations=60,
                                 p_crossover=0.9, eta_crossover=15.0,
                                 p_mutation=0.1, eta_mutation=20.0)
    assert best_fit < 1e-3


# ---------------------------------------------------------------------------
# SCHRS allocation vs equal split
# ---------------------------------------------------------------------------

def test_schrs_beats_equal_split_with_dominant_channel():
    cfg = SimConfig(users=2, model_count=2, ga_population=30,
                    ga_generations=25)
    wins = 0
    for seed in range(20):
        env = EdgeEnv(cfg, np.random.default_rng(seed))
        rng = np.random.default_rng(1000 + seed)
        env.begin_frame(rng)
        snaps = env.sample_slot(rng)
        # force a dominant uplink channel for user 0
        snaps[0].channel_gain = 1e-8
        snaps[1].channel_gain = 1e-12
        cache = np.ones(2)
        ga_alloc = schrs_allocate(snaps, cache, env.specs, cfg, rng)
        eq_alloc = rcars_allocation(cache, [s.request.model_id for s in snaps])
        ga_obj = slot_objective(snaps, cache, ga_alloc, env.specs, cfg)
        eq_obj = slot_objective(snaps, cache, eq_alloc, env.specs, cfg)
        wins += ga_obj <= eq_obj + 1e-9
    assert wins >= 18


# ---------------------------------------------------------------------------
# RCARS
# ---------------------------------------------------------------------------

def test_rcars_equal_bandwidth():
    alloc = rcars_allocation(np.array([1.0, 1.0]), [1, 2, 1, 2])
    assert np.allclose(alloc.b, 0.25)


def test_rcars_steps_over_cached_subset():
    alloc = rcars_allocation(np.array([1.0, 0.0]), [1, 2, 1, 2])
    assert np.allclose(alloc.xi, [0.5, 0.0, 0.5, 0.0])


def test_rcars_zero_capacity_cache():
    cfg = SimConfig(model_count=4, capacity_gb=1e-12)
    specs = make_specs([2.0] * 4)
    cache = rcars_cache(specs, cfg, np.random.default_rng(0))
    assert not cache.any()
    alloc = rcars_allocation(cache, [1, 2, 3, 4])
    assert not alloc.xi.any()


def test_rcars_cache_respects_capacity_and_varies():
    cfg = SimConfig(model_count=10, capacity_gb=20.0)
    specs = make_specs(list(np.linspace(2.0, 10.0, 10)))
    seen = set()
    for seed in range(30):
        cache = rcars_cache(specs, cfg, np.random.default_rng(seed))
        used = sum(s.storage_gb for s, f in zip(specs, cache) if f)
        assert used <= cfg.capacity_gb + 1e-9
        seen.add(tuple(cache.astype(int)))
    assert len(seen) > 5
