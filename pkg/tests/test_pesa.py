import numpy as np
import pytest

from es import EsConfig
from evaluation import Bounds, ConfigError, EmptyBufferError
from pesa import (
    ParticleSwarm,
    PesaConfig,
    PsoConfig,
    ReplayBuffer,
    pso_step,
    run_pesa,
)
from psa import PsaConfig
from surrogate import CoreObjective, benchmark_objective


def _one_d(x, v, best):
    return (
        np.array([[x]], dtype=np.int64),
        np.array([[v]], dtype=float),
        np.array([[best]], dtype=np.int64),
        np.array([best], dtype=np.int64),
    )


def test_pso_step_at_personal_and_global_best_only_decays_velocity():
    bounds = Bounds.uniform(1, -3, 3)
    x, v, pbest, gbest = _one_d(0, 2.0, 0)

    x, v = pso_step(x, v, pbest, gbest, PsoConfig(), bounds, np.random.default_rng(0))

    assert v[0, 0] == pytest.approx(1.4596)
    assert x[0, 0] == 1


def test_pso_step_clamps_velocity_and_position():
    bounds = Bounds.uniform(1, -3, 3)
    x, v, pbest, gbest = _one_d(3, 10.0, 3)

    x, v = pso_step(x, v, pbest, gbest, PsoConfig(), bounds, np.random.default_rng(0))

    assert v[0, 0] == pytest.approx(1.5)
    assert x[0, 0] == 3
    assert x.dtype == np.int64


def test_pso_step_pulls_toward_bests():
    bounds = Bounds.uniform(3, 0, 20)
    rng = np.random.default_rng(1)
    x = np.zeros((5, 3), dtype=np.int64)
    v = np.zeros((5, 3))
    best = np.full((5, 3), 10, dtype=np.int64)

    x, v = pso_step(x, v, best, best[0], PsoConfig(), bounds, rng)

    assert np.all(v >= 0) and np.all(x >= 0)


def test_swarm_inject_replaces_worst_particles_at_rest():
    bounds = Bounds.uniform(2, 0, 9)
    swarm = ParticleSwarm(bounds, PsoConfig(npar=4), np.random.default_rng(0))
    swarm.observe([1.0, -2.0, 3.0, 0.0])

    swarm.inject([np.array([7, 7])], [5.0])

    assert list(swarm.x[1]) == [7, 7]
    assert list(swarm.v[1]) == [0.0, 0.0]
    assert swarm.gbest_f == 5.0
    assert list(swarm.gbest) == [7, 7]


def test_buffer_keeps_best_copy_of_each_vector_sorted():
    buffer = ReplayBuffer(capacity=3)
    buffer.append([((1, 1), 2.0), ((2, 2), 5.0), ((1, 1), 4.0), ((3, 3), 4.0)])

    assert buffer.entries() == [((2, 2), 5.0), ((1, 1), 4.0), ((3, 3), 4.0)]

    buffer.append([((4, 4), 4.5), ((2, 2), 1.0)])

    assert buffer.entries() == [((2, 2), 5.0), ((4, 4), 4.5), ((1, 1), 4.0)]
    assert len(buffer) == 3


def test_buffer_priorities_follow_rank():
    buffer = ReplayBuffer(capacity=10, alpha=1.0)
    buffer.append([((0,), 1.0), ((1,), 3.0), ((2,), 2.0)])

    assert buffer.probabilities() == pytest.approx([6 / 11, 3 / 11, 2 / 11])

    flat = ReplayBuffer(capacity=10, alpha=0.0)
    flat.append([((0,), 1.0), ((1,), 3.0)])
    assert flat.probabilities() == pytest.approx([0.5, 0.5])


def test_buffer_sampling_favours_the_best():
    buffer = ReplayBuffer(capacity=10)
    buffer.append([((i,), float(i)) for i in range(5)])
    samples = buffer.sample(2000, np.random.default_rng(0))

    top = sum(1 for vector, _ in samples if vector[0] == 4)
    assert top / 2000 == pytest.approx(60 / 137, abs=0.04)
    assert all(f == float(v[0]) for v, f in samples)


def test_empty_buffer_cannot_be_sampled():
    with pytest.raises(EmptyBufferError):
        ReplayBuffer(capacity=5).sample(1, np.random.default_rng(0))


def test_buffer_validation():
    with pytest.raises(ConfigError):
        ReplayBuffer(capacity=0)
    with pytest.raises(ConfigError):
        ReplayBuffer(capacity=5, alpha=1.5)


def test_member_budgets_must_match():
    with pytest.raises(ConfigError):
        PesaConfig(es=EsConfig(lambda_pop=20))


def test_config_from_mapping_builds_members():
    cfg = PesaConfig.from_mapping(
        {
            "buffer_capacity": 50,
            "es": {"lambda_pop": 12},
            "psa": {"nchain": 4, "chain_size": 3},
            "pso": {"npar": 4, "steps": 3},
        },
        max_samples=600,
    )

    assert cfg.buffer_capacity == 50
    assert cfg.es.lambda_pop == 12 and cfg.es.mu == 2
    assert cfg.psa.nchain == 4
    assert cfg.pso.steps == 3
    assert cfg.max_samples == 600

    with pytest.raises(ConfigError):
        PesaConfig.from_mapping({"es": {"sigma": 1.0}})


def test_run_splits_workers_into_thirds():
    obj = benchmark_objective("neg_sphere", 8, (-5, 5))
    result = run_pesa(obj, PesaConfig(max_samples=900), seed=4)

    assert len(result.records) == 900
    assert result.diagnostics["periods"] == 10
    assert 0 < result.diagnostics["buffer_size"] <= 300
    assert {r.worker for r in result.records} == set(range(30))
    first = result.records[:90]
    assert {r.worker for r in first[:30]} == set(range(10))
    assert {r.worker for r in first[30:60]} == set(range(10, 20))
    assert {r.worker for r in first[60:]} == set(range(20, 30))


def test_run_is_reproducible():
    obj = benchmark_objective("neg_sphere", 5, (-5, 5))
    cfg = PesaConfig.from_mapping(
        {"es": {"lambda_pop": 12}, "psa": {"nchain": 4, "chain_size": 3}, "pso": {"npar": 4, "steps": 3}},
        max_samples=360,
    )

    a, b = run_pesa(obj, cfg, seed=8), run_pesa(obj, cfg, seed=8)

    assert [r.vector for r in a.records] == [r.vector for r in b.records]


def test_run_finds_sphere_optimum():
    obj = benchmark_objective("neg_sphere", 4, (-3, 3), target=1.0)

    assert run_pesa(obj, PesaConfig(max_samples=3000), seed=0).best_objective >= -1.0


def test_run_on_toy4(toy4):
    cfg = PesaConfig(
        es=EsConfig(lambda_pop=12),
        psa=PsaConfig(nchain=4, chain_size=3),
        pso=PsoConfig(npar=4, steps=3),
        max_samples=300,
    )
    result = run_pesa(CoreObjective(toy4), cfg, seed=1)

    assert len(result.records) == 300
    assert all(toy4.bounds.contains(r.vector) for r in result.records)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_buffer_sample_frequencies_match_priorities(alpha):
    buffer = ReplayBuffer(capacity=10, alpha=alpha)
    buffer.append([((i,), float(i)) for i in range(6)])
    p = np.asarray(buffer.probabilities())
    n = 20_000

    samples = buffer.sample(n, np.random.default_rng(3))

    counts = np.zeros(6)
    for vector, _ in samples:
        counts[5 - vector[0]] += 1
    assert np.all(np.abs(counts - n * p) <= 3 * np.sqrt(n * p * (1 - p)))


def test_run_reports_the_best_recorded_sample():
    obj = benchmark_objective("neg_sphere", 6, (-5, 5))
    result = run_pesa(obj, PesaConfig(max_samples=600), seed=2)

    assert result.best_objective == max(r.objective for r in result.records)
