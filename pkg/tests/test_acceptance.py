"""Multi-seed acceptance runs. Slow; deselect with -m "not slow"."""

from collections import Counter

import numpy as np
import pytest

from conftest import EXPERIMENTS, INSTANCES
from es import EsConfig
from evaluation import Evaluator, make_pool
from harness import ALGORITHMS, load_experiment, run_one, write_records
from pesa import PesaConfig
from ppo import PpoConfig, run_ppo
from problem import check_tactics, decode, load_instance
from psa import PsaConfig, lam_f
from surrogate import FOM_FIELDS, CoreObjective, benchmark_objective, brute_force
from tabu import TsConfig, restart_probs

pytestmark = pytest.mark.slow

SEEDS = range(10)
SPHERE_SAMPLES = 10_000
TOY_SAMPLES = 2_000
BINDING = ("l_cy", "f_dh", "f_q", "cb", "bu_max")

# psa starts cold; from alpha * sigma0 the schedule barely cools within 10k samples on this sphere
SPHERE_CONFIGS = {
    "psa": PsaConfig(alpha=0.01, max_samples=SPHERE_SAMPLES),
    "tabu": TsConfig(max_samples=SPHERE_SAMPLES),
    "es": EsConfig(max_samples=SPHERE_SAMPLES),
    "pesa": PesaConfig(max_samples=SPHERE_SAMPLES),
    "ppo": PpoConfig(ncores=8, n_steps=4, lr=0.05, epochs=4, minibatch=32, ent_coef=0.0, max_samples=SPHERE_SAMPLES),
}


def _sphere10():
    return benchmark_objective("neg_sphere", 10, (-10, 10))


def _best(objective, algo, cfg, seed, max_samples):
    return run_one(objective, algo, cfg, seed, max_samples).best_objective


def test_lam_quality_factor_at_half():
    assert lam_f(0.5) == pytest.approx(0.2222, abs=1e-4)


def test_rank_restart_four_chains():
    assert restart_probs([4.0, 3.0, 2.0, 1.0], "rank", m=2).tolist() == pytest.approx([0, 1 / 6, 1 / 3, 1 / 2])


@pytest.mark.parametrize("algo", list(SPHERE_CONFIGS))
def test_sphere_reaches_near_optimum(algo):
    objective = _sphere10()
    hits = sum(_best(objective, algo, SPHERE_CONFIGS[algo], s, SPHERE_SAMPLES) >= -5.0 for s in SEEDS)

    assert hits >= 8


@pytest.mark.parametrize("algo", list(ALGORITHMS))
def test_toy4_matches_exhaustive_optimum(algo, toy4):
    cfg = load_experiment(EXPERIMENTS / "smoke.toml", max_samples=TOY_SAMPLES)
    algo_cfg = cfg.algorithm_config(algo)
    if algo == "es":
        algo_cfg = EsConfig(mu=4, lambda_pop=16, cxpb=0.4, mutpb=0.5, s_init_frac=0.3, max_samples=TOY_SAMPLES)
    if algo == "ppo":
        algo_cfg = PpoConfig(ncores=8, n_steps=4, lr=0.02, epochs=4, minibatch=32, ent_coef=0.0,
                             max_samples=TOY_SAMPLES)
    objective = CoreObjective(toy4)
    _, optimum, _ = brute_force(objective)

    hits = sum(abs(_best(objective, algo, algo_cfg, s, TOY_SAMPLES) - optimum) <= 1e-9 for s in SEEDS)

    assert hits >= 7


@pytest.mark.parametrize("algo", list(ALGORITHMS))
def test_records_are_byte_identical_across_repeats_and_pools(algo, toy4, tmp_path):
    cfg = load_experiment(EXPERIMENTS / "smoke.toml", max_samples=300)
    objective = CoreObjective(toy4)
    algo_cfg = cfg.algorithm_config(algo)

    first = run_one(objective, algo, algo_cfg, 3, 300)
    second = run_one(objective, algo, algo_cfg, 3, 300)
    pool = make_pool(objective, 2)
    try:
        pooled = run_one(objective, algo, algo_cfg, 3, 300, pool, 2)
    finally:
        pool.shutdown()

    paths = []
    for name, result in (("a", first), ("b", second), ("c", pooled)):
        assert len(result.records) == 300
        path = tmp_path / f"{name}.csv"
        write_records(result.records, path)
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes() == paths[2].read_bytes()


def test_reference_instance_is_not_degenerate(eighth89):
    objective = CoreObjective(eighth89)
    constraints = {c.name: c for c in eighth89.constraints}
    rng = np.random.default_rng(7)
    values = {name: set() for name in FOM_FIELDS}
    objectives = set()
    satisfied = Counter()
    for _ in range(10_000):
        evaluation = objective.evaluate(objective.bounds.sample(rng))
        objectives.add(round(evaluation.objective, 9))
        foms = evaluation.foms.as_dict()
        for name, value in foms.items():
            values[name].add(round(value, 9))
        for name in BINDING:
            satisfied[name] += constraints[name].satisfied(foms[name])

    assert len(objectives) > 100
    for name in (*BINDING, "lcoe"):
        assert len(values[name]) > 100, name
    for name in BINDING:
        assert 0 < satisfied[name] < 10_000, (name, satisfied[name])


@pytest.mark.parametrize("path", sorted(INSTANCES.glob("*.toml")), ids=lambda p: p.stem)
def test_random_decodes_conserve_inventory_and_respect_tactics(path):
    inst = load_instance(path)
    rng = np.random.default_rng(23)
    expected = Counter({b.id: b.multiplicity for b in inst.burned})
    for _ in range(100_000):
        core = decode(inst.bounds.sample(rng), inst)
        assert core.n_fresh == inst.n_fresh
        assert Counter(core.burned_ids()) == expected
        assert check_tactics(core, inst) == []


def test_evaluator_never_exceeds_budget():
    objective = _sphere10()
    cfg = PpoConfig(ncores=7, n_steps=3, max_samples=100)
    evaluator = Evaluator(objective, 100, "ppo", 0)

    result = run_ppo(objective, cfg, 0, evaluator)

    assert len(result.records) == 100
    assert [r.sample_idx for r in result.records] == list(range(100))
