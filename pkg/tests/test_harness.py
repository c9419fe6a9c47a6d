import numpy as np
import pandas as pd
import pytest

from conftest import EXPERIMENTS
from evaluation import ConfigError, MissingRunsError, RunRecord
from harness import (
    ALGORITHMS,
    RECORD_COLUMNS,
    _set_key,
    aggregate_generations,
    best_patterns,
    compare,
    decode_vector,
    encode_vector,
    experiment_from_mapping,
    fom_curves,
    load_experiment,
    load_runs,
    read_records,
    render_pattern,
    run_experiment,
    run_path,
    score_matrix,
    summary_table,
    sweep,
    unique_feasible,
    write_records,
)

SYNTHETIC = {
    ("x", 0): ([1, 3, 2, 4], [1, 1, 0, 1], ["0-1", "0-1", "1-1", "2-2"]),
    ("x", 1): ([0, 0, 5, 1], [0, 1, 1, 1], ["0-0", "0-0", "1-0", "1-0"]),
    ("y", 0): ([2, 2, 2, 2], [0, 0, 0, 0], ["0-0", "0-1", "0-2", "0-3"]),
    ("y", 1): ([1, 2, 3, 4], [1, 1, 1, 1], ["0-0", "0-1", "0-2", "0-3"]),
}


def _benchmark_mapping(**experiment):
    exp = {
        "name": "sphere",
        "algorithms": ["psa", "es"],
        "seeds": [0, 1, 2],
        "max_samples": 120,
        "workers": 1,
        "bins": 10,
        "benchmark": {"name": "neg_sphere", "dim": 4, "low": -3, "high": 3},
    }
    exp.update(experiment)
    return {
        "experiment": exp,
        "psa": {"nchain": 4, "chain_size": 5},
        "es": {"lambda_pop": 8},
    }


@pytest.fixture
def synthetic_out(tmp_path):
    for (algo, seed), (objectives, feasible, vectors) in SYNTHETIC.items():
        records = [
            RunRecord(f"{algo}-s{seed}", algo, seed, i, 0, float(o), bool(f), decode_vector(v))
            for i, (o, f, v) in enumerate(zip(objectives, feasible, vectors))
        ]
        write_records(records, run_path(tmp_path, algo, seed))
    return tmp_path


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    cfg = load_experiment(EXPERIMENTS / "smoke.toml", out=out, max_samples=200)
    written = run_experiment(cfg)
    return cfg, written, compare(cfg)


def test_vector_text_encoding():
    assert encode_vector([3, 0, 12]) == "3-0-12"
    assert decode_vector("3-0-12") == (3, 0, 12)
    assert encode_vector([-2, 3, -1]) == "-2-3--1"
    assert decode_vector("-2-3--1") == (-2, 3, -1)
    assert decode_vector("7") == (7,)


def test_smoke_experiment_loads():
    cfg = load_experiment(EXPERIMENTS / "smoke.toml", seeds=[4], workers=2)

    assert cfg.instance.name == "toy4.toml"
    assert cfg.instance.is_absolute()
    assert cfg.seeds == (4,)
    assert cfg.workers == 2
    assert cfg.algorithms == ("psa", "tabu", "es", "pesa", "ppo")
    assert cfg.algorithm_config("pesa").es.lambda_pop == 12
    assert cfg.algorithm_config("tabu").tenure == 2
    assert cfg.algorithm_config("psa").max_samples == 2000


@pytest.mark.parametrize("name", ["sweep_psa.toml", "sweep_psa_chi.toml", "sweep_psa_tmin.toml", "sweep_ppo.toml"])
def test_sweep_experiments_build_every_grid_point(name):
    cfg = load_experiment(EXPERIMENTS / name)
    algo, key = cfg.sweep["algo"], cfg.sweep["key"]
    base = cfg.algo_configs.get(algo, {})

    for value in cfg.sweep["values"]:
        built = ALGORITHMS[algo].build(_set_key(base, key, value), cfg.max_samples)
        assert getattr(built, key) == value


def test_missing_experiment_file():
    with pytest.raises(ConfigError):
        load_experiment(EXPERIMENTS / "nope.toml")


@pytest.mark.parametrize(
    "mapping",
    [
        _benchmark_mapping(colour="blue"),
        _benchmark_mapping(algorithms=["psa", "gradient"]),
        _benchmark_mapping(seeds=[1, 1]),
        _benchmark_mapping(instance="toy4.toml"),
        {**_benchmark_mapping(), "psa": {"nchain": 4, "cooling": "fast"}},
        {**_benchmark_mapping(), "es": {"mu": 20, "lambda_pop": 8}},
    ],
)
def test_invalid_experiments_rejected(mapping):
    with pytest.raises(ConfigError):
        experiment_from_mapping(mapping)


def test_set_key_copies_nested_tables():
    base = {"es": {"mu": 2}, "buffer_capacity": 10}
    out = _set_key(base, "es.mu", 3)

    assert out == {"es": {"mu": 3}, "buffer_capacity": 10}
    assert base["es"]["mu"] == 2
    assert _set_key({}, "alpha", 1.5) == {"alpha": 1.5}


def test_records_round_trip_through_csv(synthetic_out):
    frame = read_records(run_path(synthetic_out, "x", 0))

    assert tuple(frame.columns) == RECORD_COLUMNS
    assert frame["feasible"].dtype == bool
    assert list(frame["vector"]) == ["0-1", "0-1", "1-1", "2-2"]
    assert frame["l_cy"].isna().all()


def test_read_records_rejects_other_csv(tmp_path):
    path = tmp_path / "other.csv"
    pd.DataFrame({"a": [1]}).to_csv(path, index=False)
    with pytest.raises(ConfigError):
        read_records(path)


def test_load_runs_reports_every_missing_pair(synthetic_out):
    with pytest.raises(MissingRunsError) as info:
        load_runs(synthetic_out, ["x", "z"], [0, 1, 2])
    assert info.value.missing == [("x", 2), ("z", 0), ("z", 1), ("z", 2)]


def test_generation_curves_by_hand(synthetic_out):
    frame = load_runs(synthetic_out, ["x", "y"], [0, 1])
    curves = aggregate_generations(frame, bins=2).set_index(["algo", "bin"])

    assert curves.loc[("x", 0), "mean"] == pytest.approx(1.0)
    assert curves.loc[("x", 0), "mean_sigma"] == pytest.approx(1.0)
    assert curves.loc[("x", 0), "max"] == pytest.approx(1.5)
    assert curves.loc[("x", 1), "max"] == pytest.approx(4.5)
    assert curves.loc[("x", 1), "max_sigma"] == pytest.approx(0.5)
    assert curves.loc[("y", 1), "mean"] == pytest.approx(2.75)


def test_summary_by_hand(synthetic_out):
    frame = load_runs(synthetic_out, ["x", "y"], [0, 1])
    summary = summary_table(frame, bins=2).set_index("algo")

    assert summary.loc["x"].to_dict() == pytest.approx(
        {"avg_max": 4.5, "final_sigma": 0.5, "max_reward": 5.0, "avg_reward": 3.0, "unique_feasible": 2.0}
    )
    assert summary.loc["y"].to_dict() == pytest.approx(
        {"avg_max": 3.0, "final_sigma": 1.0, "max_reward": 4.0, "avg_reward": 2.75, "unique_feasible": 2.0}
    )


def test_unique_feasible_counts_zero_for_infeasible_runs(synthetic_out):
    counts = unique_feasible(load_runs(synthetic_out, ["x", "y"], [0, 1]))

    assert counts.loc[("y", 0)] == 0
    assert counts.loc[("y", 1)] == 4
    assert counts.loc[("x", 1)] == 2


def test_score_matrix_takes_best_per_run(synthetic_out):
    frame = load_runs(synthetic_out, ["x", "y"], [0, 1])
    m = score_matrix(frame, ["x", "y"], [0, 1])

    assert m.labels == ("x", "y")
    assert m.scores.tolist() == [[4.0, 2.0], [5.0, 4.0]]
    with pytest.raises(MissingRunsError):
        score_matrix(frame, ["x", "y"], [0, 1, 5])


def test_best_patterns_without_instance(synthetic_out):
    best = best_patterns(load_runs(synthetic_out, ["x", "y"], [0, 1])).set_index("algo")

    assert best.loc["x", "vector"] == "1-0"
    assert best.loc["x", "seed"] == 1
    assert best.loc["y", "objective"] == 4.0
    assert best.loc["y", "violations"] == ""


def test_fom_curves_empty_for_benchmarks(synthetic_out):
    assert fom_curves(load_runs(synthetic_out, ["x", "y"], [0, 1]), bins=2).empty


def test_render_pattern(toy4):
    text = render_pattern("0-0-1-2", toy4)

    assert len(text.splitlines()) == 4
    assert text.split().count("F0") == 8
    assert text.split().count("b1") == 4


def test_smoke_runs_write_exact_records(smoke):
    cfg, written, _ = smoke

    assert set(written) == {(a, s) for a in cfg.algorithms for s in cfg.seeds}
    for path in written.values():
        frame = read_records(path)
        assert list(frame["sample_idx"]) == list(range(200))
        assert frame["l_cy"].notna().all()


def test_smoke_comparison_tables(smoke):
    cfg, _, result = smoke

    assert list(result.summary["algo"]) == list(cfg.algorithms)
    assert len(result.curves) == 5 * cfg.bins
    for _, curve in result.curves.groupby("algo"):
        assert np.all(np.diff(curve["max"].to_numpy()) >= -1e-12)
    assert result.nemenyi.shape == (5, 5)
    assert set(result.best["algo"]) == set(cfg.algorithms)
    assert len(result.fom_curves) == 5 * cfg.bins
    for name in ("summary.csv", "friedman.csv", "nemenyi.csv", "curves.csv", "best_patterns.csv",
                 "fom_curves.csv", "scores.csv", "report.txt", "summary.txt", "nemenyi.txt"):
        assert (cfg.out / name).exists(), name
    assert "Friedman chi2" in (cfg.out / "report.txt").read_text(encoding="utf-8")


def test_smoke_best_patterns_name_violations(smoke, toy4):
    from problem import decode
    from surrogate import evaluate_core, violations

    _, _, result = smoke
    for row in result.best.itertuples():
        foms = evaluate_core(decode(decode_vector(row.vector), toy4), toy4)
        assert row.violations == ";".join(violations(foms, toy4.constraints))
        assert row.feasible == (row.violations == "")


def test_compare_with_missing_runs(tmp_path):
    cfg = experiment_from_mapping(_benchmark_mapping(out=str(tmp_path)))
    with pytest.raises(MissingRunsError):
        compare(cfg)


def test_benchmark_experiment_end_to_end(tmp_path):
    cfg = experiment_from_mapping(_benchmark_mapping(out=str(tmp_path)))
    run_experiment(cfg)
    result = compare(cfg)

    assert result.fom_curves.empty
    assert set(result.best["violations"]) == {""}
    scores = pd.read_csv(tmp_path / "scores.csv")
    assert list(scores.columns) == ["seed", "psa", "es"]
    assert list(scores["seed"]) == [0, 1, 2]


def test_sweep_grid(tmp_path):
    mapping = _benchmark_mapping(out=str(tmp_path), algorithms=["psa"], seeds=[0, 1])
    mapping["sweep"] = {"algo": "psa", "key": "alpha", "values": [1.0, 1.5, 2.0]}
    table = sweep(experiment_from_mapping(mapping))

    assert list(table["value"]) == [1.0, 1.5, 2.0]
    assert list(table.columns[:2]) == ["algo", "key"]
    assert (tmp_path / "sweep.csv").exists()
    assert len(pd.read_csv(tmp_path / "sweep_runs.csv")) == 6


def test_sweep_nested_key(tmp_path):
    mapping = _benchmark_mapping(out=str(tmp_path), algorithms=["pesa"], seeds=[0], max_samples=72)
    mapping["pesa"] = {"es": {"lambda_pop": 12}, "psa": {"nchain": 4, "chain_size": 3}, "pso": {"npar": 4, "steps": 3}}
    mapping["sweep"] = {"algo": "pesa", "key": "psa.alpha", "values": [1.0, 2.0]}

    assert len(sweep(experiment_from_mapping(mapping))) == 2


def test_sweep_needs_its_keys(tmp_path):
    mapping = _benchmark_mapping(out=str(tmp_path))
    mapping["sweep"] = {"algo": "psa", "values": [1.0]}
    with pytest.raises(ConfigError):
        sweep(experiment_from_mapping(mapping))
