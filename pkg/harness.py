"""Experiment orchestration: seeded runs, record CSVs, curves, tables and the
statistical comparison."""

from __future__ import annotations

import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import pandas as pd

from es import EsConfig, run_es
from evaluation import (
    ConfigError,
    Evaluator,
    MissingRunsError,
    Objective,
    OptimizerResult,
    RunRecord,
    config_from_mapping,
    make_pool,
)
from pesa import PesaConfig, run_pesa
from ppo import PpoConfig, run_ppo
from problem import ProblemInstance, decode, load_instance
from psa import PsaConfig, run_psa
from stats import (
    ScoreMatrix,
    format_p,
    friedman,
    friedman_frame,
    nemenyi,
    nemenyi_frame,
    render_text,
    write_table,
)
from surrogate import FOM_FIELDS, CoreObjective, FomVector, benchmark_objective, violations
from tabu import TsConfig, run_tabu

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 20_000
LONG_SAMPLES = 50_000
DEFAULT_BINS = 200
DEFAULT_ALPHA = 0.1

RECORD_COLUMNS = (
    "run_id", "algo", "seed", "sample_idx", "worker", "objective", "feasible",
    *FOM_FIELDS,
    "vector",
)

Runner = Callable[[Objective, Any, int, Evaluator], OptimizerResult]


@dataclass(frozen=True)
class Algorithm:
    name: str
    build: Callable[[dict[str, Any], int], Any]
    run: Runner


def _flat(cls: type) -> Callable[[dict[str, Any], int], Any]:
    return lambda mapping, max_samples: config_from_mapping(cls, mapping, max_samples=max_samples)


ALGORITHMS: dict[str, Algorithm] = {
    "psa": Algorithm("psa", _flat(PsaConfig), run_psa),
    "tabu": Algorithm("tabu", _flat(TsConfig), run_tabu),
    "es": Algorithm("es", _flat(EsConfig), run_es),
    "pesa": Algorithm(
        "pesa", lambda mapping, max_samples: PesaConfig.from_mapping(mapping, max_samples=max_samples), run_pesa
    ),
    "ppo": Algorithm("ppo", _flat(PpoConfig), run_ppo),
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    algorithms: tuple[str, ...]
    seeds: tuple[int, ...]
    instance: Path | None = None
    benchmark: dict[str, Any] | None = None
    max_samples: int = DEFAULT_SAMPLES
    workers: int = 32
    out: Path = Path("results")
    bins: int = DEFAULT_BINS
    alpha: float = DEFAULT_ALPHA
    algo_configs: dict[str, dict[str, Any]] = field(default_factory=dict)
    sweep: dict[str, Any] | None = None

    def __post_init__(self) -> None:
        if (self.instance is None) == (self.benchmark is None):
            raise ConfigError("experiment needs exactly one of instance or benchmark")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigError(f"unknown algorithm(s) {', '.join(unknown)}; choose from {', '.join(ALGORITHMS)}")
        if not self.algorithms:
            raise ConfigError("experiment lists no algorithms")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be a non-empty list of distinct integers")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.max_samples < 1:
            raise ConfigError("max_samples must be >= 1")
        if self.bins < 1:
            raise ConfigError("bins must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")

    def algorithm_config(self, algo: str) -> Any:
        return ALGORITHMS[algo].build(dict(self.algo_configs.get(algo, {})), self.max_samples)


def load_experiment(path: str | Path, **overrides: Any) -> ExperimentConfig:
    """Read an experiment TOML; keyword overrides (CLI flags) win when not None."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"experiment file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return experiment_from_mapping(data, base=path.parent, **overrides)


def experiment_from_mapping(data: dict[str, Any], base: Path = Path("."), **overrides: Any) -> ExperimentConfig:
    exp = dict(data.get("experiment", {}))
    seeds = exp.pop("seeds", [0])
    seeds = overrides.pop("seeds", None) or seeds
    values: dict[str, Any] = {
        "name": str(exp.pop("name", "experiment")),
        "algorithms": tuple(exp.pop("algorithms", [])),
        "seeds": tuple(int(s) for s in seeds),
    }
    if "instance" in exp:
        values["instance"] = (base / exp.pop("instance")).resolve()
    if "benchmark" in exp:
        values["benchmark"] = dict(exp.pop("benchmark"))
    for key in ("max_samples", "workers", "bins"):
        if key in exp:
            values[key] = int(exp.pop(key))
    if "alpha" in exp:
        values["alpha"] = float(exp.pop("alpha"))
    if "out" in exp:
        values["out"] = Path(exp.pop("out"))
    if exp:
        raise ConfigError(f"[experiment]: unknown keys {', '.join(sorted(exp))}")
    values["algo_configs"] = {name: dict(data[name]) for name in ALGORITHMS if name in data}
    if "sweep" in data:
        values["sweep"] = dict(data["sweep"])
    values.update({k: v for k, v in overrides.items() if v is not None})
    if isinstance(values.get("out"), str):
        values["out"] = Path(values["out"])
    cfg = ExperimentConfig(**values)
    for algo in cfg.algorithms:
        cfg.algorithm_config(algo)
    return cfg


def make_objective(cfg: ExperimentConfig) -> Objective:
    if cfg.instance is not None:
        return CoreObjective(load_instance(cfg.instance))
    spec = dict(cfg.benchmark or {})
    try:
        return benchmark_objective(
            spec["name"], int(spec["dim"]), (int(spec["low"]), int(spec["high"])), spec.get("target", 0.0)
        )
    except KeyError as e:
        raise ConfigError(f"benchmark spec is missing key {e}") from e


def run_path(out: Path, algo: str, seed: int) -> Path:
    return out / "runs" / f"{algo}_seed{seed}.csv"


def run_one(
    objective: Objective,
    algo: str,
    algo_cfg: Any,
    seed: int,
    max_samples: int,
    pool=None,
    workers: int = 1,
) -> OptimizerResult:
    evaluator = Evaluator(
        objective, max_samples, algo, seed, run_id=f"{algo}-s{seed}", pool=pool, workers=workers
    )
    result = ALGORITHMS[algo].run(objective, algo_cfg, seed, evaluator)
    logger.info(
        "%s seed %d: %d samples, best %.6g (%s)",
        algo, seed, len(result.records), result.best_objective, result.stop_reason,
    )
    return result


def run_experiment(cfg: ExperimentConfig) -> dict[tuple[str, int], Path]:
    """Run every (algorithm, seed) pair and write one record CSV each."""
    algo_cfgs = {algo: cfg.algorithm_config(algo) for algo in cfg.algorithms}
    objective = make_objective(cfg)
    written: dict[tuple[str, int], Path] = {}
    pool = make_pool(objective, cfg.workers)
    try:
        for algo in cfg.algorithms:
            for seed in cfg.seeds:
                result = run_one(objective, algo, algo_cfgs[algo], seed, cfg.max_samples, pool, cfg.workers)
                path = run_path(cfg.out, algo, seed)
                write_records(result.records, path)
                written[(algo, seed)] = path
    finally:
        if pool is not None:
            pool.shutdown()
    return written


def encode_vector(vector: Sequence[int]) -> str:
    return "-".join(str(int(x)) for x in vector)


def decode_vector(text: str) -> tuple[int, ...]:
    """Inverse of encode_vector; an empty token marks a minus sign for the next one."""
    values: list[int] = []
    negative = False
    for token in str(text).split("-"):
        if token == "":
            negative = True
            continue
        values.append(-int(token) if negative else int(token))
        negative = False
    return tuple(values)


def records_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    rows = []
    for r in records:
        row: dict[str, Any] = {
            "run_id": r.run_id,
            "algo": r.algo,
            "seed": r.seed,
            "sample_idx": r.sample_idx,
            "worker": r.worker,
            "objective": r.objective,
            "feasible": int(r.feasible),
        }
        foms = r.foms.as_dict() if r.foms is not None else {}
        for name in FOM_FIELDS:
            row[name] = foms.get(name, np.nan)
        row["vector"] = encode_vector(r.vector)
        rows.append(row)
    return pd.DataFrame(rows, columns=list(RECORD_COLUMNS))


def write_records(records: Sequence[RunRecord], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    records_frame(records).to_csv(path, index=False)


def read_records(path: Path) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={"vector": str, "run_id": str, "algo": str})
    missing = [c for c in RECORD_COLUMNS if c not in frame.columns]
    if missing:
        raise ConfigError(f"{path}: not a run record file (missing {', '.join(missing)})")
    frame["feasible"] = frame["feasible"].astype(bool)
    return frame


def load_runs(out: Path, algorithms: Sequence[str], seeds: Sequence[int]) -> pd.DataFrame:
    missing = [(a, s) for a in algorithms for s in seeds if not run_path(out, a, s).exists()]
    if missing:
        raise MissingRunsError(missing)
    frames = [read_records(run_path(out, a, s)) for a in algorithms for s in seeds]
    return pd.concat(frames, ignore_index=True)


def _runs(frame: pd.DataFrame):
    for (algo, seed), run in frame.groupby(["algo", "seed"], sort=False):
        yield algo, seed, run.sort_values("sample_idx")


def _bin_edges(n: int, bins: int) -> list[np.ndarray]:
    if n < bins:
        raise ConfigError(f"a run has {n} samples, fewer than the {bins} bins requested")
    return np.array_split(np.arange(n), bins)


def aggregate_generations(frame: pd.DataFrame, bins: int = DEFAULT_BINS) -> pd.DataFrame:
    """Per algorithm and bin: mean objective and running max, averaged over seeds."""
    rows = []
    for algo, group in frame.groupby("algo", sort=False):
        means, maxes = [], []
        for _, _, run in _runs(group):
            objective = run["objective"].to_numpy()
            parts = _bin_edges(objective.size, bins)
            means.append([objective[idx].mean() for idx in parts])
            maxes.append(np.maximum.accumulate([objective[idx].max() for idx in parts]))
        means_arr, maxes_arr = np.asarray(means), np.asarray(maxes)
        for b in range(bins):
            rows.append(
                {
                    "algo": algo,
                    "bin": b,
                    "mean": means_arr[:, b].mean(),
                    "mean_sigma": means_arr[:, b].std(),
                    "max": maxes_arr[:, b].mean(),
                    "max_sigma": maxes_arr[:, b].std(),
                }
            )
    return pd.DataFrame(rows, columns=["algo", "bin", "mean", "mean_sigma", "max", "max_sigma"])


def unique_feasible(frame: pd.DataFrame) -> pd.Series:
    """Distinct feasible vectors per (algo, seed)."""
    feasible = frame[frame["feasible"].astype(bool)]
    counts = feasible.groupby(["algo", "seed"])["vector"].nunique()
    index = pd.MultiIndex.from_frame(frame[["algo", "seed"]].drop_duplicates())
    return counts.reindex(index, fill_value=0)


def summary_table(frame: pd.DataFrame, bins: int = DEFAULT_BINS) -> pd.DataFrame:
    rows = []
    uniques = unique_feasible(frame)
    for algo, group in frame.groupby("algo", sort=False):
        bests, last = [], []
        for _, seed, run in _runs(group):
            objective = run["objective"].to_numpy()
            bests.append(objective.max())
            last.append(objective[_bin_edges(objective.size, bins)[-1]])
        pooled = np.concatenate(last)
        rows.append(
            {
                "algo": algo,
                "avg_max": float(np.mean(bests)),
                "final_sigma": float(np.std(bests)),
                "max_reward": float(pooled.max()),
                "avg_reward": float(pooled.mean()),
                "unique_feasible": float(uniques.loc[algo].mean()),
            }
        )
    return pd.DataFrame(
        rows, columns=["algo", "avg_max", "final_sigma", "max_reward", "avg_reward", "unique_feasible"]
    )


def score_matrix(frame: pd.DataFrame, algorithms: Sequence[str], seeds: Sequence[int]) -> ScoreMatrix:
    best = frame.groupby(["seed", "algo"])["objective"].max().unstack("algo")
    missing = [
        (a, s) for a in algorithms for s in seeds
        if a not in best.columns or s not in best.index or pd.isna(best.at[s, a])
    ]
    if missing:
        raise MissingRunsError(missing)
    table = best.loc[list(seeds), list(algorithms)]
    return ScoreMatrix.from_frame(table)


def _foms_of(row: pd.Series) -> FomVector | None:
    if pd.isna(row.get("l_cy", np.nan)):
        return None
    values = {name: row[name] for name in FOM_FIELDS}
    values["n_enr"] = int(values["n_enr"])
    values["n_ifba"] = int(values["n_ifba"])
    return FomVector(**values)


def best_patterns(frame: pd.DataFrame, instance: ProblemInstance | None = None) -> pd.DataFrame:
    """Best pattern per algorithm over all seeds, with violated constraints."""
    rows = []
    for algo, group in frame.groupby("algo", sort=False):
        ordered = group.sort_values(["seed", "sample_idx"], kind="stable")
        row = ordered.loc[ordered["objective"].idxmax()]
        foms = _foms_of(row)
        broken = violations(foms, instance.constraints) if (foms is not None and instance is not None) else []
        entry = {
            "algo": algo,
            "seed": int(row["seed"]),
            "sample_idx": int(row["sample_idx"]),
            "objective": float(row["objective"]),
            "feasible": bool(row["feasible"]),
        }
        entry.update({name: row[name] for name in FOM_FIELDS})
        entry["violations"] = ";".join(broken)
        entry["vector"] = row["vector"]
        rows.append(entry)
    columns = ["algo", "seed", "sample_idx", "objective", "feasible", *FOM_FIELDS, "violations", "vector"]
    return pd.DataFrame(rows, columns=columns)


def render_pattern(vector: str, instance: ProblemInstance) -> str:
    core = decode(decode_vector(vector), instance)
    return core.render(instance.catalog)


def fom_curves(frame: pd.DataFrame, bins: int = DEFAULT_BINS) -> pd.DataFrame:
    """Per algorithm and bin: seed-mean of each FOM of the running-best pattern."""
    if frame["l_cy"].isna().all():
        return pd.DataFrame(columns=["algo", "bin", *FOM_FIELDS])
    rows = []
    for algo, group in frame.groupby("algo", sort=False):
        per_seed = []
        for _, _, run in _runs(group):
            objective = run["objective"].to_numpy()
            foms = run[list(FOM_FIELDS)].to_numpy(dtype=float)
            best_at = np.empty(objective.size, dtype=int)
            best = 0
            for i in range(objective.size):
                if objective[i] > objective[best]:
                    best = i
                best_at[i] = best
            ends = [idx[-1] for idx in _bin_edges(objective.size, bins)]
            per_seed.append(foms[best_at[ends]])
        mean = np.mean(per_seed, axis=0)
        for b in range(bins):
            rows.append({"algo": algo, "bin": b, **dict(zip(FOM_FIELDS, mean[b]))})
    return pd.DataFrame(rows, columns=["algo", "bin", *FOM_FIELDS])


@dataclass(frozen=True)
class Comparison:
    summary: pd.DataFrame
    friedman: pd.DataFrame
    nemenyi: pd.DataFrame
    curves: pd.DataFrame
    best: pd.DataFrame
    fom_curves: pd.DataFrame
    flagged: list[tuple[str, str, float]]
    report: str


def compare(cfg: ExperimentConfig) -> Comparison:
    """Tables and tests over completed runs; writes them next to the runs."""
    frame = load_runs(cfg.out, cfg.algorithms, cfg.seeds)
    instance = load_instance(cfg.instance) if cfg.instance is not None else None

    summary = summary_table(frame, cfg.bins)
    curves = aggregate_generations(frame, cfg.bins)
    best = best_patterns(frame, instance)
    foms = fom_curves(frame, cfg.bins)
    scores = score_matrix(frame, cfg.algorithms, cfg.seeds)
    fr = friedman(scores)
    nm = nemenyi(scores)
    flagged = nm.significant_pairs(cfg.alpha)
    fr_frame = friedman_frame(fr)
    nm_frame = nemenyi_frame(nm)

    summary_text = render_text(summary)
    fr_text = render_text(fr_frame, p_columns=["p_value"])
    nm_text = render_text(nm_frame, p_columns=list(nm_frame.columns), index=True)
    write_table(summary, cfg.out / "summary.csv", summary_text)
    write_table(fr_frame, cfg.out / "friedman.csv", fr_text)
    write_table(nm_frame, cfg.out / "nemenyi.csv", nm_text, index=True)
    write_table(curves, cfg.out / "curves.csv")
    write_table(best, cfg.out / "best_patterns.csv")
    write_table(foms, cfg.out / "fom_curves.csv")
    scores.to_frame().set_axis(list(cfg.seeds)).rename_axis("seed").to_csv(cfg.out / "scores.csv")

    lines = [
        f"experiment {cfg.name}: {len(cfg.algorithms)} algorithms x {len(cfg.seeds)} seeds, "
        f"{cfg.max_samples} samples each",
        "",
        summary_text,
        "",
        f"Friedman chi2 = {fr.statistic:.3f}, p = {format_p(fr.p_value)}",
        fr_text,
        "",
        f"Nemenyi p-values (pairs below alpha = {cfg.alpha} marked)",
        nm_text,
    ]
    lines.extend(f"  * {a} vs {b}: p = {format_p(p)}" for a, b, p in flagged)
    report = "\n".join(lines)
    (cfg.out / "report.txt").write_text(report + "\n", encoding="utf-8")
    logger.info("compare: Friedman p=%s, %d flagged pairs", format_p(fr.p_value), len(flagged))
    return Comparison(summary, fr_frame, nm_frame, curves, best, foms, flagged, report)


def _set_key(mapping: dict[str, Any], dotted: str, value: Any) -> dict[str, Any]:
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in mapping.items()}
    head, _, rest = dotted.partition(".")
    if rest:
        out[head] = _set_key(out.get(head, {}), rest, value)
    else:
        out[head] = value
    return out


def sweep(cfg: ExperimentConfig) -> pd.DataFrame:
    """Grid over one optimizer key; mean over seeds of best, last-bin mean and convergence."""
    spec = dict(cfg.sweep or {})
    try:
        algo, key, grid = spec["algo"], spec["key"], list(spec["values"])
    except KeyError as e:
        raise ConfigError(f"[sweep] is missing key {e}") from e
    if algo not in ALGORITHMS:
        raise ConfigError(f"[sweep]: unknown algorithm {algo!r}")
    base = dict(cfg.algo_configs.get(algo, {}))
    configs = [ALGORITHMS[algo].build(_set_key(base, key, value), cfg.max_samples) for value in grid]

    objective = make_objective(cfg)
    rows = []
    pool = make_pool(objective, cfg.workers)
    try:
        for value, algo_cfg in zip(grid, configs):
            for seed in cfg.seeds:
                result = run_one(objective, algo, algo_cfg, seed, cfg.max_samples, pool, cfg.workers)
                objectives = np.array([r.objective for r in result.records])
                last = objectives[_bin_edges(objectives.size, min(cfg.bins, objectives.size))[-1]]
                rows.append(
                    {
                        "algo": algo,
                        "key": key,
                        "value": value,
                        "seed": seed,
                        "best": result.best_objective,
                        "last_mean": float(last.mean()),
                        "samples_before_convergence": result.diagnostics.get("samples_before_convergence", math.nan),
                    }
                )
    finally:
        if pool is not None:
            pool.shutdown()
    runs = pd.DataFrame(rows)
    table = (
        runs.groupby("value", sort=False)
        .agg(
            best=("best", "mean"),
            best_sigma=("best", lambda s: float(np.std(s))),
            last_mean=("last_mean", "mean"),
            samples_before_convergence=("samples_before_convergence", "mean"),
        )
        .reset_index()
    )
    table.insert(0, "key", key)
    table.insert(0, "algo", algo)
    write_table(runs, cfg.out / "sweep_runs.csv")
    write_table(table, cfg.out / "sweep.csv", render_text(table))
    return table


