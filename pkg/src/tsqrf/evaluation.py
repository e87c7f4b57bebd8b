"""Monte Carlo replication harness, error metrics and coverage rates.

Per replicate a path of length T + T' is simulated; each method is fit on
the first T values and evaluated both at the training covariates and at the
T' held-out ones. Per-replicate mean biases feed the MBias/SDBias/MSE
aggregates. Replicates carry pre-assigned seeds, so runs are reproducible
and independent of worker scheduling.
"""

from __future__ import annotations

import json
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import LagDataset, Series, embed
from .estimator import predict_quantiles
from .forest import ForestConfig, fit_forest
from .synth import DgpSpec, error_quantile, g_eval_rows, simulate_path
from .wnw import WnwConfig, fit_wnw

__all__ = [
    "Scenario",
    "BiasSample",
    "ReportRow",
    "SimulationResult",
    "CoverageRow",
    "mbias_sdbias_mse",
    "empirical_coverage",
    "run_simulation",
    "coverage_table",
    "report_to_csv",
    "report_to_json",
    "bias_samples_to_csv",
    "coverage_to_csv",
    "REPORT_SCHEMA_VERSION",
]

REPORT_SCHEMA_VERSION = 1

METHODS = ("tsqrf", "wnw", "oracle")

# desk-scale defaults; a full-scale study would use R=100, T=5000, B=2000
DEFAULT_R = 20
DEFAULT_T = 1000
DEFAULT_T_TEST = 500
DEFAULT_BENCH_TREES = 200


@dataclass(frozen=True)
class Scenario:
    """One cell of the simulation grid."""

    model: str
    error: str
    t_train: int

    def spec(self) -> DgpSpec:
        return DgpSpec(model=self.model, error=self.error)


@dataclass(frozen=True)
class BiasSample:
    """Per-time estimation biases q_hat(x_t) - q_0(x_t) for one replicate."""

    biases: np.ndarray
    replicate: int

    def __post_init__(self):
        biases = np.asarray(self.biases, dtype=float)
        if biases.ndim != 1 or biases.size < 1:
            raise ValueError("biases must be a nonempty vector")
        if not np.all(np.isfinite(biases)):
            raise ValueError("biases must be finite")
        biases.setflags(write=False)
        object.__setattr__(self, "biases", biases)


def mbias_sdbias_mse(bias_samples: list[BiasSample]) -> tuple[float, float, float]:
    """Aggregate replicate biases into (MBias, SDBias, MSE).

    MBias and SDBias summarize the per-replicate mean biases (SDBias with
    divisor R-1, hence R >= 2); MSE averages squared per-time biases over
    replicates and time.
    """
    if not bias_samples:
        raise ValueError("need at least one replicate")
    means = np.array([s.biases.mean() for s in bias_samples])
    if means.size < 2:
        raise ValueError("SDBias needs at least 2 replicates")
    mbias = float(means.mean())
    sdbias = float(means.std(ddof=1))
    mse = float(np.mean([np.mean(s.biases**2) for s in bias_samples]))
    return mbias, sdbias, mse


def empirical_coverage(predicted_quantiles, actual_responses) -> float:
    """Fraction of responses at or below their predicted quantile."""
    pred = np.asarray(predicted_quantiles, dtype=float)
    actual = np.asarray(actual_responses, dtype=float)
    if pred.shape != actual.shape or pred.size < 1:
        raise ValueError("predictions and responses must have equal nonzero length")
    return float(np.mean(actual <= pred))


@dataclass(frozen=True)
class ReportRow:
    model: str
    error: str
    t_train: int
    tau: float
    method: str
    mbias: float
    sdbias: float
    mse: float
    replicates: int

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "error": self.error,
            "T": self.t_train,
            "tau": self.tau,
            "method": self.method,
            "mbias": self.mbias,
            # JSON has no NaN; a single-replicate SDBias travels as null
            "sdbias": None if math.isnan(self.sdbias) else self.sdbias,
            "mse": self.mse,
            "R": self.replicates,
        }


@dataclass
class SimulationResult:
    """Aggregated train/test reports plus the raw per-replicate mean biases."""

    train_rows: list[ReportRow]
    test_rows: list[ReportRow]
    bias_samples: list[dict]


def _fit_predictor(method: str, train: LagDataset, spec: DgpSpec, seed: int,
                   forest_config: ForestConfig, wnw_config: WnwConfig):
    if method == "tsqrf":
        forest = fit_forest(train, replace(forest_config, seed=seed))
        return lambda x, taus: predict_quantiles(forest, x, taus)
    if method == "wnw":
        model = fit_wnw(train, wnw_config)
        return lambda x, taus: model.predict(x, taus)
    if method == "oracle":
        def predict(x, taus):
            g = g_eval_rows(spec, np.asarray(x, dtype=float))
            return np.column_stack([g + error_quantile(spec.error, t) for t in taus])
        return predict
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def _replicate_job(job: dict) -> dict:
    """Run one (scenario, replicate) cell; returns per-method bias summaries."""
    scenario: Scenario = job["scenario"]
    spec = scenario.spec()
    t_train, t_test = scenario.t_train, job["t_test"]
    series = simulate_path(spec, t_train + t_test, burn_in=job["burn_in"], seed=job["sim_seed"])
    pairs = embed(series, spec.p)
    n_train_pairs = t_train - spec.p
    train = LagDataset(
        x=pairs.x[:n_train_pairs],
        y=pairs.y[:n_train_pairs],
        p=spec.p,
        t_index=pairs.t_index[:n_train_pairs],
    )
    splits = {
        "train": (train.x, train.y),
        "test": (pairs.x[n_train_pairs:], pairs.y[n_train_pairs:]),
    }
    taus = job["taus"]
    g_values = {name: g_eval_rows(spec, x) for name, (x, _) in splits.items()}
    out: dict = {}
    for method in job["methods"]:
        predictor = _fit_predictor(
            method, train, spec, job["fit_seed"], job["forest_config"], job["wnw_config"]
        )
        for split_name, (x, _) in splits.items():
            preds = predictor(x, taus)
            for j, tau in enumerate(taus):
                q0 = g_values[split_name] + error_quantile(spec.error, tau)
                out[(method, split_name, tau)] = preds[:, j] - q0
    return out


def run_simulation(grid, replicates: int, master_seed: int, methods,
                   *, taus=(0.1, 0.5, 0.9), t_test: int = DEFAULT_T_TEST,
                   forest_config: ForestConfig | None = None,
                   wnw_config: WnwConfig | None = None,
                   burn_in: int = 200, threads: int = 1) -> SimulationResult:
    """Run the replication study over a scenario grid.

    Results are byte-identical for any ``threads`` value: every replicate
    derives its seeds from (master_seed, scenario index, replicate index)
    and aggregation iterates in grid order.
    """
    grid = list(grid)
    methods = list(methods)
    taus = [float(t) for t in taus]
    if replicates < 1:
        raise ValueError("need at least one replicate")
    if forest_config is None:
        forest_config = ForestConfig(num_trees=DEFAULT_BENCH_TREES)
    if wnw_config is None:
        wnw_config = WnwConfig()
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")

    jobs = {}
    for si, scenario in enumerate(grid):
        for r in range(replicates):
            state = np.random.SeedSequence(master_seed, spawn_key=(si, r)).generate_state(2, dtype=np.uint64)
            jobs[(si, r)] = {
                "scenario": scenario,
                "t_test": t_test,
                "taus": taus,
                "methods": methods,
                "burn_in": burn_in,
                "sim_seed": int(state[0]),
                "fit_seed": int(state[1]),
                "forest_config": forest_config,
                "wnw_config": wnw_config,
            }

    results: dict = {}
    if threads <= 1:
        for key, job in jobs.items():
            results[key] = _run_with_context(key, job)
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            futures = {key: pool.submit(_replicate_job, job) for key, job in jobs.items()}
            for key, fut in futures.items():
                try:
                    results[key] = fut.result()
                except Exception as exc:
                    si, r = key
                    raise RuntimeError(
                        f"replicate {r} of scenario {grid[si]} failed: {exc}"
                    ) from exc

    train_rows, test_rows, bias_rows = [], [], []
    for si, scenario in enumerate(grid):
        for method in methods:
            for tau in taus:
                for split_name, rows in (("train", train_rows), ("test", test_rows)):
                    samples = [
                        BiasSample(biases=results[(si, r)][(method, split_name, tau)], replicate=r)
                        for r in range(replicates)
                    ]
                    if replicates >= 2:
                        mbias, sdbias, mse = mbias_sdbias_mse(samples)
                    else:
                        mbias = float(samples[0].biases.mean())
                        sdbias = math.nan
                        mse = float(np.mean(samples[0].biases ** 2))
                    if mse < mbias**2 * (1.0 - 1e-9) - 1e-15:
                        raise RuntimeError("MSE decomposition sanity violated")
                    rows.append(
                        ReportRow(
                            model=scenario.model,
                            error=scenario.error,
                            t_train=scenario.t_train,
                            tau=tau,
                            method=method,
                            mbias=mbias,
                            sdbias=sdbias,
                            mse=mse,
                            replicates=replicates,
                        )
                    )
                    for sample in samples:
                        bias_rows.append(
                            {
                                "model": scenario.model,
                                "error": scenario.error,
                                "T": scenario.t_train,
                                "tau": tau,
                                "method": method,
                                "split": split_name,
                                "r": sample.replicate,
                                "bias": float(sample.biases.mean()),
                            }
                        )
    return SimulationResult(train_rows=train_rows, test_rows=test_rows, bias_samples=bias_rows)


def _run_with_context(key, job):
    try:
        return _replicate_job(job)
    except Exception as exc:
        si, r = key
        raise RuntimeError(f"replicate {r} of scenario {job['scenario']} failed: {exc}") from exc


@dataclass(frozen=True)
class CoverageRow:
    split: str
    method: str
    tau: float
    theta: float

    def to_dict(self) -> dict:
        return {"split": self.split, "method": self.method, "tau": self.tau, "theta": self.theta}


def coverage_table(series: Series, p: int, n_train: int, taus, methods,
                   *, forest_config: ForestConfig | None = None,
                   wnw_config: WnwConfig | None = None) -> list[CoverageRow]:
    """Empirical coverage of estimated quantiles on a chronological split.

    The first ``n_train`` observations train each method; coverage is the
    fraction of responses at or below the estimated tau-quantile, reported
    separately for the training and held-out pairs.
    """
    n = len(series)
    if not p < n_train < n:
        raise ValueError(f"need p < n_train < series length, got p={p}, n_train={n_train}, n={n}")
    if forest_config is None:
        forest_config = ForestConfig(num_trees=DEFAULT_BENCH_TREES)
    if wnw_config is None:
        wnw_config = WnwConfig()
    taus = [float(t) for t in taus]
    pairs = embed(series, p)
    n_train_pairs = n_train - p
    train = LagDataset(
        x=pairs.x[:n_train_pairs],
        y=pairs.y[:n_train_pairs],
        p=p,
        t_index=pairs.t_index[:n_train_pairs],
    )
    splits = {
        "train": (train.x, train.y),
        "test": (pairs.x[n_train_pairs:], pairs.y[n_train_pairs:]),
    }
    rows = []
    for method in methods:
        if method == "tsqrf":
            forest = fit_forest(train, forest_config)
            predictor = lambda x, ts: predict_quantiles(forest, x, ts)  # noqa: E731
        elif method == "wnw":
            model = fit_wnw(train, wnw_config)
            predictor = model.predict
        else:
            raise ValueError(f"unknown method {method!r} for coverage")
        for split_name, (x, y) in splits.items():
            if x.shape[0] == 0:
                continue
            preds = predictor(x, taus)
            for j, tau in enumerate(taus):
                rows.append(
                    CoverageRow(
                        split=split_name,
                        method=method,
                        tau=tau,
                        theta=empirical_coverage(preds[:, j], y),
                    )
                )
    return rows


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_to_csv(rows) -> str:
    header = "model,error,T,tau,method,mbias,sdbias,mse,R"
    lines = [header]
    for row in rows:
        d = row.to_dict() if hasattr(row, "to_dict") else row
        lines.append(
            ",".join(_fmt(d[k]) for k in ("model", "error", "T", "tau", "method", "mbias", "sdbias", "mse", "R"))
        )
    return "\n".join(lines) + "\n"


def report_to_json(rows, kind: str = "report") -> str:
    payload = {
        "schema": f"tsqrf-{kind}",
        "version": REPORT_SCHEMA_VERSION,
        "rows": [row.to_dict() if hasattr(row, "to_dict") else row for row in rows],
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def bias_samples_to_csv(rows) -> str:
    header = "model,error,T,tau,method,split,r,bias"
    lines = [header]
    for d in rows:
        lines.append(
            ",".join(_fmt(d[k]) for k in ("model", "error", "T", "tau", "method", "split", "r", "bias"))
        )
    return "\n".join(lines) + "\n"


def coverage_to_csv(rows) -> str:
    header = "split,method,tau,theta"
    lines = [header]
    for row in rows:
        d = row.to_dict() if hasattr(row, "to_dict") else row
        lines.append(",".join(_fmt(d[k]) for k in ("split", "method", "tau", "theta")))
    return "\n".join(lines) + "\n"
