"""Monte Carlo harness, error metrics and result emission.

RMSE(t) is the root mean (over runs) squared error of the group-norm;
MAE(t) averages absolute errors over runs and the group's components;
ARMSE is the time average of RMSE(t). Metrics are computed per state
group (position / velocity for the land-vehicle model).
"""

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import network


@dataclass
class AlgorithmMetrics:
    """Per-algorithm metric tables over one scenario."""

    algorithm: str
    groups: list
    rmse: np.ndarray          # (horizon, n_groups)
    mae: np.ndarray           # (horizon, n_groups)
    armse: np.ndarray         # (n_groups,)
    mae_avg: np.ndarray       # (n_groups,)
    runtime_per_step: float
    iteration_histogram: dict
    nonconverged_steps: int
    consensus_rounds_mean: float
    consensus_rounds_max: int
    completed_runs: int
    excluded_runs: list


@dataclass
class MetricsReport:
    """All algorithms of one scenario plus provenance."""

    scenario: str
    horizon: int
    mc_runs: int
    master_seed: int
    groups: list
    per_algorithm: dict = field(default_factory=dict)

    def csv_rows(self):
        """Rows (step, algorithm, group, rmse, mae) for the metrics CSV."""
        for name, am in self.per_algorithm.items():
            for t in range(am.rmse.shape[0]):
                for g, group in enumerate(am.groups):
                    yield (t + 1, name, group,
                           float(am.rmse[t, g]), float(am.mae[t, g]))

    def summary_dict(self):
        out = {
            "scenario": self.scenario,
            "horizon": self.horizon,
            "mc_runs": self.mc_runs,
            "master_seed": self.master_seed,
            "groups": list(self.groups),
            "algorithms": {},
        }
        for name, am in self.per_algorithm.items():
            out["algorithms"][name] = {
                "armse": {g: float(v) for g, v in zip(am.groups, am.armse)},
                "mae": {g: float(v) for g, v in zip(am.groups, am.mae_avg)},
                "runtime_per_step_s": am.runtime_per_step,
                "iteration_histogram": am.iteration_histogram,
                "nonconverged_steps": am.nonconverged_steps,
                "consensus_rounds_mean": am.consensus_rounds_mean,
                "consensus_rounds_max": am.consensus_rounds_max,
                "completed_runs": am.completed_runs,
                "excluded_runs": am.excluded_runs,
            }
        return out


def run_seed(master_seed, run_idx):
    """Per-run seed; identical across algorithm variants."""
    return np.random.SeedSequence(master_seed).spawn(run_idx + 1)[run_idx]


def _one_run(config, variant, run_idx):
    nodes = network.make_nodes(config, variant)
    net = config.consensus_network()
    t0 = time.perf_counter()
    rec = network.run_trajectory(nodes, net, config, run_seed(
        config.master_seed, run_idx), variant)
    elapsed = time.perf_counter() - t0
    err = rec.estimates - rec.truth
    return run_idx, err, rec.iterations, rec.consensus_rounds, elapsed, \
        rec.node_failures, int(np.sum(~rec.consensus_converged))


def monte_carlo(config, workers=1, progress=None):
    """Run every configured algorithm over mc_runs independent
    trajectories and aggregate the error metrics.

    Per-run seeds derive from (master_seed, run index) only, so every
    algorithm sees identical noise realizations and reruns are
    bit-reproducible. A run that raises is excluded and recorded.
    """
    group_idx = [np.asarray(idx, dtype=int) for idx in config.groups.values()]
    group_names = list(config.groups.keys())
    report = MetricsReport(scenario=config.name, horizon=config.horizon,
                           mc_runs=config.mc_runs,
                           master_seed=config.master_seed, groups=group_names)
    for variant in config.algorithms:
        results = {}
        excluded = []
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futs = {pool.submit(_one_run, config, variant, r): r
                        for r in range(config.mc_runs)}
                for fut, r in futs.items():
                    try:
                        results[r] = fut.result()
                    except Exception as exc:  # noqa: BLE001 - run isolation
                        excluded.append({"run": r, "error": str(exc)})
        else:
            for r in range(config.mc_runs):
                try:
                    results[r] = _one_run(config, variant, r)
                except Exception as exc:  # noqa: BLE001 - run isolation
                    excluded.append({"run": r, "error": str(exc)})
        T = config.horizon
        ng = len(group_idx)
        sq_sum = np.zeros((T, ng))
        abs_sum = np.zeros((T, ng))
        iter_all = []
        rounds_all = []
        elapsed = 0.0
        nonconv = 0
        completed = sorted(results)
        for r in completed:
            _, err, iters, rounds, dt, _fail, ncv = results[r]
            for g, idx in enumerate(group_idx):
                sq_sum[:, g] += np.sum(err[:, idx] ** 2, axis=1)
                abs_sum[:, g] += np.mean(np.abs(err[:, idx]), axis=1)
            iter_all.append(iters)
            rounds_all.append(rounds)
            elapsed += dt
            nonconv += ncv
        m = max(len(completed), 1)
        rmse = np.sqrt(sq_sum / m)
        mae = abs_sum / m
        iter_all = np.concatenate(iter_all) if iter_all else np.zeros(0)
        rounds_all = np.concatenate(rounds_all) if rounds_all else np.zeros(0)
        hist = {}
        for v in iter_all:
            key = str(int(round(v)))
            hist[key] = hist.get(key, 0) + 1
        report.per_algorithm[variant] = AlgorithmMetrics(
            algorithm=variant, groups=group_names, rmse=rmse, mae=mae,
            armse=rmse.mean(axis=0), mae_avg=mae.mean(axis=0),
            runtime_per_step=elapsed / max(len(completed) * T, 1),
            iteration_histogram=dict(sorted(hist.items(), key=lambda kv: int(kv[0]))),
            nonconverged_steps=nonconv,
            consensus_rounds_mean=float(rounds_all.mean()) if rounds_all.size else 0.0,
            consensus_rounds_max=int(rounds_all.max()) if rounds_all.size else 0,
            completed_runs=len(completed), excluded_runs=excluded)
        if progress is not None:
            progress(variant, report.per_algorithm[variant])
    return report


def write_csv(report, path):
    """Metrics CSV: UTF-8, header row, '.' decimal separator."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,algorithm,group,rmse,mae\n")
        for step, algo, group, rmse, mae in report.csv_rows():
            fh.write(f"{step},{algo},{group},{rmse!r},{mae!r}\n")


def write_summary(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.summary_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_plot_data(report, directory):
    """Two-column (step, value) files per algorithm, metric and group."""
    import os

    os.makedirs(directory, exist_ok=True)
    for name, am in report.per_algorithm.items():
        safe = name.replace("-", "_").lower()
        for g, group in enumerate(am.groups):
            for metric, table in (("rmse", am.rmse), ("mae", am.mae)):
                path = os.path.join(directory, f"{metric}_{group}_{safe}.csv")
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write("step,value\n")
                    for t in range(table.shape[0]):
                        fh.write(f"{t + 1},{float(table[t, g])!r}\n")
