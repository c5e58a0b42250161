"""Benchmark command-line interface.

Subcommands: `run` executes a scenario's Monte Carlo benchmark, `sweep`
grids the kernel parameters, `consensus-demo` traces the push-sum
protocol on a graph file, `scaling` probes the per-step runtime against
the state dimension, and `backends` times the compiled core against the
pure-Python fallback.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import _accel, consensus, metrics, network, scenarios
from .errors import AmeefDckfError, ConfigError


def _out_dir(args):
    out = args.out or os.environ.get("AMEEF_DCKF_OUT", "results")
    os.makedirs(out, exist_ok=True)
    return out


def _refuse_overwrite(paths, overwrite):
    if overwrite:
        return
    clashes = [p for p in paths if os.path.exists(p)]
    if clashes:
        raise ConfigError(
            f"refusing to overwrite {clashes}; pass --overwrite to allow")


def cmd_run(args):
    overrides = {}
    if args.runs is not None:
        overrides["mc_runs"] = args.runs
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    config = scenarios.load_scenario(args.scenario, **overrides)
    if args.algos:
        config.algorithms = tuple(a.strip() for a in args.algos.split(","))
    out = _out_dir(args)
    csv_path = os.path.join(out, "metrics.csv")
    json_path = os.path.join(out, "summary.json")
    _refuse_overwrite([csv_path, json_path], args.overwrite)

    def progress(variant, am):
        table = "  ".join(f"{g}={v:.4f}" for g, v in zip(am.groups, am.mae_avg))
        print(f"[{config.name}] {variant:<11s} MAE {table} "
              f"({am.completed_runs} runs)", flush=True)

    report = metrics.monte_carlo(config, workers=args.workers,
                                 progress=progress)
    metrics.write_csv(report, csv_path)
    metrics.write_summary(report, json_path)
    metrics.write_plot_data(report, os.path.join(out, "plots"))
    print(f"wrote {csv_path}, {json_path}")
    return 0


def cmd_sweep(args):
    config = scenarios.load_scenario(args.scenario)
    config.mc_runs = args.runs
    if args.horizon is not None:
        config.horizon = args.horizon
    if args.seed is not None:
        config.master_seed = args.seed
    config.algorithms = (args.variant,)
    etas = [float(v) for v in args.etas.split(",")]
    sigmas = [float(v) for v in args.sigmas.split(",")]
    out = _out_dir(args)
    path = os.path.join(out, "sweep.csv")
    _refuse_overwrite([path], args.overwrite)
    rows = []
    for eta in etas:
        for sigma in sigmas:
            config.kernel_options = dict(config.kernel_options)
            config.kernel_options["eta"] = eta
            if args.variant == "AMEEF-DCKF":
                config.kernel_options["sigma_max"] = sigma
            else:
                config.kernel_options["sigma_fixed"] = sigma
            report = metrics.monte_carlo(config, workers=args.workers)
            am = report.per_algorithm[args.variant]
            rows.append((eta, sigma, am.armse, am.mae_avg))
            print(f"eta={eta:g} sigma={sigma:g}  " + "  ".join(
                f"{g}: armse={a:.4f} mae={m:.4f}"
                for g, a, m in zip(am.groups, am.armse, am.mae_avg)))
    groups = report.groups
    with open(path, "w", encoding="utf-8") as fh:
        head = ",".join(f"armse_{g}" for g in groups) + "," + \
            ",".join(f"mae_{g}" for g in groups)
        fh.write(f"eta,sigma,{head}\n")
        for eta, sigma, armse, mae in rows:
            vals = ",".join(repr(float(v)) for v in list(armse) + list(mae))
            fh.write(f"{eta!r},{sigma!r},{vals}\n")
    print(f"wrote {path}")
    return 0


def cmd_consensus_demo(args):
    try:
        text = open(args.graph).read()
    except OSError as exc:
        raise ConfigError(f"cannot read graph file: {exc}") from None
    pairs = [tok for tok in args.leaders.split(",") if tok]
    ids, values = [], []
    for tok in pairs:
        i, _, v = tok.partition(":")
        ids.append(int(i))
        values.append(float(v))
    graph = consensus.parse_graph_file(text, leaders_override=ids)
    if sorted(ids) != graph.leaders:
        raise ConfigError("leader ids disagree with the graph file")
    alpha = args.alpha if args.alpha is not None else consensus.auto_alpha(graph)
    net = consensus.build_weights(graph, alpha)
    order = np.argsort(ids)
    lv = np.asarray(values)[order].reshape(-1, 1)
    max_rounds = args.max_rounds or consensus.default_max_rounds(net)
    rows = []
    state = None
    prev = None
    stop_round = None
    for rnd, state in consensus.iter_rounds(net, lv, max_rounds):
        for fi, node in enumerate(net.followers):
            rows.append((rnd, node, 0, float(state.beta[fi, 0])))
        if prev is not None and (state.v > 0).all():
            if np.abs(state.beta - prev).max() <= args.gamma:
                stop_round = rnd
                break
        prev = state.beta.copy()
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write("round,node,component,beta\n")
            for rnd, node, comp, beta in rows:
                fh.write(f"{rnd},{node},{comp},{beta!r}\n")
        print(f"wrote {args.trace}")
    final = {int(node): float(state.beta[fi, 0])
             for fi, node in enumerate(net.followers)}
    print(f"leader mean = {np.mean(values)!r}")
    print(f"follower values after {stop_round or max_rounds} rounds: {final}")
    return 0


def cmd_scaling(args):
    dims = [int(v) for v in args.dims.split(",")]
    out = _out_dir(args)
    path = os.path.join(out, "scaling.csv")
    _refuse_overwrite([path], args.overwrite)
    results = probe_scaling(dims, reps=args.reps, seed=args.seed or 0)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("n,per_step_seconds\n")
        for n, t in results["times"].items():
            fh.write(f"{n},{t!r}\n")
    print(json.dumps({"backend": _accel.BACKEND,
                      "per_step_seconds": results["times"],
                      "loglog_slope": results["slope"]}, indent=2))
    print(f"wrote {path}")
    return 0


def probe_scaling(dims, reps=30, seed=0):
    """Median per-step runtime of the full filter stage per state
    dimension (m = n measurements) and the log-log slope."""
    rng = np.random.default_rng(seed)
    times = {}
    for n in dims:
        m = n
        a = rng.standard_normal((n, n)) * 0.1
        f_mat = np.eye(n) + 0.05 * a
        h_mat = rng.standard_normal((m, n))
        q = 0.05 * np.eye(n)
        r = 0.1 * np.eye(m)
        x = rng.standard_normal(n)
        p = np.eye(n)
        r_tilde = np.full(m, -1.0)
        y = h_mat @ x + rng.standard_normal(m)
        # warm up and state burn-in
        for _ in range(3):
            xp, pp = _accel.predict_linear(x, p, f_mat, q)
        samples = []
        for _ in range(reps):
            t0 = time.perf_counter()
            xp, pp = _accel.predict_linear(x, p, f_mat, q)
            res = _accel.node_update_linear(
                xp, pp, h_mat, r, y, 0.5, 20.0, 20.0, 0.2, 20.0, r_tilde,
                True, False, False, 1e-10, 20)
            samples.append(time.perf_counter() - t0)
            x, p = res["x_post"], res["p_post"]
            y = h_mat @ x + rng.standard_normal(m)
        times[n] = float(np.median(samples))
    xs = np.log(np.array(dims, dtype=float))
    ys = np.log(np.array([times[n] for n in dims]))
    slope = float(np.polyfit(xs, ys, 1)[0])
    return {"times": times, "slope": slope}


def cmd_backends(args):
    from . import _accel as accel_pkg
    from ._accel import _pure

    try:
        compiled = accel_pkg.get_backend("compiled")
    except ImportError:
        print("compiled backend unavailable; build the extension first")
        return 1
    rng = np.random.default_rng(7)
    n, m = 4, 2
    f_mat = scenarios.land_vehicle_f()
    h_mat = scenarios.H_ODD
    q = np.diag([0.01, 0.01, 1.0, 1.0])
    r = 0.01 * np.eye(m)
    x = np.array([0.0, 0.0, 5.0, 5.0])
    p = np.diag([900.0, 900.0, 4.0, 4.0])
    y = h_mat @ x + 0.1 * rng.standard_normal(m)
    r_tilde = np.full(m, -1.0)

    def step(backend, x, p, y):
        xp, pp = backend.predict_linear(x, p, f_mat, q)
        return backend.node_update_linear(
            xp, pp, h_mat, r, y, 0.5, 40.0, 40.0, 0.4, 40.0, r_tilde,
            True, False, False, 1e-10, 20)

    res_c = step(compiled, x, p, y)
    res_p = step(_pure, x, p, y)
    dev = max(float(np.abs(res_c[k] - res_p[k]).max())
              for k in ("x_post", "p_post", "gain"))
    timings = {}
    for label, backend in (("compiled", compiled), ("python", _pure)):
        for _ in range(200):
            step(backend, x, p, y)
        t0 = time.perf_counter()
        for _ in range(args.reps):
            step(backend, x, p, y)
        timings[label] = (time.perf_counter() - t0) / args.reps
    a1 = np.abs(rng.standard_normal((10, 10)))
    a1 /= a1.sum(axis=0)
    a2 = np.eye(10)
    lv = rng.standard_normal((10, 14))
    lfac_t = {}
    for label, backend in (("compiled", compiled), ("python", _pure)):
        t0 = time.perf_counter()
        for _ in range(args.reps):
            backend.lfac_loop(a1, a2, lv, 1e-6, 500, 5, 0.25)
        lfac_t[label] = (time.perf_counter() - t0) / args.reps
    out = {
        "filter_step_seconds": timings,
        "filter_speedup": timings["python"] / timings["compiled"],
        "lfac_seconds": lfac_t,
        "lfac_speedup": lfac_t["python"] / lfac_t["compiled"],
        "max_result_deviation": dev,
    }
    print(json.dumps(out, indent=2))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ameef-dckf",
        description="Distributed robust cubature Kalman filter benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario's Monte Carlo benchmark")
    p_run.add_argument("--scenario", required=True,
                       help=f"preset ({', '.join(scenarios.preset_names())}) "
                            "or a YAML file path")
    p_run.add_argument("--algos", help="comma-separated algorithm list")
    p_run.add_argument("--runs", type=int, help="Monte Carlo run count override")
    p_run.add_argument("--horizon", type=int, help="steps per run override")
    p_run.add_argument("--seed", type=int, help="master seed override")
    p_run.add_argument("--out", help="output directory (or $AMEEF_DCKF_OUT)")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--overwrite", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid the kernel bandwidth and eta")
    p_sweep.add_argument("--scenario", required=True)
    p_sweep.add_argument("--variant", default="MEEF-DCKF")
    p_sweep.add_argument("--etas", default="0.3,0.5,0.7")
    p_sweep.add_argument("--sigmas", default="1,2,5")
    p_sweep.add_argument("--runs", type=int, default=20)
    p_sweep.add_argument("--horizon", type=int)
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--out")
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--overwrite", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_demo = sub.add_parser("consensus-demo",
                            help="trace push-sum consensus on a graph file")
    p_demo.add_argument("--graph", required=True, help="edge-list file")
    p_demo.add_argument("--leaders", required=True,
                        help="id:value pairs, e.g. 0:1.0,1:2.0,2:6.0")
    p_demo.add_argument("--alpha", type=float)
    p_demo.add_argument("--gamma", type=float, default=1e-6)
    p_demo.add_argument("--max-rounds", type=int)
    p_demo.add_argument("--trace", help="CSV trace output path")
    p_demo.set_defaults(func=cmd_consensus_demo)

    p_scale = sub.add_parser("scaling",
                             help="per-step runtime vs state dimension")
    p_scale.add_argument("--dims", default="4,8,16,32")
    p_scale.add_argument("--reps", type=int, default=30)
    p_scale.add_argument("--seed", type=int)
    p_scale.add_argument("--out")
    p_scale.add_argument("--overwrite", action="store_true")
    p_scale.set_defaults(func=cmd_scaling)

    p_back = sub.add_parser("backends",
                            help="compare compiled and pure-Python kernels")
    p_back.add_argument("--reps", type=int, default=2000)
    p_back.set_defaults(func=cmd_backends)
    return parser


def run_cli(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AmeefDckfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    raise SystemExit(run_cli())


if __name__ == "__main__":
    main()
