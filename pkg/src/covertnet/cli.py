"""Command-line front end.

    covertnet <subcommand> --config <path> [--set key=value]... [--out <path>] [--seed N]

Subcommands: metrics, detect, simulate, validate, equilibrium, sweep.
Results go to CSV (stdout unless ``--out``); with ``--out`` a
``<out>.meta.json`` sidecar records the resolved configuration, its hash,
the seed, library versions and the wall-clock time.  The CSV itself holds
no timing, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy

from . import __version__, _kernels
from . import analytic as an
from . import game
from . import montecarlo as mc
from .config import ConfigError, RunConfig, build, canonical_key, dbm, parse_lines, read_config
from .params import ParameterError, PowerPair

COMMANDS = ("metrics", "detect", "simulate", "validate", "equilibrium", "sweep")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _require_powers(cfg: RunConfig, command: str) -> PowerPair:
    if cfg.powers is None:
        raise ConfigError(f"{command} needs pd and pc: missing required key pd_dbm (or pd_dbw / pd_watt)")
    return cfg.powers


# ---------------------------------------------------------------------------
# subcommands; each returns (header, rows, summary)

METRIC_COLUMNS = [
    "pd_watt", "pc_watt", "pd_dbm", "pc_dbm", "iota", "tau_star", "fa", "md", "detection_error",
    "d2d_success", "cu_success_with", "cu_success_without", "rate_with", "rate_without",
    "mean_interference", "utility", "xi1", "xi2", "feasible",
]


def run_metrics(cfg: RunConfig):
    pw = _require_powers(cfg, "metrics")
    p = cfg.params
    v = game.xi(pw, p, cfg.t_max)
    det = v.detector
    row = [
        pw.pd, pw.pc, dbm(pw.pd), dbm(pw.pc), an.adversary_scale(pw, p).iota,
        det.tau_star, det.fa, det.md, det.error,
        an.d2d_success_probability(pw, p),
        an.cu_success_with_d2d(pw, cfg.theta_c, p),
        an.cu_success_without_d2d(pw, cfg.theta_c, p),
        an.ergodic_rate(pw, p, True), an.ergodic_rate(pw, p, False),
        an.mean_d2d_interference(pw, p, cfg.t_max),
        -v.xi0, v.xi1, v.xi2, v.feasible(),
    ]
    return METRIC_COLUMNS, [row], {"utility": -v.xi0, "tau_star": det.tau_star, "feasible": v.feasible()}


def run_detect(cfg: RunConfig):
    pw = _require_powers(cfg, "detect")
    p = cfg.params
    taus = game.tau_grid(pw, p, int(cfg.options.get("detect.points", 128)))
    best = game.best_response_tau(pw, p)
    fa = an.fa_probability(pw, taus, p)
    md = an.md_probability(pw, taus, p)
    rows = [[t, t - p.noise_a, a, m, a + m, False] for t, a, m in zip(taus, fa, md)]
    rows.append([best.tau_star, best.tau_star - p.noise_a, best.fa, best.md, best.error, True])
    rows.sort(key=lambda r: (r[0], r[5]))
    header = ["tau_watt", "tau_minus_noise_watt", "fa", "md", "detection_error", "is_best"]
    return header, rows, {"tau_star": best.tau_star, "error": best.error, "flat": best.flat}


def _mc_tau_grid(pw, p, count):
    med = an.adversary_scale(pw, p).median_scale
    return p.noise_a + med * np.logspace(-2, 3, count)


def run_simulate(cfg: RunConfig):
    pw = _require_powers(cfg, "simulate")
    p, sim = cfg.params, cfg.sim
    rows = []

    def add(metric, est, tau=None):
        rows.append([metric, tau, est.mean, est.std_error, est.n, est.rejected])

    add("d2d_success", mc.estimate_d2d_success(pw, p, sim))
    add("cu_success_with", mc.estimate_cu_success(pw, cfg.theta_c, p, sim, True))
    add("cu_success_without", mc.estimate_cu_success(pw, cfg.theta_c, p, sim, False))
    add("rate_with", mc.estimate_ergodic_rate(pw, p, sim, True))
    add("rate_without", mc.estimate_ergodic_rate(pw, p, sim, False))
    add("mean_interference", mc.estimate_mean_interference(pw, p, sim))
    taus = _mc_tau_grid(pw, p, int(cfg.options.get("sim.tau_points", 11)))
    for tau, (fa, md) in zip(taus, mc.estimate_fa_md(pw, taus, p, sim)):
        add("fa", fa, tau)
        add("md", md, tau)
    header = ["metric", "tau_watt", "mean", "std_error", "n", "rejected"]
    return header, rows, {"n_trials": sim.n_trials}


def run_validate(cfg: RunConfig):
    """Analytic metrics against Monte Carlo over a sweep of ``pd`` across its box."""
    pw0 = _require_powers(cfg, "validate")
    p, sim = cfg.params, cfg.sim
    npts = int(cfg.options.get("validate.points", 10))
    limit = float(cfg.options.get("validate.max_se", 3.0))
    corrupt = float(cfg.options.get("validate.iota_scale", 1.0))
    rows = []

    def add(metric, pw, tau, value, est):
        dev = est.deviation(value)
        rows.append([metric, dbm(pw.pd), dbm(pw.pc), tau, value, est.mean, est.std_error, dev, dev <= limit])

    for pd in np.geomspace(p.pd_min, p.pd_max, npts):
        pw = PowerPair(float(pd), pw0.pc)
        add("d2d_success", pw, None, an.d2d_success_probability(pw, p), mc.estimate_d2d_success(pw, p, sim))
        scale = an.adversary_scale(pw, p)
        if corrupt != 1.0:
            scale = an.StableScale(scale.iota * corrupt, scale.alpha)
        taus = _mc_tau_grid(pw, p, 6)
        fa = an.fa_probability(pw, taus, p, scale=scale)
        md = an.md_probability(pw, taus, p, scale=scale)
        for tau, a_fa, a_md, (e_fa, e_md) in zip(taus, fa, md, mc.estimate_fa_md(pw, taus, p, sim)):
            add("fa", pw, tau, a_fa, e_fa)
            add("md", pw, tau, a_md, e_md)
        for inc, name in ((True, "with"), (False, "without")):
            add(f"rate_{name}", pw, None, an.ergodic_rate(pw, p, inc), mc.estimate_ergodic_rate(pw, p, sim, inc))
            cu = an.cu_success_with_d2d if inc else an.cu_success_without_d2d
            add(f"cu_success_{name}", pw, None, cu(pw, cfg.theta_c, p), mc.estimate_cu_success(pw, cfg.theta_c, p, sim, inc))
        add("mean_interference", pw, None, an.mean_d2d_interference(pw, p, sim.censor_at),
            mc.estimate_mean_interference(pw, p, sim))
        if p.lambda_d == 0:
            # without D2D transmitters the paired metrics must coincide exactly
            pairs = (
                ("identity_rate", an.ergodic_rate(pw, p, True), an.ergodic_rate(pw, p, False)),
                ("identity_cu_success", an.cu_success_with_d2d(pw, cfg.theta_c, p),
                 an.cu_success_without_d2d(pw, cfg.theta_c, p)),
                ("identity_mean_interference", an.mean_d2d_interference(pw, p, sim.censor_at), 0.0),
            )
            for name, lhs, rhs in pairs:
                dev = 0.0 if lhs == rhs else math.inf
                rows.append([name, dbm(pw.pd), dbm(pw.pc), None, lhs, rhs, 0.0, dev, dev <= limit])
    header = ["metric", "pd_dbm", "pc_dbm", "tau_watt", "analytic", "mc_mean", "mc_std_error", "deviation_se", "pass"]
    worst = max(r[7] for r in rows)
    return header, rows, {"max_deviation_se": worst, "passed": worst <= limit, "checks": len(rows)}


def _start(cfg: RunConfig) -> PowerPair:
    box = game.LogBox.from_params(cfg.params)
    mid = box.to_powers(np.where(box.free, 0.5, 0.0))
    pd = cfg.values.get("sca.start_pd", mid.pd)
    pc = cfg.values.get("sca.start_pc", mid.pc)
    p = cfg.params
    return PowerPair(min(max(pd, p.pd_min), p.pd_max), min(max(pc, p.pc_min), p.pc_max))


TRACE_COLUMNS = [
    "kind", "iteration", "pd_watt", "pc_watt", "pd_dbm", "pc_dbm", "utility", "reported_utility",
    "xi1", "xi2", "tau_star", "detection_error", "delta", "step", "surrogate_feasible",
    "converged", "feasible",
]


def run_equilibrium(cfg: RunConfig):
    res = game.run_algorithm1(_start(cfg), cfg.params, cfg.sca)
    rows = []
    for st in res.history[:-1]:
        d = st.xi.detector
        rows.append(["iterate", st.iteration, st.powers.pd, st.powers.pc, dbm(st.powers.pd), dbm(st.powers.pc),
                     st.utility, None, st.xi.xi1, st.xi.xi2, d.tau_star, d.error, st.delta, st.step,
                     st.surrogate_feasible, None, None])
    pw, d = res.powers, res.detector
    rows.append(["final", res.iterations, pw.pd, pw.pc, dbm(pw.pd), dbm(pw.pc), res.utility, res.reported_utility,
                 -res.constraint_slacks[0], -res.constraint_slacks[1], d.tau_star, d.error, None, None, None,
                 res.converged, res.feasible])
    summary = {
        "pd_watt": pw.pd, "pc_watt": pw.pc, "utility": res.utility, "reported_utility": res.reported_utility,
        "converged": res.converged, "feasible": res.feasible, "iterations": res.iterations,
    }
    return TRACE_COLUMNS, rows, summary


SWEEP_COLUMNS = [
    "series", "overrides", "variable", "value", "pd_watt", "pc_watt", "pd_dbm", "pc_dbm", "utility", "raw_utility",
    "infeasible", "converged", "tau_star", "detection_error", "d2d_success", "rate_with", "rate_without",
    "xi1", "xi2", "iterations",
]


def _pin(items, variable, value):
    # an equilibrium swept over a power fixes that power's box to the swept value
    base = canonical_key(variable)[0]
    if base not in ("pd", "pc"):
        return items
    suffix = variable[len(base):]
    return items + [(f"{base}_min{suffix}", value), (f"{base}_max{suffix}", value)]


def _sweep_point(task):
    raw, seed, series_idx, overrides, variable, value, mode = task
    base_cfg = build(raw, seed=seed)
    items = list(overrides) + [(variable, repr(value))]
    if mode == "equilibrium":
        items = [(k, v) for k, v in _pin(items, variable, repr(value)) if canonical_key(k)[0] not in ("pd", "pc")]
    cfg = base_cfg.with_overrides(items)
    p = cfg.params
    label = ";".join(f"{k}={v}" for k, v in overrides)
    if mode == "equilibrium":
        res = game.run_algorithm1(_start(cfg), p, cfg.sca)
        pw, iters, converged, feasible = res.powers, res.iterations, res.converged, res.feasible
    elif mode == "cover":
        if canonical_key(variable)[0] != "pd" or cfg.powers is None:
            raise ConfigError("sweep.mode = cover needs sweep.variable = pd_* and a configured pc")
        pc = game.min_cover_power(cfg.powers.pd, p, cfg.t_max)
        pw = PowerPair(cfg.powers.pd, pc if pc is not None else p.pc_max)
        iters, converged, feasible = 0, pc is not None, pc is not None
    else:
        pw = _require_powers(cfg, "sweep.mode = evaluate")
        iters, converged, feasible = 0, True, None
    v = game.xi(pw, p, cfg.t_max)
    if feasible is None:
        feasible = v.feasible()
    u = -v.xi0
    return [series_idx, label, variable, value, pw.pd, pw.pc, dbm(pw.pd), dbm(pw.pc), u if feasible else 0.0, u,
            not feasible, converged, v.detector.tau_star, v.detector.error,
            an.d2d_success_probability(pw, p), an.ergodic_rate(pw, p, True), an.ergodic_rate(pw, p, False),
            v.xi1, v.xi2, iters]


def run_sweep(cfg: RunConfig, workers: int = 1):
    sw = cfg.sweep
    if sw is None:
        raise ConfigError("sweep needs sweep.variable")
    tasks = [
        (cfg.raw, cfg.sim.seed, i, series, sw.variable, value, sw.mode)
        for i, series in enumerate(sw.series)
        for value in sw.values
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    return SWEEP_COLUMNS, rows, {"points": len(rows), "infeasible": sum(bool(r[10]) for r in rows)}


# ---------------------------------------------------------------------------


def _versions():
    return {
        "covertnet": __version__,
        "kernels": _kernels.BACKEND,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _parser():
    ap = argparse.ArgumentParser(prog="covertnet", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="flat key = value file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--out", help="CSV path (default: stdout); a .meta.json sidecar is written next to it")
        sp.add_argument("--seed", type=int, help="64-bit seed (required for simulate and validate)")
        sp.add_argument("--workers", type=int, help="parallel workers; never changes the output")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command in ("simulate", "validate") and args.seed is None:
            raise ConfigError(f"{args.command} requires --seed")
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        raw = read_config(args.config)
        for key, value in parse_lines(args.set, "--set").items():
            base = canonical_key(key)[0]
            for old in [k for k in raw if canonical_key(k)[0] == base]:
                del raw[old]
            raw[key] = value
        cfg = build(raw, seed=args.seed, workers=args.workers, allow_no_d2d=args.command == "validate")
        t0 = time.perf_counter()
        if args.command == "sweep":
            workers = args.workers or int(cfg.values.get("sweep.workers", 1))
            header, rows, summary = run_sweep(cfg, workers)
        else:
            header, rows, summary = globals()[f"run_{args.command}"](cfg)
        elapsed = time.perf_counter() - t0
    except (ConfigError, ParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    text = render_csv(header, rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        meta = {
            "command": args.command,
            "config": cfg.snapshot(),
            "config_hash": cfg.digest(),
            "seed": cfg.sim.seed,
            "versions": _versions(),
            "wall_clock_s": elapsed,
            "summary": summary,
        }
        with open(args.out + ".meta.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
    else:
        sys.stdout.write(text)
    if args.command == "validate" and not summary["passed"]:
        print(f"validate: max deviation {summary['max_deviation_se']:.2f} SE exceeds the limit", file=sys.stderr)
        return 1
    return 0


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(f"not serializable: {type(o)}")


if __name__ == "__main__":
    sys.exit(main())
