"""Monte Carlo orchestration: simulate, sweep and compare commands.

Work is split into jobs of (leg, chunk of path seeds); every job is a pure
function of its inputs, and results are re-ordered by (leg, path) before they
are written, so outputs do not depend on the worker count.
"""
import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import plots
from .config import ExperimentConfig
from .estimators import EstimateReport, comparison_check, estimate_report, l1_curve
from .fitting import loglog_slope
from .records import RecordWriter, make_record
from .scenarios import bump_profile
from .solver import run_ensemble

log = logging.getLogger(__name__)

# functionals fitted by the sweep command
SWEEP_FUNCTIONALS = [n for n in EstimateReport.names() if n not in ("p", "min_u", "max_overshoot")]


def path_seeds(base, paths, leg=None):
    """Per-path seeds spawned from the base seed; ``leg`` decorrelates legs."""
    key = () if leg is None else (int(leg),)
    ss = np.random.SeedSequence(int(base), spawn_key=key)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(paths)]


def _chunks(items, k):
    k = max(1, min(k, len(items)))
    size = math.ceil(len(items) / k)
    return [items[i:i + size] for i in range(0, len(items), size)]


def _map(func, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [func(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, jobs))


# -- leg specification ----------------------------------------------------------

def _leg_inputs(cfg, leg):
    """(problem, solver config) for a leg dict with eps, n_reg and optional
    n_axis, dt, xi_perturbation, S0 overrides."""
    disc = {}
    if "n_axis" in leg:
        disc["n_axis"] = int(leg["n_axis"])
    if "dt" in leg:
        disc["dt"] = float(leg["dt"])
    prob = {}
    if "S0" in leg:
        prob["S0"] = leg["S0"]
    if disc or prob:
        cfg = cfg.with_overrides(discretization=disc, problem=prob)
    extra = None
    if leg.get("xi_perturbation"):
        amp = float(leg["xi_perturbation"])
        extra = lambda g: amp * bump_profile(g)  # noqa: E731
    problem = cfg.problem(xi_extra=extra)
    over = {}
    if "dt_common" in leg:
        over["dt"] = leg["dt_common"]
    if "snapshot_stride" in leg:
        over["snapshot_stride"] = leg["snapshot_stride"]
    return problem, cfg.solver_config(leg["eps"], leg["n_reg"], **over)


def _common_dt(cfg, legs):
    """Smallest stable step over legs sharing a grid, so they share increments."""
    if cfg["discretization"]["dt"] != "auto":
        return legs
    dts = []
    for leg in legs:
        problem, scfg = _leg_inputs(cfg, leg)
        dts.append(scfg.resolve(problem)[1])
    dt = min(dts)
    return [dict(leg, dt_common=dt) for leg in legs]


def _job(args):
    raw, leg, seeds, first_path, keep = args
    cfg = ExperimentConfig.from_dict(raw)
    problem, scfg = _leg_inputs(cfg, leg)
    t0 = time.perf_counter()
    trajs = run_ensemble(problem, scfg, seeds=seeds)
    p = float(cfg["monte_carlo"]["p"])
    out = []
    for i, tr in enumerate(trajs):
        item = {"path": first_path + i, "seed": tr.seed, "failed": tr.failed,
                "diagnostics": tr.diagnostics, "report": estimate_report(tr, p).as_dict()}
        if keep == "snapshots" and first_path + i == 0:
            item["times"] = tr.times
            item["u"] = tr.u
            item["S"] = tr.S
        out.append(item)
    wall = (time.perf_counter() - t0) / max(1, len(trajs))
    for item in out:
        item["wall"] = wall
    return out


def run_legs(cfg, legs, workers=1, paths=None, seed=None, keep=None):
    """Run every leg over the ensemble; returns {leg index: [path results]}."""
    mc = cfg["monte_carlo"]
    paths = int(paths or mc["paths"])
    base = int(mc["seed"] if seed is None else seed)
    raw = cfg.raw
    jobs, owner = [], []
    for li, leg in enumerate(legs):
        seeds = path_seeds(base, paths, None if mc["common_noise"] else li)
        start = 0
        for chunk in _chunks(seeds, workers):
            jobs.append((raw, leg, chunk, start, keep))
            owner.append(li)
            start += len(chunk)
    results = _map(_job, jobs, workers)
    by_leg = {li: [] for li in range(len(legs))}
    for li, res in zip(owner, results):
        by_leg[li].extend(res)
    for li, rs in by_leg.items():
        rs.sort(key=lambda r: r["path"])
        over = sum(r["diagnostics"]["cfl_margin"] > 1 for r in rs)
        if over:
            log.warning("leg %s: %d paths left the CFL amplitude bound; raise "
                        "discretization.cfl_amplitude", _public_leg(legs[li]), over)
    return by_leg


def _public_leg(leg):
    return {k: v for k, v in leg.items() if k not in ("dt_common", "snapshot_stride")}


def _write_records(path, cfg, legs, by_leg):
    h = cfg.hash()
    with RecordWriter(path) as w:
        for li, leg in enumerate(legs):
            for r in by_leg[li]:
                w.write(make_record(h, _public_leg(leg), r["path"], r["seed"], r["report"],
                                    r["diagnostics"], r["failed"], r["wall"]))


def ensemble_table(by_leg):
    """{leg index: {functional: ensemble mean}} over finished paths."""
    out = {}
    for li, rs in by_leg.items():
        ok = [r for r in rs if r["failed"] is None]
        out[li] = {k: float(np.mean([r["report"][k] for r in ok])) if ok else float("nan")
                   for k in EstimateReport.names()}
    return out


def write_snapshot_csv(path, grid, times, u):
    """Rows are time indices, columns grid indices; the header holds coordinates."""
    coords = [c.reshape(-1) for c in grid.coordinates()]
    head = ["t"] + [";".join(f"{c[i]:.6g}" for c in coords) for i in range(grid.size)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(head)
        for t, row in zip(times, u.reshape(len(times), -1)):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def _prepare(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    rec = os.path.join(out_dir, "records.jsonl")
    return rec


# -- commands ----------------------------------------------------------------------

def cmd_simulate(cfg, out_dir=None, workers=1, paths=None, seed=None):
    out_dir = out_dir or cfg["output"]["directory"]
    formats = set(cfg["output"]["formats"])
    legs = _common_dt(cfg, [{"eps": e, "n_reg": n} for e, n in cfg.legs()])
    by_leg = run_legs(cfg, legs, workers, paths, seed, keep="snapshots")
    rec = _prepare(out_dir)
    if "jsonl" in formats:
        _write_records(rec, cfg, legs, by_leg)
    table = ensemble_table(by_leg)
    names = EstimateReport.names()
    with open(os.path.join(out_dir, "ensemble.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "n_reg", "paths", "failed"] + names)
        for li, leg in enumerate(legs):
            nfail = sum(r["failed"] is not None for r in by_leg[li])
            w.writerow([leg["eps"], leg["n_reg"], len(by_leg[li]), nfail]
                       + [repr(table[li][k]) for k in names])
    grid = cfg.grid
    for li, leg in enumerate(legs):
        first = by_leg[li][0]
        tag = f"eps{leg['eps']:g}_n{leg['n_reg']}"
        if "csv" in formats:
            write_snapshot_csv(os.path.join(out_dir, f"snapshots_{tag}.csv"), grid, first["times"], first["u"])
        if "plots" in formats:
            pick = np.unique(np.linspace(0, len(first["times"]) - 1, 5).astype(int))
            plots.profile_figure(os.path.join(out_dir, f"profile_{tag}.png"), grid,
                                 first["u"][pick], first["times"][pick], first["S"][pick],
                                 title=f"path 0, eps={leg['eps']:g}, n={leg['n_reg']}")
    failures = [r["failed"] for rs in by_leg.values() for r in rs if r["failed"]]
    for f in failures:
        log.error("run failed: %s", f)
    return {"legs": legs, "by_leg": by_leg, "table": table, "failures": failures, "records": rec}


def sweep_legs(cfg):
    sw = cfg["sweep"]
    par = sw["parameter"]
    if par is None:
        raise ValueError("sweep.parameter is not set")
    vals = list(sw["values"])
    if len(vals) < 3:
        raise ValueError("sweep needs at least 3 points")
    eps0, n0 = cfg.legs()[0]
    legs = []
    for v in vals:
        leg = {"eps": eps0, "n_reg": n0}
        leg[par] = float(v) if par in ("eps", "dt") else int(v)
        legs.append(leg)
    if par in ("eps", "n_reg"):
        legs = _common_dt(cfg, legs)
    return par, vals, legs


def cmd_sweep(cfg, out_dir=None, workers=1, paths=None, seed=None):
    out_dir = out_dir or cfg["output"]["directory"]
    formats = set(cfg["output"]["formats"])
    par, vals, legs = sweep_legs(cfg)
    by_leg = run_legs(cfg, legs, workers, paths, seed)
    rec = _prepare(out_dir)
    if "jsonl" in formats:
        _write_records(rec, cfg, legs, by_leg)
    table = ensemble_table(by_leg)
    x = np.array(vals, dtype=float)
    fits = {}
    for name in SWEEP_FUNCTIONALS:
        y = np.array([table[li][name] for li in range(len(legs))])
        try:
            fits[name] = loglog_slope(x, y, seed=int(cfg["monte_carlo"]["seed"]))
        except ValueError as exc:
            fits[name] = str(exc)
    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["functional", "slope", "ci_low", "ci_high"] + [f"{par}={v:g}" for v in x])
        for name in SWEEP_FUNCTIONALS:
            f = fits[name]
            ys = [repr(table[li][name]) for li in range(len(legs))]
            if isinstance(f, str):
                w.writerow([name, "nan", "nan", "nan"] + ys)
            else:
                w.writerow([name, repr(f.slope), repr(f.ci_low), repr(f.ci_high)] + ys)
    lines = [f"log-log slopes vs {par} (95% bootstrap interval)"]
    for name in SWEEP_FUNCTIONALS:
        f = fits[name]
        lines.append(f"  {name:<20s} {f if isinstance(f, str) else str(f)}")
    with open(os.path.join(out_dir, "sweep.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if "plots" in formats:
        for name in SWEEP_FUNCTIONALS:
            y = [table[li][name] for li in range(len(legs))]
            plots.write_xy(os.path.join(out_dir, f"sweep_{name}.dat"), x, [y], [par, name])
            if not isinstance(fits[name], str):
                plots.loglog_figure(os.path.join(out_dir, f"sweep_{name}.png"), x, y, fits[name],
                                    par, name, f"{name} vs {par}")
    return {"parameter": par, "values": x, "table": table, "fits": fits, "text": "\n".join(lines),
            "by_leg": by_leg}


def _compare_job(args):
    raw, legs, seeds, first_path = args
    cfg = ExperimentConfig.from_dict(raw)
    runs = []
    for leg in legs:
        problem, scfg = _leg_inputs(cfg, leg)
        runs.append(run_ensemble(problem, scfg, seeds=seeds))
    out = []
    for i, (a, b) in enumerate(zip(*runs)):
        item = {"path": first_path + i, "seed": a.seed, "times": a.times,
                "failed": a.failed or b.failed}
        item["min_diff"], item["min_second"] = comparison_check(a, b)
        item["l1"] = l1_curve(a, b)
        out.append(item)
    return out


def compare_legs(cfg, mode=None, eps1=None, eps2=None, perturbation=None):
    cp = cfg["compare"]
    mode = mode or cp["mode"]
    eps0, n0 = cfg.legs()[0]
    if mode == "eps":
        e1 = float(cp["eps1"] if eps1 is None else eps1)
        e2 = float(cp["eps2"] if eps2 is None else eps2)
        if e1 < e2:
            raise ValueError("compare needs eps1 >= eps2")
        legs = [{"eps": e1, "n_reg": n0}, {"eps": e2, "n_reg": n0}]
    else:
        amp = float(cp["xi_perturbation"] if perturbation is None else perturbation)
        legs = [{"eps": eps0, "n_reg": n0}, {"eps": eps0, "n_reg": n0, "xi_perturbation": amp}]
        if cfg["problem"]["obstacle"] and cfg["problem"]["S0"] is None:
            # both legs share one obstacle above both initial data
            s0 = float(cfg.problem(xi_extra=lambda g: amp * bump_profile(g)).xi.values.max())
            legs = [dict(leg, S0=s0) for leg in legs]
    return mode, _common_dt(cfg, legs)


def cmd_compare(cfg, out_dir=None, workers=1, paths=None, seed=None, **kw):
    out_dir = out_dir or cfg["output"]["directory"]
    formats = set(cfg["output"]["formats"])
    mode, legs = compare_legs(cfg, **kw)
    mc = cfg["monte_carlo"]
    paths = int(paths or mc["paths"])
    seeds = path_seeds(int(mc["seed"] if seed is None else seed), paths)
    jobs, start = [], 0
    for chunk in _chunks(seeds, workers):
        jobs.append((cfg.raw, legs, chunk, start))
        start += len(chunk)
    items = sorted((it for res in _map(_compare_job, jobs, workers) for it in res),
                   key=lambda r: r["path"])
    os.makedirs(out_dir, exist_ok=True)
    times = items[0]["times"]
    curve = np.mean([it["l1"] for it in items], axis=0)
    with open(os.path.join(out_dir, "compare_paths.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "seed", "min_u1_minus_u2", "min_u2", "failed"])
        for it in items:
            w.writerow([it["path"], it["seed"], repr(it["min_diff"]), repr(it["min_second"]),
                        it["failed"] or ""])
    plots.write_xy(os.path.join(out_dir, "compare_l1.dat"), times, [curve], ["t", "mean_l1_distance"])
    if "plots" in formats:
        plots.curve_figure(os.path.join(out_dir, "compare_l1.png"), times, {"E||u1-u2||_1": curve},
                           "t", "L1 distance", f"{mode} comparison")
    ratio = float(curve.max() / curve[0]) if curve[0] > 0 else float("nan")
    return {"mode": mode, "legs": legs, "items": items, "times": times, "curve": curve,
            "ratio": ratio, "min_diff": min(it["min_diff"] for it in items),
            "min_second": min(it["min_second"] for it in items)}
