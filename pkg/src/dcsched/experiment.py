"""Load sweeps over policies and replications, CSV output, capacity reports."""
import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cluster
from .engine import SimConfig, locality_mix, mean_completion_time, queue_stability_stat, run
from .policies import BASELINES
from .workload import sample_type_pool

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RESULT_COLUMNS = ("policy", "rho", "seed", "mean_completion_time", "ci_half_width",
                  "frac_local", "frac_rack", "frac_remote", "route_cost_per_task",
                  "sched_cost_per_decision", "stability_ratio")
SUMMARY_COLUMNS = ("policy", "rho", "replications", "mean_completion_time", "ci_half_width",
                   "frac_local", "frac_rack", "frac_remote", "route_cost_per_task",
                   "sched_cost_per_decision", "stability_ratio")
OUTPUT_ENV = "DCSCHED_OUTPUT_DIR"


@dataclass
class ResultRow:
    policy: str
    rho: float
    seed: int
    mean_completion_time: float
    ci_half_width: float
    frac_local: float
    frac_rack: float
    frac_remote: float
    route_cost_per_task: float
    sched_cost_per_decision: float
    stability_ratio: float

    def values(self):
        return [getattr(self, c) for c in RESULT_COLUMNS]


def rate_shape(spec):
    """The unscaled ``{type: rate}`` shape the load grid is applied to."""
    if spec.explicit_types:
        return dict(spec.explicit_types)
    pool = sample_type_pool(spec.topology, spec.pool_size, spec.popularity, spec.zipf_s,
                            seed=spec.pool_seed, replication=spec.replication,
                            scenario=spec.scenario)
    return pool.shape()


def margin_of(spec, shape):
    if spec.margin is not None:
        return spec.margin
    return cluster.throughput_margin(shape, spec.topology, spec.rates).rho


def sim_config(spec, policy, lam, seed):
    return SimConfig(topology=spec.topology, shape=lam, policy=policy, rates=spec.rates,
                     service=spec.service, cv=spec.cv, mode=spec.mode,
                     pod=spec.pods.get(policy), horizon_tasks=spec.horizon,
                     warmup=spec.warmup, seed=seed,
                     bp_count_in_service=spec.bp_count_in_service)


def evaluate(cfg, rho):
    res = run(cfg)
    mean, hw = mean_completion_time(res)
    fl, fr, fm = locality_mix(res)
    return ResultRow(cfg.policy, rho, cfg.seed, mean, hw, fl, fr, fm,
                     res.cost.route_per_decision, res.cost.sched_per_decision,
                     queue_stability_stat(res)[2])


def _evaluate(args):
    return evaluate(*args)


def run_rows(spec):
    """Simulate every (policy, load, seed) combination; rows come back in that order."""
    if not spec.loads:
        return []
    shape = rate_shape(spec)
    margin = margin_of(spec, shape)
    jobs = []
    for policy in spec.policies:
        for rho in spec.loads:
            lam = cluster.scale_to_load(shape, rho, spec.topology, spec.rates, margin=margin)
            for seed in spec.seeds:
                jobs.append((sim_config(spec, policy, lam, seed), rho))
    log.info("running %d simulations (margin %.6g)", len(jobs), margin)
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            return list(pool.map(_evaluate, jobs))
    return [_evaluate(j) for j in jobs]


def summarize(rows):
    """Average replications per (policy, rho); half-widths combine as the CI of a mean."""
    groups = {}
    for r in rows:
        groups.setdefault((r.policy, r.rho), []).append(r)
    out = []
    for (policy, rho), rs in groups.items():
        n = len(rs)

        def avg(attr):
            return sum(getattr(r, attr) for r in rs) / n

        hw = math.sqrt(sum(r.ci_half_width ** 2 for r in rs)) / n
        out.append([policy, rho, n, avg("mean_completion_time"), hw, avg("frac_local"),
                    avg("frac_rack"), avg("frac_remote"), avg("route_cost_per_task"),
                    avg("sched_cost_per_decision"), avg("stability_ratio")])
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def output_dir(spec, override=None):
    return Path(override or os.environ.get(OUTPUT_ENV) or spec.output_dir)


def run_experiment(spec, out=None, plots=True):
    """Run the sweep and write ``results.csv``, ``summary.csv``, ``metadata.json``
    and the figure files into the output directory. Returns the directory."""
    out = output_dir(spec, out)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_rows(spec)
    write_csv(out / "results.csv", RESULT_COLUMNS, [r.values() for r in rows])
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, summarize(rows))
    meta = {
        "schema_version": SCHEMA_VERSION,
        "spec": spec.name,
        "servers": spec.topology.servers,
        "racks": spec.topology.racks,
        "service": spec.service,
        "policies": list(spec.policies),
        "baseline_definitions_local_to_this_tool": [p for p in spec.policies if p in BASELINES],
        "pod": {k: [v.n_rack, v.n_remote, v.stratified] for k, v in spec.pods.items()},
        "scenario": spec.scenario,
        "hotspot_is_synthetic_scenario": spec.scenario == "hotspot",
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if plots:
        from .plotting import emit_plot_data
        emit_plot_data(out / "summary.csv", out)
    return out


@dataclass
class CapacityReport:
    rho: float
    status: str
    bottlenecks: list  # (server id, load at the unscaled shape)

    def render(self):
        where = {"inside": "inside the capacity region",
                 "on boundary": "on the capacity boundary",
                 "outside": "outside capacity region"}[self.status]
        lines = [f"throughput margin rho* = {self.rho:.9g}", f"rate vector is {where}"]
        lines.append("most loaded servers at the witness decomposition (unscaled shape):")
        for m, load in self.bottlenecks:
            lines.append(f"  server {m:>5}  load {load:.9g}")
        return "\n".join(lines)


def capacity_report(spec, top=5):
    """Margin of the spec's rate shape and its most loaded servers."""
    shape = rate_shape(spec)
    cap = cluster.throughput_margin(shape, spec.topology, spec.rates)
    loads = cap.loads / cap.rho
    order = np.lexsort((np.arange(len(loads)), -np.round(loads, 12)))[:top]
    return CapacityReport(cap.rho, cap.status, [(int(j) + 1, float(loads[j])) for j in order])
