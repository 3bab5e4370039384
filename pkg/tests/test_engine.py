import io
from itertools import combinations
from types import SimpleNamespace

import numpy as np
import pytest

from dcsched.cluster import RateProfile, Topology, scale_to_load
from dcsched.engine import (SimConfig, batch_means, locality_mix, mean_completion_time,
                            queue_stability_stat, run)
from dcsched.errors import ConfigError, InsufficientDataError
from dcsched.policies import POLICY_NAMES, PodConfig
from dcsched.workload import ServiceSampler, substream

R = RateProfile()
T62 = Topology(6, 2)
ALL20 = {t: 1.0 for t in combinations(range(1, 7), 3)}


def shape_at(load, topo=T62, shape=ALL20):
    return scale_to_load(shape, load, topo, R)


def traced(cfg):
    buf = io.StringIO()
    res = run(cfg, trace=buf)
    rows = [line.split("\t") for line in buf.getvalue().splitlines()]
    return res, rows


def snapshot_counts(field):
    if field.startswith("g"):
        return None, int(field[1:])
    per = [sum(int(x) for x in s.split("/")) for s in field.split(",")]
    return per, sum(per)


def test_zero_rates_empty_result():
    res = run(SimConfig(T62, {(1, 2, 3): 0.0}, "bp", horizon_tasks=None, horizon_time=100.0))
    assert res.arrived == res.completed == res.in_system == 0
    assert len(res.sojourn) == 0
    assert np.all(res.mean_queue == 0)
    assert queue_stability_stat(res) == (0.0, 0.0, 1.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        run(SimConfig(T62, ALL20, "bp", service="geometric"))
    with pytest.raises(ConfigError):
        run(SimConfig(T62, ALL20, "bp", mode="slotted"))
    with pytest.raises(ConfigError):
        run(SimConfig(T62, ALL20, "bp", warmup=1.0))
    with pytest.raises(ConfigError):
        run(SimConfig(T62, ALL20, "bp", horizon_tasks=0))
    with pytest.raises(ConfigError):
        run(SimConfig(T62, ALL20, "bp", horizon_tasks=None))


@pytest.mark.parametrize("policy", POLICY_NAMES)
def test_mm1_short(policy):
    cfg = SimConfig(Topology(1, 1), {(1,): 0.5}, policy, horizon_tasks=60_000, seed=2)
    res = run(cfg)
    mean, hw = mean_completion_time(res)
    assert mean == pytest.approx(2.0, rel=0.08)
    assert hw > 0
    assert locality_mix(res) == (1.0, 0.0, 0.0)


@pytest.mark.parametrize("policy", POLICY_NAMES)
def test_determinism(policy):
    cfg = SimConfig(T62, shape_at(0.8), policy, horizon_tasks=3000, seed=4)
    assert run(cfg).fingerprint() == run(cfg).fingerprint()
    other = SimConfig(T62, shape_at(0.8), policy, horizon_tasks=3000, seed=5)
    assert run(other).fingerprint() != run(cfg).fingerprint()


@pytest.mark.parametrize("policy", POLICY_NAMES)
@pytest.mark.parametrize("service", ["exponential", "lognormal", "geometric"])
def test_event_invariants(policy, service):
    mode = "slotted" if service == "geometric" else "continuous"
    rates = RateProfile(0.8, 0.4, 0.2) if mode == "slotted" else R
    lam = scale_to_load(ALL20, 0.85, T62, rates)
    cfg = SimConfig(T62, lam, policy, rates=rates, service=service, mode=mode,
                    horizon_tasks=2000, warmup=0.0, seed=3)
    res, rows = traced(cfg)
    times = [float(r[0]) for r in rows]
    assert times == sorted(times)
    if mode == "slotted":
        assert all(t == int(t) for t in times)

    arrived = completed = 0
    busy = set()
    started = {}
    sampler = ServiceSampler(service, rates, mode, 2.0, rng=substream(3, "service"))
    for k, (t, kind, task, ttype, srv, snap) in enumerate(rows):
        t, srv = float(t), int(srv)
        if kind == "A":
            arrived += 1
        elif kind == "S":
            assert srv not in busy
            busy.add(srv)
            started[task] = (t, srv)
        else:
            completed += 1
            busy.discard(srv)
            s, m = started[task]
            assert m == srv and s <= t
        per, waiting = snapshot_counts(snap)
        # flow conservation at every event
        assert arrived == completed + waiting + len(busy)
        # work conservation once the event is fully handled
        nxt = rows[k + 1] if k + 1 < len(rows) else None
        settled = nxt is None or nxt[1] != "S" or float(nxt[0]) != t
        if settled and mode == "continuous" and policy in ("bp", "bp_pod"):
            for m in range(1, 7):
                if m not in busy:
                    assert per[m - 1] == 0
        if settled and mode == "continuous" and policy == "jsq_mw" and len(busy) < 6:
            assert waiting == 0
    assert arrived == res.arrived
    assert res.arrived == res.completed + res.in_system

    recs = res.task_records()
    assert all(r.arrival_time <= r.start_time <= r.completion_time for r in recs)
    assert all(r.sojourn > 0 for r in recs)
    # durations equal the service stream consumed in start order
    order = [int(r[2]) for r in rows if r[1] == "S"]
    by_id = {r.id: r for r in recs}
    for task in order:
        dur = sampler.sample(by_id[task].locality) if task in by_id else sampler.sample(0)
        if task in by_id:
            got = by_id[task].completion_time - by_id[task].start_time
            assert got == pytest.approx(dur, rel=1e-9, abs=1e-9)


def test_warmup_excluded():
    cfg = SimConfig(T62, shape_at(0.7), "bp", horizon_tasks=5000, warmup=0.3, seed=1)
    res = run(cfg)
    assert res.warmup_time == pytest.approx(0.3 * res.end_time)
    assert res.completion.min() >= res.warmup_time
    full = run(SimConfig(T62, shape_at(0.7), "bp", horizon_tasks=5000, warmup=0.0, seed=1))
    assert len(full.sojourn) > len(res.sojourn)
    assert full.completed == res.completed


def test_horizon_time_mode():
    res = run(SimConfig(T62, shape_at(0.5), "jsq_mw", horizon_tasks=None,
                        horizon_time=500.0, seed=1))
    assert res.end_time == 500.0
    assert res.arrived == res.completed + res.in_system


def test_slotted_geometric_local_service_is_one_slot():
    # replication-1 single server, alpha = 1: every task takes exactly one slot
    res = run(SimConfig(Topology(1, 1), {(1,): 0.5}, "bp", service="geometric",
                        mode="slotted", horizon_tasks=2000, warmup=0.0, seed=3))
    assert np.all(res.completion - res.start == 1.0)


def test_batch_means_examples():
    assert batch_means([2.0, 4.0], n_batches=2)[0] == 3.0
    mean, hw = batch_means(np.full(400, 1.5))
    assert (mean, hw) == (1.5, 0.0)
    with pytest.raises(InsufficientDataError):
        batch_means([1.0] * 19)


def test_mean_completion_time_needs_twenty_records():
    few = SimpleNamespace(sojourn=np.array([2.0, 4.0]))
    with pytest.raises(InsufficientDataError):
        mean_completion_time(few)
    many = SimpleNamespace(sojourn=np.full(100, 7.0))
    assert mean_completion_time(many) == (7.0, 0.0)


def test_locality_mix_low_load_mostly_local():
    topo = Topology(50, 5)
    from dcsched.workload import sample_type_pool
    shape = sample_type_pool(topo, 200, seed=3).shape()
    lam = scale_to_load(shape, 0.1, topo, R)
    for policy in ("bp", "jsq_priority"):
        res = run(SimConfig(topo, lam, policy, horizon_tasks=10_000, seed=1))
        mix = locality_mix(res)
        assert mix[0] >= 0.9
        assert sum(mix) == 1.0


def test_stability_stat_stable_bp():
    topo = Topology(50, 5)
    from dcsched.workload import sample_type_pool
    shape = sample_type_pool(topo, 200, seed=3).shape()
    res = run(SimConfig(topo, scale_to_load(shape, 0.5, topo, R), "bp",
                        horizon_tasks=50_000, seed=1))
    first, second, ratio = queue_stability_stat(res)
    assert first > 0 and 0.8 <= ratio <= 1.25


def test_stability_stat_overload_jsq_priority():
    # 1.2 x the capacity boundary; growth from time zero, so no warm-up cut
    lam = {t: r * 1.2 for t, r in scale_to_load(ALL20, 0.5, T62, R).items()}
    lam = {t: r / 0.5 for t, r in lam.items()}
    res = run(SimConfig(T62, lam, "jsq_priority", horizon_tasks=20_000, warmup=0.0, seed=1))
    assert queue_stability_stat(res)[2] > 2


def test_full_sample_pod_traces_equal_parent():
    lam = shape_at(0.8)
    for parent, pod in (("bp", PodConfig(3, 3)), ("jsq_mw", PodConfig(2, 3))):
        a = traced(SimConfig(T62, lam, parent, horizon_tasks=2000, seed=6))
        b = traced(SimConfig(T62, lam, parent + "_pod", pod=pod, horizon_tasks=2000, seed=6))
        assert a[1] == b[1]
