"""Event-driven simulation core and run statistics.

Completions sit in a binary heap ordered by ``(time, sequence)``; the arrival
stream is pre-drawn and merged with it, arrivals first on equal times.

Slotted mode runs each slot as: all arrivals are routed, then all completions
free their servers, then idle servers are offered work in ascending id.
Continuous mode reacts per event: an arrival is routed and the policy's wake
list is offered the work (stopping at the first server that starts a task);
a completion immediately lets the freed server pick its next task.
"""
import heapq
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import stats

from .cluster import Locality, RateProfile, Topology, task_type
from .errors import ConfigError, InsufficientDataError
from .policies import DecisionCost, PodConfig, make_policy
from .workload import (CONTINUOUS, EXPONENTIAL, GEOMETRIC, MODES, SLOTTED,
                       ArrivalProcess, ServiceSampler, substream)


@dataclass
class SimConfig:
    topology: Topology
    shape: dict
    policy: str
    rates: RateProfile = field(default_factory=RateProfile)
    service: str = EXPONENTIAL
    cv: float = 2.0
    mode: str = CONTINUOUS
    pod: Optional[PodConfig] = None
    horizon_tasks: Optional[int] = 50_000
    horizon_time: Optional[float] = None
    warmup: float = 0.2
    seed: int = 0
    bp_count_in_service: bool = True

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if (self.mode == SLOTTED) != (self.service == GEOMETRIC):
            raise ConfigError("slotted mode and geometric service go together")
        if (self.horizon_tasks is None) == (self.horizon_time is None):
            raise ConfigError("set exactly one of horizon_tasks and horizon_time")
        if self.horizon_tasks is not None and self.horizon_tasks <= 0:
            raise ConfigError("horizon must be positive")
        if self.horizon_time is not None and not self.horizon_time > 0:
            raise ConfigError("horizon must be positive")
        if not 0 <= self.warmup < 1:
            raise ConfigError("warmup must lie in [0, 1)")
        if not self.shape:
            raise ConfigError("rate vector is empty")
        for t, r in self.shape.items():
            task_type(t, self.topology)
            if r < 0:
                raise ConfigError("arrival rates must be nonnegative")


class TaskRecord(NamedTuple):
    id: int
    type: tuple
    arrival_time: float
    start_time: float
    completion_time: float
    server: int
    locality: Locality

    @property
    def sojourn(self):
        return self.completion_time - self.arrival_time


@dataclass
class SimResult:
    policy: str
    types: list
    # post-warmup completed tasks, in completion order
    task_id: np.ndarray
    type_index: np.ndarray
    arrival: np.ndarray
    start: np.ndarray
    completion: np.ndarray
    server: np.ndarray  # 1-based
    locality: np.ndarray
    cost: DecisionCost
    mean_queue: np.ndarray  # time-averaged waiting tasks per server, post-warmup
    arrived: int
    completed: int
    in_system: int
    end_time: float
    warmup_time: float
    half_averages: tuple  # time-averaged tasks in system, (first, second) half

    @property
    def sojourn(self):
        return self.completion - self.arrival

    def task_records(self):
        return [TaskRecord(int(i), self.types[k], a, s, c, int(m), Locality(int(l)))
                for i, k, a, s, c, m, l in zip(self.task_id, self.type_index, self.arrival,
                                               self.start, self.completion, self.server,
                                               self.locality)]

    def fingerprint(self):
        """Everything that must match bit-for-bit between identical runs."""
        arrays = (self.task_id, self.type_index, self.arrival, self.start, self.completion,
                  self.server, self.locality, self.mean_queue)
        return (tuple(a.tobytes() for a in arrays),
                (self.cost.route_servers, self.cost.route_decisions,
                 self.cost.sched_servers, self.cost.sched_decisions),
                self.arrived, self.completed, self.in_system, self.end_time,
                self.half_averages)


class _Run:
    def __init__(self, cfg, trace):
        cfg.validate()
        self.cfg = cfg
        self.trace = trace
        self.types = [task_type(t, cfg.topology) for t in cfg.shape]
        rates = {t: float(r) for t, r in zip(self.types, cfg.shape.values())}
        self.arrivals = ArrivalProcess(rates, cfg.mode, rng=substream(cfg.seed, "arrivals"))
        self.sampler = ServiceSampler(cfg.service, cfg.rates, cfg.mode, cfg.cv,
                                      rng=substream(cfg.seed, "service"))
        if self.arrivals.total <= 0:
            times, kinds = np.empty(0), np.empty(0, dtype=np.int64)
            end = cfg.horizon_time if cfg.horizon_time is not None else 0.0
        elif cfg.horizon_tasks is not None:
            times, kinds = self.arrivals.take(cfg.horizon_tasks)
            end = float(times[-1])
        else:
            times, kinds = self.arrivals.until(cfg.horizon_time)
            end = float(cfg.horizon_time)
        self.arr_times = times
        self.type_of = kinds
        self.end = end
        n = len(times)
        self.start = np.full(n, np.nan)
        self.completion = np.full(n, np.nan)
        self.server = np.full(n, -1, dtype=np.int64)
        self.locality = np.full(n, -1, dtype=np.int8)
        self.policy = make_policy(cfg.policy, cfg.topology, cfg.rates, self.types, kinds,
                                  pod=cfg.pod, rng=substream(cfg.seed, "policy"),
                                  count_in_service=cfg.bp_count_in_service)
        M = cfg.topology.servers
        self.M = M
        self.heap = []
        self.seq = 0
        self.in_system = 0
        self.completed = 0

        self.t_warm = cfg.warmup * end
        self.t_mid = (self.t_warm + end) / 2
        self.clock = 0.0
        self.area = [0.0, 0.0]
        self.q_area = np.zeros(M)
        self.q_last = np.zeros(M)
        self.q_val = np.zeros(M, dtype=np.int64)

    # -- statistics ------------------------------------------------------
    def _advance(self, t):
        """Accumulate the tasks-in-system integral over each post-warmup half."""
        a, n = self.clock, self.in_system
        if t > a and n:
            w, mid = self.t_warm, self.t_mid
            lo, hi = max(a, w), min(t, mid)
            if hi > lo:
                self.area[0] += n * (hi - lo)
            lo, hi = max(a, mid), t
            if hi > lo:
                self.area[1] += n * (hi - lo)
        self.clock = t

    def _touch(self, m, t):
        if m is None:
            return
        lo = max(self.q_last[m], self.t_warm)
        if t > lo:
            self.q_area[m] += self.q_val[m] * (t - lo)
        self.q_last[m] = t
        self.q_val[m] = self.policy.waiting(m)

    def _log(self, t, kind, task, m):
        if self.trace is None:
            return
        ttype = "-".join(map(str, self.types[self.type_of[task]]))
        srv = m + 1 if m is not None else 0
        self.trace.write(f"{t!r}\t{kind}\t{task}\t{ttype}\t{srv}\t{self.policy.queue_snapshot()}\n")

    # -- event handlers ----------------------------------------------------
    def _begin(self, t, m, picked):
        task, src, cls = picked
        dur = self.sampler.sample(cls)
        self.start[task] = t
        self.server[task] = m
        self.locality[task] = cls
        self._touch(src, t)
        heapq.heappush(self.heap, (float(t + dur), self.seq, m, task))
        self.seq += 1
        self._log(t, "S", task, m)

    def _arrive(self, t, task):
        self._advance(t)
        self.in_system += 1
        target = self.policy.route(task)
        self._touch(target, t)
        self._log(t, "A", task, target)

    def _complete(self, t, m, task):
        self._advance(t)
        self.in_system -= 1
        self.completed += 1
        self.completion[task] = t
        self.policy.release(m)
        self._log(t, "C", task, m)

    def run_continuous(self):
        times, heap, end, pol = self.arr_times, self.heap, self.end, self.policy
        n, i = len(times), 0
        inf = math.inf
        while True:
            ta = times[i] if i < n else inf
            tc = heap[0][0] if heap else inf
            if ta <= tc:
                if ta > end:
                    break
                ta = float(ta)
                self._arrive(ta, i)
                for m in pol.wake():
                    picked = pol.schedule(m)
                    if picked is not None:
                        self._begin(ta, m, picked)
                        break
                i += 1
            else:
                if tc > end:
                    break
                _, _, m, task = heapq.heappop(heap)
                self._complete(tc, m, task)
                picked = pol.schedule(m)
                if picked is not None:
                    self._begin(tc, m, picked)

    def run_slotted(self):
        times, heap, end, pol = self.arr_times, self.heap, self.end, self.policy
        n, i = len(times), 0
        inf = math.inf
        while True:
            ta = times[i] if i < n else inf
            tc = heap[0][0] if heap else inf
            t = min(ta, tc)
            if t > end:
                break
            t = float(t)
            while i < n and times[i] == t:
                self._arrive(t, i)
                i += 1
            while heap and heap[0][0] == t:
                _, _, m, task = heapq.heappop(heap)
                self._complete(t, m, task)
            for m in pol.idle_servers():
                if not pol.total_waiting():
                    break
                picked = pol.schedule(int(m))
                if picked is not None:
                    self._begin(t, int(m), picked)

    def result(self):
        self._advance(self.end)
        for m in range(self.M):
            self._touch(m, self.end)
        span = self.end - self.t_warm
        done = ~np.isnan(self.completion)
        keep = done & (self.completion >= self.t_warm)
        order = np.flatnonzero(keep)
        order = order[np.lexsort((order, self.completion[order]))]
        half = (self.t_mid - self.t_warm)
        halves = tuple(a / half if half > 0 else 0.0 for a in self.area)
        return SimResult(
            policy=self.cfg.policy,
            types=self.types,
            task_id=order,
            type_index=self.type_of[order],
            arrival=self.arr_times[order],
            start=self.start[order],
            completion=self.completion[order],
            server=self.server[order] + 1,
            locality=self.locality[order],
            cost=self.policy.cost,
            mean_queue=self.q_area / span if span > 0 else np.zeros(self.M),
            arrived=len(self.arr_times),
            completed=self.completed,
            in_system=self.in_system,
            end_time=self.end,
            warmup_time=self.t_warm,
            half_averages=halves,
        )


def run(config, trace=None):
    """Simulate one configuration; ``trace`` receives the tab-separated event log."""
    r = _Run(config, trace)
    if config.mode == SLOTTED:
        r.run_slotted()
    else:
        r.run_continuous()
    return r.result()


# -- statistics on results ---------------------------------------------------

def batch_means(values, n_batches=20, confidence=0.95):
    """Mean of ``values`` and the batch-means confidence half-width.

    Values are split into ``n_batches`` equal-count consecutive batches;
    leading values that do not fill a batch are dropped from the interval
    estimate but kept in the mean.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n_batches < 2 or n < n_batches:
        raise InsufficientDataError(f"need at least {max(n_batches, 2)} values, got {n}")
    size = n // n_batches
    means = values[n - size * n_batches:].reshape(n_batches, size).mean(axis=1)
    sd = means.std(ddof=1)
    hw = stats.t.ppf(0.5 + confidence / 2, n_batches - 1) * sd / math.sqrt(n_batches)
    return float(values.mean()), float(hw)


def mean_completion_time(result, n_batches=20):
    """Mean sojourn of post-warmup tasks with a 95% batch-means half-width."""
    if n_batches < 20:
        raise ValueError("use at least 20 batches")
    return batch_means(result.sojourn, n_batches)


def locality_mix(result):
    n = len(result.locality)
    if not n:
        raise InsufficientDataError("no completed tasks")
    local = np.count_nonzero(result.locality == Locality.LOCAL) / n
    rack = np.count_nonzero(result.locality == Locality.RACK) / n
    return local, rack, 1.0 - (local + rack)


def queue_stability_stat(result):
    """Time-averaged tasks in system over the first and last half of the
    post-warmup window, and their ratio (1 for an empty system)."""
    first, second = result.half_averages
    if first == 0:
        ratio = 1.0 if second == 0 else math.inf
    else:
        ratio = second / first
    return first, second, ratio
