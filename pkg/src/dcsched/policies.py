"""Routing and scheduling policies.

Six policies share one interface driven by the engine::

    route(task)   -> index of the server queue that received the task, or None
    wake()        -> servers to offer work to after the last routing decision
    schedule(m)   -> (task, source queue, locality class) or None
    release(m)    -> server m finished its task

Internally servers are 0-based array indices; the module-level decision
functions take and return 1-based server ids.

Queue occupancy used for routing counts the task in service: a Balanced-Pandas
sub-queue keeps a task until it completes, and JSQ routing compares
waiting-plus-in-service counts. Stealing weights in JSQ-MaxWeight use waiting
tasks only, since a task in service cannot move.
"""
from collections import deque
from dataclasses import dataclass

import numpy as np

from .cluster import Locality, class_matrix, task_type

POLICY_NAMES = ("fcfs", "jsq_priority", "jsq_mw", "jsq_mw_pod", "bp", "bp_pod")
BASELINES = ("fcfs", "jsq_priority")


@dataclass(frozen=True)
class PodConfig:
    """Sample sizes for the power-of-d variants.

    ``stratified`` draws ``n_rack`` rack-local and ``n_remote`` remote servers
    separately; otherwise ``n_rack + n_remote`` servers are drawn from the
    union of both strata.
    """
    n_rack: int
    n_remote: int
    stratified: bool = True

    def __post_init__(self):
        if self.n_rack < 0 or self.n_remote < 0:
            raise ValueError("pod sample counts must be nonnegative")

    @property
    def d(self):
        return self.n_rack + self.n_remote


BP_POD_DEFAULT = PodConfig(2, 6)
JSQ_MW_POD_DEFAULT = PodConfig(6, 6)


@dataclass
class DecisionCost:
    route_servers: int = 0
    route_decisions: int = 0
    sched_servers: int = 0
    sched_decisions: int = 0

    @property
    def route_per_decision(self):
        return self.route_servers / self.route_decisions if self.route_decisions else 0.0

    @property
    def sched_per_decision(self):
        return self.sched_servers / self.sched_decisions if self.sched_decisions else 0.0


def _weighted_argmin(values, classes):
    """Position of the smallest value; ties go to the better locality class,
    then to the earliest position (lowest id when positions are sorted)."""
    vmin = values.min()
    hit = np.flatnonzero(values == vmin)
    if len(hit) == 1:
        return int(hit[0])
    return int(hit[np.argmin(classes[hit])])


def _draw(rng, pool, k):
    if k >= len(pool):
        return pool
    if k == 0:
        return pool[:0]
    return rng.choice(pool, size=k, replace=False)


def _sample_pod(rng, rack, remote, pod):
    if pod.stratified:
        return _draw(rng, rack, pod.n_rack), _draw(rng, remote, pod.n_remote)
    return _draw(rng, np.concatenate([rack, remote]), pod.d), remote[:0]


# -- decision functions on explicit state (1-based ids) ---------------------

def _type_classes(ttype, topo):
    return class_matrix([task_type(ttype, topo)], topo)[0]


def pandas_route(ttype, workloads, topo, rates):
    """Balanced-Pandas routing: minimum workload weighted by 1/rate of the
    task's locality at each server. Returns ``(server, Locality)``."""
    cls = _type_classes(ttype, topo)
    vals = np.asarray(workloads, dtype=float) / rates.as_array()[cls]
    j = _weighted_argmin(vals, cls)
    return j + 1, Locality(int(cls[j]))


def pandas_pod_route(ttype, workloads, topo, rates, pod, rng):
    """Balanced-Pandas-Pod routing over the local servers plus a sample of
    rack-local and remote servers. Returns ``(server, Locality, examined)``."""
    cls = _type_classes(ttype, topo)
    ids = np.arange(topo.servers)
    a, b = _sample_pod(rng, ids[cls == Locality.RACK], ids[cls == Locality.REMOTE], pod)
    cand = np.sort(np.concatenate([ids[cls == Locality.LOCAL], a, b]))
    vals = np.asarray(workloads, dtype=float)[cand] / rates.as_array()[cls[cand]]
    j = cand[_weighted_argmin(vals, cls[cand])]
    return int(j) + 1, Locality(int(cls[j])), len(cand)


def pandas_schedule(subqueues):
    """Head of the first nonempty of (local, rack-local, remote) sub-queues.

    Returns ``(Locality, task)`` or None; the task is not removed.
    """
    for c, q in enumerate(subqueues):
        if len(q):
            return Locality(c), q[0]
    return None


def jsqmw_route(ttype, lengths):
    """Shortest local queue, ties to the lowest id."""
    locs = sorted(ttype)
    lens = [lengths[m - 1] for m in locs]
    return locs[int(np.argmin(lens))]


def _sched_weights(topo, rates):
    racks = topo.rack_array()
    w = np.where(racks[:, None] == racks[None, :], rates.beta, rates.gamma)
    np.fill_diagonal(w, rates.alpha)
    return w


def jsqmw_schedule(m, lengths, topo, rates):
    """Source queue for idle server ``m`` under JSQ-MaxWeight, or None."""
    vals = _sched_weights(topo, rates)[m - 1] * np.asarray(lengths, dtype=float)
    n = int(np.argmax(vals))
    return n + 1 if vals[n] > 0 else None


def jsqmw_pod_schedule(m, lengths, topo, rates, pod, rng):
    """JSQ-MaxWeight-Pod: the argmax over ``m`` plus sampled same-rack and
    other-rack servers. Returns ``(source or None, examined)``."""
    racks = topo.rack_array()
    ids = np.arange(topo.servers)
    j = m - 1
    same = ids[(racks == racks[j]) & (ids != j)]
    other = ids[racks != racks[j]]
    a, b = _sample_pod(rng, same, other, pod)
    cand = np.sort(np.concatenate([[j], a, b])).astype(np.int64)
    vals = _sched_weights(topo, rates)[j, cand] * np.asarray(lengths, dtype=float)[cand]
    k = int(np.argmax(vals))
    return (int(cand[k]) + 1 if vals[k] > 0 else None), len(cand)


# -- stateful policies driven by the engine ----------------------------------

class Policy:
    name = None

    def __init__(self, topo, rates, types, type_of, pod=None, rng=None):
        self.topo = topo
        self.rates = rates
        self.M = topo.servers
        self.types = types
        self.type_of = type_of
        self.cls = class_matrix(types, topo)
        self.pod = pod
        self.rng = rng
        self.busy = np.zeros(self.M, dtype=bool)
        self.current = [None] * self.M
        self.cost = DecisionCost()
        self._wake = ()

    def wake(self):
        return self._wake

    def release(self, m):
        self.busy[m] = False
        self.current[m] = None

    def idle_servers(self):
        return np.flatnonzero(~self.busy)

    def waiting(self, m):
        raise NotImplementedError

    def total_waiting(self):
        raise NotImplementedError

    def queue_snapshot(self):
        return ",".join(str(self.waiting(m)) for m in range(self.M))

    def _start(self, m, task, cls):
        self.busy[m] = True
        self.current[m] = (task, cls)


class BalancedPandas(Policy):
    name = "bp"

    def __init__(self, *args, count_in_service=True, **kw):
        super().__init__(*args, **kw)
        # whether the task in service stays in its sub-queue's workload
        self.count_in_service = count_in_service
        self.queues = [(deque(), deque(), deque()) for _ in range(self.M)]
        self.counts = np.zeros((self.M, 3))
        self.inv = 1.0 / self.rates.as_array()
        self.coef = self.inv[self.cls]
        self.all_servers = np.arange(self.M)

    def workloads(self):
        return self.counts @ self.inv

    def candidates(self, t):
        return self.all_servers

    def route(self, task):
        t = self.type_of[task]
        cand = self.candidates(t)
        vals = self.workloads()[cand] * self.coef[t, cand]
        cls_c = self.cls[t, cand]
        m = int(cand[_weighted_argmin(vals, cls_c)])
        c = int(self.cls[t, m])
        self.queues[m][c].append(task)
        self.counts[m, c] += 1
        self.cost.route_servers += len(cand)
        self.cost.route_decisions += 1
        self._wake = () if self.busy[m] else (m,)
        return m

    def schedule(self, m):
        self.cost.sched_servers += 1
        self.cost.sched_decisions += 1
        for c, q in enumerate(self.queues[m]):
            if q:
                task = q.popleft()
                if not self.count_in_service:
                    self.counts[m, c] -= 1
                self._start(m, task, c)
                return task, m, c
        return None

    def release(self, m):
        if self.count_in_service:
            self.counts[m, self.current[m][1]] -= 1
        super().release(m)

    def waiting(self, m):
        q = self.queues[m]
        return len(q[0]) + len(q[1]) + len(q[2])

    def total_waiting(self):
        held = int(self.busy.sum()) if self.count_in_service else 0
        return int(self.counts.sum()) - held

    def queue_snapshot(self):
        return ",".join("/".join(str(len(q)) for q in qs) for qs in self.queues)


class BalancedPandasPod(BalancedPandas):
    name = "bp_pod"

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        ids = self.all_servers
        self.strata = [(ids[row == Locality.LOCAL], ids[row == Locality.RACK],
                        ids[row == Locality.REMOTE]) for row in self.cls]

    def candidates(self, t):
        local, rack, remote = self.strata[t]
        a, b = _sample_pod(self.rng, rack, remote, self.pod)
        return np.sort(np.concatenate([local, a, b]))


class JSQMaxWeight(Policy):
    name = "jsq_mw"

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.queues = [deque() for _ in range(self.M)]
        self.qlen = np.zeros(self.M, dtype=np.int64)
        self.weights = _sched_weights(self.topo, self.rates)
        self.locals = [np.asarray(t) - 1 for t in self.types]
        self.n_waiting = 0

    def route(self, task):
        locs = self.locals[self.type_of[task]]
        occ = self.qlen[locs] + self.busy[locs]
        m = int(locs[np.argmin(occ)])
        self.queues[m].append(task)
        self.qlen[m] += 1
        self.n_waiting += 1
        self.cost.route_servers += len(locs)
        self.cost.route_decisions += 1
        self._wake = (m,) if not self.busy[m] else self._helpers(m)
        return m

    def _helpers(self, n):
        """Idle servers ordered by their stealing weight on queue ``n``, then id."""
        idle = self.idle_servers()
        if len(idle) > 1:
            idle = idle[np.argsort(-self.weights[idle, n], kind="stable")]
        return idle

    def pick_source(self, m):
        self.cost.sched_servers += self.M
        return int(np.argmax(self.weights[m] * self.qlen))

    def schedule(self, m):
        self.cost.sched_decisions += 1
        if not self.n_waiting:
            self.cost.sched_servers += self.sched_floor(m)
            return None
        n = self.pick_source(m)
        if n < 0 or not self.qlen[n]:
            return None
        task = self.queues[n].popleft()
        self.qlen[n] -= 1
        self.n_waiting -= 1
        c = int(self.cls[self.type_of[task], m])
        self._start(m, task, c)
        return task, n, c

    def sched_floor(self, m):
        # servers a decision would have examined had any queue been nonempty
        return self.M

    def waiting(self, m):
        return int(self.qlen[m])

    def total_waiting(self):
        return self.n_waiting


class JSQMaxWeightPod(JSQMaxWeight):
    name = "jsq_mw_pod"

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        racks = self.topo.rack_array()
        ids = np.arange(self.M)
        self.neigh = [(ids[(racks == racks[m]) & (ids != m)], ids[racks != racks[m]])
                      for m in range(self.M)]

    def _sample(self, m):
        same, other = self.neigh[m]
        a, b = _sample_pod(self.rng, same, other, self.pod)
        return np.sort(np.concatenate([[m], a, b]).astype(np.int64))

    def pick_source(self, m):
        cand = self._sample(m)
        self.cost.sched_servers += len(cand)
        vals = self.weights[m, cand] * self.qlen[cand]
        k = int(np.argmax(vals))
        return int(cand[k]) if vals[k] > 0 else -1

    def sched_floor(self, m):
        same, other = self.neigh[m]
        if self.pod.stratified:
            return 1 + min(self.pod.n_rack, len(same)) + min(self.pod.n_remote, len(other))
        return 1 + min(self.pod.d, len(same) + len(other))


class JSQPriority(JSQMaxWeight):
    """Shortest-local-queue routing; a server only serves its own queue."""
    name = "jsq_priority"

    def route(self, task):
        m = super().route(task)
        self._wake = () if self.busy[m] else (m,)
        return m

    def pick_source(self, m):
        self.cost.sched_servers += 1
        return m

    def sched_floor(self, m):
        return 1


class FCFS(Policy):
    """Single global FIFO queue.

    An arrival goes straight to an idle server when one exists, preferring
    local, then rack-local, then remote, then the lowest id.
    """
    name = "fcfs"

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.queue = deque()

    def route(self, task):
        self.queue.append(task)
        self.cost.route_servers += self.M
        self.cost.route_decisions += 1
        idle = self.idle_servers()
        if len(idle):
            cls = self.cls[self.type_of[task], idle]
            self._wake = (int(idle[np.argmin(cls)]),)
        else:
            self._wake = ()
        return None

    def schedule(self, m):
        self.cost.sched_servers += 1
        self.cost.sched_decisions += 1
        if not self.queue:
            return None
        task = self.queue.popleft()
        c = int(self.cls[self.type_of[task], m])
        self._start(m, task, c)
        return task, None, c

    def waiting(self, m):
        return 0

    def total_waiting(self):
        return len(self.queue)

    def queue_snapshot(self):
        return f"g{len(self.queue)}"


POLICIES = {p.name: p for p in (FCFS, JSQPriority, JSQMaxWeight, JSQMaxWeightPod,
                                BalancedPandas, BalancedPandasPod)}


def default_pod(name):
    return {"bp_pod": BP_POD_DEFAULT, "jsq_mw_pod": JSQ_MW_POD_DEFAULT}.get(name)


def make_policy(name, topo, rates, types, type_of, pod=None, rng=None, **options):
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}") from None
    if name.endswith("_pod"):
        pod = pod or default_pod(name)
        if rng is None:
            raise ValueError(f"{name} needs a random generator for sampling")
    else:
        pod = None
    if not issubclass(cls, BalancedPandas):
        options.pop("count_in_service", None)
    return cls(topo, rates, types, type_of, pod=pod, rng=rng, **options)
