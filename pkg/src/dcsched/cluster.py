"""Cluster topology, task types, locality classes and the capacity LP.

Server ids are 1-based throughout the public API. Racks are contiguous
blocks: servers ``1..M/K`` form rack 1, and so on.
"""
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import scipy.sparse as sp

from . import simplex
from .errors import LPSizeError

MAX_LP_VARIABLES = 100_000
BOUNDARY_TOL = 1e-9


class Locality(IntEnum):
    # value order doubles as scheduling priority
    LOCAL = 0
    RACK = 1
    REMOTE = 2


@dataclass(frozen=True)
class Topology:
    servers: int
    racks: int

    def __post_init__(self):
        if self.servers < 1 or self.racks < 1:
            raise ValueError("need at least one server and one rack")
        if self.servers % self.racks:
            raise ValueError(f"{self.servers} servers do not split into {self.racks} equal racks")

    @property
    def servers_per_rack(self):
        return self.servers // self.racks

    def rack_of(self, m):
        check_server(self, m)
        return (m - 1) // self.servers_per_rack + 1

    def rack_members(self, k):
        if not 1 <= k <= self.racks:
            raise ValueError(f"rack id {k} out of range 1..{self.racks}")
        spr = self.servers_per_rack
        return range((k - 1) * spr + 1, k * spr + 1)

    def rack_array(self):
        """0-based rack index for each 0-based server index."""
        return np.arange(self.servers) // self.servers_per_rack


@dataclass(frozen=True)
class RateProfile:
    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 0.25

    def __post_init__(self):
        if not self.alpha > self.beta > self.gamma > 0:
            raise ValueError(
                f"rates must satisfy alpha > beta > gamma > 0, got "
                f"({self.alpha}, {self.beta}, {self.gamma})")

    def rate(self, cls):
        return (self.alpha, self.beta, self.gamma)[cls]

    def as_array(self):
        return np.array([self.alpha, self.beta, self.gamma])


def check_server(topo, m):
    if not isinstance(m, (int, np.integer)) or not 1 <= m <= topo.servers:
        raise ValueError(f"server id {m!r} out of range 1..{topo.servers}")


def task_type(locals_, topo=None):
    """Canonical task type: a strictly increasing tuple of distinct server ids."""
    t = tuple(sorted(int(m) for m in locals_))
    if not t or len(set(t)) != len(t):
        raise ValueError(f"task type needs distinct server ids, got {locals_!r}")
    if topo is not None:
        for m in t:
            check_server(topo, m)
    return t


def locality_of(ttype, m, topo):
    check_server(topo, m)
    if m in ttype:
        return Locality.LOCAL
    rack = topo.rack_of(m)
    if any(topo.rack_of(l) == rack for l in ttype):
        return Locality.RACK
    return Locality.REMOTE


def locality_sets(ttype, topo):
    """Return the (local, rack-local, remote) server id tuples for a type."""
    ttype = task_type(ttype, topo)
    racks = {topo.rack_of(l) for l in ttype}
    local, rack, remote = [], [], []
    for m in range(1, topo.servers + 1):
        if m in ttype:
            local.append(m)
        elif topo.rack_of(m) in racks:
            rack.append(m)
        else:
            remote.append(m)
    return tuple(local), tuple(rack), tuple(remote)


def class_matrix(types, topo):
    """Locality class of every (type, server) pair as a ``T x M`` int8 array."""
    racks = topo.rack_array()
    out = np.full((len(types), topo.servers), Locality.REMOTE, dtype=np.int8)
    for i, t in enumerate(types):
        idx = np.asarray(t) - 1
        out[i, np.isin(racks, racks[idx])] = Locality.RACK
        out[i, idx] = Locality.LOCAL
    return out


def server_load(decomposition, topo, rates, m):
    """Weighted load on server ``m`` of a ``{(type, server): rate}`` decomposition."""
    check_server(topo, m)
    load = 0.0
    for (t, n), share in decomposition.items():
        if n == m and share:
            load += share / rates.rate(locality_of(t, m, topo))
    return load


@dataclass
class Capacity:
    """Throughput margin of a rate shape and an optimal witness decomposition.

    ``shares[i, j]`` is the rate of ``types[i]`` sent to server ``j + 1`` when
    the shape is scaled by ``rho``.
    """
    rho: float
    types: list
    shape: np.ndarray
    shares: np.ndarray
    loads: np.ndarray

    @property
    def status(self):
        if self.rho > 1 + BOUNDARY_TOL:
            return "inside"
        if self.rho >= 1 - BOUNDARY_TOL:
            return "on boundary"
        return "outside"

    def decomposition(self):
        out = {}
        for i, j in zip(*np.nonzero(self.shares)):
            out[(self.types[i], int(j) + 1)] = float(self.shares[i, j])
        return out


def max_throughput(shape, service_rates, max_variables=MAX_LP_VARIABLES):
    """Largest ``rho`` such that ``rho * shape`` can be split across servers.

    ``service_rates[i, j]`` is the rate at which server ``j`` serves type ``i``.
    Returns ``(rho, shares)``.
    """
    shape = np.asarray(shape, dtype=float)
    mu = np.asarray(service_rates, dtype=float)
    T, M = mu.shape
    if shape.shape != (T,):
        raise ValueError("shape and service rate matrix disagree on type count")
    if np.any(shape < 0) or not np.any(shape > 0):
        raise ValueError("rate shape must be nonnegative with at least one positive rate")
    if T * M > max_variables:
        raise LPSizeError(
            f"capacity LP has {T * M} variables, limit is {max_variables}; "
            "reduce the type pool or supply an explicit margin")

    # columns: x[i, j] (T*M), rho, slack per server (M)
    nx = T * M
    rows_t = np.repeat(np.arange(T), M)
    cols_x = np.arange(nx)
    rows_m = T + np.tile(np.arange(M), T)
    data = np.concatenate([np.ones(nx), 1.0 / mu.ravel(), -shape, np.ones(M)])
    rows = np.concatenate([rows_t, rows_m, np.arange(T), T + np.arange(M)])
    cols = np.concatenate([cols_x, cols_x, np.full(T, nx), nx + 1 + np.arange(M)])
    A = sp.csc_matrix((data, (rows, cols)), shape=(T + M, nx + M + 1))
    b = np.concatenate([np.zeros(T), np.ones(M)])
    c = np.zeros(nx + M + 1)
    c[nx] = -1.0

    # type rows start on their fastest server at zero flow; server rows on slacks
    fastest = np.argmax(mu, axis=1)
    basis = np.concatenate([np.arange(T) * M + fastest, nx + 1 + np.arange(M)])
    x, _, _ = simplex.solve(c, A, b, basis)
    rho = float(x[nx])
    shares = x[:nx].reshape(T, M)
    shares[shares < 1e-13] = 0.0
    # exact per-type conservation of the witness
    totals = shares.sum(axis=1)
    nz = totals > 0
    shares[nz] *= (rho * shape[nz] / totals[nz])[:, None]
    loads = (shares / mu).sum(axis=0)
    if loads.max() > 1 + 1e-7:
        raise simplex.SimplexError(f"capacity witness overloads a server ({loads.max():.6g})")
    return rho, shares


def throughput_margin(shape, topo, rates, max_variables=MAX_LP_VARIABLES):
    """Capacity margin of a ``{type: rate}`` shape on the given cluster."""
    if not shape:
        raise ValueError("rate shape is empty")
    types = [task_type(t, topo) for t in shape]
    vec = np.array([float(shape[t]) for t in shape])
    mu = rates.as_array()[class_matrix(types, topo)]
    rho, shares = max_throughput(vec, mu, max_variables)
    loads = (shares / mu).sum(axis=0)
    return Capacity(rho=rho, types=types, shape=vec, shares=shares, loads=loads)


def scale_to_load(shape, target_rho, topo, rates, margin=None):
    """Scale ``shape`` to sit at fraction ``target_rho`` of the capacity boundary.

    ``margin`` short-circuits the LP when the shape's margin is already known.
    """
    if not 0 < target_rho < 1:
        raise ValueError(f"target load must lie in (0, 1), got {target_rho}")
    if margin is None:
        margin = throughput_margin(shape, topo, rates).rho
    k = target_rho * margin
    return {t: r * k for t, r in shape.items()}
