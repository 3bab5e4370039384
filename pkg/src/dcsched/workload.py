"""Task-type pools, arrival streams and locality-dependent service times."""
import math
import zlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError

SLOTTED = "slotted"
CONTINUOUS = "continuous"
MODES = (SLOTTED, CONTINUOUS)

GEOMETRIC = "geometric"
EXPONENTIAL = "exponential"
LOGNORMAL = "lognormal"
FAMILIES = (GEOMETRIC, EXPONENTIAL, LOGNORMAL)

_ARRIVAL_BLOCK = 4096
_SLOT_BLOCK = 1024
_SERVICE_BLOCK = 4096
_ENUMERATE_LIMIT = 200_000


def substream(seed, name):
    """Independent generator for a named purpose derived from a master seed."""
    key = zlib.crc32(name.encode())
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(key,))))


class Task(NamedTuple):
    id: int
    type: tuple
    time: float


@dataclass
class TypePool:
    types: list
    popularity: np.ndarray

    def shape(self):
        return {t: float(p) for t, p in zip(self.types, self.popularity)}


def sample_type_pool(topo, size, popularity="uniform", zipf_s=1.0, seed=0,
                     replication=3, scenario="uniform"):
    """Draw ``size`` distinct task types uniformly without replacement.

    ``scenario="hotspot"`` restricts every type to the servers of rack 1.
    Popularity is uniform or Zipf over draw order.
    """
    if scenario == "uniform":
        servers = np.arange(1, topo.servers + 1)
    elif scenario == "hotspot":
        servers = np.asarray(topo.rack_members(1))
    else:
        raise ConfigError(f"unknown pool scenario {scenario!r}")
    if not 1 <= replication <= len(servers):
        raise ConfigError(f"replication {replication} does not fit {len(servers)} servers")
    n_types = math.comb(len(servers), replication)
    if not 1 <= size <= n_types:
        raise ConfigError(f"pool size {size} outside 1..{n_types}")

    rng = substream(seed, "pool")
    if n_types <= _ENUMERATE_LIMIT:
        from itertools import combinations
        everything = list(combinations(servers.tolist(), replication))
        pick = rng.choice(n_types, size=size, replace=False)
        types = [everything[i] for i in pick]
    else:
        seen, types = set(), []
        while len(types) < size:
            t = tuple(sorted(rng.choice(servers, size=replication, replace=False).tolist()))
            if t not in seen:
                seen.add(t)
                types.append(t)

    if popularity == "uniform":
        w = np.ones(size)
    elif popularity == "zipf":
        if zipf_s <= 0:
            raise ConfigError("zipf exponent must be positive")
        w = 1.0 / np.arange(1, size + 1) ** zipf_s
    else:
        raise ConfigError(f"unknown popularity law {popularity!r}")
    return TypePool(types=types, popularity=w / w.sum())


class ArrivalProcess:
    """Reproducible multi-type arrival stream.

    Continuous mode superposes independent Poisson processes; slotted mode
    draws independent Poisson counts per type and slot (slots are 0, 1, ...).
    Variates are produced in fixed-size blocks so the stream does not depend
    on how it is queried.
    """

    def __init__(self, rates, mode=CONTINUOUS, seed=0, rng=None):
        if mode not in MODES:
            raise ConfigError(f"unknown arrival mode {mode!r}")
        self.mode = mode
        self.types = list(rates)
        lam = np.array([float(rates[t]) for t in self.types])
        if np.any(lam < 0):
            raise ValueError("arrival rates must be nonnegative")
        self.total = float(lam.sum())
        self.probs = lam / self.total if self.total > 0 else lam
        self._rng = rng if rng is not None else substream(seed, "arrivals")
        self._times = np.empty(0)
        self._kinds = np.empty(0, dtype=np.int64)
        self._pos = 0
        self._clock = 0.0
        self._next_slot = 0
        self._next_id = 0

    def _extend(self):
        rng = self._rng
        if self.mode == CONTINUOUS:
            gaps = rng.exponential(1.0 / self.total, _ARRIVAL_BLOCK)
            times = self._clock + np.cumsum(gaps)
            self._clock = float(times[-1])
        else:
            counts = rng.poisson(self.total, _SLOT_BLOCK)
            slots = np.arange(self._next_slot, self._next_slot + _SLOT_BLOCK, dtype=float)
            times = np.repeat(slots, counts)
            self._next_slot += _SLOT_BLOCK
        kinds = rng.choice(len(self.types), size=len(times), p=self.probs)
        self._times = np.concatenate([self._times[self._pos:], times])
        self._kinds = np.concatenate([self._kinds[self._pos:], kinds])
        self._pos = 0

    def _horizon(self):
        if self.mode == CONTINUOUS:
            return self._clock
        return self._next_slot - 1

    def take(self, n):
        """Next ``n`` arrivals as ``(times, type_indices)`` arrays."""
        if n and self.total <= 0:
            raise ValueError("cannot draw arrivals from an all-zero rate vector")
        while len(self._times) - self._pos < n:
            self._extend()
        sl = slice(self._pos, self._pos + n)
        out = self._times[sl].copy(), self._kinds[sl].copy()
        self._pos += n
        self._next_id += n
        return out

    def until(self, up_to):
        """All remaining arrivals with time ``<= up_to`` as arrays."""
        if self.total <= 0:
            return np.empty(0), np.empty(0, dtype=np.int64)
        while self._horizon() < up_to:
            self._extend()
        end = self._pos + int(np.searchsorted(self._times[self._pos:], up_to, side="right"))
        return self.take(end - self._pos)

    def next_arrivals(self, up_to):
        first = self._next_id
        times, kinds = self.until(up_to)
        return [Task(first + i, self.types[k], float(t))
                for i, (t, k) in enumerate(zip(times, kinds))]


class ServiceSampler:
    """Service durations whose mean is ``1 / rate`` of the locality class served at.

    One standardized variate is consumed per draw regardless of class, so the
    stream position depends only on the number of services started.
    """

    def __init__(self, family, rates, mode=CONTINUOUS, cv=2.0, seed=0, rng=None):
        if family not in FAMILIES:
            raise ConfigError(f"unknown service family {family!r}")
        if family == GEOMETRIC and mode != SLOTTED:
            raise ConfigError("geometric service requires slotted mode")
        if family != GEOMETRIC and mode == SLOTTED:
            raise ConfigError("slotted mode requires geometric service")
        if family == GEOMETRIC and rates.alpha > 1:
            raise ConfigError("geometric success probabilities must not exceed 1")
        if family == LOGNORMAL and cv <= 0:
            raise ConfigError("log-normal cv must be positive")
        self.family = family
        self.rates = rates.as_array()
        self.cv = cv
        self._rng = rng if rng is not None else substream(seed, "service")
        self._buf = np.empty(0)
        self._i = 0
        if family == LOGNORMAL:
            s2 = math.log1p(cv * cv)
            self._sigma = math.sqrt(s2)
            self._mu = [math.log(1.0 / r) - s2 / 2 for r in self.rates]
        elif family == GEOMETRIC:
            self._log_fail = [math.log1p(-r) if r < 1 else None for r in self.rates]
        else:
            self._mean = [1.0 / r for r in self.rates]

    def _refill(self):
        rng = self._rng
        if self.family == EXPONENTIAL:
            self._buf = rng.standard_exponential(_SERVICE_BLOCK)
        elif self.family == LOGNORMAL:
            self._buf = rng.standard_normal(_SERVICE_BLOCK)
        else:
            # (0, 1] so the logarithm is finite
            self._buf = 1.0 - rng.random(_SERVICE_BLOCK)
        self._i = 0

    def sample(self, cls):
        if self._i >= len(self._buf):
            self._refill()
        z = float(self._buf[self._i])
        self._i += 1
        if self.family == EXPONENTIAL:
            return z * self._mean[cls]
        if self.family == LOGNORMAL:
            return math.exp(self._mu[cls] + self._sigma * z)
        lf = self._log_fail[cls]
        if lf is None:
            return 1.0
        return float(max(1, math.ceil(math.log(z) / lf)))
