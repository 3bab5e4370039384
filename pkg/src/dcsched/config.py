"""Experiment spec files.

A spec is a TOML document. Every section and key is optional except where
noted; unknown keys are rejected. Full schema with defaults::

    [cluster]
    servers = 50          # M
    racks = 5             # K, must divide M
    replication = 3       # servers per task type

    [rates]
    alpha = 1.0
    beta = 0.5
    gamma = 0.25

    [service]
    family = "exponential"   # exponential | lognormal | geometric (slotted)
    cv = 2.0                 # log-normal only

    [pool]
    size = 200
    popularity = "uniform"   # uniform | zipf
    zipf_s = 1.0
    scenario = "uniform"     # uniform | hotspot (all types inside rack 1)
    seed = 0
    margin = 2.5             # optional: known throughput margin, skips the LP
    [[pool.types]]           # optional explicit rate shape instead of sampling
    locals = [1, 2, 3]
    rate = 1.0

    [policies]
    names = ["fcfs", "jsq_priority", "jsq_mw", "jsq_mw_pod", "bp", "bp_pod"]
    bp_count_in_service = true
    [policies.bp_pod]
    n_rack = 2
    n_remote = 6
    stratified = true
    [policies.jsq_mw_pod]
    n_rack = 6
    n_remote = 6
    stratified = true

    [experiment]
    loads = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99]
    replications = 5
    seed = 1              # replication r uses seed + r unless `seeds` is given
    seeds = [1, 2, 3]
    horizon = 50000       # arrivals per run
    warmup = 0.2
    workers = 1
    output_dir = "results"
"""
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cluster import RateProfile, Topology, task_type
from .errors import ConfigError
from .policies import BP_POD_DEFAULT, JSQ_MW_POD_DEFAULT, POLICY_NAMES, PodConfig
from .workload import FAMILIES, GEOMETRIC, SLOTTED, CONTINUOUS

DEFAULT_LOADS = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)
PRESET_DIR = Path(__file__).with_name("presets")

_SCHEMA = {
    "cluster": {"servers", "racks", "replication"},
    "rates": {"alpha", "beta", "gamma"},
    "service": {"family", "cv"},
    "pool": {"size", "popularity", "zipf_s", "scenario", "seed", "margin", "types"},
    "policies": {"names", "bp_count_in_service", "bp_pod", "jsq_mw_pod"},
    "experiment": {"loads", "replications", "seed", "seeds", "horizon", "warmup",
                   "workers", "output_dir"},
}
_POD_KEYS = {"n_rack", "n_remote", "stratified"}


@dataclass
class ExperimentSpec:
    topology: Topology = field(default_factory=lambda: Topology(50, 5))
    replication: int = 3
    rates: RateProfile = field(default_factory=RateProfile)
    service: str = "exponential"
    cv: float = 2.0
    pool_size: int = 200
    popularity: str = "uniform"
    zipf_s: float = 1.0
    scenario: str = "uniform"
    pool_seed: int = 0
    margin: float = None
    explicit_types: dict = None
    policies: tuple = POLICY_NAMES
    pods: dict = field(default_factory=lambda: {"bp_pod": BP_POD_DEFAULT,
                                                "jsq_mw_pod": JSQ_MW_POD_DEFAULT})
    bp_count_in_service: bool = True
    loads: tuple = DEFAULT_LOADS
    seeds: tuple = (1, 2, 3, 4, 5)
    horizon: int = 50_000
    warmup: float = 0.2
    workers: int = 1
    output_dir: str = "results"
    name: str = "experiment"

    @property
    def mode(self):
        return SLOTTED if self.service == GEOMETRIC else CONTINUOUS


def _check_keys(where, got, allowed):
    extra = set(got) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(extra))}")


def _typed(value, kind, where):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ConfigError(f"{where} must be {kind.__name__}, got {value!r}")
    return value


def _pod(name, raw, default):
    _check_keys(f"policies.{name}", raw, _POD_KEYS)
    try:
        return PodConfig(
            _typed(raw.get("n_rack", default.n_rack), int, f"{name}.n_rack"),
            _typed(raw.get("n_remote", default.n_remote), int, f"{name}.n_remote"),
            _typed(raw.get("stratified", default.stratified), bool, f"{name}.stratified"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_spec(doc, name="experiment"):
    """Build an :class:`ExperimentSpec` from a parsed TOML mapping."""
    _check_keys("top level", doc, _SCHEMA)
    for section, allowed in _SCHEMA.items():
        raw = doc.get(section, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"[{section}] must be a table")
        _check_keys(section, raw, allowed)

    cl = doc.get("cluster", {})
    rt = doc.get("rates", {})
    sv = doc.get("service", {})
    pl = doc.get("pool", {})
    po = doc.get("policies", {})
    ex = doc.get("experiment", {})
    spec = ExperimentSpec(name=name)
    try:
        spec.topology = Topology(_typed(cl.get("servers", 50), int, "cluster.servers"),
                                 _typed(cl.get("racks", 5), int, "cluster.racks"))
        spec.rates = RateProfile(*(_typed(rt.get(k, d), float, f"rates.{k}")
                                   for k, d in (("alpha", 1.0), ("beta", 0.5), ("gamma", 0.25))))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    spec.replication = _typed(cl.get("replication", 3), int, "cluster.replication")
    if not 1 <= spec.replication <= spec.topology.servers:
        raise ConfigError("replication must lie in 1..servers")

    spec.service = sv.get("family", "exponential")
    if spec.service not in FAMILIES:
        raise ConfigError(f"service.family must be one of {', '.join(FAMILIES)}")
    spec.cv = _typed(sv.get("cv", 2.0), float, "service.cv")
    if spec.cv <= 0:
        raise ConfigError("service.cv must be positive")
    if spec.service == GEOMETRIC and spec.rates.alpha > 1:
        raise ConfigError("geometric service needs alpha <= 1")

    spec.pool_size = _typed(pl.get("size", 200), int, "pool.size")
    spec.popularity = pl.get("popularity", "uniform")
    spec.zipf_s = _typed(pl.get("zipf_s", 1.0), float, "pool.zipf_s")
    spec.scenario = pl.get("scenario", "uniform")
    spec.pool_seed = _typed(pl.get("seed", 0), int, "pool.seed")
    if "margin" in pl:
        spec.margin = _typed(pl["margin"], float, "pool.margin")
        if spec.margin <= 0:
            raise ConfigError("pool.margin must be positive")
    if "types" in pl:
        explicit = {}
        for i, entry in enumerate(pl["types"]):
            _check_keys(f"pool.types[{i}]", entry, {"locals", "rate"})
            try:
                t = task_type(entry["locals"], spec.topology)
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"pool.types[{i}]: {exc}") from None
            rate = _typed(entry.get("rate", 1.0), float, f"pool.types[{i}].rate")
            if rate < 0:
                raise ConfigError(f"pool.types[{i}].rate must be nonnegative")
            explicit[t] = explicit.get(t, 0.0) + rate
        if not explicit or not any(explicit.values()):
            raise ConfigError("pool.types needs at least one positive rate")
        spec.explicit_types = explicit

    names = po.get("names", list(POLICY_NAMES))
    if not isinstance(names, list) or not names:
        raise ConfigError("policies.names must be a nonempty list")
    for n in names:
        if n not in POLICY_NAMES:
            raise ConfigError(f"unknown policy {n!r}; choose from {', '.join(POLICY_NAMES)}")
    if len(set(names)) != len(names):
        raise ConfigError("policies.names has duplicates")
    spec.policies = tuple(names)
    spec.bp_count_in_service = _typed(po.get("bp_count_in_service", True), bool,
                                      "policies.bp_count_in_service")
    spec.pods = {"bp_pod": _pod("bp_pod", po.get("bp_pod", {}), BP_POD_DEFAULT),
                 "jsq_mw_pod": _pod("jsq_mw_pod", po.get("jsq_mw_pod", {}), JSQ_MW_POD_DEFAULT)}

    loads = ex.get("loads", list(DEFAULT_LOADS))
    if not isinstance(loads, list):
        raise ConfigError("experiment.loads must be a list")
    loads = [_typed(x, float, "experiment.loads") for x in loads]
    for x in loads:
        if not 0 < x < 1:
            raise ConfigError(f"load {x} outside (0, 1)")
    spec.loads = tuple(loads)
    reps = _typed(ex.get("replications", 5), int, "experiment.replications")
    if reps < 1:
        raise ConfigError("experiment.replications must be at least 1")
    if "seeds" in ex:
        seeds = [_typed(s, int, "experiment.seeds") for s in ex["seeds"]]
        if len(seeds) != reps:
            raise ConfigError("experiment.seeds must list one seed per replication")
    else:
        base = _typed(ex.get("seed", 1), int, "experiment.seed")
        seeds = [base + r for r in range(reps)]
    spec.seeds = tuple(seeds)
    spec.horizon = _typed(ex.get("horizon", 50_000), int, "experiment.horizon")
    if spec.horizon < 1:
        raise ConfigError("experiment.horizon must be positive")
    spec.warmup = _typed(ex.get("warmup", 0.2), float, "experiment.warmup")
    if not 0 <= spec.warmup < 1:
        raise ConfigError("experiment.warmup must lie in [0, 1)")
    spec.workers = _typed(ex.get("workers", 1), int, "experiment.workers")
    if spec.workers < 1:
        raise ConfigError("experiment.workers must be at least 1")
    spec.output_dir = str(ex.get("output_dir", "results"))
    return spec


def preset_names():
    return sorted(p.stem for p in PRESET_DIR.glob("*.toml"))


def load_spec(path):
    """Load a spec file; ``preset:<name>`` selects a bundled preset."""
    path = str(path)
    if path.startswith("preset:"):
        name = path.split(":", 1)[1]
        p = PRESET_DIR / f"{name}.toml"
        if not p.exists():
            raise ConfigError(f"no preset {name!r}; available: {', '.join(preset_names())}")
    else:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"spec file {path} not found")
    try:
        doc = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return parse_spec(doc, name=p.stem)
