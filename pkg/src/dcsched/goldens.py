"""Fixed-seed reference traces, one per policy, on a 6-server, 2-rack cluster."""
import io
from itertools import combinations
from pathlib import Path

from .cluster import RateProfile, Topology, scale_to_load
from .engine import SimConfig, run
from .policies import POLICY_NAMES

GOLDEN_TOPOLOGY = Topology(6, 2)
GOLDEN_TASKS = 100
GOLDEN_LOAD = 0.7
GOLDEN_SEED = 20240


def golden_shape():
    shape = {t: 1.0 for t in combinations(range(1, 7), 3)}
    return scale_to_load(shape, GOLDEN_LOAD, GOLDEN_TOPOLOGY, RateProfile())


def trace(policy, n_tasks=GOLDEN_TASKS, seed=GOLDEN_SEED, shape=None, pod=None):
    """Event log of a short run as text."""
    cfg = SimConfig(GOLDEN_TOPOLOGY, shape or golden_shape(), policy, pod=pod,
                    horizon_tasks=n_tasks, warmup=0.0, seed=seed)
    buf = io.StringIO()
    run(cfg, trace=buf)
    return buf.getvalue()


def golden_path(directory, policy):
    return Path(directory) / f"{policy}.tsv"


def check(directory):
    """Policies whose regenerated trace differs from the stored one."""
    shape = golden_shape()
    bad = []
    for p in POLICY_NAMES:
        path = golden_path(directory, p)
        if not path.exists() or path.read_text() != trace(p, shape=shape):
            bad.append(p)
    return bad


def regenerate(directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    shape = golden_shape()
    paths = []
    for p in POLICY_NAMES:
        path = golden_path(directory, p)
        path.write_text(trace(p, shape=shape))
        paths.append(path)
    return paths
