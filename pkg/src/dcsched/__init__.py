"""Simulator and experiment runner for data-locality-aware task scheduling."""
from .cluster import (Capacity, Locality, RateProfile, Topology, locality_of, locality_sets,
                      scale_to_load, server_load, task_type, throughput_margin)
from .engine import (SimConfig, SimResult, locality_mix, mean_completion_time,
                     queue_stability_stat, run)
from .policies import POLICY_NAMES, PodConfig

__version__ = "0.1.0"
