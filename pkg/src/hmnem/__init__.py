"""Hidden Markov nested effects models.

Infers a time series of signalling networks, one per timepoint, from
perturbation effect data, together with the smoothness parameter that
penalises structural change between consecutive timepoints.
"""
from ._backend import COMPILED_AVAILABLE, get_kernel
from .diagnostics import ess, hpd_interval, network_metrics, psrf, rejection_rate, running_psrf
from .graph import Network, graph_distance, is_transitively_closed, reachability, state_matrix, transitive_closure
from .likelihood import (EffectDataset, EmissionModel, attached_log_likelihood, greedy_static_nem,
                         marginal_log_likelihood)
from .sampler import SamplerConfig, Trace, binarize, expected_network, run_chain, run_chains_parallel
from .simulate import SimConfig, simulate
from .transition import log_transition_normalizer, log_transition_prob

__version__ = "0.1.0"

__all__ = [
    "COMPILED_AVAILABLE",
    "get_kernel",
    "Network",
    "graph_distance",
    "is_transitively_closed",
    "reachability",
    "state_matrix",
    "transitive_closure",
    "EffectDataset",
    "EmissionModel",
    "attached_log_likelihood",
    "marginal_log_likelihood",
    "greedy_static_nem",
    "log_transition_normalizer",
    "log_transition_prob",
    "SamplerConfig",
    "Trace",
    "run_chain",
    "run_chains_parallel",
    "expected_network",
    "binarize",
    "SimConfig",
    "simulate",
    "psrf",
    "running_psrf",
    "ess",
    "hpd_interval",
    "rejection_rate",
    "network_metrics",
]
