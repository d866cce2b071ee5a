"""Geometric-distance transition kernel between consecutive networks.

The probability of moving from ``u`` to ``v`` is proportional to
``lam * (1 - lam) ** (d(u, v) - 1)`` with ``d`` the L1 adjacency distance.
Writing the exponent as ``d`` instead of ``d - 1`` only rescales every weight
by ``1 - lam`` and gives the same normalised kernel.

Smoothness is sampled on the logit scale, ``lam = sigmoid(kappa)``.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .graph import Network, graph_distance

__all__ = [
    "sigmoid",
    "logit",
    "log_sigmoid",
    "log_jacobian",
    "log_binomials",
    "log_transition_normalizer",
    "log_transition_normalizer_kappa",
    "log_transition_prob",
    "log_path_transition",
]


def sigmoid(kappa: float) -> float:
    if kappa >= 0:
        return 1.0 / (math.exp(-kappa) + 1.0)
    e = math.exp(kappa)
    return e / (1.0 + e)


def logit(lam: float) -> float:
    if not 0.0 < lam < 1.0:
        raise ValueError(f"logit undefined at {lam}")
    return math.log(lam) - math.log1p(-lam)


def log_sigmoid(kappa: float) -> float:
    """``log(sigmoid(kappa))`` without overflow; ``log(1 - sigmoid(k))`` is ``log_sigmoid(-k)``."""
    if kappa >= 0:
        return -math.log1p(math.exp(-kappa))
    return kappa - math.log1p(math.exp(kappa))


def log_jacobian(kappa: float) -> float:
    """Log of ``d sigmoid / d kappa = S(kappa) (1 - S(kappa))``."""
    return log_sigmoid(kappa) + log_sigmoid(-kappa)


@lru_cache(maxsize=None)
def _log_binomials(n_e: int) -> tuple[float, ...]:
    lg = math.lgamma
    return tuple(lg(n_e + 1) - lg(e + 1) - lg(n_e - e + 1) for e in range(n_e + 1))


def log_binomials(n: int) -> np.ndarray:
    """``log C(n_e, e)`` for ``e = 0..n_e`` with ``n_e = n(n-1)``."""
    return np.array(_log_binomials(n * (n - 1)))


def _normalizer(log_binom, log_lam: float, log_1m: float) -> float:
    # log-sum-exp over distance classes
    terms = [lb + log_lam + (e - 1) * log_1m for e, lb in enumerate(log_binom)]
    mx = max(terms)
    return mx + math.log(sum(math.exp(x - mx) for x in terms))


def log_transition_normalizer(lam: float, n: int) -> float:
    """Log of the sum of ``C(n_e, e) lam (1-lam)^(e-1)`` over ``e = 0..n_e``."""
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    return _normalizer(_log_binomials(n * (n - 1)), math.log(lam), math.log1p(-lam))


def log_transition_normalizer_kappa(kappa: float, n: int) -> float:
    """Same normaliser parameterised by ``kappa``; stays finite where ``lam`` rounds to 0 or 1."""
    return _normalizer(_log_binomials(n * (n - 1)), log_sigmoid(kappa), log_sigmoid(-kappa))


def log_transition_prob(g_prev: Network, g_next: Network, lam: float) -> float:
    if g_prev.n != g_next.n:
        raise ValueError(f"dimension mismatch: {g_prev.n} vs {g_next.n}")
    eps = graph_distance(g_prev, g_next)
    return math.log(lam) + (eps - 1) * math.log1p(-lam) - log_transition_normalizer(lam, g_prev.n)


def log_path_transition(path, kappa: float) -> float:
    """Sum of log transition probabilities along ``path`` (zero for a single network)."""
    if len(path) < 2:
        return 0.0
    n = path[0].n
    total = sum(graph_distance(a, b) for a, b in zip(path[:-1], path[1:]))
    log_lam, log_1m = log_sigmoid(kappa), log_sigmoid(-kappa)
    log_z = log_transition_normalizer_kappa(kappa, n)
    return (len(path) - 1) * (log_lam - log_1m - log_z) + total * log_1m
