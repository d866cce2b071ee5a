"""Metropolis-within-Gibbs sampler for hidden Markov nested effects models.

One sweep updates ``G_1 .. G_T`` in order with single-edge structural
Metropolis-Hastings moves, then makes one Gaussian random-walk move on
``kappa = logit(lambda)``. The uniform initial distribution over networks
and the uniform prior on ``lambda`` contribute constants and are dropped.

The sweep loop runs in the compiled kernel when available (see
:mod:`hmnem._backend`); :func:`state_update` and :func:`kappa_update` are
the same moves written against :class:`ChainState` for inspection and
testing.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ._backend import get_kernel
from .graph import Network, flip_edge, graph_distance, position_to_edge
from .likelihood import EffectDataset, EmissionModel, greedy_static_nem
from .transition import log_binomials, log_jacobian, log_path_transition, logit, sigmoid

__all__ = [
    "SamplerConfig",
    "ChainState",
    "Trace",
    "chain_rng",
    "emission_models",
    "propose_graph",
    "state_update",
    "kappa_update",
    "log_joint",
    "initial_path",
    "run_chain",
    "run_chains_parallel",
    "merge_edge_sums",
    "expected_network",
    "binarize",
]

# iterations per block of pre-drawn random numbers; part of the reproducibility contract
DRAW_BLOCK = 1024


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 12000
    burn_in: int = 2000
    sigma: float = 0.65
    seed: int = 0
    init: str | Sequence[Network] = "greedy"
    lambda_init: float = 0.5
    thin: int = 100
    fix_lambda: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError(f"need 0 <= burn_in < iterations, got burn_in={self.burn_in}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not 0.0 < self.lambda_init < 1.0:
            raise ValueError(f"lambda_init must lie in (0, 1), got {self.lambda_init}")
        if self.thin < 0:
            raise ValueError(f"thin must be >= 0, got {self.thin}")
        if isinstance(self.init, str) and self.init not in ("greedy", "empty"):
            raise ValueError(f"init must be 'greedy', 'empty' or a list of networks, got {self.init!r}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass
class ChainState:
    path: list
    kappa: float
    cached_emissions: list
    iteration: int = 0

    @property
    def lam(self) -> float:
        return sigmoid(self.kappa)


@dataclass
class Trace:
    """Per-iteration record of one chain."""

    lambdas: np.ndarray
    log_joint: np.ndarray
    kappa_accept: np.ndarray
    state_accept: np.ndarray
    edge_sums: np.ndarray
    burn_in: int
    sigma: float
    seed: int
    chain: int = 0
    thin: int = 0
    snapshots: np.ndarray | None = None
    final_state: ChainState | None = field(default=None, repr=False)

    @property
    def iterations(self) -> int:
        return len(self.lambdas)

    @property
    def n_post(self) -> int:
        return self.iterations - self.burn_in

    def snapshot_iterations(self) -> np.ndarray:
        """1-based iteration numbers of the stored snapshots."""
        if self.snapshots is None:
            return np.zeros(0, dtype=np.int64)
        return self.thin * np.arange(1, len(self.snapshots) + 1)


def chain_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based generator for chain ``index`` derived from ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def emission_models(data: Sequence[EffectDataset | EmissionModel]) -> list[EmissionModel]:
    models = [d if isinstance(d, EmissionModel) else EmissionModel.from_dataset(d) for d in data]
    if not models:
        raise ValueError("need at least one timepoint")
    n, m, marg = models[0].n, models[0].m, models[0].marginal
    for t, mod in enumerate(models):
        if (mod.n, mod.m, mod.marginal) != (n, m, marg):
            raise ValueError(f"timepoint {t} has shape (n={mod.n}, m={mod.m}), expected (n={n}, m={m})")
        if not marg and not np.array_equal(mod.attachments, models[0].attachments):
            raise ValueError(f"timepoint {t} uses a different attachment map")
    return models


def propose_graph(g: Network, rng) -> Network:
    """Toggle one of the ``n(n-1)`` off-diagonal positions chosen uniformly."""
    idx = int(rng.integers(0, g.n * (g.n - 1)))
    return flip_edge(g, *position_to_edge(idx, g.n))


def state_update(t: int, chain: ChainState, models: Sequence[EmissionModel], lam: float, rng):
    """Structural MH update of ``path[t]``; returns ``(chain, accepted)``."""
    path = chain.path
    T = len(path)
    if not 0 <= t < T:
        raise IndexError(f"timepoint {t} out of range 0..{T - 1}")
    g = path[t]
    prop = propose_graph(g, rng)
    e_new = models[t].log_emission(prop)
    log_a = e_new - chain.cached_emissions[t]
    log_1m = math.log1p(-lam)
    if t > 0:
        log_a += (graph_distance(path[t - 1], prop) - graph_distance(path[t - 1], g)) * log_1m
    if t < T - 1:
        log_a += (graph_distance(prop, path[t + 1]) - graph_distance(g, path[t + 1])) * log_1m
    u = rng.random()
    if log_a >= 0.0 or u < math.exp(log_a):
        new_path = list(path)
        new_path[t] = prop
        emissions = list(chain.cached_emissions)
        emissions[t] = e_new
        return replace(chain, path=new_path, cached_emissions=emissions), True
    return chain, False


def _log_kappa_target(path, kappa: float) -> float:
    return log_path_transition(path, kappa) + log_jacobian(kappa)


def kappa_update(chain: ChainState, sigma: float, rng):
    """Gaussian random-walk MH update of ``kappa``; returns ``(chain, accepted)``.

    Emissions do not depend on ``lambda`` and cancel; the transition
    normalisers do not.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    kp = chain.kappa + sigma * rng.standard_normal()
    log_a = _log_kappa_target(chain.path, kp) - _log_kappa_target(chain.path, chain.kappa)
    u = rng.random()
    if log_a >= 0.0 or u < math.exp(log_a):
        return replace(chain, kappa=kp), True
    return chain, False


def log_joint(path: Sequence[Network], kappa: float, models: Sequence[EmissionModel]) -> float:
    """Log joint likelihood of a path: transitions plus emissions (initial distribution omitted)."""
    return sum(mod.log_emission(g) for mod, g in zip(models, path)) + log_path_transition(path, kappa)


def initial_path(init, models: Sequence[EmissionModel], backend: str | None = None) -> list[Network]:
    T, n = len(models), models[0].n
    if isinstance(init, str):
        if init == "empty":
            return [Network.empty(n)] * T
        if init == "greedy":
            return [greedy_static_nem(mod, backend=backend) for mod in models]
        raise ValueError(f"unknown init {init!r}")
    path = list(init)
    if len(path) != T or any(g.n != n for g in path):
        raise ValueError(f"initial path must hold {T} networks on {n} components")
    return path


def run_chain(config: SamplerConfig, data, chain: int = 0, backend: str | None = None) -> Trace:
    """Run one chain of ``config.iterations`` sweeps; deterministic given ``(config.seed, chain)``."""
    kern = get_kernel(backend)
    models = emission_models(data)
    T, n = len(models), models[0].n
    if n < 2:
        raise ValueError("the sampler needs at least two components")
    N = config.iterations
    path0 = initial_path(config.init, models, backend)

    rows = np.array([g.rows for g in path0], dtype=np.uint64).reshape(T, n)
    base = np.ascontiguousarray(np.stack([mod.base for mod in models]))
    delta = np.ascontiguousarray(np.stack([mod.delta for mod in models]))
    attach = np.ascontiguousarray(models[0].kernel_attach())
    marginal, log_norm = models[0].marginal, models[0].log_norm
    emissions = np.array([kern.log_emission(rows[t], base[t], delta[t], attach, marginal, log_norm)
                          for t in range(T)])
    log_binom = log_binomials(n)
    kappa = logit(config.lambda_init)

    lambdas = np.empty(N)
    loglik = np.empty(N)
    kacc = np.zeros(N, dtype=np.uint8)
    state_acc = np.zeros(T, dtype=np.int64)
    edge_sums = np.zeros((T, n, n), dtype=np.int64)
    thin = config.thin
    n_snap = N // thin if thin else 0
    snaps = np.zeros((max(n_snap, 1), T, n), dtype=np.uint64)

    rng = chain_rng(config.seed, chain)
    n_e = n * (n - 1)
    for start in range(0, N, DRAW_BLOCK):
        b = min(DRAW_BLOCK, N - start)
        edge_idx = rng.integers(0, n_e, size=(DRAW_BLOCK, T), dtype=np.int64)[:b]
        u_state = rng.random((DRAW_BLOCK, T))[:b]
        z = rng.standard_normal(DRAW_BLOCK)[:b]
        u_kappa = rng.random(DRAW_BLOCK)[:b]
        sl = slice(start, start + b)
        kappa = kern.run_sweeps(
            rows, kappa, emissions, base, delta, attach, marginal, log_norm, log_binom,
            np.ascontiguousarray(edge_idx), np.ascontiguousarray(u_state), z, u_kappa,
            config.sigma, not config.fix_lambda, start, config.burn_in,
            lambdas[sl], loglik[sl], kacc[sl], state_acc, edge_sums, thin, snaps, 0,
        )

    final = ChainState(path=[Network(n, [int(x) for x in rows[t]]) for t in range(T)], kappa=kappa,
                       cached_emissions=emissions.tolist(), iteration=N)
    snapshots = None
    if n_snap:
        bits = np.arange(n, dtype=np.uint64)
        snapshots = ((snaps[:n_snap, :, :, None] >> bits) & np.uint64(1)).astype(np.uint8)
    return Trace(lambdas=lambdas, log_joint=loglik, kappa_accept=kacc.astype(bool), state_accept=state_acc,
                 edge_sums=edge_sums, burn_in=config.burn_in, sigma=config.sigma, seed=config.seed,
                 chain=chain, thin=thin, snapshots=snapshots, final_state=final)


def _run_one(args):
    config, data, chain, backend = args
    return run_chain(config, data, chain, backend)


def run_chains_parallel(config: SamplerConfig, data, n_chains: int, workers: int = 1,
                        backend: str | None = None) -> list[Trace]:
    """Independent chains ``0..n_chains-1`` seeded from ``(config.seed, index)``."""
    if n_chains < 1:
        raise ValueError(f"n_chains must be >= 1, got {n_chains}")
    models = emission_models(data)
    jobs = [(config, models, k, backend) for k in range(n_chains)]
    if workers <= 1 or n_chains == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def merge_edge_sums(traces: Sequence[Trace]) -> np.ndarray:
    return np.sum([tr.edge_sums for tr in traces], axis=0)


def expected_network(traces: Sequence[Trace], burn_in: int | None = None) -> np.ndarray:
    """Posterior edge means, shape ``(T, n, n)``, averaged over chains.

    Uses the exact running edge sums when ``burn_in`` matches the one the
    chains were run with; otherwise falls back to the thinned snapshots
    taken after ``burn_in``.
    """
    if not traces:
        raise ValueError("need at least one trace")
    per_chain = []
    for tr in traces:
        b = tr.burn_in if burn_in is None else burn_in
        if b >= tr.iterations:
            raise ValueError(f"burn_in {b} >= iterations {tr.iterations}")
        if b == tr.burn_in:
            per_chain.append(tr.edge_sums / tr.n_post)
            continue
        if tr.snapshots is None:
            raise ValueError("burn_in differs from the run's and no snapshots were stored")
        keep = tr.snapshot_iterations() > b
        if not keep.any():
            raise ValueError(f"no snapshots after burn_in {b}")
        per_chain.append(tr.snapshots[keep].mean(axis=0))
    return np.mean(per_chain, axis=0)


def binarize(expected: np.ndarray, cutoff: float = 0.5) -> list[Network]:
    """Edge present iff its posterior mean is strictly above ``cutoff``."""
    expected = np.asarray(expected)
    return [Network.from_array((expected[t] > cutoff).astype(np.uint8)) for t in range(expected.shape[0])]
