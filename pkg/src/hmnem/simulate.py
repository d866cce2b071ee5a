"""Synthetic time-varying networks, perturbation data, and experiment sweeps.

Ground truth is generated in four steps: a sparse random transitively closed
network for the first timepoint; a transitively closed successor for every
later timepoint, obtained by flipping a random number of entries drawn from
the geometric-distance kernel; noiseless nested effects for ``n_r``
reporters per component, replicated ``n_p`` times; and independent
false-positive / false-negative flips.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .diagnostics import hpd_interval, mc_error_lambda, network_metrics
from .graph import Network, edge_positions, is_transitively_closed, state_matrix
from .likelihood import EffectDataset
from .sampler import SamplerConfig, binarize, emission_models, expected_network, log_joint, run_chain
from .transition import log_binomials, logit

__all__ = [
    "SimConfig",
    "GroundTruth",
    "TUNED_SIGMA",
    "MAX_ATTEMPTS",
    "generate_initial_network",
    "flip_count_distribution",
    "evolve_network",
    "reporter_attachments",
    "generate_effects",
    "add_noise",
    "simulate",
    "subsample_time",
    "RunRecord",
    "run_grid",
    "sensitivity_sweep",
    "coverage_sweep",
    "time_subsampling_study",
]

MAX_ATTEMPTS = 10**6

# proposal scale for kappa tuned per smoothness level (rejection rate ~ 0.55)
TUNED_SIGMA = {0.1: 2.0, 0.5: 0.65, 0.9: 0.65}


@dataclass(frozen=True)
class SimConfig:
    n: int = 6
    T: int = 8
    n_r: int = 4
    n_p: int = 3
    alpha: float = 0.1
    beta: float = 0.1
    lambda_true: float = 0.9
    seed: int = 0
    initial_flip_fraction: float = 0.10

    def __post_init__(self):
        for name in ("n", "T", "n_r", "n_p"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n < 2:
            raise ValueError("need at least two components")
        for name in ("alpha", "beta"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if not 0.0 < self.lambda_true < 1.0:
            raise ValueError("lambda_true must lie in (0, 1)")
        if not 0.0 < self.initial_flip_fraction <= 1.0:
            raise ValueError("initial_flip_fraction must lie in (0, 1]")


@dataclass
class GroundTruth:
    config: SimConfig
    networks: list
    attachments: np.ndarray
    clean_data: list
    noisy_data: list


def _flip_positions(g: Network, positions, idx) -> Network:
    rows = list(g.rows)
    for k in idx:
        r, c = positions[k]
        rows[r] ^= 1 << c
    return Network(g.n, rows)


def generate_initial_network(n: int, flip_fraction: float, rng, max_attempts: int = MAX_ATTEMPTS) -> Network:
    """Flip ``round(flip_fraction * n(n-1))`` (at least one) entries of the empty graph until closed."""
    if not 0.0 < flip_fraction <= 1.0:
        raise ValueError(f"flip_fraction must lie in (0, 1], got {flip_fraction}")
    positions = edge_positions(n)
    k = max(1, math.floor(flip_fraction * len(positions) + 0.5))
    empty = Network.empty(n)
    for _ in range(max_attempts):
        g = _flip_positions(empty, positions, rng.choice(len(positions), size=k, replace=False))
        if is_transitively_closed(g):
            return g
    raise RuntimeError(f"no transitively closed network after {max_attempts} attempts")


def flip_count_distribution(n: int, lam: float) -> np.ndarray:
    """Normalised weights ``C(n_e, e) lam (1-lam)^(e-1)`` over ``e = 0..n_e``."""
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    n_e = n * (n - 1)
    logw = log_binomials(n) + math.log(lam) + (np.arange(n_e + 1) - 1) * math.log1p(-lam)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def evolve_network(g_prev: Network, lam: float, rng, closed: bool = True,
                   max_attempts: int = MAX_ATTEMPTS) -> Network:
    """Successor network: flip a kernel-distributed number of distinct entries.

    With ``closed=True`` the whole step is redrawn until the result is
    transitively closed.
    """
    positions = edge_positions(g_prev.n)
    probs = flip_count_distribution(g_prev.n, lam)
    for _ in range(max_attempts):
        n_er = int(rng.choice(len(probs), p=probs))
        g = _flip_positions(g_prev, positions, rng.choice(len(positions), size=n_er, replace=False))
        if not closed or is_transitively_closed(g):
            return g
    raise RuntimeError(f"no transitively closed successor after {max_attempts} attempts")


def reporter_attachments(n: int, n_r: int) -> np.ndarray:
    """Reporters ``j*n_r .. (j+1)*n_r - 1`` attach to component ``j``."""
    return np.repeat(np.arange(n, dtype=np.int64), n_r)


def generate_effects(networks: Sequence[Network], attachments, n_p: int,
                     perturbations: Sequence[int] | None = None) -> list[EffectDataset]:
    """Noiseless effects ``d[i, (k, r)] = S[theta_i, k]`` for every replicate ``r``."""
    if not networks:
        raise ValueError("need at least one network")
    n = networks[0].n
    if perturbations is None:
        perturbations = list(range(n))
    attachments = np.asarray(attachments, dtype=np.int64)
    columns = [(k, r) for k in range(len(perturbations)) for r in range(n_p)]
    out = []
    for g in networks:
        S = state_matrix(g, perturbations)
        D = np.repeat(S[attachments], n_p, axis=1)
        out.append(EffectDataset(D, n, columns, targets=tuple(perturbations)))
    return out


def add_noise(clean: EffectDataset, alpha: float, beta: float, rng) -> EffectDataset:
    """Flip each 0 to 1 with probability ``alpha`` and each 1 to 0 with probability ``beta``."""
    for name, rate in (("alpha", alpha), ("beta", beta)):
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {rate}")
    d = clean.data.astype(bool)
    u = rng.random(d.shape)
    flip = np.where(d, u < beta, u < alpha)
    noisy = (d ^ flip).astype(np.uint8)
    # the dataset records rates usable by the likelihood, which needs them below 1
    return EffectDataset(noisy, clean.n, clean.columns, alpha=min(alpha, 1 - 1e-12),
                         beta=min(beta, 1 - 1e-12), targets=clean.targets)


def simulate(config: SimConfig) -> GroundTruth:
    """Generate networks and data; network and noise draws use separate streams."""
    net_ss, noise_ss = np.random.SeedSequence(config.seed).spawn(2)
    net_rng, noise_rng = np.random.default_rng(net_ss), np.random.default_rng(noise_ss)
    g = generate_initial_network(config.n, config.initial_flip_fraction, net_rng)
    networks = [g]
    for _ in range(1, config.T):
        g = evolve_network(g, config.lambda_true, net_rng)
        networks.append(g)
    attachments = reporter_attachments(config.n, config.n_r)
    clean = generate_effects(networks, attachments, config.n_p)
    noisy = [add_noise(ds, config.alpha, config.beta, noise_rng) for ds in clean]
    return GroundTruth(config, networks, attachments, clean, noisy)


def subsample_time(datasets: Sequence, networks: Sequence[Network] | None, interval: int):
    """Keep timepoints ``0, interval, 2*interval, ...`` of data and truth."""
    if interval < 1:
        raise ValueError(f"interval must be >= 1, got {interval}")
    kept = list(datasets)[::interval]
    if len(kept) < 2:
        raise ValueError(f"interval {interval} keeps fewer than two of {len(datasets)} timepoints")
    truth = None if networks is None else list(networks)[::interval]
    return kept, truth


@dataclass(frozen=True)
class RunRecord:
    lambda_true: float
    alpha: float
    beta: float
    dataset: int
    seed: int
    posterior_mean: float
    mc_error: float
    sensitivity: float
    specificity: float
    accuracy: float
    hpd_lambda_lower: float
    hpd_lambda_upper: float
    covers_lambda: bool
    true_log_joint: float
    hpd_log_joint_lower: float
    hpd_log_joint_upper: float
    covers_log_joint: bool

    def as_dict(self) -> dict:
        return asdict(self)


def _derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])


def _grid_job(args):
    (lam, alpha, beta, d, key, truth, base_clean, sampler_config, seed, coverage, backend) = args
    noise_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key + (0,)))
    data = [add_noise(ds, alpha, beta, noise_rng) for ds in base_clean]
    run_seed = _derived_seed(seed, *key, 1)
    cfg = replace(sampler_config, seed=run_seed)
    tr = run_chain(cfg, data, backend=backend)
    return _record(lam, alpha, beta, d, run_seed, tr, truth, data, coverage)


def _record(lam, alpha, beta, d, run_seed, tr, truth, data, coverage) -> RunRecord:
    post = tr.lambdas[tr.burn_in:]
    mean = float(post.mean())
    metrics = network_metrics(binarize(expected_network([tr])), truth)
    hpd_l = hpd_interval(post, coverage)
    true_lj = log_joint(truth, logit(lam), emission_models(data))
    hpd_j = hpd_interval(tr.log_joint[tr.burn_in:], coverage)
    return RunRecord(lam, alpha, beta, d, run_seed, mean, mc_error_lambda(mean, lam),
                     metrics.sensitivity, metrics.specificity, metrics.accuracy,
                     hpd_l.lower, hpd_l.upper, hpd_l.contains(lam),
                     true_lj, hpd_j.lower, hpd_j.upper, hpd_j.contains(true_lj))


def _map(fn, jobs, workers):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def run_grid(lambdas: Sequence[float], alphas: Sequence[float], betas: Sequence[float], datasets: int,
             sampler_config: SamplerConfig, base: SimConfig = SimConfig(), seed: int = 0,
             sigmas: dict | None = None, coverage: float = 0.95, workers: int = 1,
             backend: str | None = None) -> list[RunRecord]:
    """One chain per (lambda, alpha, beta, dataset) on fixed per-lambda truth networks.

    The truth path for each lambda comes from ``simulate(base)`` with that
    lambda; every dataset adds fresh noise to its clean effects.
    """
    sigmas = TUNED_SIGMA if sigmas is None else sigmas
    jobs = []
    for li, lam in enumerate(lambdas):
        gt = simulate(replace(base, lambda_true=lam, alpha=0.0, beta=0.0))
        cfg = replace(sampler_config, sigma=sigmas.get(lam, sampler_config.sigma))
        for ai, a in enumerate(alphas):
            for bi, b in enumerate(betas):
                for d in range(datasets):
                    jobs.append((lam, a, b, d, (li, ai, bi, d), gt.networks, gt.clean_data,
                                 cfg, seed, coverage, backend))
    return _map(_grid_job, jobs, workers)


def _cells(records):
    cells = {}
    for rec in records:
        cells.setdefault((rec.lambda_true, rec.alpha, rec.beta), []).append(rec)
    return cells


def sensitivity_sweep(lambdas=(0.1, 0.5, 0.9), alphas=(0.1, 0.2, 0.3, 0.4, 0.5),
                      betas=(0.1, 0.2, 0.3, 0.4, 0.5), datasets: int = 50,
                      sampler_config: SamplerConfig | None = None, records=None, **kwargs):
    """Mean and SD of lambda error and network accuracy per grid cell.

    Returns ``(records, summary)``; ``records`` is the raw per-run table.
    Pass ``records`` to summarise existing runs.
    """
    if records is None:
        cfg = sampler_config or SamplerConfig(iterations=12000, burn_in=2000)
        records = run_grid(lambdas, alphas, betas, datasets, cfg, **kwargs)
    summary = []
    for (lam, a, b), recs in sorted(_cells(records).items()):
        err = np.array([r.mc_error for r in recs])
        acc = np.array([r.accuracy for r in recs])
        summary.append({
            "lambda_true": lam, "alpha": a, "beta": b, "runs": len(recs),
            "mc_error_mean": float(err.mean()), "mc_error_sd": float(err.std(ddof=1)) if len(recs) > 1 else 0.0,
            "accuracy_mean": float(acc.mean()), "accuracy_sd": float(acc.std(ddof=1)) if len(recs) > 1 else 0.0,
        })
    return records, summary


def coverage_sweep(lambdas=(0.1, 0.5, 0.9), alphas=(0.1, 0.2, 0.3, 0.4, 0.5),
                   betas=(0.1, 0.2, 0.3, 0.4, 0.5), datasets: int = 50,
                   sampler_config: SamplerConfig | None = None, nominal: float = 0.95, records=None, **kwargs):
    """Fraction of runs whose HPD interval contains the truth, per grid cell.

    Returns ``(records, summary)``.
    """
    if records is None:
        cfg = sampler_config or SamplerConfig(iterations=12000, burn_in=2000)
        records = run_grid(lambdas, alphas, betas, datasets, cfg, coverage=nominal, **kwargs)
    summary = []
    for (lam, a, b), recs in sorted(_cells(records).items()):
        cov_l = float(np.mean([r.covers_lambda for r in recs]))
        cov_j = float(np.mean([r.covers_log_joint for r in recs]))
        summary.append({
            "lambda_true": lam, "alpha": a, "beta": b, "runs": len(recs), "nominal": nominal,
            "coverage_lambda": cov_l, "coverage_log_joint": cov_j,
            "coverage_lambda_minus_nominal": cov_l - nominal,
            "coverage_log_joint_minus_nominal": cov_j - nominal,
        })
    return records, summary


def _subsample_job(args):
    rep, intervals, base, sampler_config, seed, backend = args
    gt = simulate(replace(base, seed=_derived_seed(seed, rep, 0)))
    out = []
    for interval in intervals:
        data, truth = subsample_time(gt.noisy_data, gt.networks, interval)
        cfg = replace(sampler_config, seed=_derived_seed(seed, rep, 1, interval))
        tr = run_chain(cfg, data, backend=backend)
        metrics = network_metrics(binarize(expected_network([tr])), truth)
        out.append({"replicate": rep, "interval": interval, "timepoints": len(data),
                    "posterior_mean": float(tr.lambdas[tr.burn_in:].mean()),
                    "accuracy": metrics.accuracy, "sensitivity": metrics.sensitivity,
                    "specificity": metrics.specificity})
    return out


def time_subsampling_study(intervals=(32, 16, 8, 4, 2, 1), replicates: int = 10,
                           base: SimConfig = SimConfig(T=128, lambda_true=0.9),
                           sampler_config: SamplerConfig | None = None, seed: int = 0,
                           workers: int = 1, backend: str | None = None) -> list[dict]:
    """Infer from every ``interval``-th timepoint of replicate datasets of length ``base.T``."""
    cfg = sampler_config or SamplerConfig(iterations=12000, burn_in=2000,
                                          sigma=TUNED_SIGMA.get(base.lambda_true, 0.65))
    jobs = [(rep, tuple(intervals), base, cfg, seed, backend) for rep in range(replicates)]
    return [row for rows in _map(_subsample_job, jobs, workers) for row in rows]
