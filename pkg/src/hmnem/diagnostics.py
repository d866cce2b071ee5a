"""Convergence and recovery diagnostics for sampler output."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import Network

__all__ = [
    "PsrfResult",
    "HpdInterval",
    "NetworkMetrics",
    "psrf",
    "running_psrf",
    "autocorrelation",
    "ess",
    "hpd_interval",
    "rejection_rate",
    "network_metrics",
    "mc_error_lambda",
    "bootstrap_mean_ci",
]


@dataclass(frozen=True)
class PsrfResult:
    sqrt_r_hat: float
    degenerate: bool = False


@dataclass(frozen=True)
class HpdInterval:
    lower: float
    upper: float
    nominal_coverage: float

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class NetworkMetrics:
    tp: int
    tn: int
    fp: int
    fn: int
    sensitivity: float
    specificity: float
    accuracy: float
    sensitivity_undefined: bool = False
    specificity_undefined: bool = False


def _post(chains, burn_in: int) -> np.ndarray:
    arr = np.asarray(chains, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError("expected an array of shape (chains, iterations)")
    if burn_in >= arr.shape[1]:
        raise ValueError(f"burn_in {burn_in} leaves no samples")
    return arr[:, burn_in:]


def psrf(chains, burn_in: int = 0) -> PsrfResult:
    """Gelman-Rubin potential scale reduction, square-rooted.

    Uses the original two-stage variance estimate
    ``V = (L-1)/L * W + B/L`` without a degrees-of-freedom correction.
    If every chain is constant the result is 1 with ``degenerate=True``.
    """
    x = _post(chains, burn_in)
    k, L = x.shape
    if k < 2:
        raise ValueError("psrf needs at least two chains")
    if L < 2:
        raise ValueError("psrf needs at least two post-burn-in samples per chain")
    W = x.var(axis=1, ddof=1).mean()
    B = L * x.mean(axis=1).var(ddof=1)
    if W == 0.0:
        return PsrfResult(1.0, degenerate=True)
    V = (L - 1) / L * W + B / L
    return PsrfResult(math.sqrt(V / W))


def running_psrf(chains, burn_in: int = 0, window: int | None = None, stride: int | None = None):
    """Windowed ``sqrt(R-hat)`` series for convergence plots.

    Windows cover ``[s, s + window)`` of the post-burn-in samples for
    ``s = 0, stride, 2*stride, ...``. Defaults: window is 10% of the samples,
    stride half the window. Returns ``(end_iterations, values)``; end
    iterations count from the start of the chain.
    """
    x = _post(chains, burn_in)
    L = x.shape[1]
    if window is None:
        window = max(2, L // 10)
    if stride is None:
        stride = max(1, window // 2)
    if not 2 <= window <= L or stride < 1:
        raise ValueError(f"invalid window={window} / stride={stride} for {L} samples")
    starts = range(0, L - window + 1, stride)
    ends = np.array([burn_in + s + window for s in starts], dtype=np.int64)
    vals = np.array([psrf(x[:, s:s + window]).sqrt_r_hat for s in starts])
    return ends, vals


def autocorrelation(x) -> np.ndarray:
    """Biased sample autocorrelation for all lags, by FFT."""
    x = np.asarray(x, dtype=float)
    L = len(x)
    d = x - x.mean()
    nfft = 1 << (2 * L - 1).bit_length()
    f = np.fft.rfft(d, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:L] / L
    if acov[0] == 0.0:
        return np.zeros(L)
    return acov / acov[0]


def ess(trace, burn_in: int = 0) -> tuple[float, bool]:
    """Effective sample size by Geyer's initial positive sequence.

    Autocorrelations are summed in pairs ``rho_2k + rho_2k+1`` up to the
    first non-positive pair, and the result is capped at the sample count.
    Returns ``(ess, zero_variance_flag)``.
    """
    x = np.asarray(trace, dtype=float)
    if burn_in >= len(x):
        raise ValueError(f"burn_in {burn_in} leaves no samples")
    x = x[burn_in:]
    L = len(x)
    if L < 2 or np.all(x == x[0]):
        return 0.0, True
    rho = autocorrelation(x)
    tau = -1.0
    for k in range(0, L - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
    return float(min(L, L / tau)), False


def hpd_interval(samples, coverage: float = 0.95) -> HpdInterval:
    """Shortest window of ``ceil(coverage * L)`` consecutive order statistics.

    Ties go to the window with the lowest start.
    """
    if not 0.0 < coverage < 1.0:
        raise ValueError(f"coverage must lie in (0, 1), got {coverage}")
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    L = len(x)
    if L < 20:
        raise ValueError(f"need at least 20 samples, got {L}")
    w = math.ceil(coverage * L - 1e-9)
    widths = x[w - 1:] - x[:L - w + 1]
    i = int(np.argmin(widths))
    return HpdInterval(float(x[i]), float(x[i + w - 1]), coverage)


def rejection_rate(accept_flags, burn_in: int = 0) -> float:
    flags = np.asarray(accept_flags, dtype=bool)[burn_in:]
    if flags.size == 0:
        raise ValueError("no post-burn-in proposals")
    return float(1.0 - flags.mean())


def network_metrics(inferred: Sequence[Network], truth: Sequence[Network]) -> NetworkMetrics:
    """Directed-edge confusion counts pooled over timepoints and off-diagonal positions.

    A ratio with a zero denominator is reported as 1 and flagged.
    """
    if len(inferred) != len(truth):
        raise ValueError(f"{len(inferred)} inferred networks vs {len(truth)} true ones")
    tp = tn = fp = fn = 0
    for g, h in zip(inferred, truth):
        if g.n != h.n:
            raise ValueError(f"component count mismatch: {g.n} vs {h.n}")
        full = (1 << g.n) - 1
        for r, (a, b) in enumerate(zip(g.rows, h.rows)):
            off = full & ~(1 << r)
            tp += (a & b).bit_count()
            fp += (a & ~b & off).bit_count()
            fn += (~a & b & off).bit_count()
            tn += (~a & ~b & off).bit_count()
    pos, neg = tp + fn, tn + fp
    sens = tp / pos if pos else 1.0
    spec = tn / neg if neg else 1.0
    acc = (tp + tn) / (pos + neg) if pos + neg else 1.0
    return NetworkMetrics(tp, tn, fp, fn, sens, spec, acc, pos == 0, neg == 0)


def mc_error_lambda(posterior_mean: float, true_lambda: float) -> float:
    """Absolute error of the posterior mean of the smoothness parameter."""
    return abs(posterior_mean - true_lambda)


def bootstrap_mean_ci(values, level: float = 0.95, n_boot: int = 2000, seed: int = 0):
    """Percentile bootstrap interval for the mean of ``values``."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values")
    rng = np.random.default_rng(seed)
    means = v[rng.integers(0, v.size, size=(n_boot, v.size))].mean(axis=1)
    tail = (1.0 - level) / 2
    return float(np.quantile(means, tail)), float(np.quantile(means, 1.0 - tail))
