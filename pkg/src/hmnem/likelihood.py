"""Nested effects model emission probabilities.

Every supported likelihood factorises over reporters ``i`` and, given the
component ``j`` a reporter is attached to, over data columns. Grouping the
columns by the component their perturbation targets gives the reduced form
used throughout::

    score[i, j] = base[i] + sum_c delta[i, c] * reach[c, j]

where ``reach[c, j] = 1`` when ``j`` is ``c`` or reachable from ``c``,
``base[i]`` is the log-probability of reporter ``i``'s row if no component
were perturbed, and ``delta[i, c]`` the change from switching on the columns
that target ``c``. :class:`EmissionModel` stores these tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import get_kernel
from .graph import Network, edge_positions, flip_edge, reachability

__all__ = [
    "BINARY",
    "PROBABILITY",
    "PROB_CLAMP",
    "EffectDataset",
    "EmissionModel",
    "local_log_prob",
    "marginal_log_likelihood",
    "attached_log_likelihood",
    "greedy_static_nem",
]

BINARY = "binary"
PROBABILITY = "probability"
PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class EffectDataset:
    """Observed effects of ``m`` reporters across perturbation/replicate columns.

    Parameters
    ----------
    data : array of shape (m, L)
        0/1 effects in binary mode, effect probabilities in probability mode.
    n : int
        Number of pathway components.
    columns : sequence of (perturbation, replicate) pairs, optional
        One pair per data column. Defaults to one replicate of perturbations
        ``0..L-1``.
    mode : {'binary', 'probability'}
    alpha, beta : float
        False positive and false negative rates (binary mode).
    attachments : sequence of int, optional
        Component each reporter is attached to. When absent the likelihood
        marginalises over attachments.
    targets : sequence of int, optional
        Component targeted by each perturbation id; identity by default.
    """

    data: np.ndarray
    n: int
    columns: tuple = None
    mode: str = BINARY
    alpha: float = 0.0
    beta: float = 0.0
    attachments: np.ndarray | None = None
    targets: tuple | None = None
    reporter_names: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"data must be 2-D, got shape {data.shape}")
        m, L = data.shape
        columns = self.columns
        if columns is None:
            columns = tuple((k, 0) for k in range(L))
        columns = tuple((int(p), int(r)) for p, r in columns)
        if len(columns) != L:
            raise ValueError(f"{len(columns)} column labels for {L} data columns")

        if self.mode == BINARY:
            if not np.isin(data, (0, 1)).all():
                raise ValueError("binary-mode entries must be 0 or 1")
            data = data.astype(np.uint8)
            for name in ("alpha", "beta"):
                rate = getattr(self, name)
                if not 0.0 <= rate < 1.0:
                    raise ValueError(f"{name} must lie in [0, 1), got {rate}")
        elif self.mode == PROBABILITY:
            data = data.astype(np.float64)
            if not np.all((data >= 0.0) & (data <= 1.0)):
                raise ValueError("probability-mode entries must lie in [0, 1]")
            data = np.clip(data, PROB_CLAMP, 1.0 - PROB_CLAMP)
        else:
            raise ValueError(f"unknown mode {self.mode!r}")
        data.setflags(write=False)

        targets = self.targets
        n_pert = max((p for p, _ in columns), default=-1) + 1
        if targets is None:
            targets = tuple(range(max(n_pert, self.n)))
        targets = tuple(int(x) for x in targets)
        for p, _ in columns:
            if not 0 <= p < len(targets):
                raise ValueError(f"perturbation id {p} has no target component")
            if not 0 <= targets[p] < self.n:
                raise ValueError(f"perturbation {p} targets component {targets[p]}, outside 0..{self.n - 1}")

        attachments = self.attachments
        if attachments is not None:
            attachments = np.asarray(attachments, dtype=np.int64)
            if attachments.shape != (m,):
                raise ValueError(f"need one attachment per reporter ({m}), got {attachments.shape}")
            if attachments.size and (attachments.min() < 0 or attachments.max() >= self.n):
                raise ValueError("attachment outside the component range")
            attachments.setflags(write=False)

        object.__setattr__(self, "data", data)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "attachments", attachments)

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def n_columns(self) -> int:
        return self.data.shape[1]

    def column_targets(self) -> list[int]:
        return [self.targets[p] for p, _ in self.columns]

    def with_attachments(self, attachments) -> "EffectDataset":
        return EffectDataset(self.data, self.n, self.columns, self.mode, self.alpha, self.beta,
                             attachments, self.targets, self.reporter_names)

    def __eq__(self, other):
        if not isinstance(other, EffectDataset):
            return NotImplemented
        same_att = (self.attachments is None and other.attachments is None) or (
            self.attachments is not None and other.attachments is not None
            and np.array_equal(self.attachments, other.attachments))
        return (self.n == other.n and self.mode == other.mode and self.columns == other.columns
                and self.alpha == other.alpha and self.beta == other.beta
                and self.targets == other.targets and same_att
                and self.data.shape == other.data.shape and np.array_equal(self.data, other.data))

    __hash__ = None


def local_log_prob(d: int, s: int, alpha: float, beta: float) -> float:
    """Log-probability of observing effect ``d`` for a reporter whose component is in state ``s``."""
    if not (0.0 < alpha < 1.0 and 0.0 < beta < 1.0):
        raise ValueError(f"error rates must lie in (0, 1), got alpha={alpha}, beta={beta}")
    if s:
        return math.log1p(-beta) if d else math.log(beta)
    return math.log(alpha) if d else math.log1p(-alpha)


@dataclass(frozen=True)
class EmissionModel:
    """Reduced log-emission tables for one timepoint (see module docstring)."""

    n: int
    base: np.ndarray
    delta: np.ndarray
    attachments: np.ndarray | None

    @classmethod
    def from_dataset(cls, ds: EffectDataset, marginal: bool | None = None) -> "EmissionModel":
        """Build tables for ``ds``.

        ``marginal`` defaults to marginalising over attachments exactly when
        ``ds`` carries none. Probability mode requires attachments.
        """
        if marginal is None:
            marginal = ds.attachments is None
        if not marginal and ds.attachments is None:
            raise ValueError("attached likelihood requires an attachment map")
        if ds.mode == PROBABILITY:
            if marginal:
                raise ValueError("probability-mode data requires an attachment map")
            p = ds.data
            off, on = np.log1p(-p), np.log(p)
        else:
            d = ds.data.astype(bool)
            a, b = ds.alpha, ds.beta
            if not (0.0 < a < 1.0 and 0.0 < b < 1.0):
                raise ValueError(f"binary likelihood needs 0 < alpha, beta < 1, got alpha={a}, beta={b}")
            off = np.where(d, math.log(a), math.log1p(-a))
            on = np.where(d, math.log1p(-b), math.log(b))

        m = ds.m
        base = off.sum(axis=1)
        delta = np.zeros((m, ds.n))
        targets = np.asarray(ds.column_targets(), dtype=np.int64)
        np.add.at(delta.T, targets, (on - off).T)
        attach = None if marginal else np.array(ds.attachments, dtype=np.int64)
        return cls(ds.n, np.ascontiguousarray(base), np.ascontiguousarray(delta), attach)

    @property
    def marginal(self) -> bool:
        return self.attachments is None

    @property
    def m(self) -> int:
        return self.base.shape[0]

    @property
    def log_norm(self) -> float:
        # uniform prior over the n**m attachment maps
        return self.m * math.log(self.n) if self.marginal else 0.0

    def kernel_attach(self) -> np.ndarray:
        if self.attachments is None:
            return np.zeros(self.m, dtype=np.int64)
        return self.attachments

    def log_emission(self, g: Network) -> float:
        if g.n != self.n:
            raise ValueError(f"network has {g.n} components, data expects {self.n}")
        reach = reachability(g)
        R = np.array([[reach[c] >> j & 1 for j in range(self.n)] for c in range(self.n)], dtype=float)
        score = self.base[:, None] + self.delta @ R
        if self.marginal:
            mx = score.max(axis=1)
            per = mx + np.log(np.exp(score - mx[:, None]).sum(axis=1))
            return float(per.sum()) - self.log_norm
        return float(score[np.arange(self.m), self.attachments].sum())


def marginal_log_likelihood(g: Network, data: EffectDataset) -> float:
    """Log-likelihood with reporter attachments marginalised under a uniform prior."""
    if data.mode != BINARY:
        raise ValueError("marginal likelihood is defined for binary data")
    return EmissionModel.from_dataset(data, marginal=True).log_emission(g)


def attached_log_likelihood(g: Network, data: EffectDataset) -> float:
    """Log-likelihood with every reporter attached to its known component."""
    if data.attachments is None:
        raise ValueError("attached likelihood requires an attachment map")
    return EmissionModel.from_dataset(data, marginal=False).log_emission(g)


def greedy_static_nem(data: EffectDataset | EmissionModel, start: Network | None = None,
                      backend: str | None = None) -> Network:
    """Hill-climb over single-edge flips from ``start`` (empty graph by default).

    Each step moves to the best-scoring neighbour if it strictly improves;
    ties go to the lexicographically smallest ``(r, c)``. Binary data
    without attachments is scored by the marginal likelihood, otherwise by
    the attached likelihood.
    """
    model = data if isinstance(data, EmissionModel) else EmissionModel.from_dataset(data)
    kern = get_kernel(backend)
    attach = model.kernel_attach()

    def score(net: Network) -> float:
        rows = np.array(net.rows, dtype=np.uint64)
        return kern.log_emission(rows, model.base, model.delta, attach, model.marginal, model.log_norm)

    current = Network.empty(model.n) if start is None else start
    best = score(current)
    positions = edge_positions(model.n)
    while True:
        step, step_score = None, best
        for r, c in positions:
            cand = flip_edge(current, r, c)
            s = score(cand)
            if s > step_score:
                step, step_score = cand, s
        if step is None:
            return current
        current, best = step, step_score
