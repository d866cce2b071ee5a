"""Directed networks over a fixed set of pathway components.

A :class:`Network` stores its adjacency matrix as one integer bitset per row
(bit ``c`` of row ``r`` set means edge ``r -> c``). Self-loops cannot be
represented. Networks are immutable and hashable.
"""
from __future__ import annotations

from itertools import product
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "Network",
    "transitive_closure",
    "is_transitively_closed",
    "reachability",
    "state_matrix",
    "graph_distance",
    "flip_edge",
    "edge_positions",
    "position_to_edge",
    "all_networks",
]


class Network:
    """Directed graph on ``n`` nodes without self-loops."""

    __slots__ = ("n", "rows")

    def __init__(self, n: int, rows: Sequence[int] | None = None):
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if rows is None:
            rows = (0,) * n
        rows = tuple(int(r) for r in rows)
        if len(rows) != n:
            raise ValueError(f"expected {n} rows, got {len(rows)}")
        full = (1 << n) - 1
        for r, bits in enumerate(rows):
            if bits < 0 or bits & ~full:
                raise ValueError(f"row {r} has bits outside 0..{n - 1}")
            if bits >> r & 1:
                raise ValueError(f"self-loop at node {r}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "rows", rows)

    def __setattr__(self, name, value):
        raise AttributeError("Network is immutable")

    @classmethod
    def empty(cls, n: int) -> "Network":
        return cls(n)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Network":
        rows = [0] * n
        for r, c in edges:
            if not (0 <= r < n and 0 <= c < n):
                raise IndexError(f"edge ({r}, {c}) out of range for n={n}")
            rows[r] |= 1 << c
        return cls(n, rows)

    @classmethod
    def from_array(cls, adj) -> "Network":
        a = np.asarray(adj)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {a.shape}")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        n = a.shape[0]
        weights = 1 << np.arange(n, dtype=object)
        rows = [int((a[r].astype(object) * weights).sum()) for r in range(n)]
        return cls(n, rows)

    def to_array(self) -> np.ndarray:
        bits = np.arange(self.n)
        rows = np.array(self.rows, dtype=object)
        return ((rows[:, None] >> bits[None, :]) & 1).astype(np.uint8)

    def has_edge(self, r: int, c: int) -> bool:
        return bool(self.rows[r] >> c & 1)

    def edges(self) -> list[tuple[int, int]]:
        return [(r, c) for r in range(self.n) for c in range(self.n) if self.rows[r] >> c & 1]

    @property
    def n_edges(self) -> int:
        return sum(r.bit_count() for r in self.rows)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return self.n == other.n and self.rows == other.rows

    def __hash__(self):
        return hash((self.n, self.rows))

    def __repr__(self):
        return f"Network(n={self.n}, edges={self.edges()})"

    def __reduce__(self):
        return (Network, (self.n, self.rows))


def _closure_rows(rows: Sequence[int]) -> list[int]:
    # bit-parallel Warshall; may set diagonal bits on cycles
    out = list(rows)
    n = len(out)
    for k in range(n):
        bk = 1 << k
        rk = out[k]
        for i in range(n):
            if out[i] & bk:
                out[i] |= rk
    return out


def transitive_closure(g: Network) -> Network:
    """Smallest supergraph of ``g`` containing ``r -> c`` whenever ``c`` is reachable from ``r``."""
    rows = _closure_rows(g.rows)
    return Network(g.n, [bits & ~(1 << r) for r, bits in enumerate(rows)])


def is_transitively_closed(g: Network) -> bool:
    return transitive_closure(g) == g


def reachability(g: Network) -> tuple[int, ...]:
    """Row bitsets of nodes reachable from each node, the node itself included."""
    rows = _closure_rows(g.rows)
    return tuple(bits | (1 << r) for r, bits in enumerate(rows))


def state_matrix(g: Network, perturbations: Sequence[int] | None = None) -> np.ndarray:
    """Component states under each perturbation.

    Entry ``[j, k]`` is 1 when component ``j`` is the target of perturbation
    ``k`` or is reachable from that target. ``perturbations`` lists the
    targeted component of each perturbation and defaults to ``range(n)``.
    """
    if perturbations is None:
        perturbations = range(g.n)
    reach = reachability(g)
    cols = []
    for k in perturbations:
        if not 0 <= k < g.n:
            raise IndexError(f"perturbation target {k} out of range for n={g.n}")
        cols.append([reach[k] >> j & 1 for j in range(g.n)])
    return np.array(cols, dtype=np.uint8).T.reshape(g.n, len(cols))


def graph_distance(u: Network, v: Network) -> int:
    """L1 distance between adjacency matrices."""
    if u.n != v.n:
        raise ValueError(f"dimension mismatch: {u.n} vs {v.n}")
    return sum((a ^ b).bit_count() for a, b in zip(u.rows, v.rows))


def flip_edge(g: Network, r: int, c: int) -> Network:
    if r == c:
        raise ValueError("cannot flip a diagonal entry")
    if not (0 <= r < g.n and 0 <= c < g.n):
        raise IndexError(f"edge ({r}, {c}) out of range for n={g.n}")
    rows = list(g.rows)
    rows[r] ^= 1 << c
    return Network(g.n, rows)


def edge_positions(n: int) -> list[tuple[int, int]]:
    """The ``n(n-1)`` off-diagonal positions in row-major order."""
    return [(r, c) for r in range(n) for c in range(n) if r != c]


def position_to_edge(index: int, n: int) -> tuple[int, int]:
    r, c = divmod(index, n - 1)
    return r, c + (c >= r)


def all_networks(n: int) -> Iterator[Network]:
    """Every network on ``n`` nodes (``2**(n*(n-1))`` of them)."""
    pos = edge_positions(n)
    for bits in product((0, 1), repeat=len(pos)):
        rows = [0] * n
        for (r, c), b in zip(pos, bits):
            if b:
                rows[r] |= 1 << c
        yield Network(n, rows)
