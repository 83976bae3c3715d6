"""Time-varying contact networks: generators, temporal loading, topology metrics.

Node ids are dense integers in [0, N).  A network holds one edge set per day
(static generators share a single day) plus a removal ledger mapping node id
to the day it was permanently removed (isolation).  Neighbor queries at day t
exclude nodes removed at any day <= t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np


class GraphError(ValueError):
    """Invalid generator parameters or an infeasible construction."""


class EdgeListParseError(ValueError):
    """Malformed row in a day-stamped edge-list file."""

    def __init__(self, message, line_no):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class TopologyMetrics:
    """Global clustering coefficient, mean shortest path length, components.

    ``l_p`` averages over connected ordered pairs only and is NaN when the
    day's graph has no edges.
    """

    gamma_c: float
    l_p: float
    n_components: int


@dataclass
class ContactNetwork:
    """Per-day undirected adjacency with permanent node removal.

    ``base_days`` is immutable after construction; ``removed`` is the only
    mutable piece and is cloned per run so a base network can be shared
    read-only across replications.
    """

    base_days: list[dict[int, set[int]]]
    n_initial: int
    static: bool = False
    removed: dict[int, int] = field(default_factory=dict)
    node_labels: list[str] | None = None

    @property
    def horizon(self) -> int | None:
        """Day count for temporal networks; None when static (any day valid)."""
        return None if self.static else len(self.base_days)

    def _day_adj(self, t: int) -> dict[int, set[int]]:
        if self.static:
            return self.base_days[0]
        if t < 0 or t >= len(self.base_days):
            raise GraphError(f"day {t} outside horizon {len(self.base_days)}")
        return self.base_days[t]

    def is_active(self, i: int, t: int) -> bool:
        r = self.removed.get(i)
        return r is None or r > t

    def active_nodes(self, t: int) -> list[int]:
        return [i for i in range(self.n_initial) if self.is_active(i, t)]

    def neighbors(self, i: int, t: int) -> set[int]:
        """Active neighbors of i at day t; empty set if i itself is removed."""
        if not self.removed:
            return set(self._day_adj(t).get(i, ()))
        if not self.is_active(i, t):
            return set()
        adj = self._day_adj(t)
        return {j for j in adj.get(i, ()) if self.is_active(j, t)}

    def closed_neighbors(self, i: int, t: int) -> set[int]:
        """Neighbors at day t together with i itself."""
        if not self.is_active(i, t):
            return set()
        out = self.neighbors(i, t)
        out.add(i)
        return out

    def degree(self, i: int, t: int) -> int:
        return len(self.neighbors(i, t))

    def edges(self, t: int) -> set[tuple[int, int]]:
        """Active edge set at day t as (u, v) pairs with u < v."""
        adj = self._day_adj(t)
        out = set()
        for u, nbrs in adj.items():
            if not self.is_active(u, t):
                continue
            for v in nbrs:
                if u < v and self.is_active(v, t):
                    out.add((u, v))
        return out

    def remove_node(self, i: int, t: int) -> None:
        """Remove i from all days >= t.  Idempotent; keeps earliest removal day."""
        prev = self.removed.get(i)
        if prev is None or t < prev:
            self.removed[i] = t

    def clone(self) -> "ContactNetwork":
        """Share base adjacency, copy the removal ledger (one clone per run)."""
        return ContactNetwork(
            base_days=self.base_days,
            n_initial=self.n_initial,
            static=self.static,
            removed=dict(self.removed),
            node_labels=self.node_labels,
        )

    def adjacency_arrays(self, t: int) -> list[np.ndarray]:
        """Active neighbor lists as int arrays, indexed by node id."""
        adj = self._day_adj(t)
        out = []
        for i in range(self.n_initial):
            if not self.is_active(i, t):
                out.append(np.empty(0, dtype=np.int64))
            else:
                nbrs = [j for j in adj.get(i, ()) if self.is_active(j, t)]
                out.append(np.array(sorted(nbrs), dtype=np.int64))
        return out


def _empty_adj(n: int) -> dict[int, set[int]]:
    return {i: set() for i in range(n)}


def _add_edge(adj: dict[int, set[int]], u: int, v: int) -> None:
    if u == v:
        raise GraphError("self-loops are forbidden")
    adj[u].add(v)
    adj[v].add(u)


def gen_line(n: int) -> ContactNetwork:
    """Static path graph: edges (i, i+1) for 0 <= i <= n-2."""
    if n < 2:
        raise GraphError(f"line network needs n >= 2, got {n}")
    adj = _empty_adj(n)
    for i in range(n - 1):
        _add_edge(adj, i, i + 1)
    return ContactNetwork(base_days=[adj], n_initial=n, static=True)


def gen_watts_strogatz(n: int, d: int, delta: float, seed) -> ContactNetwork:
    """Small-world ring lattice with independent edge rewiring.

    Each node starts with d/2 neighbors per side; every lattice edge's far
    endpoint is rewired with probability delta to a uniform choice among
    current non-neighbors (no duplicates, no self-loops).
    """
    if d % 2 != 0:
        raise GraphError(f"degree must be even, got {d}")
    if not (0 <= d < n):
        raise GraphError(f"need 0 <= d < n, got d={d}, n={n}")
    if not (0.0 <= delta <= 1.0):
        raise GraphError(f"rewiring probability must be in [0,1], got {delta}")
    rng = np.random.default_rng(seed)
    adj = _empty_adj(n)
    for i in range(n):
        for off in range(1, d // 2 + 1):
            _add_edge(adj, i, (i + off) % n)
    if delta > 0:
        for i in range(n):
            for off in range(1, d // 2 + 1):
                j = (i + off) % n
                if j not in adj[i]:
                    continue  # already rewired away
                if rng.random() >= delta:
                    continue
                candidates = [k for k in range(n) if k != i and k not in adj[i]]
                if not candidates:
                    continue
                k = candidates[rng.integers(len(candidates))]
                adj[i].discard(j)
                adj[j].discard(i)
                _add_edge(adj, i, k)
    return ContactNetwork(base_days=[adj], n_initial=n, static=True)


_SF_MAX_RETRIES = 200


def gen_scale_free(n: int, alpha: float, seed) -> ContactNetwork:
    """Configuration-model graph with power-law degrees k^-alpha.

    Degrees are sampled from the normalized law on [1, n-1]; stubs are paired
    uniformly and pairings containing self-loops or duplicate edges are
    rejected and retried.  Only the degree-law property is guaranteed.
    """
    if alpha <= 1:
        raise GraphError(f"power-law exponent must exceed 1, got {alpha}")
    if n < 2:
        raise GraphError(f"need n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    ks = np.arange(1, n, dtype=np.float64)
    pmf = ks ** (-alpha)
    pmf /= pmf.sum()
    degrees = rng.choice(np.arange(1, n), size=n, p=pmf)
    if degrees.sum() % 2 == 1:
        bump = rng.integers(n)
        degrees[bump] = min(degrees[bump] + 1, n - 1)
        if degrees.sum() % 2 == 1:  # bumped node was already at the cap
            degrees[bump] -= 1
    stubs = list(np.repeat(np.arange(n), degrees))
    adj = _empty_adj(n)
    pool = stubs
    for attempt in range(_SF_MAX_RETRIES):
        order = rng.permutation(len(pool))
        shuffled = [pool[k] for k in order]
        rejected = []
        for a, b in zip(shuffled[0::2], shuffled[1::2]):
            u, v = int(a), int(b)
            if u == v or v in adj[u]:
                rejected.extend((u, v))
            else:
                _add_edge(adj, u, v)
        if len(rejected) <= 2 or len(rejected) == len(shuffled):
            # a lone conflicting pair (or a dead end) is dropped outright
            pool = []
            break
        pool = rejected
    if pool and len(pool) > max(2, 0.05 * len(stubs)):
        raise GraphError(
            f"configuration model left {len(pool)} unmatched stubs "
            f"after {_SF_MAX_RETRIES} pairing attempts"
        )
    return ContactNetwork(base_days=[adj], n_initial=n, static=True)


def gen_sbm(
    n: int,
    m: int,
    p1: float,
    p2: float,
    variant: str = "standard",
    seed=None,
) -> ContactNetwork:
    """Stochastic block model with m equal clusters of contiguous ids.

    ``standard`` makes every inter-cluster pair eligible at p2; ``chain``
    restricts eligibility to successive clusters (arranged in a cycle so the
    expected edge count matches the closed form of :func:`expected_edges`).
    """
    if m <= 0 or n % m != 0:
        raise GraphError(f"cluster count {m} must divide n={n}")
    if not (0 <= p1 <= 1 and 0 <= p2 <= 1):
        raise GraphError("connection probabilities must be in [0,1]")
    if variant not in ("standard", "chain"):
        raise GraphError(f"unknown SBM variant {variant!r}")
    rng = np.random.default_rng(seed)
    size = n // m
    cluster = np.arange(n) // size
    adj = _empty_adj(n)
    for u in range(n):
        for v in range(u + 1, n):
            cu, cv = cluster[u], cluster[v]
            if cu == cv:
                p = p1
            elif variant == "standard":
                p = p2
            else:
                dc = (cv - cu) % m
                p = p2 if dc in (1, m - 1) else 0.0
            if p > 0 and rng.random() < p:
                _add_edge(adj, u, v)
    return ContactNetwork(base_days=[adj], n_initial=n, static=True)


def expected_edges(n: int, m: int, p1: float, p2: float, variant: str = "standard") -> float:
    """Closed-form expected edge count of the block models."""
    if m <= 0 or n % m != 0:
        raise GraphError(f"cluster count {m} must divide n={n}")
    intra = (p1 / 2.0) * n * (n / m - 1.0)
    if variant == "standard":
        return intra + (p2 / 2.0) * (n * n / m) * (m - 1)
    if variant == "chain":
        return intra + p2 * (n * n / m)
    raise GraphError(f"unknown SBM variant {variant!r}")


def solve_intra_prob(target_edges: float, n: int, m: int, p2: float, variant: str = "standard") -> float:
    """Solve for p1 given a target expected edge count and p2."""
    inter = expected_edges(n, m, 0.0, p2, variant)
    denom = (n / 2.0) * (n / m - 1.0)
    p1 = (target_edges - inter) / denom
    if not (0.0 <= p1 <= 1.0):
        raise GraphError(
            f"target {target_edges} infeasible: solved p1={p1:.4f} outside [0,1]"
        )
    return p1


def load_temporal_edges(path, replicate_k: int = 1, compress_k: int = 1) -> ContactNetwork:
    """Load a day-stamped edge list (``day<TAB>u<TAB>v`` per line, ``#`` comments).

    ``replicate_k`` concatenates the day sequence k times; ``compress_k``
    unions each block of k consecutive days into one day.  The two options
    are mutually exclusive.  Node labels may be arbitrary strings and are
    mapped to dense integer ids (mapping kept in ``node_labels``).
    """
    if replicate_k > 1 and compress_k > 1:
        raise GraphError("replicate and compress are mutually exclusive")
    if replicate_k < 1 or compress_k < 1:
        raise GraphError("replicate/compress factors must be >= 1")
    rows = []
    labels: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise EdgeListParseError(
                    f"expected 3 tab-separated fields, got {len(parts)}", line_no
                )
            try:
                day = int(parts[0])
            except ValueError:
                raise EdgeListParseError(f"bad day {parts[0]!r}", line_no) from None
            if day < 0:
                raise EdgeListParseError(f"negative day {day}", line_no)
            u = labels.setdefault(parts[1], len(labels))
            v = labels.setdefault(parts[2], len(labels))
            if u == v:
                raise EdgeListParseError(f"self-loop on {parts[1]!r}", line_no)
            rows.append((day, u, v))
    if not rows:
        raise GraphError(f"no edges in {path}")
    n = len(labels)
    n_days = max(day for day, _, _ in rows) + 1
    days = [_empty_adj(n) for _ in range(n_days)]
    for day, u, v in rows:
        _add_edge(days[day], u, v)
    if replicate_k > 1:
        days = [
            {i: set(nbrs) for i, nbrs in day.items()}
            for _ in range(replicate_k)
            for day in days
        ]
    if compress_k > 1:
        merged = []
        for start in range(0, len(days), compress_k):
            block = _empty_adj(n)
            for day in days[start : start + compress_k]:
                for i, nbrs in day.items():
                    block[i] |= nbrs
            merged.append(block)
        days = merged
    label_list = [None] * n
    for name, idx in labels.items():
        label_list[idx] = name
    return ContactNetwork(
        base_days=days, n_initial=n, static=False, node_labels=label_list
    )


def neighbors(net: ContactNetwork, i: int, t: int) -> set[int]:
    return net.neighbors(i, t)


def closed_neighbors(net: ContactNetwork, i: int, t: int) -> set[int]:
    return net.closed_neighbors(i, t)


def remove_node(net: ContactNetwork, i: int, t: int) -> ContactNetwork:
    net.remove_node(i, t)
    return net


def _active_graph(net: ContactNetwork, t: int) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(net.active_nodes(t))
    g.add_edges_from(net.edges(t))
    return g


def topology_metrics(net: ContactNetwork, t: int = 0) -> TopologyMetrics:
    """Global transitivity, mean shortest path over connected pairs, components."""
    import scipy.sparse as sps
    import scipy.sparse.csgraph as csgraph

    active = net.active_nodes(t)
    edges = net.edges(t)
    if not edges:
        return TopologyMetrics(gamma_c=0.0, l_p=math.nan, n_components=len(active))
    gamma_c = nx.transitivity(_active_graph(net, t))
    pos = {node: k for k, node in enumerate(active)}
    rows, cols = [], []
    for u, v in edges:
        rows += [pos[u], pos[v]]
        cols += [pos[v], pos[u]]
    n = len(active)
    adj = sps.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n, n)
    )
    n_components, _ = csgraph.connected_components(adj, directed=False)
    dist = csgraph.shortest_path(adj, method="D", unweighted=True, directed=False)
    finite = np.isfinite(dist) & (dist > 0)
    l_p = float(dist[finite].mean()) if finite.any() else math.nan
    return TopologyMetrics(gamma_c=gamma_c, l_p=l_p, n_components=n_components)
