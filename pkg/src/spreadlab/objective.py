"""Expected new-infection objective, rewards, steepness, greedy minimization.

``S(D)`` is the expected number of nodes newly infected by members of D in
one day, computed from a belief snapshot.  It is supermodular and monotone
in D, which gives the greedy removal scheme a (1 + eps) approximation
factor with eps the instance steepness.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from spreadlab.graph import ContactNetwork
from spreadlab.spread import I, S as STATE_S


@dataclass
class BeliefSnapshot:
    """Normalized per-node vectors (true or estimated) used for scoring."""

    vectors: dict[int, np.ndarray]
    beta: float
    day: int = 0

    @property
    def nodes(self) -> list[int]:
        return sorted(self.vectors)


def _active_adj(snapshot: BeliefSnapshot, net: ContactNetwork) -> dict[int, list[int]]:
    keep = set(snapshot.vectors)
    return {
        i: sorted(net.neighbors(i, snapshot.day) & keep) for i in keep
    }


def expected_F(i: int, d_set, snapshot: BeliefSnapshot, net: ContactNetwork) -> float:
    """Expected probability that D infects node i (for the first time) today."""
    vecs = snapshot.vectors
    beta = snapshot.beta
    d_set = set(d_set)
    p_s = float(vecs[i][STATE_S])
    if p_s == 0.0:
        return 0.0
    shield = 1.0
    expose = 1.0
    for j in net.neighbors(i, snapshot.day):
        if j not in vecs:
            continue
        factor = 1.0 - beta * float(vecs[j][I])
        if j in d_set:
            expose *= factor
        else:
            shield *= factor
    return p_s * shield * (1.0 - expose)


def S(d_set, snapshot: BeliefSnapshot, net: ContactNetwork) -> float:
    """Expected count of nodes newly infected by D in one day."""
    return sum(expected_F(i, d_set, snapshot, net) for i in snapshot.nodes)


def reward(i: int, snapshot: BeliefSnapshot, net: ContactNetwork) -> float:
    """Reward of testing node i: the one-day infections it alone would cause."""
    return S({i}, snapshot, net)


def rewards_all(snapshot: BeliefSnapshot, net: ContactNetwork) -> dict[int, float]:
    """All singleton rewards in one pass using leave-one-out shield products.

    r_i = beta * p_I(i) * sum over neighbors j of p_S(j) * prod over j's
    other neighbors k of (1 - beta p_I(k)).  Products are recomputed
    leave-one-out (no division) so exact zeros survive beta = 1.
    """
    vecs = snapshot.vectors
    beta = snapshot.beta
    adj = _active_adj(snapshot, net)
    out = {i: 0.0 for i in vecs}
    for j, nbrs in adj.items():
        p_s = float(vecs[j][STATE_S])
        if p_s == 0.0 or not nbrs:
            continue
        factors = [1.0 - beta * float(vecs[k][I]) for k in nbrs]
        m = len(factors)
        prefix = [1.0] * (m + 1)
        for k in range(m):
            prefix[k + 1] = prefix[k] * factors[k]
        suffix = [1.0] * (m + 1)
        for k in range(m - 1, -1, -1):
            suffix[k] = suffix[k + 1] * factors[k]
        for k, i in enumerate(nbrs):
            out[i] += p_s * prefix[k] * suffix[k + 1] * beta * float(vecs[i][I])
    return out


def steepness_epsilon(snapshot: BeliefSnapshot, net: ContactNetwork) -> float:
    """Instance steepness controlling the greedy approximation factor.

    eps' maximizes [S(V) - S(V\\{a}) - S({a})] / [S(V) - S(V\\{a})] over nodes
    with a positive denominator; eps = eps' / (4 (1 - eps')).  Zero-denominator
    terms are skipped; if every term is skipped the function is effectively
    modular and eps = 0.  eps' = 1 has no finite factor and returns inf.
    """
    nodes = snapshot.nodes
    s_v = S(nodes, snapshot, net)
    best = None
    for a in nodes:
        rest = [b for b in nodes if b != a]
        s_rest = S(rest, snapshot, net)
        denom = s_v - s_rest
        if denom <= 0.0:
            continue
        ratio = (denom - S({a}, snapshot, net)) / denom
        if best is None or ratio > best:
            best = ratio
    if best is None:
        return 0.0
    if best >= 1.0:
        warnings.warn("steepness eps' = 1: approximation factor unbounded")
        return math.inf
    return best / (4.0 * (1.0 - best))


def greedy_select(snapshot: BeliefSnapshot, net: ContactNetwork, budget: int):
    """Greedy removal: repeatedly drop the node whose addition to the removed
    set grows S least, until budget-many nodes remain; returns the kept set.

    Ties break toward the lowest node id.  Complexity is O((N-B) * N) calls
    to S, each linear in the local edge count.
    """
    nodes = snapshot.nodes
    n = len(nodes)
    if not (0 <= budget <= n):
        raise ValueError(f"budget {budget} outside [0, {n}]")
    remaining = list(nodes)
    removed: list[int] = []
    for _ in range(n - budget):
        best_a = None
        best_val = None
        for a in remaining:
            val = S(set(removed) | {a}, snapshot, net)
            if best_val is None or val < best_val or (val == best_val and a < best_a):
                best_a, best_val = a, val
        removed.append(best_a)
        remaining.remove(best_a)
    return set(remaining)


_BRUTE_FORCE_LIMIT = 20


def brute_force_opt(snapshot: BeliefSnapshot, net: ContactNetwork, budget: int):
    """Exhaustive minimum of S(V \\ K) over |K| <= budget (oracle, N <= 20)."""
    nodes = snapshot.nodes
    n = len(nodes)
    if n > _BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {_BRUTE_FORCE_LIMIT} nodes, got {n}")
    best_set = set()
    best_val = S(nodes, snapshot, net)
    for size in range(1, budget + 1):
        for combo in itertools.combinations(nodes, size):
            kept = set(nodes) - set(combo)
            val = S(kept, snapshot, net)
            if val < best_val:
                best_val = val
                best_set = set(combo)
    return best_set, best_val
