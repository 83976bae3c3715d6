"""Backward-forward belief engine over test observations.

Per node the engine tracks a prior ``u`` (start of day), posterior ``w``
(end of day), and corrected posterior ``e`` (previous day, revised by the
current day's observations).  Vectors are length-4 in coordinate order
(I, L, R, S) and renormalized after every update.

The backward step is truncated at one day: conditioned on the previous
day's posteriors being independent across nodes, the likelihood of the
day's observations given a node's previous state factorizes over the
tested closed neighborhood.  The implementation integrates out neighbor
variables that appear in a single tested node's kernel in closed form
(the transition row is linear in the infection pressure), enumerating
jointly only tested members and shared neighbors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from spreadlab.graph import ContactNetwork
from spreadlab.spread import I, L, R, S, ModelParams, Observation

EPS_CLAMP = 1e-15

# Enumeration guards for one node's backward update.  Exceeding any of them
# means the exact sum is too wide and the caller should thin edges first
# (alpha-linking).  PSI/PHI caps follow the documented defaults; the
# assignment cap additionally bounds the joint enumeration actually
# performed after the closed-form reductions.
PSI_CAP = 12
PHI_CAP = 20
ASSIGN_CAP = 4096


class EnumerationCapError(RuntimeError):
    """Backward enumeration for a node is too wide; apply alpha-linking."""

    def __init__(self, node, detail):
        super().__init__(f"node {node}: {detail}")
        self.node = node


class InconsistentEvidenceError(RuntimeError):
    """Observation likelihood times prior vanished for every state."""


def normalize(vec: np.ndarray) -> np.ndarray:
    """Clamp tiny entries to zero and rescale to sum 1."""
    v = np.where(vec < EPS_CLAMP, 0.0, vec)
    s = v.sum()
    if s <= 0.0:
        raise InconsistentEvidenceError("cannot normalize all-zero vector")
    return v / s


def xi(neighbor_p_i, beta: float) -> float:
    """Infection pressure 1 - prod(1 - beta * p_I) over neighbors; 0 if none."""
    prod = 1.0
    for p in neighbor_p_i:
        prod *= 1.0 - beta * p
    return 1.0 - prod


def local_transition(xi_val: float, params: ModelParams) -> np.ndarray:
    """One-day transition matrix, rows and columns ordered (I, L, R, S).

    The S row routes new infections to L, or directly to I when the latent
    stage is disabled.
    """
    g, lam = params.gamma, params.lam
    m = np.zeros((4, 4))
    m[I, I] = 1.0 - g
    m[I, R] = g
    m[L, I] = lam
    m[L, L] = 1.0 - lam
    m[R, R] = 1.0
    if params.latent_enabled:
        m[S, L] = xi_val
    else:
        m[S, I] = xi_val
    m[S, S] = 1.0 - xi_val
    return m


_Q1 = np.array([1.0, 0.0, 0.0, 0.0])
_Q2 = np.array([0.0, 1.0, 0.0, 0.0])
_Q3 = np.array([0.0, 0.0, 1.0, 0.0])


def modified_transition(matrix: np.ndarray, observation: int | None) -> np.ndarray:
    """Replace the I/L rows of a transition matrix according to an observation.

    No observation leaves the matrix unchanged; a negative result sends the
    I row to R (it must have recovered) and pins the L row on L; a positive
    result pins both on I.
    """
    if observation is None:
        return matrix
    out = matrix.copy()
    if observation == 0:
        out[I] = _Q3
        out[L] = _Q2
    elif observation == 1:
        out[I] = _Q1
        out[L] = _Q1
    else:
        raise ValueError(f"observation must be None, 0, or 1, got {observation!r}")
    return out


def collapse_vector(vec: np.ndarray, observation: int | None) -> np.ndarray:
    """Apply the observation's row collapse to a state distribution.

    Equivalent to ``vec @ modified_transition(identity, observation)``.  The
    posterior step composes this collapse with the day's dynamics, so a
    positively tested node can still recover by the end of the day.
    """
    if observation is None:
        return vec
    out = vec.copy()
    if observation == 0:
        out[R] += out[I]
        out[I] = 0.0
    else:
        out[I] += out[L]
        out[L] = 0.0
    return out


@dataclass
class ObservationSets:
    """Tested closed neighborhood and its induced evidence sets for one node."""

    psi: set[int]
    phi: set[int]
    theta: set[int]


def observation_sets(
    i: int, t: int, tested_set, net_or_adj, prev_day: int | None = None
) -> ObservationSets:
    """Evidence sets of node i for day-t observations, on day t-1 adjacency.

    ``net_or_adj`` may be a ContactNetwork (adjacency read at ``prev_day``,
    default t-1) or a prebuilt adjacency dict (e.g. an alpha-thinned one).
    """
    if isinstance(net_or_adj, ContactNetwork):
        day = t - 1 if prev_day is None else prev_day
        closed = lambda k: net_or_adj.closed_neighbors(k, day)  # noqa: E731
        all_nodes = set(net_or_adj.active_nodes(day))
    else:
        adj = net_or_adj
        closed = lambda k: adj.get(k, set()) | {k}  # noqa: E731
        all_nodes = set(adj)
    tested = set(tested_set) & all_nodes
    psi = tested & closed(i)
    phi = set()
    for k in psi:
        phi |= closed(k)
    phi.discard(i)
    theta = set()
    for k in tested:
        theta |= closed(k)
    theta.discard(i)
    return ObservationSets(psi=psi, phi=phi, theta=theta)


def _row_sum(own_state: int, xi_val: float, params: ModelParams, result: int) -> float:
    """Probability that a node with the given previous state produces test
    result ``result`` today, at infection pressure ``xi_val``.

    Linear in ``xi_val``, which lets callers plug in its expectation over
    independently distributed neighbors.
    """
    if own_state == I:
        return 1.0 - params.gamma if result == 1 else params.gamma
    if own_state == L:
        return params.lam if result == 1 else 1.0 - params.lam
    if own_state == R:
        return 0.0 if result == 1 else 1.0
    # own_state == S
    if params.latent_enabled:
        return 0.0 if result == 1 else 1.0
    return xi_val if result == 1 else 1.0 - xi_val


def likelihood_vector(
    i: int,
    obs_by_node: dict[int, int],
    w_prev: dict[int, np.ndarray],
    adj_prev: dict[int, set[int]],
    params: ModelParams,
) -> np.ndarray:
    """Pr(day-t observations in Psi_i | node i's previous state), all 4 states.

    Enumerates jointly only the tested members of Psi_i (full 4-state
    alphabet: their own transition rows depend on it) and neighbors shared
    between several tested kernels; every other neighbor is reduced to the
    {infectious, not-infectious} alphabet and integrated out in closed form.
    """
    beta = params.beta
    closed_i = adj_prev.get(i, set()) | {i}
    psi = sorted(k for k in obs_by_node if k in closed_i)
    if not psi:
        return np.ones(4)
    if len(psi) > PSI_CAP:
        raise EnumerationCapError(i, f"|Psi|={len(psi)} exceeds cap {PSI_CAP}")

    # Parents of each tested kernel, excluding node i (conditioned on).
    parents = {j: (adj_prev.get(j, set()) | {j}) - {i} for j in psi}
    phi = set().union(*parents.values())
    if len(phi) > PHI_CAP:
        raise EnumerationCapError(i, f"|Phi|={len(phi)} exceeds cap {PHI_CAP}")

    tested_members = [j for j in psi if j != i]
    appear = {}
    for j in psi:
        for l in parents[j]:
            appear[l] = appear.get(l, 0) + 1
    shared = [l for l, cnt in appear.items() if cnt >= 2 and l not in psi]
    q_nodes = sorted(set(tested_members) | set(shared))
    q_index = {l: k for k, l in enumerate(q_nodes)}
    psi_set = set(psi)

    # Per-kernel structure: which parents are enumerated, which integrate out.
    kernel = []
    for j in psi:
        q_parents = [q_index[l] for l in parents[j] if l in q_index]
        private = [l for l in parents[j] if l not in q_index and l != j]
        priv_prod = 1.0
        for l in private:
            priv_prod *= 1.0 - beta * float(w_prev[l][I])
        has_i = i in adj_prev.get(j, set())
        kernel.append((j, q_parents, priv_prod, has_i))

    # Candidate states per enumerated node: drop zero-probability ones.
    domains = []
    for l in q_nodes:
        if l in psi_set:  # tested member: full alphabet, its own row matters
            wl = w_prev[l]
            dom = [(x, float(wl[x])) for x in range(4) if wl[x] > 0.0]
        else:  # acts only as a neighbor: infectious or not
            p_i = float(w_prev[l][I])
            dom = []
            if p_i > 0.0:
                dom.append((I, p_i))
            if p_i < 1.0:
                dom.append((S, 1.0 - p_i))  # stand-in for the non-I lump
        if not dom:
            return np.zeros(4)
        domains.append(dom)

    width = 1
    for dom in domains:
        width *= len(dom)
    if width > ASSIGN_CAP:
        raise EnumerationCapError(i, f"{width} joint assignments exceed cap {ASSIGN_CAP}")

    one_minus_beta = 1.0 - beta
    out = np.zeros(4)
    xs = (I, S) if i not in obs_by_node else (I, L, R, S)
    for assign in itertools.product(*domains) if domains else [()]:
        weight = 1.0
        for _, p in assign:
            weight *= p
        states = [a[0] for a in assign]
        for x in xs:
            total = weight
            for j, q_parents, priv_prod, has_i in kernel:
                own = x if j == i else states[q_index[j]]
                eff = priv_prod
                for qp in q_parents:
                    if states[qp] == I:
                        eff *= one_minus_beta
                if has_i and x == I:
                    eff *= one_minus_beta
                total *= _row_sum(own, 1.0 - eff, params, obs_by_node[j])
                if total == 0.0:
                    break
            out[x] += total
    if i not in obs_by_node:
        # x only enters through "is node i infectious"; non-I states coincide.
        out[L] = out[S]
        out[R] = out[S]
    return out


def likelihood(
    i: int,
    x: int,
    observations,
    beliefs_w_prev,
    net: ContactNetwork,
    params: ModelParams,
) -> float:
    """Pr(observed results in Psi_i at day t | node i was in state x at t-1)."""
    obs_by_node, t = _obs_map(observations)
    adj_prev = _active_adjacency(net, t - 1, beliefs_w_prev.keys())
    return float(likelihood_vector(i, obs_by_node, beliefs_w_prev, adj_prev, params)[x])


def _obs_map(observations) -> tuple[dict[int, int], int]:
    obs_by_node = {}
    day = None
    for obs in observations:
        obs_by_node[obs.node] = obs.result
        if day is None:
            day = obs.day
        elif obs.day != day:
            raise ValueError("observations must all share one day")
    return obs_by_node, day if day is not None else -1


def _active_adjacency(net: ContactNetwork, day: int, nodes) -> dict[int, set[int]]:
    keep = set(nodes)
    return {i: net.neighbors(i, day) & keep for i in keep}


def _thin_adjacency(
    adj: dict[int, set[int]], alpha: float, rng: np.random.Generator
) -> dict[int, set[int]]:
    if alpha >= 1.0:
        return adj
    thinned: dict[int, set[int]] = {i: set() for i in adj}
    for i in sorted(adj):
        for j in sorted(adj[i]):
            if i < j and rng.random() < alpha:
                thinned[i].add(j)
                thinned[j].add(i)
    return thinned


def alpha_subgraph(
    net: ContactNetwork, t: int, alpha: float, rng: np.random.Generator
) -> dict[int, set[int]]:
    """Day-(t-1) active adjacency with each edge kept independently w.p. alpha.

    Used by the backward step only; forward propagation always sees the full
    graph.  alpha=1 reproduces the original adjacency, alpha=0 drops every
    edge (each node's evidence set shrinks to its own observation).
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must be in [0,1], got {alpha}")
    adj = _active_adjacency(net, t - 1, net.active_nodes(t - 1))
    return _thin_adjacency(adj, alpha, rng)


def backward_update(
    beliefs_w_prev: dict[int, np.ndarray],
    observations,
    net: ContactNetwork,
    params: ModelParams,
    alpha: float = 1.0,
    rng: np.random.Generator | None = None,
    on_conflict: str = "error",
    counters: dict | None = None,
) -> dict[int, np.ndarray]:
    """Corrected posteriors e(t-1) from day-t observations.

    ``on_conflict`` controls the all-zero posterior case: ``error`` raises
    (the spec's contract for a model bug), ``evidence`` renormalizes the
    likelihood alone, overriding a degenerate prior that ruled out what a
    test proved; if even the likelihood vanishes the prior is kept.
    """
    obs_by_node, t = _obs_map(observations)
    adj_full = _active_adjacency(net, t - 1, beliefs_w_prev.keys())
    if alpha < 1.0:
        if rng is None:
            raise ValueError("alpha-linking requires an rng")
        adj_bw = _thin_adjacency(adj_full, alpha, rng)
    else:
        adj_bw = adj_full
    e: dict[int, np.ndarray] = {}
    for i in beliefs_w_prev:
        if params.latent_enabled:
            # Fresh infections land in L and test negative, so a one-day-back
            # observation is constant in every other node's state: only the
            # tested node's own row reweights, and neighbor kernels cancel
            # in the normalization.
            y = obs_by_node.get(i)
            if y is None:
                e[i] = beliefs_w_prev[i].copy()
                continue
            lvec = _own_likelihood(y, params)
        else:
            adj_i = adj_bw
            while True:
                try:
                    lvec = likelihood_vector(i, obs_by_node, beliefs_w_prev, adj_i, params)
                    break
                except EnumerationCapError:
                    if rng is None:
                        raise
                    if counters is not None:
                        counters["cap_events"] = counters.get("cap_events", 0) + 1
                    adj_i = _thin_node(adj_i, i, rng)
        unnorm = lvec * beliefs_w_prev[i]
        if unnorm.max() <= 0.0:
            if on_conflict == "error":
                raise InconsistentEvidenceError(
                    f"node {i}, day {t}: evidence contradicts the prior"
                )
            if counters is not None:
                counters["conflict_events"] = counters.get("conflict_events", 0) + 1
            unnorm = lvec if lvec.max() > 0.0 else beliefs_w_prev[i]
        e[i] = normalize(unnorm)
    return e


def _own_likelihood(y: int, params: ModelParams) -> np.ndarray:
    """Per-state probability of a node's own test result under latency."""
    return np.array([_row_sum(x, 0.0, params, y) for x in (I, L, R, S)])


def _thin_node(adj: dict[int, set[int]], i: int, rng: np.random.Generator, keep=0.7):
    """Drop a random fraction of edges in node i's backward neighborhood."""
    local = adj.get(i, set()) | {i}
    region = set(local)
    for j in local:
        region |= adj.get(j, set())
    edges = sorted(
        (min(u, v), max(u, v)) for u in region for v in adj.get(u, ())
    )
    thinned = {k: set(v) for k, v in adj.items()}
    for u, v in edges:
        if v in thinned[u] and rng.random() >= keep:
            thinned[u].discard(v)
            thinned[v].discard(u)
    return thinned


def posterior_from_e(
    e_prev: dict[int, np.ndarray],
    observations,
    net: ContactNetwork,
    params: ModelParams,
    active_now=None,
) -> dict[int, np.ndarray]:
    """Posteriors w(t) from corrected e(t-1) with observation-modified rows.

    A tested node's distribution is first collapsed onto the observed state
    (positive: I plus any latent mass; negative: infectious mass must have
    recovered) and then pushed through the day's dynamics, so a positive
    node may still recover by the end of the day.
    """
    obs_by_node, t = _obs_map(observations)
    nodes = list(e_prev) if active_now is None else list(active_now)
    adj_prev = _active_adjacency(net, t - 1, e_prev.keys())
    w: dict[int, np.ndarray] = {}
    for i in nodes:
        xv = xi((float(e_prev[j][I]) for j in adj_prev[i]), params.beta)
        p = local_transition(xv, params)
        row = collapse_vector(e_prev[i], obs_by_node.get(i))
        w[i] = normalize(row @ p)
    return w


def forward_update(
    beliefs_w: dict[int, np.ndarray],
    net: ContactNetwork,
    params: ModelParams,
    t: int,
) -> dict[int, np.ndarray]:
    """Priors u(t+1) from posteriors w(t) on the day-t active graph."""
    adj = _active_adjacency(net, t, beliefs_w.keys())
    u: dict[int, np.ndarray] = {}
    for i in beliefs_w:
        xv = xi((float(beliefs_w[j][I]) for j in adj[i]), params.beta)
        u[i] = normalize(beliefs_w[i] @ local_transition(xv, params))
    return u


@dataclass
class BeliefState:
    """Belief vectors complete through ``day``: w(day) and u(day+1).

    ``e`` holds the last backward correction, e(day-1).  Vectors exist for
    exactly the active (non-removed) nodes; the truncation window g is
    fixed at one day.
    """

    day: int
    w: dict[int, np.ndarray]
    u: dict[int, np.ndarray]
    e: dict[int, np.ndarray] = field(default_factory=dict)
    observation_log: list[Observation] = field(default_factory=list)
    g: int = 1
    conflict_events: int = 0
    cap_events: int = 0

    @property
    def active(self) -> list[int]:
        return sorted(self.w)

    @classmethod
    def from_posteriors(
        cls, w: dict[int, np.ndarray], net: ContactNetwork, params: ModelParams, day: int
    ) -> "BeliefState":
        w = {i: normalize(np.asarray(v, dtype=float)) for i, v in w.items()}
        return cls(day=day, w=w, u=forward_update(w, net, params, day))

    @classmethod
    def reveal(
        cls, net: ContactNetwork, params: ModelParams, day: int, revealed: int
    ) -> "BeliefState":
        """All-susceptible start except a revealed certainly-infectious node."""
        w = {}
        for i in net.active_nodes(day):
            vec = np.array([0.0, 0.0, 0.0, 1.0])
            if i == revealed:
                vec = np.array([1.0, 0.0, 0.0, 0.0])
            w[i] = vec
        return cls.from_posteriors(w, net, params, day)

    def u_at(self, i: int) -> np.ndarray:
        return self.u[i]


def bf_step(
    beliefs: BeliefState,
    observations,
    net: ContactNetwork,
    params: ModelParams,
    alpha: float = 1.0,
    rng: np.random.Generator | None = None,
    on_conflict: str = "error",
) -> BeliefState:
    """Advance beliefs one day with the backward-forward update.

    Expects day-(beliefs.day + 1) observations, taken after testing and
    isolation: nodes isolated today still receive a corrected e(t-1) (their
    neighbors' posterior step needs it) and are then pruned.
    """
    t = beliefs.day + 1
    for obs in observations:
        if obs.day != t:
            raise ValueError(f"expected day-{t} observations, got day {obs.day}")
    counters: dict = {}
    e = backward_update(
        beliefs.w, observations, net, params,
        alpha=alpha, rng=rng, on_conflict=on_conflict, counters=counters,
    )
    survivors = [i for i in e if net.is_active(i, t)]
    w = posterior_from_e(e, observations, net, params, active_now=survivors)
    u = forward_update(w, net, params, t)
    beliefs.day = t
    beliefs.e = e
    beliefs.w = w
    beliefs.u = u
    beliefs.observation_log.extend(observations)
    beliefs.conflict_events += counters.get("conflict_events", 0)
    beliefs.cap_events += counters.get("cap_events", 0)
    return beliefs


def naive_forward_step(
    beliefs: BeliefState,
    observations,
    net: ContactNetwork,
    params: ModelParams,
) -> BeliefState:
    """Forward-only update: fold each observation into the tested node's own
    posterior and propagate, with no backward correction of the past."""
    t = beliefs.day + 1
    obs_by_node, _ = _obs_map(observations)
    w: dict[int, np.ndarray] = {}
    for i, vec in beliefs.u.items():
        if not net.is_active(i, t):
            continue
        y = obs_by_node.get(i)
        if y is None:
            w[i] = vec.copy()
        elif y == 1:
            w[i] = np.array([1.0, 0.0, 0.0, 0.0])
        else:
            masked = vec.copy()
            masked[I] = 0.0
            if masked.max() <= 0.0:
                raise InconsistentEvidenceError(
                    f"node {i}, day {t}: negative test with all mass on I"
                )
            w[i] = normalize(masked)
    beliefs.day = t
    beliefs.e = {}
    beliefs.w = w
    beliefs.u = forward_update(w, net, params, t)
    beliefs.observation_log.extend(observations)
    return beliefs
