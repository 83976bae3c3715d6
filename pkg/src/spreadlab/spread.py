"""Ground-truth stochastic S/L/I/R process, testing oracle, isolation.

Per-day ordering is: state transition -> testing -> isolation -> belief
update.  Tests read the post-transition state of the same day.  Isolated
nodes are removed from the network but their disease state keeps
progressing internally (L -> I -> R) with no network effect.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from spreadlab.graph import ContactNetwork

# State codes, matching the (I, L, R, S) coordinate order of belief vectors.
I, L, R, S = 0, 1, 2, 3
STATE_NAMES = ("I", "L", "R", "S")


class SpreadError(ValueError):
    pass


@dataclass
class ModelParams:
    """Disease parameters.

    ``latent_enabled=False`` reproduces the lambda=0 convention of the line
    examples: S transitions directly to I with no latent stage.
    """

    beta: float
    lam: float
    gamma: float
    latent_enabled: bool = True

    def __post_init__(self):
        for name in ("beta", "lam", "gamma"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise SpreadError(f"{name} must be a probability, got {v}")
        if self.latent_enabled and self.lam == 0.0:
            warnings.warn(
                "lam=0 with latent_enabled=True means infected nodes never "
                "become infectious; use latent_enabled=False to skip the "
                "latent stage",
                stacklevel=2,
            )


@dataclass
class Observation:
    node: int
    day: int
    result: int  # 1 iff the node was in state I at test time


@dataclass
class GroundTruthState:
    """Realized per-node states plus the cumulative-infection ledger."""

    sigma: np.ndarray  # int8 state codes
    ever_infected: np.ndarray  # bool
    isolated: np.ndarray  # bool
    day: int = 0
    initial_seeds: list[int] = field(default_factory=list)

    def copy(self) -> "GroundTruthState":
        return GroundTruthState(
            sigma=self.sigma.copy(),
            ever_infected=self.ever_infected.copy(),
            isolated=self.isolated.copy(),
            day=self.day,
            initial_seeds=list(self.initial_seeds),
        )


def init_state(net: ContactNetwork, n0: int, rng: np.random.Generator) -> GroundTruthState:
    """Start with n0 distinct uniformly random infectious seeds, all else S."""
    n = net.n_initial
    if n0 > n:
        raise SpreadError(f"n0={n0} exceeds network size {n}")
    sigma = np.full(n, S, dtype=np.int8)
    ever = np.zeros(n, dtype=bool)
    seeds = sorted(int(i) for i in rng.choice(n, size=n0, replace=False)) if n0 else []
    for i in seeds:
        sigma[i] = I
        ever[i] = True
    return GroundTruthState(
        sigma=sigma,
        ever_infected=ever,
        isolated=np.zeros(n, dtype=bool),
        day=0,
        initial_seeds=seeds,
    )


def step(
    state: GroundTruthState,
    net: ContactNetwork,
    params: ModelParams,
    rng: np.random.Generator,
) -> GroundTruthState:
    """Synchronous one-day update using day-t states of non-isolated nodes.

    Each S node is infected with probability 1 - (1-beta)^m where m counts
    its infectious active neighbors at the current day; L -> I with
    probability lam; I -> R with probability gamma.  One uniform draw per
    node per day keeps replications aligned under common random numbers.
    """
    n = net.n_initial
    t = state.day
    sigma = state.sigma
    us = rng.random(n)

    m = np.zeros(n, dtype=np.int64)
    for i in range(n):
        if sigma[i] == I and not state.isolated[i]:
            for j in net.neighbors(i, t):
                m[j] += 1

    new_sigma = sigma.copy()
    for i in range(n):
        s = sigma[i]
        if s == S:
            if m[i] > 0 and not state.isolated[i]:
                p = 1.0 - (1.0 - params.beta) ** int(m[i])
                if us[i] < p:
                    new_sigma[i] = L if params.latent_enabled else I
                    state.ever_infected[i] = True
        elif s == L:
            if us[i] < params.lam:
                new_sigma[i] = I
        elif s == I:
            if us[i] < params.gamma:
                new_sigma[i] = R
    state.sigma = new_sigma
    state.day = t + 1
    return state


def test(state: GroundTruthState, nodes) -> list[Observation]:
    """Noiseless tests: Y=1 iff the node is in state I right now.

    Latent, susceptible, and recovered nodes test negative.  Testing an
    isolated (removed) node is a policy bug and is rejected.
    """
    out = []
    for i in sorted(nodes):
        if state.isolated[i]:
            raise SpreadError(f"node {i} is isolated and cannot be tested")
        out.append(Observation(node=i, day=state.day, result=int(state.sigma[i] == I)))
    return out


def isolate_positives(
    net: ContactNetwork, state: GroundTruthState, observations
) -> list[int]:
    """Mark every positive node isolated and remove it from the network now."""
    isolated = []
    for obs in observations:
        if obs.result == 1:
            state.isolated[obs.node] = True
            net.remove_node(obs.node, state.day)
            isolated.append(obs.node)
    return isolated


def run_unregulated(
    state: GroundTruthState,
    net: ContactNetwork,
    params: ModelParams,
    ell: int,
    rng: np.random.Generator,
) -> GroundTruthState:
    """Let the spread evolve for ell days with no testing or intervention."""
    if ell < 0:
        raise SpreadError(f"unregulated delay must be >= 0, got {ell}")
    for _ in range(ell):
        step(state, net, params, rng)
    return state


def reveal_seed(state: GroundTruthState, rng: np.random.Generator) -> int:
    """Uniform choice among initial seeds still infectious; any seed if none are."""
    if not state.initial_seeds:
        raise SpreadError("no initial seeds to reveal")
    still = [i for i in state.initial_seeds if state.sigma[i] == I]
    pool = still if still else state.initial_seeds
    return int(pool[rng.integers(len(pool))])


def cumulative_infections(state: GroundTruthState) -> int:
    """Nodes infected before and including the current day (isolated included)."""
    return int(state.ever_infected.sum())
