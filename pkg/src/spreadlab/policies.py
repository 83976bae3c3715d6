"""Testing policies behind one selection interface, plus the budget rule.

Every policy returns a set of active node ids to test, at most the day's
budget for the deterministic policies.  All randomness flows through the
episode's generator carried in the context.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from spreadlab import objective
from spreadlab.graph import ContactNetwork
from spreadlab.spread import GroundTruthState, I, L, ModelParams


@dataclass
class BudgetRule:
    """Fixed budget k, or the realized count of active infectious nodes."""

    mode: str = "infected"  # "fixed" | "infected"
    k: int = 0

    def __post_init__(self):
        if self.mode not in ("fixed", "infected"):
            raise ValueError(f"unknown budget mode {self.mode!r}")


def budget(t: int, rule: BudgetRule, ground_truth: GroundTruthState) -> int:
    """Day-t testing budget.

    The infected mode stands in for the expected infectious count with the
    realized one, flooring at one test while any active (non-isolated)
    infection remains so the policy never goes fully blind mid-outbreak.
    """
    if rule.mode == "fixed":
        return rule.k
    active = ~ground_truth.isolated
    n_inf = int(((ground_truth.sigma == I) & active).sum())
    if n_inf > 0:
        return n_inf
    n_latent = int(((ground_truth.sigma == L) & active).sum())
    return 1 if n_latent > 0 else 0


@dataclass
class PolicyContext:
    """Inputs a policy may consult on one day."""

    day: int
    net: ContactNetwork
    params: ModelParams
    u: dict[int, np.ndarray]  # prior belief snapshot for today
    positive_ledger: dict[int, int]  # node -> day of first positive test
    quarantine_contacts: dict[int, int]  # node -> isolated contacts so far
    rng: np.random.Generator
    observation_log: list = field(default_factory=list)

    def active_nodes(self) -> list[int]:
        return sorted(self.u)

    def snapshot(self) -> objective.BeliefSnapshot:
        return objective.BeliefSnapshot(
            vectors=self.u, beta=self.params.beta, day=self.day
        )

    def rewards(self) -> dict[int, float]:
        return objective.rewards_all(self.snapshot(), self.net)


def rbex_select(ctx: PolicyContext, b: int) -> set[int]:
    """Exploitation: the highest-reward nodes, ties toward lower ids.

    Only nodes with strictly positive estimated reward are tested; budget
    beyond them stays unused, since a zero-reward test cannot lower the
    objective bound the policy maximizes.
    """
    if b <= 0:
        return set()
    rew = ctx.rewards()
    ranked = sorted(
        (i for i, r in rew.items() if r > 0.0), key=lambda i: (-rew[i], i)
    )
    return set(ranked[:b])


def reer_select(ctx: PolicyContext, b: int) -> set[int]:
    """Exploration-exploitation: include node i with probability
    min(1, B r_i / sum r), then spend the capped surplus on uniform extras."""
    if b <= 0:
        return set()
    active = ctx.active_nodes()
    rew = ctx.rewards()
    total = sum(rew.values())
    if total <= 0.0:
        return random_select(ctx, b)
    selected = set()
    surplus = 0.0
    for i in active:
        p = b * rew[i] / total
        if p > 1.0:
            surplus += p - 1.0
            p = 1.0
        if p > 0.0 and ctx.rng.random() < p:
            selected.add(i)
    extra = math.floor(surplus)
    if ctx.rng.random() < surplus - extra:
        extra += 1
    pool = [i for i in active if i not in selected]
    if extra > 0 and pool:
        take = min(extra, len(pool))
        picks = ctx.rng.choice(len(pool), size=take, replace=False)
        selected.update(pool[k] for k in picks)
    return selected


def greedy_policy_select(ctx: PolicyContext, b: int) -> set[int]:
    """Full greedy minimization of the day's expected new infections."""
    active = ctx.active_nodes()
    if b >= len(active):
        return set(active)
    return objective.greedy_select(ctx.snapshot(), ctx.net, b)


def random_select(ctx: PolicyContext, b: int) -> set[int]:
    """Uniform sample of b distinct active nodes (all of them if fewer)."""
    active = ctx.active_nodes()
    if b <= 0 or not active:
        return set()
    if b >= len(active):
        return set(active)
    picks = ctx.rng.choice(len(active), size=b, replace=False)
    return {active[k] for k in picks}


def _tracing_candidates(ctx: PolicyContext) -> list[int]:
    if ctx.params.gamma > 0.0:
        window = math.ceil(1.0 / ctx.params.gamma)
    else:
        window = None  # no recovery: every past positive keeps tracing
    active = set(ctx.u)
    candidates = set()
    for node, day in ctx.positive_ledger.items():
        if window is not None and ctx.day - day > window:
            continue
        last_contact_day = day - 1  # isolated on its test day
        if last_contact_day < 0:
            continue
        candidates |= {
            j
            for j in ctx.net._day_adj(min(last_contact_day, _last_day(ctx.net)))
            .get(node, set())
            if j in active
        }
    return sorted(candidates)


def _last_day(net: ContactNetwork) -> int:
    return 0 if net.static else len(net.base_days) - 1


def contact_tracing_select(ctx: PolicyContext, b: int) -> set[int]:
    """Test random active neighbors of recently detected positives."""
    candidates = _tracing_candidates(ctx)
    if b <= 0 or not candidates:
        return set()
    if b >= len(candidates):
        return set(candidates)
    picks = ctx.rng.choice(len(candidates), size=b, replace=False)
    return {candidates[k] for k in picks}


def acf_select(ctx: PolicyContext, b: int, explore_share: float = 0.05) -> set[int]:
    """Contact tracing with a small active-case-finding share tested randomly."""
    if b <= 0:
        return set()
    n_random = math.ceil(explore_share * b)
    traced = contact_tracing_select(ctx, b - n_random)
    selected = set(traced)
    pool = [i for i in ctx.active_nodes() if i not in selected]
    want = min(b - len(selected), len(pool))
    if want > 0:
        picks = ctx.rng.choice(len(pool), size=want, replace=False)
        selected.update(pool[k] for k in picks)
    return selected


@dataclass
class LogisticModel:
    """Two-weight logistic scorer trained only on tested nodes' outcomes."""

    weights: np.ndarray = field(default_factory=lambda: np.zeros(2))
    feature_offset: float = 0.1
    buffer_x: list = field(default_factory=list)
    buffer_y: list = field(default_factory=list)
    steps: int = 100
    step_size: float = 0.1

    def feature(self, n_contacts: int) -> np.ndarray:
        return np.array([1.0, n_contacts + self.feature_offset])

    def score(self, x: np.ndarray) -> float:
        return 1.0 / (1.0 + math.exp(-float(x @ self.weights)))

    def record(self, x: np.ndarray, y: int) -> None:
        self.buffer_x.append(x)
        self.buffer_y.append(y)

    def refit(self) -> None:
        """Gradient ascent on the log-likelihood from a zero init.

        A single-class buffer is degenerate (the MLE diverges); previous
        weights are kept in that case.
        """
        if not self.buffer_y:
            return
        ys = np.array(self.buffer_y, dtype=float)
        if ys.min() == ys.max():
            return
        xs = np.vstack(self.buffer_x)
        w = np.zeros(2)
        for _ in range(self.steps):
            p = 1.0 / (1.0 + np.exp(-(xs @ w)))
            grad = xs.T @ (ys - p) / len(ys)
            w = w + self.step_size * grad
        self.weights = w


def logistic_select(ctx: PolicyContext, b: int, model: LogisticModel) -> set[int]:
    """Rank active nodes by sigmoid score of their quarantine-contact feature."""
    if b <= 0:
        return set()
    active = ctx.active_nodes()
    scored = sorted(
        active,
        key=lambda i: (
            -model.score(model.feature(ctx.quarantine_contacts.get(i, 0))),
            i,
        ),
    )
    return set(scored[:b])


def exploit_random_select(ctx: PolicyContext, b: int, n_random: int = 1) -> set[int]:
    """Exploitation for b - n_random tests plus n_random uniform probes."""
    selected = rbex_select(ctx, max(b - n_random, 0))
    pool = [i for i in ctx.active_nodes() if i not in selected]
    want = min(n_random, b - len(selected), len(pool))
    if want > 0:
        picks = ctx.rng.choice(len(pool), size=want, replace=False)
        selected.update(pool[k] for k in picks)
    return selected


def round_robin_select(ctx: PolicyContext, b: int) -> set[int]:
    """Cycle through node ids in order, b per day, skipping removed nodes."""
    active = ctx.active_nodes()
    if not active or b <= 0:
        return set()
    n = ctx.net.n_initial
    out = []
    start = ((ctx.day - 1) * b) % n
    k = 0
    while len(out) < min(b, len(active)) and k < n:
        cand = (start + k) % n
        if cand in ctx.u:
            out.append(cand)
        k += 1
    return set(out)


class Policy:
    """Named policy with optional per-episode state."""

    def __init__(self, name: str, select_fn, model: LogisticModel | None = None):
        self.name = name
        self._select = select_fn
        self.model = model

    def select(self, ctx: PolicyContext, b: int) -> set[int]:
        return self._select(ctx, b)

    def observe(self, ctx: PolicyContext, observations) -> None:
        """Post-test hook; the logistic policy trains here."""
        if self.model is None:
            return
        for obs in observations:
            x = self.model.feature(ctx.quarantine_contacts.get(obs.node, 0))
            self.model.record(x, obs.result)
        self.model.refit()


def make_policy(name: str, **kwargs) -> Policy:
    """Instantiate a policy by its config name."""
    name = name.lower()
    if name == "none":
        return Policy(name, lambda ctx, b: set())
    if name == "rbex":
        return Policy(name, rbex_select)
    if name == "reer":
        return Policy(name, reer_select)
    if name == "greedy":
        return Policy(name, greedy_policy_select)
    if name == "random":
        return Policy(name, random_select)
    if name == "tracing":
        return Policy(name, contact_tracing_select)
    if name == "acf":
        share = float(kwargs.get("explore_share", 0.05))
        return Policy(name, lambda ctx, b: acf_select(ctx, b, explore_share=share))
    if name == "logistic":
        model = LogisticModel()
        return Policy(name, lambda ctx, b: logistic_select(ctx, b, model), model=model)
    if name == "rbex-random":
        k = int(kwargs.get("n_random", 1))
        return Policy(name, lambda ctx, b: exploit_random_select(ctx, b, n_random=k))
    if name == "roundrobin":
        return Policy(name, round_robin_select)
    raise ValueError(f"unknown policy {name!r}")
