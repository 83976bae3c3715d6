"""Episode runner, truth oracle, metrics, and seeded replications.

One episode: build the network, seed the infection, let it run unregulated
for ell days, reveal one seed to initialize beliefs, then each day
transition -> budget -> select -> test -> isolate -> belief update, with
every quantity recorded per day.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np

from spreadlab import belief as bel
from spreadlab import graph as gr
from spreadlab import spread as sp
from spreadlab.config import ExperimentConfig, build_network
from spreadlab.policies import BudgetRule, PolicyContext, budget, make_policy


@dataclass
class DayRow:
    day: int
    budget: int
    selected: list[int]
    positives: list[int]
    cum_infections: int
    err: float | None
    active: int


@dataclass
class RunRecord:
    """One episode's trajectory plus provenance header fields."""

    config_hash: str
    seed: int
    policy: str
    gamma_c: float
    l_p: float
    rows: list[DayRow] = field(default_factory=list)
    wall_time: float = 0.0
    conflict_events: int = 0
    cap_events: int = 0
    sigma_by_day: np.ndarray | None = None
    beliefs_by_day: dict | None = None
    initial_seeds: list[int] = field(default_factory=list)

    def final_c(self) -> int:
        return self.rows[-1].cum_infections

    def final_err(self) -> float | None:
        return self.rows[-1].err


@dataclass
class TruthEstimate:
    """Per-day, per-node state distributions of the realized process."""

    mode: str
    vectors_by_day: list[dict[int, np.ndarray]]


def one_hot_truth(sigma: np.ndarray, nodes) -> dict[int, np.ndarray]:
    out = {}
    for i in nodes:
        v = np.zeros(4)
        v[int(sigma[i])] = 1.0
        out[i] = v
    return out


def estimation_error(beliefs_u: dict[int, np.ndarray], truth: dict[int, np.ndarray]) -> float:
    """Mean squared L2 distance between estimated and true state vectors."""
    if not beliefs_u:
        return 0.0
    total = 0.0
    for i, u_vec in beliefs_u.items():
        diff = truth[i] - u_vec
        total += float(diff @ diff)
    return total / len(beliefs_u)


def _budget_rule(cfg: ExperimentConfig) -> BudgetRule:
    return BudgetRule(mode=cfg.budget_mode, k=cfg.budget_k)


def run_episode(cfg: ExperimentConfig, seed: int, base_net: gr.ContactNetwork | None = None) -> RunRecord:
    """Run one seeded episode of the configured experiment."""
    cfg.validate()
    t_start = time.perf_counter()
    ss = np.random.SeedSequence(seed)
    net_rng, init_rng, dyn_rng, pol_rng, bel_rng = (
        np.random.default_rng(s) for s in ss.spawn(5)
    )
    net = (base_net or build_network(cfg.network, net_rng)).clone()
    params = cfg.model_params()
    rule = _budget_rule(cfg)
    policy = make_policy(cfg.policy, **cfg.policy_params)
    metrics = gr.topology_metrics(net, 0)

    state = sp.init_state(net, cfg.n0, init_rng)
    n = net.n_initial
    horizon = cfg.horizon
    sigma_by_day = np.empty((horizon, n), dtype=np.int8)
    beliefs_by_day = {} if cfg.dump_beliefs else None

    beliefs = None
    positive_ledger: dict[int, int] = {}
    quarantine_contacts: dict[int, int] = {}
    record = RunRecord(
        config_hash=cfg.config_hash(),
        seed=seed,
        policy=cfg.policy,
        gamma_c=metrics.gamma_c,
        l_p=metrics.l_p,
        initial_seeds=list(state.initial_seeds),
    )

    def reveal_now():
        nonlocal beliefs
        if cfg.n0 > 0:
            i0 = sp.reveal_seed(state, init_rng)
            beliefs = bel.BeliefState.reveal(net, params, state.day, i0)
        else:
            w = {
                i: np.array([0.0, 0.0, 0.0, 1.0])
                for i in net.active_nodes(state.day)
            }
            beliefs = bel.BeliefState.from_posteriors(w, net, params, state.day)
        return {i: v.copy() for i, v in beliefs.w.items()}

    def contacts_up_to(p: int, t: int) -> set[int]:
        if net.static:
            return set(net.base_days[0].get(p, ()))
        out: set[int] = set()
        for tau in range(min(t, len(net.base_days))):
            out |= net.base_days[tau].get(p, set())
        return out

    def record_row(day, b, selected, positives, err):
        record.rows.append(
            DayRow(
                day=day,
                budget=b,
                selected=sorted(selected),
                positives=sorted(positives),
                cum_infections=sp.cumulative_infections(state),
                err=err,
                active=len(net.active_nodes(day)),
            )
        )

    def dump_day(day):
        sigma_by_day[day] = state.sigma
        if beliefs_by_day is not None and beliefs is not None:
            beliefs_by_day[day] = {i: v.copy() for i, v in beliefs.u.items()}

    err0 = None
    if cfg.ell == 0:
        u_reveal = reveal_now()
        err0 = estimation_error(u_reveal, one_hot_truth(state.sigma, u_reveal.keys()))
    dump_day(0)
    record_row(0, 0, [], [], err0)

    for t in range(1, horizon):
        sp.step(state, net, params, dyn_rng)
        if t < cfg.ell:
            dump_day(t)
            record_row(t, 0, [], [], None)
            continue
        if t == cfg.ell:
            u_reveal = reveal_now()
            err = estimation_error(u_reveal, one_hot_truth(state.sigma, u_reveal.keys()))
            dump_day(t)
            record_row(t, 0, [], [], err)
            continue
        u_t = beliefs.u
        b = budget(t, rule, state)
        ctx = PolicyContext(
            day=t,
            net=net,
            params=params,
            u=u_t,
            positive_ledger=positive_ledger,
            quarantine_contacts=quarantine_contacts,
            rng=pol_rng,
            observation_log=beliefs.observation_log,
        )
        selected = policy.select(ctx, b)
        observations = sp.test(state, selected)
        newly_isolated = sp.isolate_positives(net, state, observations)
        for p in newly_isolated:
            positive_ledger[p] = t
            for j in contacts_up_to(p, t):
                quarantine_contacts[j] = quarantine_contacts.get(j, 0) + 1
        policy.observe(ctx, observations)
        err = estimation_error(u_t, one_hot_truth(state.sigma, u_t.keys()))
        if cfg.update == "bf":
            bel.bf_step(
                beliefs, observations, net, params,
                alpha=cfg.alpha, rng=bel_rng, on_conflict=cfg.on_conflict,
            )
        else:
            bel.naive_forward_step(beliefs, observations, net, params)
        dump_day(t)
        record_row(t, b, selected, newly_isolated, err)

    record.sigma_by_day = sigma_by_day
    record.beliefs_by_day = beliefs_by_day
    if beliefs is not None:
        record.conflict_events = beliefs.conflict_events
        record.cap_events = beliefs.cap_events
    record.wall_time = time.perf_counter() - t_start
    return record


def rep_seeds(master_seed: int, n_reps: int) -> list[int]:
    """Per-replication seeds derived deterministically from the master seed.

    Shared across policy arms so comparisons run under common random numbers.
    """
    ss = np.random.SeedSequence(master_seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(n_reps)]


def _episode_worker(args):
    cfg, seed = args
    return run_episode(cfg, seed)


def run_replications(cfg: ExperimentConfig, jobs: int = 1) -> list[RunRecord]:
    seeds = rep_seeds(cfg.seed, cfg.reps)
    tasks = [(cfg, s) for s in seeds]
    if jobs <= 1 or len(tasks) == 1:
        return [run_episode(cfg, s) for s in seeds]
    with Pool(processes=jobs) as pool:
        return pool.map(_episode_worker, tasks, chunksize=max(1, len(tasks) // (4 * jobs)))


def ratio(records_rbex, records_reer, records_baseline) -> float:
    """(mean exploitation infections - mean exploration infections) / mean
    unregulated infections, all at the horizon."""
    base = float(np.mean([r.final_c() for r in records_baseline]))
    if base == 0.0:
        return math.nan
    a = float(np.mean([r.final_c() for r in records_rbex]))
    b = float(np.mean([r.final_c() for r in records_reer]))
    return (a - b) / base


def delta_err(records_rbex, records_reer) -> float:
    """Difference of mean final estimation errors (exploitation minus
    exploration)."""
    a = float(np.mean([r.final_err() for r in records_rbex]))
    b = float(np.mean([r.final_err() for r in records_reer]))
    return a - b


def truth_oracle(
    cfg: ExperimentConfig,
    record: RunRecord,
    mode: str = "one-hot",
    reps: int = 200,
    rng: np.random.Generator | None = None,
    base_net: gr.ContactNetwork | None = None,
) -> TruthEstimate:
    """Per-day state distributions of the realized trajectory.

    one-hot: the indicator of the realized state.  monte-carlo: re-simulates
    from the same initial seed set under the same test schedule, keeps the
    trajectories whose observations match the realized log, and averages
    their indicators; aborts if fewer than 1e-4 of the runs are consistent.
    """
    if record.sigma_by_day is None:
        raise ValueError("record carries no state snapshots")
    horizon = len(record.rows)
    all_nodes = range(record.sigma_by_day.shape[1])
    if mode == "one-hot":
        days = [
            one_hot_truth(record.sigma_by_day[t], all_nodes) for t in range(horizon)
        ]
        return TruthEstimate(mode=mode, vectors_by_day=days)
    if mode != "monte-carlo":
        raise ValueError(f"unknown truth mode {mode!r}")
    n = record.sigma_by_day.shape[1]
    if n > 50:
        raise ValueError("monte-carlo truth mode limited to 50 nodes")
    if rng is None:
        rng = np.random.default_rng(0)
    net0 = base_net or build_network(cfg.network, np.random.default_rng(0))
    params = cfg.model_params()
    realized_y = {
        (row.day, i): int(record.sigma_by_day[row.day][i] == sp.I)
        for row in record.rows
        for i in row.selected
    }
    counts = np.zeros((horizon, n, 4))
    accepted = 0
    for _ in range(reps):
        net = net0.clone()
        state = sp.GroundTruthState(
            sigma=np.full(n, sp.S, dtype=np.int8),
            ever_infected=np.zeros(n, dtype=bool),
            isolated=np.zeros(n, dtype=bool),
            initial_seeds=list(record.initial_seeds),
        )
        for i in record.initial_seeds:
            state.sigma[i] = sp.I
            state.ever_infected[i] = True
        ok = True
        snapshots = [state.sigma.copy()]
        for row in record.rows[1:]:
            sp.step(state, net, params, rng)
            for i in row.selected:
                y = int(state.sigma[i] == sp.I)
                if y != realized_y[(row.day, i)]:
                    ok = False
                    break
                if y == 1:
                    state.isolated[i] = True
                    net.remove_node(i, row.day)
            if not ok:
                break
            snapshots.append(state.sigma.copy())
        if ok:
            accepted += 1
            for t, sig in enumerate(snapshots):
                counts[t, np.arange(n), sig] += 1.0
    if accepted / reps < 1e-4:
        raise RuntimeError(
            f"monte-carlo truth oracle: {accepted}/{reps} consistent trajectories"
        )
    days = []
    for t in range(horizon):
        days.append({i: counts[t, i] / accepted for i in all_nodes})
    return TruthEstimate(mode=mode, vectors_by_day=days)


RUNS_CSV_COLUMNS = [
    "rep",
    "seed",
    "policy",
    "day",
    "budget",
    "n_selected",
    "selected",
    "n_positive",
    "cum_infections",
    "err",
    "active",
]


def _fmt_float(x) -> str:
    if x is None:
        return ""
    return f"{x:.12g}"


def runs_csv_text(records: list[RunRecord], cfg: ExperimentConfig | None = None) -> str:
    """Render replications as CSV; header comments carry provenance."""
    buf = io.StringIO()
    if cfg is not None:
        buf.write(f"# config_hash = {cfg.config_hash()}\n")
    if records:
        gammas = _fmt_float(float(np.mean([r.gamma_c for r in records])))
        lps = [r.l_p for r in records if not math.isnan(r.l_p)]
        lp_text = _fmt_float(float(np.mean(lps))) if lps else "nan"
        buf.write(f"# gamma_c_mean = {gammas}\n")
        buf.write(f"# l_p_mean = {lp_text}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RUNS_CSV_COLUMNS)
    for rep, rec in enumerate(records):
        for row in rec.rows:
            writer.writerow(
                [
                    rep,
                    rec.seed,
                    rec.policy,
                    row.day,
                    row.budget,
                    len(row.selected),
                    ";".join(str(i) for i in row.selected),
                    len(row.positives),
                    row.cum_infections,
                    _fmt_float(row.err),
                    row.active,
                ]
            )
    return buf.getvalue()


def write_runs_csv(path, records: list[RunRecord], cfg: ExperimentConfig | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(runs_csv_text(records, cfg))
