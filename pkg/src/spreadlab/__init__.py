"""Containing a stochastic spread process on a contact network.

Ground-truth S/L/I/R simulation, belief inference from test observations
by backward-forward message passing, reward-based testing policies, and a
seeded Monte Carlo experiment harness.
"""

from spreadlab.graph import (
    ContactNetwork,
    TopologyMetrics,
    expected_edges,
    gen_line,
    gen_sbm,
    gen_scale_free,
    gen_watts_strogatz,
    load_temporal_edges,
    topology_metrics,
)
from spreadlab.spread import (
    GroundTruthState,
    ModelParams,
    Observation,
    cumulative_infections,
    init_state,
    isolate_positives,
    reveal_seed,
    run_unregulated,
    step,
    test,
)

__all__ = [
    "ContactNetwork",
    "TopologyMetrics",
    "expected_edges",
    "gen_line",
    "gen_sbm",
    "gen_scale_free",
    "gen_watts_strogatz",
    "load_temporal_edges",
    "topology_metrics",
    "GroundTruthState",
    "ModelParams",
    "Observation",
    "cumulative_infections",
    "init_state",
    "isolate_positives",
    "reveal_seed",
    "run_unregulated",
    "step",
    "test",
]

__version__ = "0.1.0"
