import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spreadlab import graph


def degree_histogram(net, t=0):
    hist = {}
    for i in range(net.n_initial):
        d = net.degree(i, t)
        hist[d] = hist.get(d, 0) + 1
    return hist


class TestLine:
    def test_edges_n3(self):
        net = graph.gen_line(3)
        assert net.edges(0) == {(0, 1), (1, 2)}
        assert net.edges(5) == {(0, 1), (1, 2)}  # static across days

    def test_minimal(self):
        net = graph.gen_line(2)
        assert net.edges(0) == {(0, 1)}

    def test_degree_histogram_n30(self):
        # two endpoints of degree 1, 28 interior nodes of degree 2
        assert degree_histogram(graph.gen_line(30)) == {1: 2, 2: 28}

    def test_too_small(self):
        with pytest.raises(graph.GraphError):
            graph.gen_line(1)


class TestWattsStrogatz:
    def test_no_rewiring_is_lattice(self):
        net = graph.gen_watts_strogatz(300, 4, 0.0, seed=1)
        assert degree_histogram(net) == {4: 300}

    def test_no_rewiring_clustering_exactly_half(self):
        net = graph.gen_watts_strogatz(300, 4, 0.0, seed=1)
        assert graph.topology_metrics(net).gamma_c == pytest.approx(0.5, abs=0)

    def test_rewired_clustering_matches_reference(self):
        # mean global clustering over 50 seeds at delta=0.03 sits near 0.456
        vals = [
            graph.topology_metrics(graph.gen_watts_strogatz(300, 4, 0.03, seed=s)).gamma_c
            for s in range(50)
        ]
        assert abs(float(np.mean(vals)) - 0.456) < 0.02

    def test_odd_degree_rejected(self):
        with pytest.raises(graph.GraphError):
            graph.gen_watts_strogatz(10, 3, 0.1, seed=0)

    def test_determinism(self):
        a = graph.gen_watts_strogatz(100, 4, 0.2, seed=42)
        b = graph.gen_watts_strogatz(100, 4, 0.2, seed=42)
        assert a.edges(0) == b.edges(0)


class TestScaleFree:
    def test_degree_cap_small_n(self):
        net = graph.gen_scale_free(10, 2.5, seed=3)
        assert all(1 <= net.degree(i, 0) <= 9 or net.degree(i, 0) == 0 for i in range(10))

    def test_pooled_slope_near_exponent(self):
        counts = {}
        for s in range(50):
            net = graph.gen_scale_free(300, 2.1, seed=s)
            for i in range(300):
                d = net.degree(i, 0)
                if d >= 1:
                    counts[d] = counts.get(d, 0) + 1
        ks = sorted(k for k, c in counts.items() if c >= 5)
        xs = np.log([float(k) for k in ks])
        ys = np.log([float(counts[k]) for k in ks])
        slope = np.polyfit(xs, ys, 1)[0]
        assert abs(slope - (-2.1)) < 0.3

    def test_higher_exponent_less_clustered(self):
        lo = [
            graph.topology_metrics(graph.gen_scale_free(300, 2.9, seed=s)).gamma_c
            for s in range(20)
        ]
        hi = [
            graph.topology_metrics(graph.gen_scale_free(300, 2.1, seed=s)).gamma_c
            for s in range(20)
        ]
        assert float(np.mean(lo)) < float(np.mean(hi))

    def test_bad_exponent(self):
        with pytest.raises(graph.GraphError):
            graph.gen_scale_free(10, 1.0, seed=0)


class TestSBM:
    def test_expected_edges_standard(self):
        assert graph.expected_edges(300, 10, 0.2736, 0.02, "standard") == pytest.approx(
            2000.16, abs=1e-9
        )

    def test_expected_edges_chain(self):
        assert graph.expected_edges(300, 10, 0.4184, 0.02, "chain") == pytest.approx(
            2000.04, abs=1e-9
        )

    def test_expected_edges_zero(self):
        assert graph.expected_edges(300, 10, 0.0, 0.0, "standard") == 0.0

    def test_solve_intra_prob_roundtrip(self):
        p1 = graph.solve_intra_prob(2000.16, 300, 10, 0.02, "standard")
        assert p1 == pytest.approx(0.2736, abs=1e-12)

    def test_solve_intra_prob_infeasible(self):
        with pytest.raises(graph.GraphError):
            graph.solve_intra_prob(1e6, 300, 10, 0.02, "standard")

    def test_empty_when_probs_zero(self):
        net = graph.gen_sbm(30, 3, 0.0, 0.0, "standard", seed=0)
        assert net.edges(0) == set()

    def test_indivisible_clusters_rejected(self):
        with pytest.raises(graph.GraphError):
            graph.gen_sbm(10, 3, 0.1, 0.1, "standard", seed=0)

    @pytest.mark.parametrize(
        "variant,p1",
        [("standard", 0.2736), ("chain", 0.4184)],
    )
    def test_edge_budget_calibration(self, variant, p1):
        # empirical mean edge count within 3 standard errors of the formula
        expected = graph.expected_edges(300, 10, p1, 0.02, variant)
        counts = [
            len(graph.gen_sbm(300, 10, p1, 0.02, variant, seed=s).edges(0))
            for s in range(100)
        ]
        mean = float(np.mean(counts))
        se = float(np.std(counts, ddof=1)) / math.sqrt(len(counts))
        assert abs(mean - expected) <= 3 * se

    def test_chain_variant_skips_distant_clusters(self):
        net = graph.gen_sbm(40, 4, 0.0, 1.0, "chain", seed=0)
        size = 10
        for u, v in net.edges(0):
            dc = abs(u // size - v // size)
            assert dc in (1, 3)  # successive clusters, cyclically arranged


class TestTemporalLoading:
    def write(self, tmp_path, text):
        p = tmp_path / "net.tsv"
        p.write_text(text, encoding="utf-8")
        return p

    def test_replicate_extends_horizon(self, tmp_path):
        lines = [f"{d}\ta\tb" for d in range(28)]
        p = self.write(tmp_path, "\n".join(lines) + "\n")
        net = graph.load_temporal_edges(p, replicate_k=4)
        assert net.horizon == 112

    def test_compress_unions_blocks(self, tmp_path):
        lines = [f"{d}\tn{d % 5}\tn{(d + 1) % 5}" for d in range(576)]
        p = self.write(tmp_path, "\n".join(lines) + "\n")
        net = graph.load_temporal_edges(p, compress_k=4)
        assert net.horizon == 144

    def test_identity_factors(self, tmp_path):
        p = self.write(tmp_path, "0\ta\tb\n1\tb\tc\n")
        net = graph.load_temporal_edges(p, replicate_k=1, compress_k=1)
        assert net.horizon == 2
        assert net.edges(0) == {(0, 1)}
        assert net.edges(1) == {(1, 2)}

    def test_labels_preserved(self, tmp_path):
        p = self.write(tmp_path, "0\talice\tbob\n")
        net = graph.load_temporal_edges(p)
        assert net.node_labels == ["alice", "bob"]

    def test_comments_skipped(self, tmp_path):
        p = self.write(tmp_path, "# header\n0\ta\tb\n")
        assert graph.load_temporal_edges(p).horizon == 1

    def test_malformed_row_reports_line(self, tmp_path):
        p = self.write(tmp_path, "0\ta\tb\nnot-a-day\tx\ty\n")
        with pytest.raises(graph.EdgeListParseError, match="line 2"):
            graph.load_temporal_edges(p)

    def test_mutually_exclusive_options(self, tmp_path):
        p = self.write(tmp_path, "0\ta\tb\n")
        with pytest.raises(graph.GraphError):
            graph.load_temporal_edges(p, replicate_k=2, compress_k=2)


class TestRemovalSemantics:
    def test_neighbors_line(self):
        net = graph.gen_line(3)
        assert net.neighbors(1, 0) == {0, 2}
        assert net.closed_neighbors(1, 0) == {0, 1, 2}

    def test_removed_node_excluded_from_queries(self):
        net = graph.gen_line(3)
        net.remove_node(2, 1)
        assert net.neighbors(1, 0) == {0, 2}  # day before removal unaffected
        assert net.neighbors(1, 1) == {0}
        assert net.neighbors(2, 1) == set()

    def test_removal_idempotent_keeps_earliest(self):
        net = graph.gen_line(3)
        net.remove_node(2, 3)
        net.remove_node(2, 1)
        net.remove_node(2, 5)
        assert net.removed[2] == 1

    def test_remove_all_nodes(self):
        net = graph.gen_line(4)
        for i in range(4):
            net.remove_node(i, 2)
        assert net.edges(2) == set()
        assert net.active_nodes(2) == []

    def test_clone_isolates_removal_ledger(self):
        base = graph.gen_line(4)
        a = base.clone()
        a.remove_node(0, 0)
        assert base.removed == {}
        assert a.neighbors(1, 0) == {2}


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(4, 40),
    d=st.sampled_from([2, 4]),
    delta=st.floats(0, 1),
    seed=st.integers(0, 2**32 - 1),
)
def test_adjacency_symmetry_ws(n, d, delta, seed):
    if d >= n:
        d = 2
    net = graph.gen_watts_strogatz(n, d, delta, seed)
    for i in range(n):
        for j in net.neighbors(i, 0):
            assert i in net.neighbors(j, 0)
            assert i != j


@settings(max_examples=30, deadline=None)
@given(
    n=st.integers(6, 30),
    seed=st.integers(0, 2**32 - 1),
    removals=st.lists(st.tuples(st.integers(0, 29), st.integers(0, 5)), max_size=6),
)
def test_removal_monotonicity(n, seed, removals):
    net = graph.gen_scale_free(n, 2.5, seed)
    for node, day in removals:
        if node < n:
            net.remove_node(node, day)
    for node, day in removals:
        if node >= n:
            continue
        for t in range(day, 8):
            assert node not in net.active_nodes(t)
            for i in range(n):
                assert node not in net.neighbors(i, t)


class TestTopologyMetrics:
    def triangle(self):
        net = graph.gen_line(3)
        net.base_days[0][0].add(2)
        net.base_days[0][2].add(0)
        return net

    def test_triangle(self):
        m = graph.topology_metrics(self.triangle())
        assert m.gamma_c == 1.0
        assert m.l_p == 1.0
        assert m.n_components == 1

    def test_path_p3(self):
        m = graph.topology_metrics(graph.gen_line(3))
        assert m.gamma_c == 0.0
        assert m.l_p == pytest.approx(4.0 / 3.0)

    def test_edgeless_sentinel(self):
        net = graph.gen_sbm(12, 3, 0.0, 0.0, "standard", seed=0)
        m = graph.topology_metrics(net)
        assert m.gamma_c == 0.0
        assert math.isnan(m.l_p)
        assert m.n_components == 12

    def test_components_count_isolated_nodes(self):
        net = graph.gen_line(5)
        net.remove_node(1, 0)
        m = graph.topology_metrics(net, 0)
        assert m.n_components == 2  # {0} and {2,3,4}
