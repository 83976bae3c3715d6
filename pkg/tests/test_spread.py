import math

import numpy as np
import pytest

from spreadlab import graph, spread
from spreadlab.spread import I, L, R, S


def params(beta=0.4, lam=0.5, gamma=0.1, latent=True):
    return spread.ModelParams(beta=beta, lam=lam, gamma=gamma, latent_enabled=latent)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestInit:
    def test_all_seeds(self):
        net = graph.gen_line(5)
        st = spread.init_state(net, 5, rng())
        assert (st.sigma == I).all()
        assert spread.cumulative_infections(st) == 5

    def test_single_seed(self):
        net = graph.gen_line(5)
        st = spread.init_state(net, 1, rng(3))
        assert int((st.sigma == I).sum()) == 1
        assert spread.cumulative_infections(st) == 1

    def test_determinism_and_seed_variation(self):
        net = graph.gen_line(50)
        a = spread.init_state(net, 5, rng(7)).initial_seeds
        b = spread.init_state(net, 5, rng(7)).initial_seeds
        c = spread.init_state(net, 5, rng(8)).initial_seeds
        assert a == b
        assert a != c

    def test_too_many_seeds(self):
        with pytest.raises(spread.SpreadError):
            spread.init_state(graph.gen_line(3), 4, rng())


class TestStep:
    def test_beta_zero_never_spreads(self):
        net = graph.gen_line(10)
        st = spread.init_state(net, 2, rng(1))
        p = params(beta=0.0, gamma=0.3)
        for _ in range(20):
            spread.step(st, net, p, rng(2))
        assert spread.cumulative_infections(st) == 2

    def test_certain_transmission_single_step(self):
        net = graph.gen_line(3)
        st = spread.init_state(net, 0, rng())
        st.sigma[0] = I
        st.ever_infected[0] = True
        st.initial_seeds = [0]
        spread.step(st, net, params(beta=1.0, lam=0.0, gamma=0.0, latent=False), rng())
        assert st.sigma[1] == I

    def test_recovery_fraction_binomial(self):
        # one-step recovery frequency across 10^4 infectious nodes near gamma
        n = 10_000
        net = graph.ContactNetwork(
            base_days=[{i: set() for i in range(n)}], n_initial=n, static=True
        )
        st = spread.init_state(net, n, rng(0))
        spread.step(st, net, params(gamma=0.2), rng(5))
        frac = float((st.sigma == R).mean())
        sigma3 = 3 * math.sqrt(0.2 * 0.8 / n)
        assert abs(frac - 0.2) <= sigma3

    def test_latent_path(self):
        net = graph.gen_line(2)
        st = spread.init_state(net, 0, rng())
        st.sigma[0] = I
        spread.step(st, net, params(beta=1.0, lam=0.0, gamma=0.0), rng())
        assert st.sigma[1] == L  # enters latent stage, not yet infectious

    def test_state_machine_legality(self):
        net = graph.gen_watts_strogatz(60, 4, 0.1, seed=2)
        st = spread.init_state(net, 4, rng(4))
        p = params(beta=0.5, lam=0.4, gamma=0.3)
        legal = {
            S: {S, L},
            L: {L, I},
            I: {I, R},
            R: {R},
        }
        g = rng(9)
        for _ in range(40):
            before = st.sigma.copy()
            spread.step(st, net, p, g)
            for i in range(60):
                assert int(st.sigma[i]) in legal[int(before[i])]


class TestTesting:
    def test_results_by_state(self):
        net = graph.gen_line(4)
        st = spread.init_state(net, 0, rng())
        st.sigma[:] = [I, L, R, S]
        obs = spread.test(st, [0, 1, 2, 3])
        assert [o.result for o in obs] == [1, 0, 0, 0]

    def test_empty_set(self):
        st = spread.init_state(graph.gen_line(3), 0, rng())
        assert spread.test(st, []) == []

    def test_isolated_node_rejected(self):
        net = graph.gen_line(3)
        st = spread.init_state(net, 0, rng())
        st.isolated[1] = True
        with pytest.raises(spread.SpreadError):
            spread.test(st, [1])


class TestIsolation:
    def test_positive_removed_from_network(self):
        net = graph.gen_line(4)
        st = spread.init_state(net, 0, rng())
        st.sigma[1] = I
        st.day = 3
        obs = spread.test(st, [1, 2])
        isolated = spread.isolate_positives(net, st, obs)
        assert isolated == [1]
        assert st.isolated[1]
        assert net.neighbors(0, 3) == set()
        assert net.neighbors(2, 3) == {3}
        assert net.neighbors(0, 2) == {1}  # earlier days untouched

    def test_no_positives_no_change(self):
        net = graph.gen_line(4)
        st = spread.init_state(net, 0, rng())
        obs = spread.test(st, [0, 1])
        assert spread.isolate_positives(net, st, obs) == []
        assert net.removed == {}

    def test_isolated_state_still_progresses_internally(self):
        net = graph.gen_line(3)
        st = spread.init_state(net, 0, rng())
        st.sigma[0] = I
        st.isolated[0] = True
        net.remove_node(0, 0)
        spread.step(st, net, params(beta=1.0, lam=0.0, gamma=1.0, latent=False), rng())
        assert st.sigma[0] == R  # recovered while isolated
        assert st.sigma[1] == S  # no network effect


class TestUnregulated:
    def test_zero_days_identity(self):
        net = graph.gen_line(5)
        st = spread.init_state(net, 1, rng(1))
        before = st.sigma.copy()
        spread.run_unregulated(st, net, params(), 0, rng())
        assert (st.sigma == before).all()
        assert st.day == 0

    def test_deterministic_wavefront(self):
        net = graph.gen_line(10)
        st = spread.init_state(net, 0, rng())
        st.sigma[0] = I
        st.ever_infected[0] = True
        st.initial_seeds = [0]
        p = params(beta=1.0, lam=0.0, gamma=0.0, latent=False)
        spread.run_unregulated(st, net, p, 5, rng())
        assert all(st.sigma[i] == I for i in range(6))
        assert all(st.sigma[i] == S for i in range(6, 10))

    def test_wavefront_cumulative_count(self):
        net = graph.gen_line(30)
        st = spread.init_state(net, 0, rng())
        st.sigma[0] = I
        st.ever_infected[0] = True
        st.initial_seeds = [0]
        p = params(beta=1.0, lam=0.0, gamma=0.0, latent=False)
        for t in range(40):
            assert spread.cumulative_infections(st) == min(1 + t, 30)
            spread.step(st, net, p, rng())

    def test_monotone_ever_infected(self):
        net = graph.gen_watts_strogatz(40, 4, 0.1, seed=1)
        st = spread.init_state(net, 3, rng(2))
        p = params()
        g = rng(3)
        prev = spread.cumulative_infections(st)
        for _ in range(15):
            spread.step(st, net, p, g)
            cur = spread.cumulative_infections(st)
            assert cur >= prev
            prev = cur


class TestRevealSeed:
    def test_single_seed_returned(self):
        net = graph.gen_line(5)
        st = spread.init_state(net, 1, rng(1))
        assert spread.reveal_seed(st, rng()) == st.initial_seeds[0]

    def test_fallback_when_all_recovered(self):
        net = graph.gen_line(5)
        st = spread.init_state(net, 2, rng(1))
        for i in st.initial_seeds:
            st.sigma[i] = R
        assert spread.reveal_seed(st, rng()) in st.initial_seeds

    def test_always_a_member_of_seed_set(self):
        net = graph.gen_watts_strogatz(30, 4, 0.1, seed=5)
        st = spread.init_state(net, 3, rng(6))
        spread.run_unregulated(st, net, params(), 5, rng(7))
        for s in range(20):
            assert spread.reveal_seed(st, rng(s)) in st.initial_seeds


class TestLambdaZeroWarning:
    def test_warns_on_ambiguous_combination(self):
        with pytest.warns(UserWarning):
            spread.ModelParams(beta=0.3, lam=0.0, gamma=0.1, latent_enabled=True)


def test_determinism_full_trajectory():
    net = graph.gen_watts_strogatz(50, 4, 0.05, seed=11)
    p = params()

    def run():
        st = spread.init_state(net.clone(), 3, rng(21))
        g = rng(22)
        for _ in range(20):
            spread.step(st, net, p, g)
        return st.sigma.copy()

    assert (run() == run()).all()
