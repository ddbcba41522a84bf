import numpy as np
import pytest

from semimarkov._rng import GENERATOR_ID
from semimarkov.discretization import IndexGrid, StateSeries
from semimarkov.exceptions import ConfigError, UnobservedRowError, UsageError
from semimarkov.index import IndexConfig, compute_index
from semimarkov.indexed_kernel import IndexedKernel
from semimarkov.simulate import (SimulationConfig, Trajectory, expand_to_minutes,
                                 monte_carlo_transition, simulate_indexed,
                                 simulate_replications, simulate_smc)
from semimarkov.smc import (MarkovRenewalSample, SemiMarkovKernel, estimate_kernel,
                            extract_mrp, solve_evolution)
from semimarkov.synthetic import clustered_wismc_kernel

from .helpers import P3, three_state_kernel
from .oracles import ks_discrete


@pytest.fixture(scope="module")
def long_run():
    k = three_state_kernel()
    return k, simulate_smc(k, SimulationConfig(900_000, seed=21, initial_state=0))


class TestPlain:
    def test_seeded_determinism(self, kernel3):
        cfg = SimulationConfig(5000, seed=9)
        a, b = simulate_smc(kernel3, cfg), simulate_smc(kernel3, cfg)
        assert np.array_equal(a.J, b.J) and np.array_equal(a.T, b.T)
        assert a.generator == GENERATOR_ID
        assert a.kernel_fingerprint == kernel3.fingerprint()
        c = simulate_smc(kernel3, SimulationConfig(5000, seed=10))
        assert not np.array_equal(a.J[:50], c.J[:50])

    def test_deterministic_kernel(self):
        g = np.zeros((1, 1, 3))
        g[0, 0, 2] = 1.0
        k = SemiMarkovKernel.from_probabilities(np.array([[1.0]]), g,
                                                allow_self_transitions=True)
        tr = simulate_smc(k, SimulationConfig(101, seed=0))
        assert np.array_equal(tr.T, 2 * np.arange(51))

    def test_trajectory_invariants(self, kernel3):
        tr = simulate_smc(kernel3, SimulationConfig(10_000, seed=1))
        assert tr.T[0] == 0 and np.all(np.diff(tr.T) > 0) and tr.T[-1] < 10_000
        assert np.all(tr.J[1:] != tr.J[:-1])

    def test_next_state_frequencies(self, long_run):
        k, tr = long_run
        for i in range(3):
            nxt = tr.J[1:][tr.J[:-1] == i][:100_000]
            n = len(nxt)
            assert n > 50_000
            freq = np.bincount(nxt, minlength=3) / n
            sd = np.sqrt(P3[i] * (1 - P3[i]) / n)
            assert np.all(np.abs(freq - P3[i]) <= 4 * sd + 1e-15)

    def test_sojourn_ks(self, long_run):
        k, tr = long_run
        w = np.diff(tr.T)
        src, dst = tr.J[:-1], tr.J[1:]
        for i in range(3):
            for j in range(3):
                if P3[i, j] == 0:
                    continue
                samples = w[(src == i) & (dst == j)][:10_000]
                assert len(samples) == 10_000
                assert ks_discrete(samples, k.G[i, j]) < 0.02

    def test_matches_solver(self, kernel3):
        mc = monte_carlo_transition(kernel3, 0, 25, 20_000, seed=3)
        phi = solve_evolution(kernel3, 25).phi[:, 0, :]
        sd = np.sqrt(phi * (1 - phi) / 20_000)
        assert np.all(np.abs(mc - phi) <= 4 * sd + 1e-12)

    def test_unobserved_row_reached(self):
        s = extract_mrp(StateSeries(np.array([0, 0, 1, 1, 0, 2]), np.array([-1.0, 0, 1])))
        k = estimate_kernel(s)
        with pytest.raises(UnobservedRowError):
            simulate_smc(k, SimulationConfig(10_000, seed=0, initial_state=0))

    def test_replications_order_independent(self, kernel3):
        cfg = SimulationConfig(3000, seed=4, replications=4)
        serial = simulate_replications(kernel3, cfg)
        threaded = simulate_replications(kernel3, cfg, n_jobs=2)
        alone = simulate_smc(kernel3, cfg, replication=2)
        for a, b in zip(serial, threaded):
            assert np.array_equal(a.J, b.J) and np.array_equal(a.T, b.T)
        assert np.array_equal(serial[2].T, alone.T)
        assert not np.array_equal(serial[0].T, serial[1].T)

    def test_burn_in_shifts_clock(self, kernel3):
        tr = simulate_smc(kernel3, SimulationConfig(2000, seed=5, burn_in=300))
        assert tr.T[0] == 0 and tr.meta["burn_in"] == 300
        full = simulate_smc(kernel3, SimulationConfig(2300, seed=5))
        z = expand_to_minutes(full).states[300:]
        assert np.array_equal(expand_to_minutes(tr).states, z)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            SimulationConfig(0)
        with pytest.raises(ConfigError):
            SimulationConfig(10, replications=0)


class TestExpand:
    def test_hand_case(self):
        tr = Trajectory(np.array([1, 2]), np.array([0, 3]), 5, np.arange(3.0))
        assert list(expand_to_minutes(tr).states) == [1, 1, 1, 2, 2]

    def test_single_jump(self):
        tr = Trajectory(np.array([1]), np.array([0]), 4, np.arange(3.0))
        assert list(expand_to_minutes(tr).states) == [1] * 4

    def test_round_trip(self, kernel3):
        tr = simulate_smc(kernel3, SimulationConfig(5000, seed=6))
        s = extract_mrp(expand_to_minutes(tr))
        assert np.array_equal(s.J, tr.J) and np.array_equal(s.T, tr.T)


class TestIndexed:
    def test_single_level_is_plain_chain(self, kernel3):
        cfg = IndexConfig("ewma", lam=0.9, initial_value=0.5)
        ik = IndexedKernel(kernel3.Q[:, None], IndexGrid(np.empty(0)), cfg,
                           state_values=kernel3.state_values)
        sc = SimulationConfig(20_000, seed=8, burn_in=0)
        a, b = simulate_indexed(ik, sc), simulate_smc(kernel3, sc)
        assert np.array_equal(a.J, b.J) and np.array_equal(a.T, b.T)

    def test_default_burn_in(self):
        tr = simulate_indexed(clustered_wismc_kernel(), SimulationConfig(500, seed=0))
        assert tr.meta["burn_in"] == 1000

    def test_constant_warm_up_level(self):
        k = clustered_wismc_kernel()
        for state, level in ((4, 1), (2, 0)):
            cfg = SimulationConfig(200, seed=0, history=([state, state], [-50, 0]))
            tr = simulate_indexed(k, cfg)
            assert tr.levels[0] == level
            assert tr.index_values[0] == (k.state_values[state] ** 2)

    def test_records_index(self):
        k = clustered_wismc_kernel()
        tr = simulate_indexed(k, SimulationConfig(5000, seed=2, burn_in=0))
        assert np.array_equal(tr.levels, k.grid.level_of(tr.index_values))
        # the recorded values are the index of the simulated path itself
        s = MarkovRenewalSample(tr.J, tr.T, tr.horizon, k.state_values)
        u = compute_index(s, k.index_config).values
        assert np.allclose(u, tr.index_values, rtol=1e-12, atol=0)

    def test_history_must_be_increasing(self):
        k = clustered_wismc_kernel()
        with pytest.raises(UsageError):
            simulate_indexed(k, SimulationConfig(10, history=([1, 2], [0, 0])))

    def test_needs_indexed_kernel(self, kernel3):
        with pytest.raises(UsageError):
            simulate_indexed(kernel3, SimulationConfig(10))

    def test_monte_carlo_transition_indexed(self):
        k = clustered_wismc_kernel()
        phi = monte_carlo_transition(k, 2, 30, 2000, seed=1)
        assert np.allclose(phi.sum(axis=1), 1.0)
        assert np.array_equal(phi[0], np.eye(5)[2])
        again = monte_carlo_transition(k, 2, 30, 2000, seed=1)
        assert np.array_equal(phi, again)
