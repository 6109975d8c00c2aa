import numpy as np
import pytest

from isingmem.dynamics import ONSAGER_KT_C, TrajectoryConfig
from isingmem.fidelity import estimate_fidelity
from isingmem.lattice import Couplings, Geometry, TieRule
from isingmem.oracle import (
    ExactDistribution,
    boltzmann_distribution,
    build_transition_operator,
    enumerate_energies,
    equilibrium_fidelity,
    exact_fidelity,
    majority_weights,
    power_iteration,
    state_magnetizations,
    stationarity_residual,
)

ALL_SMALL = [Geometry(1, n) for n in range(2, 10)] + [Geometry(2, 2), Geometry(2, 3)]


class TestEnumeration:
    def test_energies_match_bond_count_extremes(self):
        g = Geometry(2, 2)
        e = enumerate_energies(g, Couplings())
        assert e[0] == -4.0 and e[0b1111] == -4.0  # both ground states
        assert e.max() == 4.0

    def test_magnetizations(self):
        g = Geometry(1, 3)
        mags = state_magnetizations(g)
        assert mags[0] == -3 and mags[0b111] == 3 and mags[0b101] == 1

    def test_distribution_validation(self):
        g = Geometry(1, 2)
        with pytest.raises(ValueError):
            ExactDistribution(g, np.array([0.5, 0.6, 0.0, 0.0]))
        with pytest.raises(ValueError):
            ExactDistribution(g, np.array([1.0, 0.0]))

    def test_site_cap(self):
        with pytest.raises(ValueError):
            build_transition_operator(Geometry(1, 17), Couplings(), 1.0)


class TestTransitionOperator:
    def test_single_noninteracting_spin_flips_half_the_time(self):
        op = build_transition_operator(Geometry(1, 1), Couplings(J=0.0), 1.0)
        assert np.allclose(op.matrix, [[0.5, 0.5], [0.5, 0.5]])

    def test_columns_sum_to_one(self):
        for g in (Geometry(1, 5), Geometry(2, 3)):
            op = build_transition_operator(g, Couplings(), 2.0)
            assert np.allclose(op.matrix.sum(axis=0), 1.0, atol=1e-14)

    def test_matrix_free_agrees_with_dense(self):
        g = Geometry(1, 6)
        dense = build_transition_operator(g, Couplings(), 2.0)
        free = build_transition_operator(g, Couplings(), 2.0, dense_cap=0)
        assert free.matrix is None
        rng = np.random.default_rng(0)
        p = rng.random(64)
        p /= p.sum()
        assert np.allclose(dense.apply(p), free.apply(p), atol=1e-15)

    @pytest.mark.parametrize("geometry", ALL_SMALL)
    def test_boltzmann_is_fixed_point(self, geometry):
        for kT in (0.5, 1.0, ONSAGER_KT_C, 4.0, 8.0):
            op = build_transition_operator(geometry, Couplings(), kT)
            pi = boltzmann_distribution(geometry, Couplings(), kT)
            assert stationarity_residual(op, pi) <= 1e-12

    def test_probability_conserved_over_many_steps(self):
        op = build_transition_operator(Geometry(1, 4), Couplings(), 1.5)
        p = np.zeros(16)
        p[15] = 1.0
        for _ in range(10_000):
            p = op.apply(p)
        assert abs(p.sum() - 1.0) <= 1e-12

    def test_power_iteration_finds_boltzmann(self):
        for g in (Geometry(1, 5), Geometry(2, 3)):
            op = build_transition_operator(g, Couplings(), 2.5)
            eigval, vec = power_iteration(op, n_iter=4000)
            pi = boltzmann_distribution(g, Couplings(), 2.5).probabilities
            assert eigval == pytest.approx(1.0, abs=1e-10)
            assert np.abs(op.apply(vec) - vec).max() <= 1e-10
            assert np.abs(vec - pi).max() <= 1e-8

    def test_squaring_matches_stepwise(self):
        op1 = build_transition_operator(Geometry(1, 4), Couplings(), 2.0)
        op2 = build_transition_operator(Geometry(1, 4), Couplings(), 2.0)
        p = np.zeros(16)
        p[15] = 1.0
        direct = op1.propagate(p.copy(), 5000, squaring_threshold=10**9)
        squared = op2.propagate(p.copy(), 5000, squaring_threshold=64)
        assert np.allclose(direct, squared, atol=1e-12)
        assert op2.power_colsum_error < 1e-9


class TestMajorityWeights:
    def test_tie_weights(self):
        g = Geometry(1, 2)
        w_rc = majority_weights(g, 1, TieRule.RANDOM_CHOICE)
        w_df = majority_weights(g, 1, TieRule.DECLARE_FAILURE)
        w_cc = majority_weights(g, 1, TieRule.COUNT_AS_CORRECT)
        tie_states = [0b01, 0b10]
        for s in tie_states:
            assert w_rc[s] == 0.5 and w_df[s] == 0.0 and w_cc[s] == 1.0
        assert w_rc[0b11] == 1.0 and w_rc[0b00] == 0.0


class TestExactFidelity:
    def test_time_zero(self):
        curve = exact_fidelity(Geometry(1, 3), Couplings(), 2.5, np.array([0.0, 1.0]))
        assert curve.fidelity[0] == 1.0
        assert curve.exact and curve.ensemble_size == 0

    def test_single_spin_two_state_recursion(self):
        # J = 0, N = 1: flip probability 1/2 per step, so
        # F after k steps = (1 + (1 - 2p)^k)/2 = 1 at k = 0, 1/2 for k >= 1
        times = np.array([0.0, 1.0, 2.0, 7.0])
        curve = exact_fidelity(Geometry(1, 1), Couplings(J=0.0), 1.0, times)
        assert curve.fidelity[0] == 1.0
        assert np.allclose(curve.fidelity[1:], 0.5, atol=1e-15)

    def test_spin_flip_symmetry(self):
        times = np.geomspace(0.5, 30.0, 12)
        up = exact_fidelity(Geometry(1, 4), Couplings(), 2.0, times, encoded_bit=1)
        down = exact_fidelity(Geometry(1, 4), Couplings(), 2.0, times, encoded_bit=0)
        assert np.allclose(up.fidelity, down.fidelity, atol=1e-14)

    def test_long_time_reaches_boltzmann_average(self):
        g = Geometry(2, 2)
        for tie in (TieRule.RANDOM_CHOICE, TieRule.DECLARE_FAILURE):
            curve = exact_fidelity(g, Couplings(), 2.5, np.array([3000.0]), tie)
            eq = equilibrium_fidelity(g, Couplings(), 2.5, tie)
            assert curve.fidelity[0] == pytest.approx(eq, abs=1e-10)

    def test_equilibrium_random_choice_is_half(self):
        # global spin-flip symmetry of the h = 0 Boltzmann state
        for g in (Geometry(2, 2), Geometry(1, 5)):
            assert equilibrium_fidelity(g, Couplings(), 2.5, TieRule.RANDOM_CHOICE) == (
                pytest.approx(0.5, abs=1e-14)
            )

    def test_mc_agrees_with_exact(self):
        g = Geometry(1, 3)
        times = np.array([1 / 3, 1.0, 2.0, 5.0, 12.0])
        exact = exact_fidelity(g, Couplings(), 2.5, times, TieRule.DECLARE_FAILURE)
        cfg = TrajectoryConfig(g, Couplings(), 2.5, 1, 31, times)
        mc = estimate_fidelity(cfg, 20_000, TieRule.DECLARE_FAILURE)
        assert np.all(np.abs(mc.fidelity - exact.fidelity) <= 5 * mc.sigma)

    def test_validation(self):
        with pytest.raises(ValueError):
            exact_fidelity(Geometry(1, 3), Couplings(), 2.5, np.array([2.0, 1.0]))
