import math

import numpy as np
import pytest

from isingmem import _kernels
from isingmem.dynamics import (
    ONSAGER_KT_C,
    STREAM_DYNAMICS,
    TrajectoryConfig,
    TrajectoryResult,
    derive_rng,
    flip_probability,
    flip_table,
    mc_step,
    run_trajectory,
    steps_for_times,
)
from isingmem.lattice import Couplings, Geometry, TieRule, encode, magnetization, neighbor_table


class _ScriptedRng:
    """Stands in for a Generator; feeds mc_step a fixed uniform sequence."""

    def __init__(self, values):
        self.values = list(values)
        self.calls = 0

    def random(self):
        self.calls += 1
        return self.values.pop(0)


class TestCriticalTemperature:
    def test_onsager_value(self):
        assert ONSAGER_KT_C == pytest.approx(2.269185, abs=5e-7)
        # defining relation tanh(2J/kT_c) = 1/sqrt(2)
        assert math.tanh(2.0 / ONSAGER_KT_C) == pytest.approx(1 / math.sqrt(2), abs=1e-15)


class TestFlipProbability:
    def test_zero_delta(self):
        for kT in (0.1, 1.0, 17.3):
            assert flip_probability(0.0, kT) == 0.5

    def test_reference_values(self):
        # 1/(1 + e^2) and its complement, exact to double precision
        assert flip_probability(4.0, 2.0) == pytest.approx(0.11920292202211755, abs=1e-15)
        assert flip_probability(-4.0, 2.0) == pytest.approx(0.8807970779778823, abs=1e-15)
        # all-up 2D interior site at kT = 2.5: 1/(1 + e^{3.2})
        assert flip_probability(8.0, 2.5) == pytest.approx(1 / (1 + math.exp(3.2)), abs=1e-15)

    def test_complement_identity(self):
        for de in (-50.0, -3.7, -1e-8, 0.0, 0.2, 4.0, 123.0):
            for kT in (0.3, 1.0, 8.0):
                s = flip_probability(de, kT) + flip_probability(-de, kT)
                assert s == pytest.approx(1.0, abs=1e-14)

    def test_detailed_balance_ratio(self):
        # p(dE)/p(-dE) = exp(-dE/kT) on a grid of arguments
        for de in (-8.0, -2.0, -0.5, 0.5, 2.0, 8.0):
            for kT in (0.5, 1.0, 2.269, 10.0):
                ratio = flip_probability(de, kT) / flip_probability(-de, kT)
                assert ratio == pytest.approx(math.exp(-de / kT), rel=1e-12)

    def test_extreme_arguments_saturate(self):
        assert flip_probability(1500.0, 1.0) == 0.0
        assert flip_probability(-1500.0, 1.0) == 1.0
        assert 0.0 < flip_probability(700.0, 1.0) < 1e-300 or flip_probability(700.0, 1.0) == 0.0
        assert flip_probability(-700.0, 1.0) == 1.0

    def test_invalid_temperature(self):
        with pytest.raises(ValueError):
            flip_probability(1.0, 0.0)
        with pytest.raises(ValueError):
            flip_probability(1.0, -2.0)


class TestMcStep:
    def test_two_draws_site_then_flip(self):
        state = encode(Geometry(1, 10), 1)
        # site draw 0.95 -> site 9 (end, dE = 2); flip draw just below p accepts
        p_end = flip_probability(2.0, 2.0)
        rng = _ScriptedRng([0.95, p_end * 0.999])
        assert mc_step(state, 2.0, Couplings(), rng) is True
        assert rng.calls == 2
        assert state.spins[9] == -1 and np.all(state.spins[:9] == 1)

    def test_rejected_flip_leaves_state(self):
        state = encode(Geometry(1, 10), 1)
        p_mid = flip_probability(4.0, 2.0)
        rng = _ScriptedRng([0.55, p_mid * 1.001])
        assert mc_step(state, 2.0, Couplings(), rng) is False
        assert np.all(state.spins == 1)

    def test_noninteracting_flip_probability_half(self):
        state = encode(Geometry(1, 50), 1)
        rng = derive_rng(123, STREAM_DYNAMICS, 0)
        flips = sum(mc_step(state, 1.7, Couplings(J=0.0), rng) for _ in range(4000))
        assert abs(flips - 2000) < 5 * math.sqrt(4000 * 0.25)

    def test_frozen_at_low_temperature(self):
        state = encode(Geometry(2, 4), 1)
        rng = derive_rng(9, STREAM_DYNAMICS, 0)
        for _ in range(500):
            mc_step(state, 1e-6, Couplings(), rng)
        assert np.all(state.spins == 1)

    def test_kernel_matches_reference_step(self):
        # the compiled loop consumes the identical stream as mc_step
        for geometry in (Geometry(1, 30), Geometry(2, 5)):
            c = Couplings()
            kT = 2.2
            state = encode(geometry, 1)
            rng_py = derive_rng(77, STREAM_DYNAMICS, 0)
            for _ in range(800):
                mc_step(state, kT, c, rng_py)
            spins_kernel = encode(geometry, 1).spins
            nbr, count = neighbor_table(geometry)
            rng_nb = derive_rng(77, STREAM_DYNAMICS, 0)
            mags = _kernels.glauber_run(
                spins_kernel, nbr, count, flip_table(geometry, c, kT), rng_nb,
                np.array([800], dtype=np.int64), geometry.n_sites,
            )
            assert np.array_equal(state.spins, spins_kernel)
            assert mags[0] == magnetization(state)


class TestStepsForTimes:
    def test_ceil_mapping(self):
        steps = steps_for_times(np.array([0.0, 0.001, 0.5, 1.0, 1.2]), 10)
        assert steps.tolist() == [0, 1, 5, 10, 12]

    def test_lattice_aligned_times_hit_exact_steps(self):
        n = 97
        times = np.arange(0, 500) / n
        assert np.array_equal(steps_for_times(times, n), np.arange(0, 500))


class TestTrajectoryConfig:
    def test_validation(self):
        g = Geometry(1, 4)
        with pytest.raises(ValueError):
            TrajectoryConfig(g, Couplings(), 0.0, 1, 0, np.array([0.0]))
        with pytest.raises(ValueError):
            TrajectoryConfig(g, Couplings(), 1.0, 2, 0, np.array([0.0]))
        with pytest.raises(ValueError):
            TrajectoryConfig(g, Couplings(), 1.0, 1, 0, np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            TrajectoryConfig(g, Couplings(), 1.0, 1, 0, np.array([-1.0, 1.0]))


class TestRunTrajectory:
    def test_time_zero_record(self):
        g = Geometry(2, 3)
        cfg = TrajectoryConfig(g, Couplings(), 2.5, 1, 42, np.array([0.0]))
        res = run_trajectory(cfg)
        assert res.magnetizations[0] == g.n_sites
        assert bool(res.readouts[0]) is True

    def test_deterministic_given_seed(self):
        cfg = TrajectoryConfig(
            Geometry(1, 40), Couplings(), 1.8, 1, 987, np.geomspace(0.1, 30.0, 25)
        )
        a = run_trajectory(cfg, TieRule.RANDOM_CHOICE, trajectory_index=3)
        b = run_trajectory(cfg, TieRule.RANDOM_CHOICE, trajectory_index=3)
        assert np.array_equal(a.magnetizations, b.magnetizations)
        assert np.array_equal(a.readouts, b.readouts)

    def test_trajectory_indices_are_independent_streams(self):
        cfg = TrajectoryConfig(
            Geometry(1, 40), Couplings(), 1.8, 1, 987, np.array([5.0])
        )
        mags = {run_trajectory(cfg, trajectory_index=i).magnetizations[0] for i in range(8)}
        assert len(mags) > 1

    def test_single_spin_noninteracting_randomizes_after_one_step(self):
        # one spin, J = 0: any attempted update flips with probability 1/2,
        # so the exact correct-readout probability is 1/2 at every t >= 1 step
        g = Geometry(1, 1)
        cfg_template = dict(geometry=g, couplings=Couplings(J=0.0), kT=1.0, encoded_bit=1)
        correct = 0
        trials = 4000
        for i in range(trials):
            cfg = TrajectoryConfig(**cfg_template, master_seed=55, sample_times=np.array([3.0]))
            correct += bool(run_trajectory(cfg, trajectory_index=i).readouts[0])
        assert abs(correct - trials / 2) < 5 * math.sqrt(trials * 0.25)
