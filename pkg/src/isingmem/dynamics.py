"""Single-spin-flip Glauber dynamics with deterministic, splittable seeding.

One Monte-Carlo step picks a site uniformly at random and flips it with
probability 1 / (1 + exp(dE / kT)), which satisfies detailed balance with
respect to the Boltzmann distribution.  Physical time is measured in
attempted updates per site: t = (MC steps) / N, so sample time t maps to
ceil(t * N) cumulative steps.

Randomness is organised as independent per-trajectory streams derived from
a single 64-bit master seed via numpy's SeedSequence spawn keys:

    stream(kind, i) = PCG64(SeedSequence(master_seed, spawn_key=(kind, i)))

with kind 0 for trajectory dynamics, 1 for readout tie-breaking, and 2/3
for the pilot ensemble used by the adaptive time-grid heuristic.  Streams
are therefore addressable out of order, which makes ensembles reproducible
and independent of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .lattice import (
    Couplings,
    Geometry,
    SpinState,
    TieRule,
    delta_energy,
    encode,
    magnetization,
    neighbor_table,
    readout_correct,
)

__all__ = [
    "ONSAGER_KT_C",
    "TrajectoryConfig",
    "TrajectoryResult",
    "flip_probability",
    "mc_step",
    "run_trajectory",
    "derive_rng",
    "steps_for_times",
    "flip_table",
    "STREAM_DYNAMICS",
    "STREAM_READOUT",
    "STREAM_PILOT_DYNAMICS",
    "STREAM_PILOT_READOUT",
]

# Critical temperature of the infinite 2D square lattice, kT_c / J:
# tanh(2J/kT_c) = 1/sqrt(2)  =>  kT_c/J = 2/ln(1 + sqrt(2)) ~= 2.269185
ONSAGER_KT_C = 2.0 / math.log(1.0 + math.sqrt(2.0))

# Spawn-key stream kinds (first component of the SeedSequence spawn key).
STREAM_DYNAMICS = 0
STREAM_READOUT = 1
STREAM_PILOT_DYNAMICS = 2
STREAM_PILOT_READOUT = 3


def derive_rng(master_seed: int, stream: int, index: int) -> np.random.Generator:
    """Independent PCG64 stream addressed by (stream kind, trajectory index)."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream, index))
    return np.random.Generator(np.random.PCG64(ss))


def flip_probability(delta_e: float, kT: float) -> float:
    """Glauber acceptance 1 / (1 + exp(delta_e / kT)).

    Evaluated via the overflow-safe branch on the sign of delta_e / kT, so
    arguments of any magnitude saturate cleanly to 0 or 1.
    """
    if kT <= 0:
        raise ValueError(f"kT must be positive, got {kT}")
    x = delta_e / kT
    if x >= 0:
        if x > 745.0:  # exp underflows to 0
            return 0.0
        e = math.exp(-x)
        return e / (1.0 + e)
    if x < -745.0:
        return 1.0
    return 1.0 / (1.0 + math.exp(x))


def flip_table(geometry: Geometry, couplings: Couplings, kT: float) -> np.ndarray:
    """Precompute flip probabilities for all (spin, neighbour-sum) combinations.

    Index [ (s+1)//2, acc+4 ] for s in {-1,+1} and acc in [-4, 4]; entries
    are produced by `flip_probability` so the table is exactly consistent
    with the reference step.
    """
    table = np.empty((2, 2 * 4 + 1), dtype=np.float64)
    for s_idx, s in enumerate((-1, 1)):
        for acc in range(-4, 5):
            de = 2.0 * float(s) * (couplings.J * float(acc) + couplings.h)
            table[s_idx, acc + 4] = flip_probability(de, kT)
    return table


def steps_for_times(sample_times: np.ndarray, n_sites: int) -> np.ndarray:
    """Map physical times to cumulative MC step counts, steps = ceil(t * N).

    A 1e-9 slack absorbs float error so times lying exactly on the step
    lattice (t = k / N) map to k rather than k + 1.
    """
    t = np.asarray(sample_times, dtype=np.float64)
    steps = np.ceil(t * n_sites - 1e-9).astype(np.int64)
    return np.maximum(steps, 0)


@dataclass(frozen=True)
class TrajectoryConfig:
    """Everything that determines a trajectory ensemble, except the trajectory index."""

    geometry: Geometry
    couplings: Couplings
    kT: float
    encoded_bit: int
    master_seed: int
    sample_times: np.ndarray = field(default_factory=lambda: np.array([0.0]))

    def __post_init__(self):
        if self.kT <= 0:
            raise ValueError(f"kT must be positive, got {self.kT}")
        if self.encoded_bit not in (0, 1):
            raise ValueError(f"encoded_bit must be 0 or 1, got {self.encoded_bit}")
        times = np.asarray(self.sample_times, dtype=np.float64)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("sample_times must be a nonempty 1D sequence")
        if times[0] < 0:
            raise ValueError("sample_times must be nonnegative")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample_times must be strictly ascending")
        object.__setattr__(self, "sample_times", times)

    @property
    def sample_steps(self) -> np.ndarray:
        return steps_for_times(self.sample_times, self.geometry.n_sites)


@dataclass
class TrajectoryResult:
    """Per-sample-time record of one trajectory."""

    times: np.ndarray
    magnetizations: np.ndarray
    readouts: np.ndarray  # bool; True = majority vote returned the encoded bit


def mc_step(
    state: SpinState,
    kT: float,
    couplings: Couplings,
    rng: np.random.Generator,
) -> bool:
    """One attempted update of a uniformly chosen site; returns True if it flipped.

    Reference implementation of the engine's step: draws the site-choice
    uniform, then the flip uniform, exactly as the compiled kernel does.
    """
    n = state.geometry.n_sites
    site = int(rng.random() * n)
    u = rng.random()
    p = flip_probability(delta_energy(state, site, couplings), kT)
    if u < p:
        state.spins[site] = -state.spins[site]
        return True
    return False


def _resolve_readouts(
    mags: np.ndarray,
    encoded_bit: int,
    tie_rule: TieRule,
    readout_rng: np.random.Generator | None,
) -> np.ndarray:
    correct = (mags > 0) if encoded_bit == 1 else (mags < 0)
    ties = mags == 0
    n_ties = int(np.count_nonzero(ties))
    if n_ties:
        if tie_rule is TieRule.COUNT_AS_CORRECT:
            correct[ties] = True
        elif tie_rule is TieRule.RANDOM_CHOICE:
            if readout_rng is None:
                raise ValueError("RANDOM_CHOICE tie resolution requires an rng")
            correct[ties] = readout_rng.random(n_ties) < 0.5
        # DECLARE_FAILURE leaves ties marked incorrect
    return correct


def run_trajectory(
    config: TrajectoryConfig,
    tie_rule: TieRule = TieRule.DECLARE_FAILURE,
    trajectory_index: int = 0,
) -> TrajectoryResult:
    """Evolve one seeded trajectory and read it out at every sample time.

    The lattice starts in encode(geometry, encoded_bit); sample time t is
    reached after ceil(t * N) cumulative steps.  Fully deterministic given
    (master_seed, trajectory_index).
    """
    state = encode(config.geometry, config.encoded_bit)
    nbr, count = neighbor_table(config.geometry)
    table = flip_table(config.geometry, config.couplings, config.kT)
    rng = derive_rng(config.master_seed, STREAM_DYNAMICS, trajectory_index)
    mags = _kernels.glauber_run(
        state.spins, nbr, count, table, rng,
        config.sample_steps, magnetization(state),
    )
    readout_rng = None
    if tie_rule is TieRule.RANDOM_CHOICE:
        readout_rng = derive_rng(config.master_seed, STREAM_READOUT, trajectory_index)
    readouts = _resolve_readouts(mags, config.encoded_bit, tie_rule, readout_rng)
    return TrajectoryResult(config.sample_times.copy(), mags, readouts)
