"""Spin lattices with free boundaries: geometry, energies, and majority readout.

Supports 1D chains and 2D square lattices of N spins s_i = +/-1 with the
energy  H = -J * sum_<i,j> s_i s_j  -  h * sum_i s_i,  where the first sum
runs over nearest-neighbour pairs and every bond is counted once.  Free
boundaries mean edge sites simply have fewer neighbours; there is no wrap.

Sites are indexed row-major in 2D (site = row * L + col).  Neighbour and
bond tables are precomputed once per geometry because the local energy
difference is the hot path of the Monte-Carlo engine.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Geometry",
    "Couplings",
    "SpinState",
    "TieRule",
    "encode",
    "total_energy",
    "delta_energy",
    "magnetization",
    "majority_readout",
    "readout_correct",
    "neighbor_table",
    "bond_table",
    "MAX_NEIGHBORS",
]

# 2D square lattice interior sites have 4 neighbours; 1D has 2.
MAX_NEIGHBORS = 4


@dataclass(frozen=True)
class Geometry:
    """Lattice shape: a chain (dimension=1) or square (dimension=2) of side L."""

    dimension: int
    side_length: int

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.side_length < 1:
            raise ValueError(f"side_length must be >= 1, got {self.side_length}")

    @property
    def n_sites(self) -> int:
        return self.side_length**self.dimension


@dataclass(frozen=True)
class Couplings:
    """Bond strength J and external field h, in energy units (kB = 1).

    The validated operating point is J = 1, h = 0; other values are accepted
    by every routine but only the h = 0 behaviour is exercised by the
    shipped experiment configurations.
    """

    J: float = 1.0
    h: float = 0.0


@dataclass
class SpinState:
    """Spin configuration on a lattice; `spins` is an int8 array of +/-1."""

    geometry: Geometry
    spins: np.ndarray

    def __post_init__(self):
        self.spins = np.asarray(self.spins, dtype=np.int8)
        if self.spins.shape != (self.geometry.n_sites,):
            raise ValueError(
                f"spins must have shape ({self.geometry.n_sites},), got {self.spins.shape}"
            )
        if not np.all(np.abs(self.spins) == 1):
            raise ValueError("spins must all be +1 or -1")

    def copy(self) -> "SpinState":
        return SpinState(self.geometry, self.spins.copy())


class TieRule(enum.Enum):
    """What majority readout reports when the vote is exactly split.

    RANDOM_CHOICE  - pick the bit uniformly at random (correct w.p. 1/2)
    DECLARE_FAILURE - report corruption, equivalent to reading the wrong bit
    COUNT_AS_CORRECT - resolve the split in favour of the encoded bit, i.e.
        the memory survives as long as at most half the spins disagree.
    """

    RANDOM_CHOICE = "random_choice"
    DECLARE_FAILURE = "declare_failure"
    COUNT_AS_CORRECT = "count_as_correct"


@lru_cache(maxsize=None)
def _tables(dimension: int, side_length: int):
    L = side_length
    n = L**dimension
    nbr = np.full((n, MAX_NEIGHBORS), -1, dtype=np.int64)
    count = np.zeros(n, dtype=np.int64)
    bonds = []
    if dimension == 1:
        for s in range(n):
            for t in (s - 1, s + 1):
                if 0 <= t < n:
                    nbr[s, count[s]] = t
                    count[s] += 1
            if s + 1 < n:
                bonds.append((s, s + 1))
    else:
        for i in range(L):
            for j in range(L):
                s = i * L + j
                for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    ni, nj = i + di, j + dj
                    if 0 <= ni < L and 0 <= nj < L:
                        nbr[s, count[s]] = ni * L + nj
                        count[s] += 1
                if j + 1 < L:
                    bonds.append((s, s + 1))
                if i + 1 < L:
                    bonds.append((s, s + L))
    bond_arr = np.asarray(bonds, dtype=np.int64).reshape(-1, 2)
    nbr.setflags(write=False)
    count.setflags(write=False)
    bond_arr.setflags(write=False)
    return nbr, count, bond_arr


def neighbor_table(geometry: Geometry) -> tuple[np.ndarray, np.ndarray]:
    """Return (neighbors, counts): neighbors[s, :counts[s]] lists site s's neighbours."""
    nbr, count, _ = _tables(geometry.dimension, geometry.side_length)
    return nbr, count


def bond_table(geometry: Geometry) -> np.ndarray:
    """Return the (n_bonds, 2) array of nearest-neighbour pairs, each bond once."""
    return _tables(geometry.dimension, geometry.side_length)[2]


def encode(geometry: Geometry, bit: int) -> SpinState:
    """Prepare the ground state that stores `bit`: all spins +1 for 1, all -1 for 0."""
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit}")
    value = 1 if bit == 1 else -1
    return SpinState(geometry, np.full(geometry.n_sites, value, dtype=np.int8))


def total_energy(state: SpinState, couplings: Couplings) -> float:
    """Energy -J * sum_bonds s_a s_b - h * sum_i s_i (each bond counted once)."""
    bonds = bond_table(state.geometry)
    s = state.spins
    bond_sum = 0.0
    if bonds.size:
        bond_sum = float(np.sum(s[bonds[:, 0]].astype(np.int64) * s[bonds[:, 1]]))
    return -couplings.J * bond_sum - couplings.h * float(np.sum(s, dtype=np.int64))


def delta_energy(state: SpinState, site: int, couplings: Couplings) -> float:
    """Energy change from flipping `site`: 2 * s_site * (J * sum_nbr s + h).

    Local O(neighbour-count) evaluation; equals
    total_energy(state with site flipped) - total_energy(state).
    """
    n = state.geometry.n_sites
    if not 0 <= site < n:
        raise IndexError(f"site {site} out of range for {n} sites")
    nbr, count = neighbor_table(state.geometry)
    s = state.spins
    acc = 0
    for k in range(count[site]):
        acc += s[nbr[site, k]]
    return 2.0 * float(s[site]) * (couplings.J * float(acc) + couplings.h)


def magnetization(state: SpinState) -> int:
    """Total magnetization sum_i s_i."""
    return int(np.sum(state.spins, dtype=np.int64))


def readout_correct(
    mag: int,
    encoded_bit: int,
    tie_rule: TieRule,
    rng: np.random.Generator | None = None,
) -> bool:
    """Majority-vote verdict from a magnetization value; True means the bit survived."""
    if mag != 0:
        inferred = 1 if mag > 0 else 0
        return inferred == encoded_bit
    if tie_rule is TieRule.DECLARE_FAILURE:
        return False
    if tie_rule is TieRule.COUNT_AS_CORRECT:
        return True
    if rng is None:
        raise ValueError("RANDOM_CHOICE tie resolution requires an rng")
    return bool(rng.random() < 0.5)


def majority_readout(
    state: SpinState,
    encoded_bit: int,
    tie_rule: TieRule,
    rng: np.random.Generator | None = None,
) -> bool:
    """Retrieve the stored bit by majority vote; ties resolved per `tie_rule`."""
    if encoded_bit not in (0, 1):
        raise ValueError(f"encoded_bit must be 0 or 1, got {encoded_bit}")
    return readout_correct(magnetization(state), encoded_bit, tie_rule, rng)
