"""Exact master-equation propagation over all 2^N spin configurations.

Ground truth for small lattices: the one-Monte-Carlo-step transition
operator (uniform site choice times Glauber acceptance) is applied to the
full probability vector over configurations, indexed by spin bitmask
(bit i set <=> s_i = +1).  This mirrors the sampling engine's per-step
semantics exactly, so Monte-Carlo estimates can be validated step-exactly
rather than asymptotically.

Dense matrices are used up to a configurable site count (default 12) and a
matrix-free operator beyond that, up to the hard cap (default 16).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import flip_probability, steps_for_times
from .fidelity import FidelityCurve
from .lattice import Couplings, Geometry, TieRule, bond_table, neighbor_table

__all__ = [
    "ExactDistribution",
    "TransitionOperator",
    "build_transition_operator",
    "enumerate_energies",
    "boltzmann_distribution",
    "state_magnetizations",
    "majority_weights",
    "exact_fidelity",
    "equilibrium_fidelity",
    "stationarity_residual",
    "power_iteration",
    "DENSE_SITE_CAP",
    "ORACLE_SITE_CAP",
]

DENSE_SITE_CAP = 12
ORACLE_SITE_CAP = 16


@dataclass
class ExactDistribution:
    """Probability vector over the 2^N configurations of a lattice."""

    geometry: Geometry
    probabilities: np.ndarray

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        expected = 1 << self.geometry.n_sites
        if self.probabilities.shape != (expected,):
            raise ValueError(f"probabilities must have length {expected}")
        if np.any(self.probabilities < -1e-15):
            raise ValueError("probabilities must be nonnegative")
        total = float(self.probabilities.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {total}")


def _spins_by_site(n_sites: int) -> np.ndarray:
    """(n_sites, 2^N) array of spin values; row i is s_i over all bitmasks."""
    masks = np.arange(1 << n_sites, dtype=np.int64)
    return np.stack([2 * ((masks >> i) & 1) - 1 for i in range(n_sites)]).astype(np.int64)


def enumerate_energies(geometry: Geometry, couplings: Couplings) -> np.ndarray:
    """Energy of every configuration, indexed by spin bitmask."""
    _check_cap(geometry.n_sites, ORACLE_SITE_CAP)
    spins = _spins_by_site(geometry.n_sites)
    bonds = bond_table(geometry)
    energy = np.zeros(spins.shape[1], dtype=np.float64)
    for a, b in bonds:
        energy -= couplings.J * (spins[a] * spins[b])
    energy -= couplings.h * spins.sum(axis=0)
    return energy


def boltzmann_distribution(geometry: Geometry, couplings: Couplings, kT: float) -> ExactDistribution:
    """Normalized Boltzmann weights exp(-E/kT) over all configurations."""
    if kT <= 0:
        raise ValueError(f"kT must be positive, got {kT}")
    energy = enumerate_energies(geometry, couplings)
    w = np.exp(-(energy - energy.min()) / kT)
    return ExactDistribution(geometry, w / w.sum())


def state_magnetizations(geometry: Geometry) -> np.ndarray:
    """Total magnetization of every configuration, indexed by bitmask."""
    return _spins_by_site(geometry.n_sites).sum(axis=0)


def majority_weights(geometry: Geometry, encoded_bit: int, tie_rule: TieRule) -> np.ndarray:
    """Per-configuration probability that majority readout returns the encoded bit.

    1 for a correct-sign majority, 0 for a wrong-sign majority; an exactly
    split configuration contributes 1/2 under RANDOM_CHOICE, 0 under
    DECLARE_FAILURE and 1 under COUNT_AS_CORRECT.
    """
    mags = state_magnetizations(geometry)
    correct = (mags > 0) if encoded_bit == 1 else (mags < 0)
    w = correct.astype(np.float64)
    tie_value = {
        TieRule.RANDOM_CHOICE: 0.5,
        TieRule.DECLARE_FAILURE: 0.0,
        TieRule.COUNT_AS_CORRECT: 1.0,
    }[tie_rule]
    w[mags == 0] = tie_value
    return w


def _check_cap(n_sites: int, cap: int) -> None:
    if n_sites > cap:
        raise ValueError(f"exact enumeration supports at most {cap} sites, got {n_sites}")


class TransitionOperator:
    """One-MC-step linear operator on configuration probability vectors.

    apply(p)[b] = sum over ways of reaching b in one attempted update:
    staying put (no site flipped) or arriving from the state differing at
    one site, each site proposed with probability 1/N and accepted with
    the Glauber probability of the corresponding energy change.
    """

    def __init__(self, geometry: Geometry, couplings: Couplings, kT: float,
                 dense_cap: int = DENSE_SITE_CAP):
        _check_cap(geometry.n_sites, ORACLE_SITE_CAP)
        if kT <= 0:
            raise ValueError(f"kT must be positive, got {kT}")
        self.geometry = geometry
        self.couplings = couplings
        self.kT = kT
        n = geometry.n_sites
        size = 1 << n
        spins = _spins_by_site(n)
        nbr, count = neighbor_table(geometry)
        # rate[i, m]: probability that one MC step flips site i of state m
        rate = np.empty((n, size), dtype=np.float64)
        for i in range(n):
            acc = np.zeros(size, dtype=np.int64)
            for k in range(count[i]):
                acc += spins[nbr[i, k]]
            de = 2.0 * spins[i] * (couplings.J * acc.astype(np.float64) + couplings.h)
            rate[i] = _glauber_array(de, kT) / n
        self._rate = rate
        self._stay = 1.0 - rate.sum(axis=0)
        self.size = size
        self.matrix: np.ndarray | None = None
        if n <= dense_cap:
            masks = np.arange(size, dtype=np.int64)
            m = np.zeros((size, size), dtype=np.float64)
            m[masks, masks] = self._stay
            for i in range(n):
                m[masks ^ (1 << i), masks] += rate[i]
            self.matrix = m
        self._power_cache: list[np.ndarray] = []
        self.power_colsum_error = 0.0

    def apply(self, p: np.ndarray) -> np.ndarray:
        """One step: p -> T p."""
        if self.matrix is not None:
            return self.matrix @ p
        out = self._stay * p
        masks = np.arange(self.size, dtype=np.int64)
        for i in range(self.geometry.n_sites):
            out[masks ^ (1 << i)] += self._rate[i] * p
        return out

    def _power(self, k: int) -> np.ndarray:
        """Dense T^(2^k), cached; tracks worst column-sum deviation from 1."""
        if self.matrix is None:
            raise RuntimeError("matrix powers require the dense representation")
        while len(self._power_cache) <= k:
            prev = self._power_cache[-1] if self._power_cache else self.matrix
            sq = prev @ prev
            dev = float(np.abs(sq.sum(axis=0) - 1.0).max())
            self.power_colsum_error = max(self.power_colsum_error, dev)
            if dev > 1e-9:
                raise RuntimeError(
                    f"repeated squaring lost stochasticity (column-sum error {dev:.3e})"
                )
            self._power_cache.append(sq)
        return self._power_cache[k]

    def propagate(self, p: np.ndarray, n_steps: int, squaring_threshold: int = 4096) -> np.ndarray:
        """Advance a probability vector by n_steps MC steps, without renormalizing.

        Uses step-by-step application, or binary-power matrix-vector
        products in dense mode when n_steps is large.
        """
        if n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        if self.matrix is not None and n_steps > squaring_threshold:
            bit = 0
            rem = n_steps
            while rem:
                if rem & 1:
                    p = (self._power(bit - 1) @ p) if bit else (self.matrix @ p)
                rem >>= 1
                bit += 1
            return p
        for _ in range(n_steps):
            p = self.apply(p)
        return p


def _glauber_array(de: np.ndarray, kT: float) -> np.ndarray:
    x = np.clip(de / kT, -745.0, 745.0)
    out = np.empty_like(x)
    pos = x >= 0
    e = np.exp(-x[pos])
    out[pos] = e / (1.0 + e)
    out[~pos] = 1.0 / (1.0 + np.exp(x[~pos]))
    return out


def build_transition_operator(
    geometry: Geometry,
    couplings: Couplings,
    kT: float,
    dense_cap: int = DENSE_SITE_CAP,
) -> TransitionOperator:
    """Construct the one-step operator (dense below dense_cap sites)."""
    return TransitionOperator(geometry, couplings, kT, dense_cap=dense_cap)


def stationarity_residual(op: TransitionOperator, dist: ExactDistribution) -> float:
    """max |T p - p|: zero iff the distribution is a fixed point of the step."""
    p = dist.probabilities
    return float(np.abs(op.apply(p) - p).max())


def power_iteration(
    op: TransitionOperator,
    n_iter: int = 2000,
    tol: float = 1e-14,
) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of T by power iteration from the uniform vector."""
    v = np.full(op.size, 1.0 / op.size)
    lam = 1.0
    for _ in range(n_iter):
        w = op.apply(v)
        lam = float(w @ v / (v @ v))
        nrm = float(np.linalg.norm(w))
        w /= nrm
        if float(np.abs(w - v).max()) < tol:
            v = w
            break
        v = w
    return lam, v / v.sum()


def exact_fidelity(
    geometry: Geometry,
    couplings: Couplings,
    kT: float,
    sample_times: np.ndarray,
    tie_rule: TieRule = TieRule.DECLARE_FAILURE,
    encoded_bit: int = 1,
    dense_cap: int = DENSE_SITE_CAP,
) -> FidelityCurve:
    """Exact F(t) by propagating the point mass on the encoded configuration.

    Sample time t is reached after ceil(t * N) operator applications, the
    same step mapping as the Monte-Carlo engine.  The returned curve is
    flagged exact (sigma is identically zero, ensemble_size 0).
    """
    _check_cap(geometry.n_sites, ORACLE_SITE_CAP)
    times = np.asarray(sample_times, dtype=np.float64)
    if times.size == 0 or np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ValueError("sample_times must be nonempty, nonnegative, strictly ascending")
    op = build_transition_operator(geometry, couplings, kT, dense_cap=dense_cap)
    n = geometry.n_sites
    start = (1 << n) - 1 if encoded_bit == 1 else 0
    p = np.zeros(op.size, dtype=np.float64)
    p[start] = 1.0
    w = majority_weights(geometry, encoded_bit, tie_rule)
    steps = steps_for_times(times, n)
    f = np.empty(times.size, dtype=np.float64)
    done = 0
    for k, target in enumerate(steps):
        p = op.propagate(p, int(target - done))
        done = int(target)
        f[k] = float(np.clip(w @ p, 0.0, 1.0))
    return FidelityCurve(
        times=times.copy(),
        fidelity=f,
        sigma=np.zeros(times.size),
        ensemble_size=0,
        geometry=geometry,
        couplings=couplings,
        kT=kT,
        encoded_bit=encoded_bit,
        tie_rule=tie_rule,
        master_seed=0,
        exact=True,
    )


def equilibrium_fidelity(
    geometry: Geometry,
    couplings: Couplings,
    kT: float,
    tie_rule: TieRule = TieRule.DECLARE_FAILURE,
    encoded_bit: int = 1,
) -> float:
    """Boltzmann-weighted probability that majority readout returns the encoded bit."""
    pi = boltzmann_distribution(geometry, couplings, kT)
    w = majority_weights(geometry, encoded_bit, tie_rule)
    return float(w @ pi.probabilities)
