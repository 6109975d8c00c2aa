"""Numba-compiled inner loops of the Glauber Monte-Carlo engine.

The kernel consumes exactly two Generator draws per attempted update, in
this order: a uniform for the site choice (site = floor(u * N)), then a
uniform for the flip decision.  The pure-Python reference step in
`dynamics.mc_step` consumes the identical stream, so kernel trajectories
are bit-for-bit reproducible against the reference implementation.

Flip probabilities are looked up from a small precomputed table indexed by
(current spin, neighbour spin sum); with at most 4 neighbours the sum lies
in [-4, 4].
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["glauber_run"]


@njit(cache=True, nogil=True)
def glauber_run(spins, nbr, nbr_count, flip_table, rng, sample_steps, mag):
    """Advance one trajectory in place, recording magnetization at sample points.

    Parameters
    ----------
    spins : int8[n], mutated in place
    nbr, nbr_count : neighbour table (int64[n, 4], int64[n])
    flip_table : float64[2, 9]; flip_table[(s+1)//2, acc+4] is the flip
        probability for a site with spin s and neighbour sum acc
    rng : np.random.Generator owned by this trajectory
    sample_steps : int64[k], ascending cumulative step counts (relative to
        the current position of the trajectory)
    mag : current total magnetization of `spins`

    Returns
    -------
    int64[k] magnetization recorded after each entry of sample_steps.
    """
    n = spins.shape[0]
    n_samples = sample_steps.shape[0]
    out = np.empty(n_samples, np.int64)
    step = np.int64(0)
    for k in range(n_samples):
        target = sample_steps[k]
        while step < target:
            site = np.int64(rng.random() * n)
            u = rng.random()
            acc = np.int64(0)
            for j in range(nbr_count[site]):
                acc += spins[nbr[site, j]]
            if u < flip_table[(spins[site] + 1) >> 1, acc + 4]:
                s_new = -spins[site]
                spins[site] = s_new
                mag += 2 * np.int64(s_new)
            step += 1
        out[k] = mag
    return out
