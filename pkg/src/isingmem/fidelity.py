"""Ensemble fidelity estimation, uncertainty, curve files, and time grids.

The fidelity F(t) is estimated as the fraction of M independently seeded
trajectories whose majority readout returns the encoded bit at time t.
Each point carries the uncertainty

    sigma_F = max( 1/(2M), sqrt(F (1 - F) / M) ),

the larger of the resolution of an M-sample frequency and its binomial
standard error.

Curves are persisted as tab-delimited text with a '#'-prefixed key=value
metadata header; floats are written with repr so files round-trip
losslessly and are byte-identical across reruns of the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import (
    STREAM_DYNAMICS,
    STREAM_PILOT_DYNAMICS,
    STREAM_PILOT_READOUT,
    STREAM_READOUT,
    TrajectoryConfig,
    _resolve_readouts,
    derive_rng,
    flip_table,
    steps_for_times,
)
from .lattice import Couplings, Geometry, TieRule, encode, neighbor_table

__all__ = [
    "FidelityCurve",
    "sigma_f",
    "estimate_fidelity",
    "auto_sample_times",
    "geometric_times",
    "synthetic_binomial_curve",
    "write_curve",
    "read_curve",
    "CurveFormatError",
    "DEFAULT_STEP_CAP",
]

DEFAULT_STEP_CAP = 10**9  # attempted flips per trajectory before truncation

_FORMAT_TAG = "ising_fidelity_curve_v1"


def sigma_f(f: float, m: int) -> float:
    """Eq.-style fidelity uncertainty: max(1/(2M), sqrt(F(1-F)/M))."""
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"F must be in [0, 1], got {f}")
    if m < 1:
        raise ValueError(f"M must be >= 1, got {m}")
    return max(1.0 / (2.0 * m), math.sqrt(f * (1.0 - f) / m))


def _sigma_f_array(f: np.ndarray, m: int) -> np.ndarray:
    return np.maximum(1.0 / (2.0 * m), np.sqrt(f * (1.0 - f) / m))


@dataclass
class FidelityCurve:
    """Sampled fidelity curve with per-point uncertainty and provenance."""

    times: np.ndarray
    fidelity: np.ndarray
    sigma: np.ndarray
    ensemble_size: int
    geometry: Geometry
    couplings: Couplings
    kT: float
    encoded_bit: int
    tie_rule: TieRule
    master_seed: int
    exact: bool = False
    truncated: bool = False

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.fidelity = np.asarray(self.fidelity, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        n = self.times.size
        if self.fidelity.shape != (n,) or self.sigma.shape != (n,):
            raise ValueError("times, fidelity and sigma must have equal length")
        if np.any((self.fidelity < 0) | (self.fidelity > 1)):
            raise ValueError("fidelity values must lie in [0, 1]")
        if not self.exact and np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive for estimated curves")

    @property
    def n_points(self) -> int:
        return self.times.size


def estimate_fidelity(
    config: TrajectoryConfig,
    m: int,
    tie_rule: TieRule = TieRule.DECLARE_FAILURE,
) -> FidelityCurve:
    """Estimate F(t) over an ensemble of m trajectories.

    Trajectory i uses the stream derived from (master_seed, i), so the
    result is independent of execution order and the first m outcomes are
    unchanged if the ensemble is later enlarged.
    """
    if m < 1:
        raise ValueError(f"M must be >= 1, got {m}")
    state0 = encode(config.geometry, config.encoded_bit)
    mag0 = int(np.sum(state0.spins, dtype=np.int64))
    nbr, count = neighbor_table(config.geometry)
    table = flip_table(config.geometry, config.couplings, config.kT)
    steps = config.sample_steps
    counts = np.zeros(steps.size, dtype=np.int64)
    for i in range(m):
        spins = state0.spins.copy()
        rng = derive_rng(config.master_seed, STREAM_DYNAMICS, i)
        mags = _kernels.glauber_run(spins, nbr, count, table, rng, steps, mag0)
        readout_rng = None
        if tie_rule is TieRule.RANDOM_CHOICE:
            readout_rng = derive_rng(config.master_seed, STREAM_READOUT, i)
        counts += _resolve_readouts(mags, config.encoded_bit, tie_rule, readout_rng)
    f = counts / float(m)
    return FidelityCurve(
        times=config.sample_times.copy(),
        fidelity=f,
        sigma=_sigma_f_array(f, m),
        ensemble_size=m,
        geometry=config.geometry,
        couplings=config.couplings,
        kT=config.kT,
        encoded_bit=config.encoded_bit,
        tie_rule=tie_rule,
        master_seed=config.master_seed,
    )


# ---------------------------------------------------------------------------
# sample-time grids


def _snap_to_step_lattice(times: np.ndarray, n_sites: int) -> np.ndarray:
    """Round times onto the step lattice k/N, dropping duplicates, keeping 0."""
    steps = np.unique(np.round(np.asarray(times) * n_sites).astype(np.int64))
    steps = steps[steps >= 0]
    return steps.astype(np.float64) / n_sites


def geometric_times(t_min: float, t_max: float, n_points: int, n_sites: int) -> np.ndarray:
    """Geometric grid from t_min to t_max snapped to the step lattice, with t = 0."""
    if not 0 < t_min < t_max:
        raise ValueError("need 0 < t_min < t_max")
    grid = np.geomspace(t_min, t_max, n_points)
    times = _snap_to_step_lattice(grid, n_sites)
    return np.concatenate(([0.0], times[times > 0]))


class _PilotEnsemble:
    """Small persistent ensemble advanced in rounds by the grid heuristic."""

    def __init__(self, geometry, couplings, kT, encoded_bit, master_seed, size, tie_rule):
        state0 = encode(geometry, encoded_bit)
        self.spins = [state0.spins.copy() for _ in range(size)]
        self.mags = np.full(size, int(np.sum(state0.spins, dtype=np.int64)), dtype=np.int64)
        self.rngs = [derive_rng(master_seed, STREAM_PILOT_DYNAMICS, i) for i in range(size)]
        self.readout_rngs = [
            derive_rng(master_seed, STREAM_PILOT_READOUT, i) for i in range(size)
        ]
        self.nbr, self.count = neighbor_table(geometry)
        self.table = flip_table(geometry, couplings, kT)
        self.encoded_bit = encoded_bit
        self.tie_rule = tie_rule
        self.size = size
        self.steps_done = 0
        self.n_sites = geometry.n_sites

    def advance(self, new_times: np.ndarray) -> np.ndarray:
        """Continue every pilot trajectory up to the given later times; return F."""
        steps_abs = steps_for_times(new_times, self.n_sites)
        rel = steps_abs - self.steps_done
        counts = np.zeros(new_times.size, dtype=np.int64)
        for i in range(self.size):
            mags = _kernels.glauber_run(
                self.spins[i], self.nbr, self.count, self.table,
                self.rngs[i], rel, int(self.mags[i]),
            )
            self.mags[i] = mags[-1]
            rng = self.readout_rngs[i] if self.tie_rule is TieRule.RANDOM_CHOICE else None
            counts += _resolve_readouts(mags, self.encoded_bit, self.tie_rule, rng)
        self.steps_done = int(steps_abs[-1])
        return counts / float(self.size)


def _smooth(values: np.ndarray, window: int = 5) -> np.ndarray:
    if values.size < window:
        return values
    kernel = np.full(window, 1.0 / window)
    out = np.convolve(values, kernel, mode="same")
    # undo the edge dilution of 'same' convolution
    norm = np.convolve(np.ones_like(values), kernel, mode="same")
    return out / norm


def auto_sample_times(
    geometry: Geometry,
    couplings: Couplings,
    kT: float,
    encoded_bit: int,
    master_seed: int,
    *,
    tie_rule: TieRule = TieRule.DECLARE_FAILURE,
    n_points: int = 240,
    pilot_size: int = 256,
    t_initial: float = 4.0,
    t_max: float | None = None,
    step_cap: int = DEFAULT_STEP_CAP,
    plateau_band: float = 0.08,
) -> tuple[np.ndarray, bool]:
    """Build a decay-resolving sample grid; returns (times, truncated).

    A small pilot ensemble (its own seed streams) is advanced in doubling
    rounds until the trailing part of its curve has both decayed and
    flattened, or the per-trajectory step budget is hit (which flags
    truncation).  t_max is then set just past the pilot curve's first
    entry into the plateau band |F - 1/2| <= plateau_band: the fitted
    models carry their information in the decay region, and extending far
    into the plateau lets the effective-spin model's residual misfit there
    dominate a weighted fit.  The final grid is geometric over
    [~, t_max] plus a linear refinement across the observed decay window,
    all snapped to the step lattice.  Deterministic for fixed arguments.
    """
    n = geometry.n_sites
    cap_time = step_cap / n
    truncated = False
    pilot = _PilotEnsemble(geometry, couplings, kT, encoded_bit, master_seed,
                           pilot_size, tie_rule)
    if t_max is None:
        pilot_t: list[float] = []
        pilot_f: list[float] = []
        t_lo_round = 0.0
        t_hi = min(t_initial, cap_time)
        while True:
            start = max(t_lo_round, t_hi / 256.0, 1.0 / n)
            seg = np.geomspace(start, t_hi, 16) if start < t_hi else np.array([t_hi])
            seg = _snap_to_step_lattice(seg, n)
            seg = seg[seg > t_lo_round]
            if seg.size:
                f_seg = pilot.advance(seg)
                pilot_t.extend(seg.tolist())
                pilot_f.extend(f_seg.tolist())
            tail = np.array(pilot_f[-8:])
            prev = np.array(pilot_f[-16:-8])
            sem = 3.0 * math.sqrt(0.25 / (pilot_size * 4))
            if (
                tail.size == 8
                and prev.size == 8
                and tail.mean() <= 0.5 + plateau_band
                and abs(tail.mean() - prev.mean()) <= max(0.03, sem)
            ):
                break
            if t_hi >= cap_time:
                truncated = True
                break
            t_lo_round = t_hi
            t_hi = min(2.0 * t_hi, cap_time)
        pilot_times = np.array(pilot_t)
        pilot_fid = np.array(pilot_f)
        smooth = _smooth(pilot_fid)
        entered = np.nonzero(np.abs(smooth - 0.5) <= plateau_band)[0]
        if truncated or entered.size == 0:
            t_max = cap_time if truncated else t_hi
        else:
            t_max = min(1.15 * float(pilot_times[entered[0]]), t_hi)
    else:
        if t_max * n > step_cap:
            t_max = cap_time
            truncated = True
        pilot_times = _snap_to_step_lattice(
            np.geomspace(max(t_max / 4096.0, 1.0 / n), t_max, 48), n
        )
        pilot_times = pilot_times[pilot_times > 0]
        pilot_fid = pilot.advance(pilot_times)
        smooth = _smooth(pilot_fid)

    # decay window observed by the pilot
    above = pilot_times[smooth >= 0.98]
    below = pilot_times[smooth <= 0.5 + plateau_band]
    t_lo = float(above[-1]) if above.size else max(1.0 / n, t_max / 4096.0)
    t_hi_dec = float(below[0]) if below.size else t_max
    t_lo = max(0.8 * t_lo, 1.0 / n)
    t_hi_dec = min(1.1 * t_hi_dec, t_max)
    if t_hi_dec <= t_lo:
        t_hi_dec = min(4.0 * t_lo, t_max)

    n_geo = n_points // 2
    n_lin = n_points - n_geo
    t_start = max(1.0 / n, t_lo / 30.0)
    parts = [np.array([0.0]), np.geomspace(t_start, t_max, n_geo)]
    if t_hi_dec > t_lo:
        parts.append(np.linspace(t_lo, t_hi_dec, n_lin))
    times = _snap_to_step_lattice(np.concatenate(parts), n)
    return times, truncated


def synthetic_binomial_curve(
    times: np.ndarray,
    f_true: np.ndarray,
    m: int,
    seed: int,
    geometry: Geometry,
    kT: float = 1.0,
    tie_rule: TieRule = TieRule.RANDOM_CHOICE,
) -> FidelityCurve:
    """Curve with independent Binomial(m, F_true)/m values at each time.

    Forward-model generator used for fit-calibration studies; the noise is
    independent across times, unlike a shared-ensemble MC curve.
    """
    rng = derive_rng(seed, STREAM_DYNAMICS, 0)
    f_true = np.asarray(f_true, dtype=np.float64)
    f = rng.binomial(m, f_true) / float(m)
    return FidelityCurve(
        times=np.asarray(times, dtype=np.float64),
        fidelity=f,
        sigma=_sigma_f_array(f, m),
        ensemble_size=m,
        geometry=geometry,
        couplings=Couplings(),
        kT=kT,
        encoded_bit=1,
        tie_rule=tie_rule,
        master_seed=seed,
    )


# ---------------------------------------------------------------------------
# curve files


class CurveFormatError(ValueError):
    """Raised when a curve file does not parse; carries the offending line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def _fmt(x: float) -> str:
    return repr(float(x))


def curve_metadata(curve: FidelityCurve) -> dict[str, str]:
    return {
        "format": _FORMAT_TAG,
        "dimension": str(curve.geometry.dimension),
        "side_length": str(curve.geometry.side_length),
        "coupling_j": _fmt(curve.couplings.J),
        "field_h": _fmt(curve.couplings.h),
        "kT": _fmt(curve.kT),
        "encoded_bit": str(curve.encoded_bit),
        "ensemble_size": str(curve.ensemble_size),
        "master_seed": str(curve.master_seed),
        "tie_rule": curve.tie_rule.value,
        "exact": "true" if curve.exact else "false",
        "truncated": "true" if curve.truncated else "false",
    }


def write_curve(curve: FidelityCurve, path, extra_metadata: dict[str, str] | None = None) -> None:
    """Write a curve file: '# key=value' header then tab-separated t, F, sigma_F rows."""
    meta = curve_metadata(curve)
    if extra_metadata:
        meta.update(extra_metadata)
    lines = [f"# {k}={v}" for k, v in meta.items()]
    lines.append("# columns=t\tF\tsigma_F")
    for t, f, s in zip(curve.times, curve.fidelity, curve.sigma):
        lines.append(f"{_fmt(t)}\t{_fmt(f)}\t{_fmt(s)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_curve(path) -> FidelityCurve:
    """Parse a curve file written by write_curve."""
    meta: dict[str, str] = {}
    times: list[float] = []
    fid: list[float] = []
    sig: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise CurveFormatError(f"expected 3 tab-separated values, got {len(fields)}", ln)
            try:
                t, f, s = (float(x) for x in fields)
            except ValueError as exc:
                raise CurveFormatError(str(exc), ln) from None
            times.append(t)
            fid.append(f)
            sig.append(s)
    if meta.get("format") != _FORMAT_TAG:
        raise CurveFormatError(f"missing or unknown format tag {meta.get('format')!r}", 1)
    try:
        geometry = Geometry(int(meta["dimension"]), int(meta["side_length"]))
        couplings = Couplings(float(meta["coupling_j"]), float(meta["field_h"]))
        curve = FidelityCurve(
            times=np.array(times),
            fidelity=np.array(fid),
            sigma=np.array(sig),
            ensemble_size=int(meta["ensemble_size"]),
            geometry=geometry,
            couplings=couplings,
            kT=float(meta["kT"]),
            encoded_bit=int(meta["encoded_bit"]),
            tie_rule=TieRule(meta["tie_rule"]),
            master_seed=int(meta["master_seed"]),
            exact=meta.get("exact") == "true",
            truncated=meta.get("truncated") == "true",
        )
    except KeyError as exc:
        raise CurveFormatError(f"missing metadata key {exc}", 1) from None
    return curve
