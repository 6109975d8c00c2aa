"""Ising-ferromagnet bit storage: Glauber Monte Carlo, fidelity, model fits.

A lattice of coupled spins stores one bit in its two ordered ground
states; thermal Glauber dynamics degrades it and majority voting reads it
back.  This package estimates the retrieval fidelity F(t) over seeded
trajectory ensembles, validates the sampler against exact master-equation
propagation for small lattices, fits the effective-spin Gaussian model
(n_eff, lambda) and the single-spin exponential law to the curves, and
orchestrates (dimension, N, kT) sweeps with scaling analyses.
"""

from .dynamics import (
    ONSAGER_KT_C,
    TrajectoryConfig,
    TrajectoryResult,
    derive_rng,
    flip_probability,
    mc_step,
    run_trajectory,
)
from .fidelity import (
    FidelityCurve,
    auto_sample_times,
    estimate_fidelity,
    geometric_times,
    read_curve,
    sigma_f,
    synthetic_binomial_curve,
    write_curve,
)
from .fitting import (
    LinearFit,
    ModelFit,
    ModelKind,
    NoDecayError,
    ScalingClassification,
    ScalingVerdict,
    chi_squared,
    classify_lambda_scaling,
    fit_exponential_model,
    fit_gaussian_model,
    fit_linear,
)
from .lattice import (
    Couplings,
    Geometry,
    SpinState,
    TieRule,
    delta_energy,
    encode,
    magnetization,
    majority_readout,
    total_energy,
)
from .models import (
    ModelParams,
    binomial_fidelity,
    binomial_tie_probability,
    binomial_vs_gaussian_gap,
    effective_spin_fidelity,
    exponential_fidelity,
    gaussian_fidelity,
    odd_flip_probability,
)
from .oracle import (
    ExactDistribution,
    boltzmann_distribution,
    build_transition_operator,
    equilibrium_fidelity,
    exact_fidelity,
    power_iteration,
    stationarity_residual,
)
from .sweep import SweepSpec, SweepResult, run_sweep, scaling_report

__version__ = "0.1.0"
