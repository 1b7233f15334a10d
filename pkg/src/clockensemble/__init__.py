"""Atomic-clock ensemble time scales: generalized JST averaging vs. Kalman filtering."""

from clockensemble.model import (
    ClockSpec,
    EnsembleConfig,
    diff_matrix,
    ensemble_matrices,
    observable_decomp,
    pinv_diff,
    process_noise_cov,
    projections,
    transition_matrix,
)
from clockensemble.simulate import NoiseSeeds, Trajectory, run_truth, run_truth_batch
from clockensemble.jst import jst_run
from clockensemble.ckf import canonical_basis, ckf_run, obs_ckf_lifted, obs_ckf_run
from clockensemble.theory import TheoryOracle, li_criterion
from clockensemble.config import ExperimentConfig, load_config, parse_config

__all__ = [
    "ClockSpec",
    "EnsembleConfig",
    "ExperimentConfig",
    "NoiseSeeds",
    "TheoryOracle",
    "Trajectory",
    "canonical_basis",
    "ckf_run",
    "diff_matrix",
    "ensemble_matrices",
    "jst_run",
    "li_criterion",
    "load_config",
    "obs_ckf_lifted",
    "obs_ckf_run",
    "observable_decomp",
    "parse_config",
    "pinv_diff",
    "process_noise_cov",
    "projections",
    "run_truth",
    "run_truth_batch",
    "transition_matrix",
]

__version__ = "0.1.0"
