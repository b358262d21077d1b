"""Spectral tests for Kronecker-structured covariance of matrix-valued observations."""
from .asymptotics import MomentPair, closed_form_moments, kernel_Lambda, limiting_moments, mean_correction, variance_general
from .bootstrap import BootstrapResult, bootstrap_distribution, run_bootstrap_test
from .data import (
    FormatError,
    KroneckerModel,
    MatrixDataset,
    TestReport,
    block_sigma_v,
    generate_dataset,
    load_dataset,
    load_matrix,
    sym_sqrt,
    write_dataset,
    write_matrix,
)
from .engine import TestConfig, alternative_scenarios, run_test
from .estimators import NuisanceEstimates, estimate_nuisance, estimate_sigma_v
from .harness import SimulationConfig, SizePowerTable, run_simulation
from .laws import EntryLaw
from .noise import estimate_sigma_beta, remove_common_noise, run_noised_test
from .spectral import SpectralSystem, lss, renormalized_cov, semicircle_integral, solve_stieltjes, spectral_function, whiten

__version__ = "0.1.0"
