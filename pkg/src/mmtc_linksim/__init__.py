"""Grant-free mMTC uplink link simulator.

Traffic and channel generation, metadata-based channel estimation, the
activity-aware adaptive list decision-feedback detector with its baselines,
LDPC coding with iterative detection and decoding, analytic models and a
seeded Monte Carlo harness.
"""
from ._validation import NotFittedError, ParameterError
from .analysis import (
    FlopReport,
    RateReport,
    diversity_order,
    diversity_steps,
    flop_count,
    sinr_imperfect,
    sinr_perfect,
    sum_rate,
)
from .baselines import (
    LinearMMSE,
    aa_rls_df_detect,
    aa_rls_linear_detect,
    lmmse_detect,
    oracle_lmmse_detect,
)
from .config import SystemConfig
from .detector import AAVGLDF, DetectionResult, detect_slot, run_detector
from .harness import ExperimentSpec, ResultSeries, parse_config, preset, run_experiment
from .idd import GaussianMoments, LlrFrame, awgn_moments, extrinsic_llr, idd_loop, symbol_priors
from .ldpc import ParityMatrix, build_ldpc, read_alist, spa_decode, write_alist
from .metadata import build_codebook, collision_report, lmmse_channel_estimate
from .modulation import AugmentedAlphabet
from .traffic import beta_binomial_pmf, draw_profiles, generate_slot

__version__ = "0.1.0"

__all__ = [
    "AAVGLDF",
    "AugmentedAlphabet",
    "DetectionResult",
    "ExperimentSpec",
    "FlopReport",
    "GaussianMoments",
    "LinearMMSE",
    "LlrFrame",
    "NotFittedError",
    "ParameterError",
    "ParityMatrix",
    "RateReport",
    "ResultSeries",
    "SystemConfig",
    "aa_rls_df_detect",
    "aa_rls_linear_detect",
    "awgn_moments",
    "beta_binomial_pmf",
    "build_codebook",
    "build_ldpc",
    "collision_report",
    "detect_slot",
    "diversity_order",
    "diversity_steps",
    "draw_profiles",
    "extrinsic_llr",
    "flop_count",
    "generate_slot",
    "idd_loop",
    "lmmse_channel_estimate",
    "lmmse_detect",
    "oracle_lmmse_detect",
    "parse_config",
    "preset",
    "read_alist",
    "run_detector",
    "run_experiment",
    "sinr_imperfect",
    "sinr_perfect",
    "spa_decode",
    "sum_rate",
    "symbol_priors",
    "write_alist",
]
