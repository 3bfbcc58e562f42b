"""Scenario configuration.

``SystemConfig`` carries every scalar that defines one simulated scenario.
Defaults follow the numerical-results setup (lambda=0.92, gamma=0.001,
xi=10, Beta(4, 8) activity, powers in [0.1, 0.3], 60 metadata + 68 data
symbols) at a reduced desk-scale size of N=16 devices and M=8 antennas.
"""
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from ._validation import ParameterError, check_interval, check_positive


ATTRACTOR_MODES = ("intent", "printed")
LIST_INPUTS = ("raw", "residual")
PRIOR_PLACEMENTS = ("activity", "printed")
MOMENT_SOURCES = ("filter", "training", "apriori")
ZERO_LLR_MODES = ("soft", "erase")
CODE_FRAMINGS = ("slot", "full")
ESTIMATOR_MODES = ("blind", "genie")
ACTIVITY_MODELS = ("population", "slot")


@dataclass(frozen=True)
class SystemConfig:
    N: int = 16
    M: int = 8
    tau_phi: int = 60
    tau_x: int = 68
    mod_order: int = 4
    bits_per_symbol: int = 2
    snr_db: float = 12.0
    lambda_: float = 0.92
    gamma: float = 0.001
    xi: float = 10.0
    alpha: float = 4.0
    beta: float = 8.0
    power_min: float = 0.1
    power_max: float = 0.3
    seed: int = 0
    # "population": fixed per-device rho, Poisson-binomial counts;
    # "slot": one Beta draw per slot shared by all devices, beta-binomial counts
    activity_model: str = "population"
    # large-scale fading: eta = 10**((large_scale_db + omega) / 10), omega ~ N(0, sigma_omega**2)
    large_scale_db: float = 0.0
    sigma_omega: float = 0.0
    # RLS initialisation P = rho * I / delta_reg
    delta_reg: float = 0.01
    # None -> (1 - mean(rho)) * d_min / 2
    r_th: float | None = None
    ext_list_cap: int = 4
    attractor: str = "intent"
    list_input: str = "raw"
    prior_placement: str = "activity"
    # how the equivalent-channel moments of each filter output are estimated
    moment_source: str = "training"
    channel_estimator: str = "blind"
    llr_clip: float = 30.0
    # decoder input at positions decided as zero: "soft" LLR or "erase"
    zero_llr: str = "soft"
    spa_iters: int = 50
    ldpc_col_weight: int = 6
    # "slot": code of length tau_x * bits with half as many checks;
    # "full": the 128 x 256 code, which needs tau_x = 128
    code_framing: str = "slot"

    def __post_init__(self):
        for name in ("N", "M", "tau_phi", "tau_x", "mod_order", "bits_per_symbol"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value!r}")
        if self.mod_order != 4 or self.bits_per_symbol != 2:
            raise ParameterError("only QPSK (mod_order=4, bits_per_symbol=2) is supported")
        check_interval(self.lambda_, "lambda", 0.0, 1.0, low_closed=False)
        check_positive(self.gamma, "gamma")
        check_positive(self.xi, "xi")
        check_positive(self.alpha, "alpha")
        check_positive(self.beta, "beta")
        check_positive(self.power_min, "power_min")
        if self.power_max < self.power_min:
            raise ParameterError("power_max must be >= power_min")
        check_positive(self.sigma_omega, "sigma_omega", strict=False)
        check_positive(self.delta_reg, "delta_reg")
        if self.r_th is not None:
            check_interval(self.r_th, "r_th", 0.0, 1.0)
        if self.ext_list_cap < 0:
            raise ParameterError("ext_list_cap must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")
        for name, allowed in (
            ("attractor", ATTRACTOR_MODES),
            ("list_input", LIST_INPUTS),
            ("prior_placement", PRIOR_PLACEMENTS),
            ("moment_source", MOMENT_SOURCES),
            ("zero_llr", ZERO_LLR_MODES),
            ("code_framing", CODE_FRAMINGS),
            ("channel_estimator", ESTIMATOR_MODES),
            ("activity_model", ACTIVITY_MODELS),
        ):
            if getattr(self, name) not in allowed:
                raise ParameterError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        check_positive(self.llr_clip, "llr_clip")
        if self.spa_iters < 1:
            raise ParameterError("spa_iters must be >= 1")
        if not 2 <= self.ldpc_col_weight:
            raise ParameterError("ldpc_col_weight must be >= 2")

    @property
    def tau(self):
        return self.tau_phi + self.tau_x

    @property
    def snr_linear(self):
        return 10.0 ** (self.snr_db / 10.0)

    def noise_variance(self, rate=1.0):
        """Noise variance giving average SNR ``10 log10(N R sigma_x^2 / sigma_v^2)``, sigma_x^2 = 1."""
        return self.N * rate / self.snr_linear

    def replace(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return asdict(self)

    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in fields(cls)}


def mean_activity(alpha, beta):
    return alpha / (alpha + beta)


def default_reliability_radius(rho, d_min):
    """``(1 - mean(rho)) * d_min / 2``: shrinks the reliable region as activity grows."""
    return float((1.0 - np.mean(rho)) * d_min / 2.0)
