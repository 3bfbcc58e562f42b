"""Device population, activity and channel generation for one transmission slot."""
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ._validation import ParameterError, check_positive, check_random_state
from .config import ACTIVITY_MODELS
from .modulation import AugmentedAlphabet, qpsk_map


def sample_activity_probabilities(alpha, beta, N, rng=None):
    """Draw per-device activity probabilities i.i.d. from Beta(alpha, beta)."""
    check_positive(alpha, "alpha")
    check_positive(beta, "beta")
    rng = check_random_state(rng)
    return rng.beta(alpha, beta, size=int(N))


def _log_binom(N, K):
    return gammaln(N + 1) - gammaln(K + 1) - gammaln(N - K + 1)


def binomial_activity_pmf(K, N, rho):
    """Probability of exactly ``K`` active devices out of ``N`` with common activity ``rho``."""
    K = np.asarray(K)
    if np.any((K < 0) | (K > N)) or np.any(K != np.floor(K)):
        raise ValueError(f"K must be an integer in [0, {N}]")
    if not 0.0 <= rho <= 1.0:
        raise ParameterError(f"rho must lie in [0, 1], got {rho!r}")
    # 0**0 == 1 handles the rho in {0, 1} corners
    return np.exp(_log_binom(N, K)) * rho**K * (1.0 - rho) ** (N - K)


def beta_binomial_pmf(K, N, alpha, beta):
    """Beta-binomial probability of ``K`` active devices among ``N``.

    Evaluated in the log domain over the whole support ``0..N``::

        C(N, K) * Gamma(K + a) Gamma(N - K + b) / Gamma(N + a + b) * Gamma(a + b) / (Gamma(a) Gamma(b))

    and divided by its own sum, which removes the common rounding drift of
    the log-gamma terms so the mass adds up to one at machine precision.
    """
    check_positive(alpha, "alpha")
    check_positive(beta, "beta")
    K = np.asarray(K)
    if np.any((K < 0) | (K > N)) or np.any(K != np.floor(K)):
        raise ValueError(f"K must be an integer in [0, {N}]")
    support = np.arange(N + 1)
    log_p = (
        _log_binom(N, support)
        + gammaln(support + alpha)
        + gammaln(N - support + beta)
        - gammaln(N + alpha + beta)
        + gammaln(alpha + beta)
        - gammaln(alpha)
        - gammaln(beta)
    )
    p = np.exp(log_p)
    p /= p.sum()
    return p[K.astype(np.intp)]


def draw_activity(rho, rng=None, size=None, model="population", alpha=None, beta=None):
    """Activity masks for one or more slots.

    Parameters
    ----------
    rho : ndarray, shape (N,)
        Per-device activity probabilities of the population.
    size : int, optional
        Number of slots; ``None`` returns a single (N,) mask.
    model : {"population", "slot"}
        ``"population"`` draws each device from its own fixed ``rho[n]``, so
        the active count is Poisson-binomial.  ``"slot"`` draws one
        probability from Beta(alpha, beta) per slot, shared by every device,
        which makes the count beta-binomial; ``rho`` then only fixes ``N``.

    Returns
    -------
    ndarray of int8, shape (N,) or (size, N)
    """
    rng = check_random_state(rng)
    rho = np.asarray(rho, dtype=np.float64)
    shape = rho.shape if size is None else (int(size),) + rho.shape
    if model == "population":
        return (rng.random(shape) < rho).astype(np.int8)
    if model == "slot":
        check_positive(alpha, "alpha")
        check_positive(beta, "beta")
        common = rng.beta(alpha, beta, size=None if size is None else (int(size), 1))
        return (rng.random(shape) < common).astype(np.int8)
    raise ParameterError(f"model must be one of {ACTIVITY_MODELS}, got {model!r}")


def sample_large_scale(snr_db, sigma_omega, N, rng=None):
    """Large-scale gains ``eta = 10**((snr_db + omega)/10)`` with ``omega ~ N(0, sigma_omega^2)`` in dB."""
    check_positive(sigma_omega, "sigma_omega", strict=False)
    rng = check_random_state(rng)
    omega = rng.normal(0.0, sigma_omega, size=int(N)) if sigma_omega > 0 else np.zeros(int(N))
    return 10.0 ** ((snr_db + omega) / 10.0)


def draw_fast_fading(M, N, rng):
    return (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))) / np.sqrt(2.0)


def draw_channel(M, eta, rng=None, return_fading=False):
    """Channel matrix whose column ``n`` is ``a_n * sqrt(eta_n)``, ``a_n ~ CN(0, I_M)``."""
    eta = np.asarray(eta, dtype=np.float64)
    if eta.ndim != 1 or np.any(~np.isfinite(eta)) or np.any(eta <= 0):
        raise ParameterError("eta must be a vector of strictly positive gains")
    rng = check_random_state(rng)
    A = draw_fast_fading(int(M), eta.size, rng)
    H = A * np.sqrt(eta)[None, :]
    return (H, A) if return_fading else H


@dataclass
class DeviceProfile:
    """Per-device activity probability ``rho``, transmit power ``b`` and large-scale gain ``eta``.

    Fields are length-N arrays; one instance describes the whole population.
    """

    rho: np.ndarray
    b: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.eta = np.asarray(self.eta, dtype=np.float64)
        if not (self.rho.shape == self.b.shape == self.eta.shape and self.rho.ndim == 1):
            raise ParameterError("rho, b and eta must be vectors of equal length")
        if np.any((self.rho < 0) | (self.rho > 1)):
            raise ParameterError("rho must lie in [0, 1]")
        if np.any(self.b <= 0) or np.any(self.eta <= 0):
            raise ParameterError("b and eta must be strictly positive")

    @property
    def N(self):
        return self.rho.size

    def with_eta(self, eta):
        return DeviceProfile(self.rho, self.b, eta)


def draw_profiles(config, rng=None):
    """Draw the fixed device population: activity probabilities, powers and initial gains."""
    rng = check_random_state(rng)
    rho = sample_activity_probabilities(config.alpha, config.beta, config.N, rng)
    b = rng.uniform(config.power_min, config.power_max, size=config.N)
    eta = sample_large_scale(config.large_scale_db, config.sigma_omega, config.N, rng)
    return DeviceProfile(rho=rho, b=b, eta=eta)


@dataclass
class SlotRealization:
    """One coherence block.

    ``symbols`` holds the effective unit-energy symbols seen by the channel:
    columns ``[0, tau_phi)`` are ``sqrt(tau_phi) * phi[t]`` (metadata) and the
    rest ``sqrt(tau_x) * x[t]`` (data), so ``Y = H @ diag(sqrt(b)) @ symbols + V``.
    ``assignment`` is drawn for every device; it only matters for active ones.
    """

    delta: np.ndarray
    H: np.ndarray
    A: np.ndarray
    symbols: np.ndarray
    Y: np.ndarray
    sigma_v2: float
    assignment: np.ndarray
    tau_phi: int
    profiles: DeviceProfile
    data_bits: np.ndarray | None = None  # (N, tau_x * bits) coded bits, active rows only meaningful
    info_bits: np.ndarray | None = None

    @property
    def tau(self):
        return self.Y.shape[1]

    @property
    def Y_phi(self):
        return self.Y[:, : self.tau_phi]

    @property
    def Y_x(self):
        return self.Y[:, self.tau_phi:]

    @property
    def data_symbols(self):
        return self.symbols[:, self.tau_phi:]

    @property
    def metadata_symbols(self):
        return self.symbols[:, : self.tau_phi]

    @property
    def support(self):
        return np.flatnonzero(self.delta)


def generate_slot(config, profiles, codebook, rng=None, sigma_v2=None, eta=None, code=None):
    """Draw activity, channel, metadata assignment, symbols and the received matrix.

    Parameters
    ----------
    config : SystemConfig
    profiles : DeviceProfile
        Fixed population; ``profiles.eta`` is used unless ``eta`` is given.
    codebook : MetadataCodebook
        ``tau_phi`` orthonormal sequences.
    sigma_v2 : float, optional
        Noise variance; defaults to ``config.noise_variance()``.
    code : ParityMatrix, optional
        When given, active devices send an encoded block of
        ``code.k`` random information bits instead of uniform symbols; the
        code length must equal ``tau_x * bits_per_symbol``.
    """
    rng = check_random_state(rng)
    N, M, tau_phi, tau_x = config.N, config.M, config.tau_phi, config.tau_x
    seqs = codebook.sequences
    if seqs.shape != (tau_phi, tau_phi):
        raise ValueError("codebook size must equal tau_phi")
    if sigma_v2 is None:
        sigma_v2 = config.noise_variance()
    eta = profiles.eta if eta is None else np.asarray(eta, dtype=np.float64)

    delta = draw_activity(profiles.rho, rng, model=config.activity_model, alpha=config.alpha, beta=config.beta)
    assignment = rng.integers(0, tau_phi, size=N)
    H, A = draw_channel(M, eta, rng, return_fading=True)

    data_bits = info_bits = None
    if code is None:
        points = AugmentedAlphabet.qpsk().constellation
        data = points[rng.integers(0, points.size, size=(N, tau_x))]
    else:
        n_bits = tau_x * config.bits_per_symbol
        if code.n != n_bits:
            raise ValueError(f"code length {code.n} does not match {n_bits} bits per slot")
        info_bits = rng.integers(0, 2, size=(N, code.k), dtype=np.int8)
        data_bits = code.encode(info_bits)
        data = qpsk_map(data_bits)

    symbols = np.empty((N, tau_phi + tau_x), dtype=np.complex128)
    symbols[:, :tau_phi] = np.sqrt(tau_phi) * seqs[assignment]
    symbols[:, tau_phi:] = data
    symbols *= delta[:, None]

    noise = np.sqrt(sigma_v2 / 2.0) * (
        rng.standard_normal((M, tau_phi + tau_x)) + 1j * rng.standard_normal((M, tau_phi + tau_x))
    )
    Y = (H * np.sqrt(profiles.b)[None, :]) @ symbols + noise
    return SlotRealization(
        delta=delta,
        H=H,
        A=A,
        symbols=symbols,
        Y=Y,
        sigma_v2=float(sigma_v2),
        assignment=assignment,
        tau_phi=tau_phi,
        profiles=profiles.with_eta(eta),
        data_bits=data_bits,
        info_bits=info_bits,
    )
