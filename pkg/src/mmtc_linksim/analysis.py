"""Analytic companions of the detector: FLOP counts, diversity order and uplink sum-rate."""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._validation import ParameterError, check_random_state
from .baselines import lmmse_filter
from .metadata import collision_probability
from .traffic import beta_binomial_pmf, sample_large_scale

# --------------------------------------------------------------------------- FLOPs

ALGORITHMS = (
    "LMMSE",
    "SA-SIC",
    "SA-SIC-A-SQRD",
    "AA-RLS-linear",
    "AA-RLS-linear-IL",
    "AA-RLS-DF",
    "AA-RLS-DF-IL",
    "AA-VGL-DF",
)


@dataclass(frozen=True)
class FlopReport:
    algorithm: str
    M: int
    N: int
    card_A0: int
    unreliable: int
    G: int
    flops: int


def _vartheta_vector(vartheta, N):
    v = np.asarray(vartheta, dtype=np.int64)
    if v.ndim == 0:
        v = np.full(N, int(v), dtype=np.int64)
    if v.shape != (N,) or np.any((v != 0) & (v != 1)):
        raise ParameterError(f"vartheta must be 0/1, scalar or of length {N}")
    return v


def flop_count(algorithm, M, N, card_A0=5, vartheta=0, G=0):
    """Complex FLOPs per received vector for one detector.

    Parameters
    ----------
    algorithm : str
        One of :data:`ALGORITHMS`.
    M, N : int
        Receive antennas and devices.
    card_A0 : int
        Size of the augmented alphabet.
    vartheta : int or array_like of {0, 1}
        Unreliable flag per detection step; a scalar applies to every step.
    G : int
        Number of candidate vectors searched by the group list.

    Returns
    -------
    int
    """
    M, N, A0, G = int(M), int(N), int(card_A0), int(G)
    if M < 1 or N < 1 or A0 < 1 or G < 0:
        raise ParameterError("M, N, card_A0 must be >= 1 and G >= 0")
    if algorithm not in ALGORITHMS:
        raise ParameterError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if algorithm == "LMMSE":
        return 2 * M**3 + 4 * (N + 1) * M**2 + 2 * (N**2 + N + 1) * M - (N**2 + N)
    if algorithm == "SA-SIC":
        return A0 * (N**3 + N**2 + 6)
    if algorithm == "SA-SIC-A-SQRD":
        return 2 * N**3 + 4 * (M + 1) * N**2 + (M - 1) * N
    if algorithm == "AA-RLS-linear":
        return (6 * M**2 + 10 * M) * N
    # list term: 2 M |A0| per unreliable step
    if isinstance(vartheta, (int, np.integer)) and vartheta in (0, 1):
        n_unrel = int(vartheta) * N
    else:
        n_unrel = int(_vartheta_vector(vartheta, N).sum())
    lst = n_unrel * 2 * M * A0
    if algorithm == "AA-RLS-linear-IL":
        return (6 * M**2 + 10 * M) * N + lst
    # sum_{i=1}^{N} 6 (M+i)^2 + 10 (M+i), in closed form
    s1 = N * (N + 1) // 2
    s2 = N * (N + 1) * (2 * N + 1) // 6
    df = 6 * (N * M**2 + 2 * M * s1 + s2) + 10 * (N * M + s1)
    if algorithm == "AA-RLS-DF":
        return df
    if algorithm == "AA-RLS-DF-IL":
        return df + lst
    return df + lst + 2 * M * G


def flop_report(algorithm, M, N, card_A0=5, vartheta=0, G=0):
    th = _vartheta_vector(vartheta, int(N))
    return FlopReport(algorithm, int(M), int(N), int(card_A0), int(th.sum()), int(G),
                      flop_count(algorithm, M, N, card_A0, th, G))


def complexity_curve(N_values, M=20, card_A0=5, unreliable_fraction=0.25, G=5, algorithms=ALGORITHMS):
    """FLOPs against ``N`` with a fixed fraction of unreliable steps (the first ``round(f N)``)."""
    out = {a: [] for a in algorithms}
    for N in N_values:
        th = np.zeros(int(N), dtype=np.int64)
        th[: int(round(unreliable_fraction * N))] = 1
        for a in algorithms:
            out[a].append(flop_count(a, M, N, card_A0, th, G))
    return out


# --------------------------------------------------------------------------- diversity


@dataclass(frozen=True)
class DiversityStep:
    """State after detection step ``i``: list term, zero count and resulting order."""

    i: int
    list_term: int
    zeros: int
    order: int


def diversity_steps(M, K, vartheta, card_A):
    """Step-by-step diversity order of the internal-list recursion.

    At step ``i`` the order is ``M - K + vartheta[:i] . m_ord[:i] + zeros(vartheta[:i])``
    with ``m_ord = (|A|, ..., |A|)``.
    """
    th = _vartheta_vector(vartheta, int(K))
    steps = []
    lt = zeros = 0
    for i, v in enumerate(th, start=1):
        lt += int(v) * int(card_A)
        zeros += int(v == 0)
        steps.append(DiversityStep(i, lt, zeros, int(M) - int(K) + lt + zeros))
    return steps


def diversity_order(M, K, vartheta, card_A=4, G=0):
    """``M - K + vartheta . m_ord + #zeros(vartheta) + G``."""
    th = _vartheta_vector(vartheta, int(K))
    return int(M) - int(K) + int(th.sum()) * int(card_A) + int(np.sum(th == 0)) + int(G)


# --------------------------------------------------------------------------- SINR


def sinr_perfect(w, H, i, b, sigma_v2=1.0):
    """SINR of filter ``w`` for device ``i`` with a known channel.

    ``|w^H h_i sqrt(b_i)|^2 / (sum_{j != i} |w^H h_j sqrt(b_j)|^2 + sigma_v2 ||w||^2)``,
    the columns of ``H`` being the active devices.
    """
    w = np.asarray(w, dtype=np.complex128).reshape(-1)
    H = np.asarray(H, dtype=np.complex128)
    b = np.asarray(b, dtype=np.float64)
    g = np.abs(w.conj() @ H) ** 2 * b
    den = g.sum() - g[i] + sigma_v2 * np.real(np.vdot(w, w))
    return float(g[i] / den)


def rls_excess_noise(lambda_, sigma_v2, sigma_y2):
    """``((1 - lambda)^2 sigma_v2 sigma_y2 + 1) / (2 (1 - lambda))``; undefined at ``lambda = 1``."""
    if not 0.0 < lambda_ < 1.0:
        raise ParameterError(f"lambda must lie in (0, 1) for the RLS excess-noise term, got {lambda_!r}")
    return ((1.0 - lambda_) ** 2 * sigma_v2 * sigma_y2 + 1.0) / (2.0 * (1.0 - lambda_))


def sinr_imperfect(w, H_hat, err_vars, collision_set, b, eta, lambda_=None, sigma_v2=1.0, sigma_y2=1.0,
                   i=0, H=None, noise="rls"):
    """SINR of device ``i`` with estimated channels and metadata collisions.

    The denominator collects

    * ``|w^H h_hat_j|^2 b_j`` for the colliders ``j`` in ``collision_set``,
    * ``||w||^2 b_j err_vars[j]`` for ``j`` in ``{i} | collision_set``,
    * the other active devices: ``|w^H h_j|^2 b_j`` when the true ``H`` is
      given, else their mean ``||w||^2 b_j eta_j``,
    * the noise: the RLS excess-noise term (``noise="rls"``) or
      ``sigma_v2 ||w||^2`` (``noise="filter"``).

    Parameters
    ----------
    w : ndarray, shape (M,)
    H_hat : ndarray, shape (M, K)
        Estimated channels of the ``K`` active devices.
    err_vars, b, eta : ndarray, shape (K,)
    collision_set : iterable of int
        Indices (into the ``K`` columns) sharing the metadata of ``i``.
    """
    w = np.asarray(w, dtype=np.complex128).reshape(-1)
    H_hat = np.asarray(H_hat, dtype=np.complex128)
    K = H_hat.shape[1]
    b = np.asarray(b, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    err_vars = np.asarray(err_vars, dtype=np.float64)
    C = sorted(set(int(j) for j in collision_set) - {int(i)})
    if any(j < 0 or j >= K for j in C):
        raise ValueError("collision_set indices out of range")
    ww = float(np.real(np.vdot(w, w)))
    proj_hat = np.abs(w.conj() @ H_hat) ** 2
    num = proj_hat[i] * b[i]
    own = [i] + C
    rest = np.setdiff1d(np.arange(K), own)
    den = float(np.sum(proj_hat[C] * b[C]))
    den += ww * float(np.sum(b[own] * err_vars[own]))
    if H is not None:
        den += float(np.sum(np.abs(w.conj() @ np.asarray(H)[:, rest]) ** 2 * b[rest]))
    else:
        den += ww * float(np.sum(b[rest] * eta[rest]))
    if noise == "rls":
        den += rls_excess_noise(lambda_, sigma_v2, sigma_y2)
    elif noise == "filter":
        den += sigma_v2 * ww
    else:
        raise ParameterError("noise must be 'rls' or 'filter'")
    return float(num / den)


# --------------------------------------------------------------------------- sum-rate

DETECTOR_CHOICES = ("perfect", "imperfect", "imperfect-rls")


@dataclass
class RateReport:
    """Expected sum-rate (bits per symbol) of one configuration.

    Attributes
    ----------
    rate : float
    K_max : int
        Largest number of active devices kept in the outer sum.
    mass : float
        Probability mass of ``K <= K_max`` (``K = 0`` included).
    mc_samples : int
    per_K : dict
        ``K -> sum_c p(c|K) E[log2(1 + SINR)]``.
    """

    rate: float
    K_max: int
    mass: float
    mc_samples: int
    per_K: dict = field(default_factory=dict)


def truncate_activity(N, alpha, beta, min_mass=0.999):
    """Smallest ``K_max`` with ``sum_{K <= K_max} p(K) >= min_mass``, and that mass."""
    pk = beta_binomial_pmf(np.arange(N + 1), N, alpha, beta)
    cum = np.cumsum(pk)
    K_max = int(np.searchsorted(cum, min_mass - 1e-15))
    K_max = min(K_max, N)
    return K_max, float(cum[K_max])


def _draw_rate_samples(config, K, c, S, rng, choice, sigma_v2):
    """``S`` draws of ``log2(1 + SINR)`` of device 0 among ``K`` active, ``c`` of them sharing its metadata."""
    M = config.M
    tau_phi = config.tau_phi
    out = np.empty(S)
    for s in range(S):
        eta = sample_large_scale(config.large_scale_db, config.sigma_omega, K, rng)
        b = rng.uniform(config.power_min, config.power_max, size=K)
        H = (rng.standard_normal((M, K)) + 1j * rng.standard_normal((M, K))) * np.sqrt(eta / 2.0)
        amp = np.sqrt(b)
        if choice == "perfect":
            w = lmmse_filter(H, amp, sigma_v2)[:, 0]
            out[s] = np.log2(1.0 + sinr_perfect(w, H, 0, b, sigma_v2))
            continue
        # device 0 and its c colliders share sequence 0; the others use distinct
        # sequences (drawn with replacement once the codebook is exhausted)
        others = K - 1 - c
        if others <= tau_phi - 1:
            seq_rest = rng.permutation(np.arange(1, tau_phi))[:others] if tau_phi > 1 else np.zeros(0, int)
        else:
            seq_rest = rng.integers(1, tau_phi, size=others)
        assign = np.concatenate([np.zeros(c + 1, dtype=np.int64), seq_rest.astype(np.int64)])
        H_hat, err = _estimate(H, b, eta, assign, tau_phi, sigma_v2, rng)
        C = list(range(1, c + 1))
        if choice == "imperfect":
            w = lmmse_filter(H_hat, amp, sigma_v2)[:, 0]
            sinr = sinr_imperfect(w, H_hat, err, C, b, eta, sigma_v2=sigma_v2, H=H, noise="filter")
        else:
            w = _rls_filter(config, H, H_hat, b, assign, sigma_v2, rng)
            sigma_y2 = float(np.sum(b * eta) + sigma_v2)
            sinr = sinr_imperfect(w, H_hat, err, C, b, eta, config.lambda_, sigma_v2, sigma_y2, H=H, noise="rls")
        out[s] = np.log2(1.0 + sinr)
    return out


def _estimate(H, b, eta, assign, tau_phi, sigma_v2, rng):
    # correlator outputs of an orthonormal codebook: one independent noise vector per sequence
    M = H.shape[0]
    used = np.unique(assign)
    corr = {}
    for q in used:
        members = np.flatnonzero(assign == q)
        noise = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) * np.sqrt(sigma_v2 / 2.0)
        corr[q] = H[:, members] @ np.sqrt(tau_phi * b[members]) + noise
    shared = {q: float(np.sum(tau_phi * b[assign == q] * eta[assign == q])) for q in used}
    H_hat = np.empty_like(H)
    for j, q in enumerate(assign):
        H_hat[:, j] = eta[j] * np.sqrt(tau_phi * b[j]) / (shared[q] + sigma_v2) * corr[q]
    # error variance as used in the SINR expression
    err = eta / (b * eta + 1.0)
    return H_hat, err


def _rls_filter(config, H, H_hat, b, assign, sigma_v2, rng):
    from .detector import run_detector
    from .metadata import build_codebook

    M, K = H.shape
    seqs = build_codebook(config.tau_phi).sequences * np.sqrt(config.tau_phi)
    D = seqs[assign]  # unit-energy metadata symbols
    V = (rng.standard_normal((M, config.tau_phi)) + 1j * rng.standard_normal((M, config.tau_phi))) * np.sqrt(sigma_v2 / 2.0)
    Y = (H * np.sqrt(b)) @ D + V
    rho = np.full(K, config.alpha / (config.alpha + config.beta))
    res = run_detector(
        Y, D, H_hat * np.sqrt(b), rho,
        lambda_=config.lambda_, gamma=config.gamma, xi=config.xi, r_th=config.r_th,
        sigma_v2=sigma_v2, delta_reg=config.delta_reg, feedback=False,
        internal_list=False, external_list=False, attractor=config.attractor,
    )
    return res.w[0, :M]


def expected_rate(config, K, c, mc_samples=2000, rng=None, detector_choice="imperfect", sigma_v2=None):
    """Monte Carlo ``E[log2(1 + SINR)]`` of one device among ``K`` active with ``c`` colliders."""
    if detector_choice not in DETECTOR_CHOICES:
        raise ParameterError(f"detector_choice must be one of {DETECTOR_CHOICES}")
    if not 0 <= c <= K - 1:
        raise ValueError("need 0 <= c <= K - 1")
    rng = check_random_state(rng)
    sigma_v2 = config.noise_variance() if sigma_v2 is None else sigma_v2
    return float(np.mean(_draw_rate_samples(config, int(K), int(c), int(mc_samples), rng, detector_choice, sigma_v2)))


def sum_rate(config, detector_choice="imperfect", K_truncation=None, mc_samples=2000, rng=None, inner=None,
             min_mass=0.999):
    """Expected uplink sum-rate ``sum_K p(K) K sum_c p(c|K) E[log2(1 + SINR)]``.

    Parameters
    ----------
    config : SystemConfig
    detector_choice : {"perfect", "imperfect", "imperfect-rls"}
        Receive filter and SINR model: LMMSE on the true channel, LMMSE on
        the estimate, or the trained adaptive filter with the RLS noise term.
    K_truncation : int, optional
        Largest ``K`` in the outer sum; by default the smallest value holding
        ``min_mass`` of the activity distribution.
    mc_samples : int
        Draws per ``(K, c)`` pair for the inner expectation.
    inner : callable, optional
        ``inner(K, c) -> float`` replacing the Monte Carlo expectation.

    Returns
    -------
    RateReport
    """
    if detector_choice not in DETECTOR_CHOICES:
        raise ParameterError(f"detector_choice must be one of {DETECTOR_CHOICES}")
    if mc_samples < 1:
        raise ParameterError("mc_samples must be >= 1")
    N = config.N
    if K_truncation is None:
        K_max, mass = truncate_activity(N, config.alpha, config.beta, min_mass)
    else:
        if not 1 <= K_truncation <= N:
            raise ParameterError(f"K_truncation must lie in [1, {N}]")
        K_max = int(K_truncation)
        mass = float(beta_binomial_pmf(np.arange(K_max + 1), N, config.alpha, config.beta).sum())
    rng = check_random_state(rng)
    sigma_v2 = config.noise_variance()
    if inner is None:
        @lru_cache(maxsize=None)
        def inner(K, c):
            return expected_rate(config, K, c, mc_samples, rng, detector_choice, sigma_v2)

    rate = 0.0
    per_K = {}
    for K in range(1, K_max + 1):
        pK = float(beta_binomial_pmf(K, N, config.alpha, config.beta))
        cs = np.arange(K)
        pc = collision_probability(cs, K, config.tau_phi)
        val = float(sum(p * inner(K, int(c)) for c, p in zip(cs, pc) if p > 0))
        per_K[K] = val
        rate += pK * K * val
    return RateReport(rate=rate, K_max=K_max, mass=mass, mc_samples=int(mc_samples), per_K=per_K)
