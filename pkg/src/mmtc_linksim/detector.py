"""Building blocks of the activity-aware variable group-list decision-feedback detector.

The functions here are the readable reference versions of each step
(reliability test, candidate lists, ordering cost, l0-regularised RLS
update).  The per-slot loop itself lives in :mod:`mmtc_linksim._kernel`,
which repeats the same arithmetic in compiled form.
"""
import itertools
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import _kernel
from ._validation import ParameterError, check_complex_array, check_is_fitted
from .config import default_reliability_radius
from .modulation import AugmentedAlphabet


@dataclass(frozen=True)
class SacRadii:
    """Reliability radii: ``r_th`` around nonzero points, ``1 - r_th`` around zero, ``r_ext`` for the group list."""

    r_th: float
    r_ext: float = np.inf

    def __post_init__(self):
        if not 0.0 <= self.r_th <= 1.0:
            raise ParameterError(f"r_th must lie in [0, 1], got {self.r_th!r}")

    @property
    def r_th0(self):
        return 1.0 - self.r_th


@dataclass
class DetectionState:
    """Ordering bookkeeping for one received vector."""

    N: int
    psi: list = field(default_factory=list)
    remaining: list = None
    vartheta: np.ndarray = None
    d_soft: np.ndarray = None
    d_hard: np.ndarray = None

    def __post_init__(self):
        if self.remaining is None:
            self.remaining = list(range(self.N))
        if self.vartheta is None:
            self.vartheta = np.zeros(self.N, dtype=np.int8)
        if self.d_soft is None:
            self.d_soft = np.zeros(self.N, dtype=np.complex128)
        if self.d_hard is None:
            self.d_hard = np.zeros(self.N, dtype=np.complex128)


def soft_estimate(w, y_cat):
    """Filter output ``w^H y_cat``."""
    w = np.asarray(w)
    y_cat = np.asarray(y_cat)
    if w.shape != y_cat.shape:
        raise ValueError(f"filter length {w.shape} does not match observation {y_cat.shape}")
    return complex(np.vdot(w, y_cat))


def _nearest(d_soft, points):
    dist2 = np.abs(points - d_soft) ** 2
    idx = int(np.argmin(dist2))  # first minimum: lowest index wins ties
    return idx, float(np.sqrt(dist2[idx]))


def quantize_augmented(d_soft, alphabet):
    """Nearest point of the augmented alphabet (ties go to the lowest index)."""
    idx, _ = _nearest(d_soft, alphabet.points)
    return alphabet.points[idx]


def sac_classify(d_soft, alphabet, radii):
    """Shadow-area test.

    Returns ``(nearest_point, reliable)`` where the estimate is reliable when
    its distance to the nearest point is within ``r_th`` (nonzero point) or
    ``r_th0`` (zero point).
    """
    idx, dist = _nearest(d_soft, alphabet.points)
    limit = radii.r_th0 if idx == 0 else radii.r_th
    return alphabet.points[idx], dist <= limit


def sac_distance(d_soft, alphabet):
    return _nearest(d_soft, alphabet.points)[1]


def internal_list_select(y, h_hat_n, alphabet):
    """Candidate of the augmented alphabet minimising ``||y - h_hat_n * kappa||^2``."""
    y = np.asarray(y, dtype=np.complex128)
    h = np.asarray(h_hat_n, dtype=np.complex128)
    resid = y[None, :] - alphabet.points[:, None] * h[None, :]
    return alphabet.points[int(np.argmin(np.sum(np.abs(resid) ** 2, axis=1)))]


def layer_cost(w, y_hist, d_hist, lambda_, gamma):
    """Exponentially weighted squared error of filter ``w`` over a history window plus ``gamma * ||w||_0``.

    ``y_hist`` has one observation vector per row, oldest first, and
    ``d_hist`` the matching desired responses (known metadata in training,
    past decisions in decision-directed mode).  The newest row gets weight 1.
    ``||w||_0`` counts the nonzero taps.
    """
    w = np.asarray(w, dtype=np.complex128)
    y_hist = np.asarray(y_hist, dtype=np.complex128).reshape(-1, w.size)
    d_hist = np.asarray(d_hist, dtype=np.complex128).reshape(-1)
    T = d_hist.size
    weights = lambda_ ** np.arange(T - 1, -1, -1, dtype=np.float64)
    err = d_hist - y_hist @ w.conj()
    return float(np.sum(weights * np.abs(err) ** 2) + gamma * np.count_nonzero(w))


def select_next_layer(state, costs):
    """Pick the undetected device with the smallest cost; lowest index breaks ties.

    ``costs`` is indexed by device.  The chosen index is moved from
    ``state.remaining`` to ``state.psi`` and returned.
    """
    if not state.remaining:
        raise ValueError("no undetected layer left")
    costs = np.asarray(costs, dtype=np.float64)
    best = min(state.remaining, key=lambda j: (costs[j], j))
    state.remaining.remove(best)
    state.psi.append(best)
    return best


def sgn(w):
    """Component-wise complex sign: ``w/|w|``, and 0 at 0."""
    w = np.asarray(w)
    mag = np.abs(w)
    out = np.zeros_like(w, dtype=np.result_type(w, np.float64))
    nz = mag > 0
    out[nz] = w[nz] / mag[nz]
    return out if out.ndim else out[()]


def f_xi(w, xi):
    """First-order attraction profile on a real coordinate, as printed.

    ``xi^2 w + xi`` on ``[-1/xi, 0)``, ``xi^2 w - xi`` on ``[0, 1/xi]`` and 0 elsewhere.
    """
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros_like(w)
    neg = (w >= -1.0 / xi) & (w < 0)
    pos = (w >= 0) & (w <= 1.0 / xi)
    out[neg] = xi**2 * w[neg] + xi
    out[pos] = xi**2 * w[pos] - xi
    return out if out.ndim else float(out)


def _attraction_real(v, gamma, xi, mode):
    v = np.asarray(v, dtype=np.float64)
    if mode == "printed":
        return -gamma * xi * np.sign(v) * f_xi(v, xi)
    # shrink toward zero by gamma*xi*(xi - xi^2 |v|) inside [-1/xi, 1/xi], never past zero
    mag = np.abs(v)
    step = np.where(mag <= 1.0 / xi, gamma * xi * (xi - xi**2 * mag), 0.0)
    return -np.sign(v) * np.minimum(step, mag)


def zero_attraction(w, gamma, xi, mode="intent"):
    """Displacement applied to each tap by the l0 penalty, real and imaginary parts independently."""
    w = np.asarray(w, dtype=np.complex128)
    return _attraction_real(w.real, gamma, xi, mode) + 1j * _attraction_real(w.imag, gamma, xi, mode)


def rls_update(w, P, y_cat, error, lambda_, gamma, xi, mode="intent"):
    """One l0-regularised RLS step.

    ``error`` is ``d_hat - w^H y_cat`` for the current decision.  Returns the
    updated ``(w, P)``::

        k = P y / (lambda + y^H P y)
        w <- w + k conj(error) + zero_attraction(w)
        P <- (P - k y^H P) / lambda
    """
    w = np.asarray(w, dtype=np.complex128)
    P = np.asarray(P, dtype=np.complex128)
    y = np.asarray(y_cat, dtype=np.complex128)
    Py = P @ y
    denom = lambda_ + np.real(np.vdot(y, Py))
    if not denom > 0:
        raise FloatingPointError("RLS gain denominator is not positive; P lost definiteness")
    k = Py / denom
    w_new = w + k * np.conj(error) + zero_attraction(w, gamma, xi, mode)
    P_new = (P - np.outer(k, Py.conj())) / lambda_
    return w_new, P_new


def external_radius(r_th, M, K_hat, N, sigma_x2, sigma_v2):
    """Group-list radius ``r_th * (M / K_hat + N sigma_x^2 / sigma_v^2)``; ``K_hat = 0`` counts as 1."""
    K_hat = max(int(K_hat), 1)
    if r_th == 0:
        return 0.0
    if sigma_v2 == 0:
        return np.inf
    return r_th * (M / K_hat + N * sigma_x2 / sigma_v2)


def external_list_refine(y, d_soft, d_hard, vartheta_ext, H_hat, alphabet, cap=4):
    """Joint search over the positions flagged in ``vartheta_ext``.

    ``H_hat`` holds the effective channel of every device (channel estimate
    times square-root power).  The reliable decisions are cancelled from
    ``y`` and every tuple of augmented symbols for the flagged positions is
    tried; the tuple with the smallest residual energy overwrites them.  When
    more than ``cap`` positions are flagged only the ``cap`` with the largest
    distance to the alphabet are searched.

    Returns ``(refined d_hard, searched positions)``.
    """
    y = check_complex_array(y, "y", ndim=1)
    d_soft = np.asarray(d_soft, dtype=np.complex128)
    d_hard = np.array(d_hard, dtype=np.complex128)
    flagged = np.flatnonzero(np.asarray(vartheta_ext))
    if flagged.size == 0:
        return d_hard, flagged
    if flagged.size > cap:
        dist = np.abs(d_soft[flagged][:, None] - alphabet.points[None, :]).min(axis=1)
        worst = np.argsort(-dist, kind="stable")[:cap]
        flagged = np.sort(flagged[worst])
    if flagged.size == 0:
        return d_hard, flagged
    keep = np.ones(d_hard.size, dtype=bool)
    keep[flagged] = False
    resid = y - H_hat[:, keep] @ d_hard[keep]
    combos = np.array(list(itertools.product(alphabet.points, repeat=flagged.size)))
    metric = np.sum(np.abs(resid[None, :] - combos @ H_hat[:, flagged].T) ** 2, axis=1)
    d_hard[flagged] = combos[int(np.argmin(metric))]
    return d_hard, flagged


@dataclass
class DetectionResult:
    """Output of one detector pass over a slot.

    Arrays indexed ``(device, data symbol)`` unless noted.

    Attributes
    ----------
    d_soft, d_hard : ndarray of complex
        Filter outputs and final decisions (after both lists).
    vartheta : ndarray of int8
        SAC flags with radius ``r_th`` (unreliable = 1).
    vartheta_ext : ndarray of int8
        Positions searched by the group list.
    nu : ndarray of int
        Group-list size per data symbol.
    order : ndarray of int, shape (tau, N)
        Detection order at every time step.
    mu, zeta2 : ndarray
        Equivalent-channel gain and noise variance of each filter output.
    distance : ndarray
        Distance of each soft estimate to the nearest alphabet point.
    dormant : ndarray of bool
        Devices whose training reference was all zero (output forced to 0).
    """

    d_soft: np.ndarray
    d_hard: np.ndarray
    vartheta: np.ndarray
    vartheta_ext: np.ndarray
    nu: np.ndarray
    order: np.ndarray
    mu: np.ndarray
    zeta2: np.ndarray
    distance: np.ndarray
    dormant: np.ndarray
    w: np.ndarray = None

    def __iter__(self):
        # (d_soft, d_hard, vartheta, state) unpacking
        return iter((self.d_soft, self.d_hard, self.vartheta, self))


_ATTRACTORS = {"intent": _kernel.ATTRACTOR_INTENT, "printed": _kernel.ATTRACTOR_PRINTED}
_MOMENTS = {
    "filter": _kernel.MOMENTS_FILTER,
    "training": _kernel.MOMENTS_TRAINING,
    "apriori": _kernel.MOMENTS_APRIORI,
}


def run_detector(
    Y,
    D_train,
    G,
    rho,
    *,
    lambda_=0.92,
    gamma=0.001,
    xi=10.0,
    r_th=None,
    sigma_v2=1.0,
    delta_reg=0.01,
    feedback=True,
    internal_list=True,
    list_input="raw",
    external_list=True,
    ext_list_cap=4,
    attractor="intent",
    priors=None,
    prior_mask=None,
    cost_window="data",
    moment_source="training",
    alphabet=None,
):
    """Run the adaptive detector on one received block.

    Parameters
    ----------
    Y : ndarray, shape (M, tau)
        Received block; the first ``D_train.shape[1]`` columns are training.
    D_train : ndarray, shape (N, tau_phi)
        Desired responses during training (zero rows for silent devices).
    G : ndarray, shape (M, N)
        Effective channel estimate used by the lists.
    rho : ndarray, shape (N,)
        Activity probabilities; they scale the initial inverse correlation.
    priors : ndarray, shape (N, tau_x, |A0|), optional
        Symbol priors for a MAP decision on devices set in ``prior_mask``.
    moment_source : {"training", "filter", "apriori"}
        Source of the output gain ``mu`` and noise variance ``zeta2``:
        filter outputs before each update over the training block,
        the current filter on the stored correlations, or the outputs before
        each update over training and decided data.

    Returns
    -------
    DetectionResult
    """
    alphabet = AugmentedAlphabet.qpsk() if alphabet is None else alphabet
    Y = check_complex_array(Y, "Y", ndim=2)
    D_train = check_complex_array(D_train, "D_train", ndim=2)
    M, tau = Y.shape
    N, tau_phi = D_train.shape
    if tau_phi > tau:
        raise ValueError("training block longer than the received block")
    G = check_complex_array(G, "G", ndim=2, shape=(M, N))
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (N,):
        raise ValueError(f"rho must have shape ({N},)")
    if r_th is None:
        r_th = default_reliability_radius(rho, alphabet.min_distance)
    if attractor not in _ATTRACTORS:
        raise ParameterError(f"attractor must be one of {tuple(_ATTRACTORS)}")
    if cost_window not in ("data", "cumulative"):
        raise ParameterError("cost_window must be 'data' or 'cumulative'")
    if list_input not in ("raw", "residual"):
        raise ParameterError("list_input must be 'raw' or 'residual'")
    if moment_source not in _MOMENTS:
        raise ParameterError(f"moment_source must be one of {tuple(_MOMENTS)}")
    tau_x = tau - tau_phi
    if priors is None:
        priors = np.zeros((N, tau_x, alphabet.size))
        prior_mask = np.zeros(N, dtype=np.bool_)
    else:
        priors = np.ascontiguousarray(priors, dtype=np.float64)
        if priors.shape != (N, tau_x, alphabet.size):
            raise ValueError(f"priors must have shape {(N, tau_x, alphabet.size)}")
        prior_mask = np.ones(N, dtype=np.bool_) if prior_mask is None else np.asarray(prior_mask, dtype=np.bool_)
    # avoid a zero initial correlation for devices that are never expected to speak
    p0 = np.maximum(rho, 1e-6) / delta_reg
    out = _kernel.detect_block(
        np.ascontiguousarray(Y),
        np.ascontiguousarray(D_train),
        np.ascontiguousarray(G),
        p0,
        alphabet.points,
        float(lambda_),
        float(gamma),
        float(xi),
        float(r_th),
        float(sigma_v2),
        bool(feedback),
        bool(internal_list),
        list_input == "residual",
        bool(external_list),
        int(ext_list_cap),
        _ATTRACTORS[attractor],
        priors,
        prior_mask,
        cost_window == "data",
        _MOMENTS[moment_source],
    )
    d_soft, d_hard, theta, theta_ext, nu, order, mu, zeta2, dist, w, _, dormant = out
    return DetectionResult(
        d_soft=d_soft,
        d_hard=d_hard,
        vartheta=theta,
        vartheta_ext=theta_ext,
        nu=nu,
        order=order,
        mu=mu,
        zeta2=np.maximum(zeta2, 1e-9),
        distance=dist,
        dormant=dormant,
        w=w,
    )


def detect_slot(slot, H_hat, profiles, config, *, feedback=True, internal_list=True, external_list=True, priors=None, prior_mask=None):
    """AA-VGL-DF pass over a :class:`~mmtc_linksim.traffic.SlotRealization`.

    ``H_hat`` is the (M, N) channel estimate; it is scaled by the square-root
    powers of ``profiles`` before use in the lists.  Returns a
    :class:`DetectionResult`, which also unpacks as
    ``(d_soft, d_hard, vartheta, state)``.
    """
    G = np.asarray(H_hat) * np.sqrt(profiles.b)[None, :]
    return run_detector(
        slot.Y,
        slot.metadata_symbols,
        G,
        profiles.rho,
        lambda_=config.lambda_,
        gamma=config.gamma,
        xi=config.xi,
        r_th=config.r_th,
        sigma_v2=slot.sigma_v2,
        delta_reg=config.delta_reg,
        feedback=feedback,
        internal_list=internal_list,
        list_input=config.list_input,
        external_list=external_list,
        ext_list_cap=config.ext_list_cap,
        attractor=config.attractor,
        moment_source=config.moment_source,
        priors=priors,
        prior_mask=prior_mask,
    )


class AAVGLDF(BaseEstimator):
    """Activity-aware variable group-list decision-feedback detector.

    ``fit`` stores the training block (received metadata columns, known
    references, channel estimate); ``predict`` detects a data block that
    follows it.  The adaptive filters run over training and data in one
    sweep, so ``predict`` is deterministic for a given fit.

    Parameters
    ----------
    lambda_ : float
        RLS forgetting factor in (0, 1].
    gamma, xi : float
        Weight and range of the l0 attraction.
    r_th : float or None
        SAC radius; ``None`` derives it from the mean activity.
    feedback, internal_list, external_list : bool
        Structure switches.  Without feedback the filter is purely linear.
    list_input : {"raw", "residual"}
        Whether the per-symbol list works on the received vector after
        cancelling the symbols already detected, or on the raw vector.

    Examples
    --------
    >>> det = AAVGLDF().fit(Y_phi, D_train, G=H_eff, rho=rho)  # doctest: +SKIP
    >>> d_hat = det.predict(Y_x)  # doctest: +SKIP
    """

    def __init__(
        self,
        lambda_=0.92,
        gamma=0.001,
        xi=10.0,
        r_th=None,
        sigma_v2=1.0,
        delta_reg=0.01,
        feedback=True,
        internal_list=True,
        external_list=True,
        list_input="raw",
        ext_list_cap=4,
        attractor="intent",
    ):
        self.lambda_ = lambda_
        self.gamma = gamma
        self.xi = xi
        self.r_th = r_th
        self.sigma_v2 = sigma_v2
        self.delta_reg = delta_reg
        self.feedback = feedback
        self.internal_list = internal_list
        self.external_list = external_list
        self.list_input = list_input
        self.ext_list_cap = ext_list_cap
        self.attractor = attractor

    def fit(self, Y_phi, D_train, G=None, rho=None):
        """Store the training block.

        Parameters
        ----------
        Y_phi : ndarray, shape (M, tau_phi)
        D_train : ndarray, shape (N, tau_phi)
        G : ndarray, shape (M, N), optional
            Effective channel for the lists; zeros if omitted.
        rho : ndarray, shape (N,), optional
            Activity probabilities; ones if omitted.
        """
        Y_phi = check_complex_array(Y_phi, "Y_phi", ndim=2)
        D_train = check_complex_array(D_train, "D_train", ndim=2, shape=(None, Y_phi.shape[1]))
        N = D_train.shape[0]
        self.Y_phi_ = Y_phi
        self.D_train_ = D_train
        self.G_ = np.zeros((Y_phi.shape[0], N), dtype=np.complex128) if G is None else check_complex_array(G, "G", ndim=2, shape=(Y_phi.shape[0], N))
        self.rho_ = np.ones(N) if rho is None else np.asarray(rho, dtype=np.float64)
        self.n_devices_ = N
        return self

    def _run(self, Y_x, priors=None, prior_mask=None):
        check_is_fitted(self, "Y_phi_")
        Y_x = check_complex_array(Y_x, "Y_x", ndim=2, shape=(self.Y_phi_.shape[0], None))
        return run_detector(
            np.concatenate([self.Y_phi_, Y_x], axis=1),
            self.D_train_,
            self.G_,
            self.rho_,
            lambda_=self.lambda_,
            gamma=self.gamma,
            xi=self.xi,
            r_th=self.r_th,
            sigma_v2=self.sigma_v2,
            delta_reg=self.delta_reg,
            feedback=self.feedback,
            internal_list=self.internal_list,
            list_input=self.list_input,
            external_list=self.external_list,
            ext_list_cap=self.ext_list_cap,
            attractor=self.attractor,
            priors=priors,
            prior_mask=prior_mask,
        )

    def predict(self, Y_x, priors=None, prior_mask=None):
        """Hard decisions (N, tau_x) over the augmented alphabet."""
        self.result_ = self._run(Y_x, priors, prior_mask)
        return self.result_.d_hard

    def decision_function(self, Y_x):
        """Soft filter outputs (N, tau_x)."""
        self.result_ = self._run(Y_x)
        return self.result_.d_soft
