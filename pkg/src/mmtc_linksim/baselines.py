"""Reference detectors: linear MMSE (blind and genie-support) and the adaptive RLS variants."""
import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_complex_array, check_is_fitted, check_positive
from .detector import detect_slot
from .modulation import AugmentedAlphabet


def _amplitudes(B, N):
    B = np.asarray(B)
    if B.ndim == 2:
        B = np.diag(B)
    B = B.astype(np.float64)
    if B.shape != (N,):
        raise ValueError(f"B must hold {N} amplitudes")
    return B


def _quantize(soft, points):
    # nearest point, lowest index on ties
    d = np.abs(soft[..., None] - points) ** 2
    return points[np.argmin(d, axis=-1)]


def lmmse_filter(H, B, sigma_v2, reg=1e-10):
    """``W = (H B B^H H^H + sigma_v2 I)^-1 H B`` (M x N); soft estimates are ``W^H y``."""
    H = check_complex_array(H, "H", ndim=2)
    M, N = H.shape
    G = H * _amplitudes(B, N)[None, :]
    R = G @ G.conj().T + sigma_v2 * np.eye(M)
    try:
        return np.linalg.solve(R, G)
    except np.linalg.LinAlgError:
        return np.linalg.solve(R + reg * np.eye(M), G)


def lmmse_detect(Y, H_hat, B, sigma_v2, alphabet=None):
    """Linear MMSE over all ``N`` columns, quantised to the augmented alphabet.

    Parameters
    ----------
    Y : ndarray, shape (M, T)
    H_hat : ndarray, shape (M, N)
    B : ndarray
        Square-root powers, either the diagonal (N,) or the diagonal matrix.
    sigma_v2 : float

    Returns
    -------
    soft, hard : ndarray, shape (N, T)
    """
    alphabet = AugmentedAlphabet.qpsk() if alphabet is None else alphabet
    Y = check_complex_array(Y, "Y", ndim=2)
    check_positive(sigma_v2, "sigma_v2", strict=False)
    W = lmmse_filter(H_hat, B, sigma_v2)
    soft = W.conj().T @ Y
    return soft, _quantize(soft, alphabet.points)


def oracle_lmmse_detect(Y, H, true_support, B, sigma_v2, alphabet=None):
    """LMMSE restricted to the true active columns, quantised to the constellation; zeros elsewhere.

    ``true_support`` is the 0/1 activity mask of the slot.
    """
    alphabet = AugmentedAlphabet.qpsk() if alphabet is None else alphabet
    Y = check_complex_array(Y, "Y", ndim=2)
    H = check_complex_array(H, "H", ndim=2)
    N = H.shape[1]
    amp = _amplitudes(B, N)
    mask = np.asarray(true_support)
    if mask.shape != (N,):
        raise ValueError(f"true_support must be a length-{N} activity mask")
    support = np.flatnonzero(mask)
    soft = np.zeros((N, Y.shape[1]), dtype=np.complex128)
    hard = np.zeros_like(soft)
    if support.size == 0:
        return soft, hard
    W = lmmse_filter(H[:, support], amp[support], sigma_v2)
    s = W.conj().T @ Y
    soft[support] = s
    hard[support] = _quantize(s, alphabet.constellation)
    return soft, hard


def aa_rls_linear_detect(slot, H_hat, profiles, config, internal_list=False):
    """Adaptive linear receiver: feedforward taps only, no group list."""
    return detect_slot(slot, H_hat, profiles, config, feedback=False, internal_list=internal_list, external_list=False)


def aa_rls_df_detect(slot, H_hat, profiles, config, internal_list=False):
    """Adaptive decision feedback without the group list."""
    return detect_slot(slot, H_hat, profiles, config, feedback=True, internal_list=internal_list, external_list=False)


class LinearMMSE(BaseEstimator):
    """Linear MMSE detector as an estimator.

    ``fit`` takes the channel (estimate) and powers; ``predict`` returns
    augmented-alphabet decisions.  With ``support`` given at fit time the
    filter is restricted to those columns (genie-aided bound).

    Parameters
    ----------
    sigma_v2 : float
        Noise variance.
    """

    def __init__(self, sigma_v2=1.0):
        self.sigma_v2 = sigma_v2

    def fit(self, H, B=None, support=None):
        H = check_complex_array(H, "H", ndim=2)
        self.H_ = H
        self.B_ = np.ones(H.shape[1]) if B is None else _amplitudes(B, H.shape[1])
        self.support_ = None if support is None else np.asarray(support)
        return self

    def _detect(self, Y):
        check_is_fitted(self, "H_")
        if self.support_ is None:
            return lmmse_detect(Y, self.H_, self.B_, self.sigma_v2)
        return oracle_lmmse_detect(Y, self.H_, self.support_, self.B_, self.sigma_v2)

    def predict(self, Y):
        return self._detect(Y)[1]

    def decision_function(self, Y):
        return self._detect(Y)[0]
