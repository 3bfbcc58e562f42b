"""Soft information exchange between the adaptive detector and the LDPC decoder.

The filter output of each device is modelled as an equivalent AWGN channel
``d_soft = mu * x + n`` with ``n ~ CN(0, zeta2)``.  Bit LLRs use the
convention ``L = log P(bit = 0) / P(bit = 1)`` and the zero (inactive)
symbol carries no bit label: it only enters through the activity prior.
"""
from dataclasses import dataclass

import numpy as np

from .detector import detect_slot
from .modulation import AugmentedAlphabet
from .ldpc import ConstructionError, build_ldpc, spa_decode

ZETA2_FLOOR = 1e-9


def build_slot_code(config, rng=None):
    """LDPC code matching the data block of one slot.

    ``code_framing="full"`` gives the 128 x 256 code and requires
    ``tau_x * bits_per_symbol == 256``.  ``"slot"`` builds an
    ``(n/2) x n`` code with ``n = tau_x * bits_per_symbol``; when no
    4-cycle-free matrix exists at the configured column weight (short
    codes), the weight is lowered one step at a time down to 3.
    """
    n = config.tau_x * config.bits_per_symbol
    if config.code_framing == "full":
        if n != 256:
            raise ValueError(f"full framing needs 256 coded bits per slot, tau_x gives {n}")
        return build_ldpc(256, 128, config.ldpc_col_weight, rng)
    weights = range(config.ldpc_col_weight, 2, -1)
    for wc in weights:
        try:
            return build_ldpc(n, n // 2, wc, rng, max_retries=20)
        except ConstructionError:
            continue
    raise ConstructionError(f"no 4-cycle-free code of length {n} with column weight >= 3")


@dataclass
class GaussianMoments:
    """Equivalent-channel gain ``mu`` and noise variance ``zeta2`` (floored)."""

    mu: np.ndarray
    zeta2: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.complex128)
        self.zeta2 = np.maximum(np.asarray(self.zeta2, dtype=np.float64), ZETA2_FLOOR)


@dataclass
class LlrFrame:
    """Per-device, per-symbol bit LLRs: ``channel`` from the detector, ``extrinsic`` from the decoder.

    Both arrays have shape (N, tau_x, bits_per_symbol) and are clipped to
    ``[-clip, clip]``.
    """

    channel: np.ndarray
    extrinsic: np.ndarray
    clip: float = 30.0

    def __post_init__(self):
        self.channel = np.clip(np.asarray(self.channel, dtype=np.float64), -self.clip, self.clip)
        self.extrinsic = np.clip(np.asarray(self.extrinsic, dtype=np.float64), -self.clip, self.clip)


def _log_sigmoid(a):
    return -np.logaddexp(0.0, -a)


def symbol_priors(extrinsic_llrs, rho, placement="activity", alphabet=None):
    """Prior over the augmented alphabet from decoder LLRs and the activity probability.

    Each nonzero symbol gets ``prod_z sigmoid(s_z * L_z)`` with ``s_z = +1``
    for bit 0 and ``-1`` for bit 1, scaled by ``rho``; the zero symbol gets
    ``1 - rho``.  ``placement="printed"`` swaps the two activity weights.

    Parameters
    ----------
    extrinsic_llrs : array_like, shape (..., bits)
    rho : float or array_like broadcastable to ``extrinsic_llrs.shape[:-1]``

    Returns
    -------
    ndarray, shape (..., |A0|)
        Index 0 is the zero symbol.  Rows sum to one.
    """
    alphabet = AugmentedAlphabet.qpsk() if alphabet is None else alphabet
    L = np.asarray(extrinsic_llrs, dtype=np.float64)
    if L.shape[-1] != alphabet.bits_per_symbol:
        raise ValueError(f"expected {alphabet.bits_per_symbol} LLRs per symbol")
    rho = np.asarray(rho, dtype=np.float64)
    if np.any((rho < 0) | (rho > 1)):
        raise ValueError("rho must lie in [0, 1]")
    signs = alphabet.antipodal_labels()  # (|A|, bits)
    log_p = _log_sigmoid(L[..., None, :] * signs).sum(axis=-1)  # (..., |A|)
    p_sym = np.exp(log_p)
    p_sym /= p_sym.sum(axis=-1, keepdims=True)
    if placement not in ("activity", "printed"):
        raise ValueError("placement must be 'activity' or 'printed'")
    active, silent = (rho, 1.0 - rho) if placement == "activity" else (1.0 - rho, rho)
    out = np.empty(L.shape[:-1] + (alphabet.size,))
    out[..., 0] = silent
    out[..., 1:] = np.asarray(active)[..., None] * p_sym
    return out / out.sum(axis=-1, keepdims=True)


def awgn_moments(w_history, y_history, x_history, lambda_):
    """Exponentially weighted estimate of the equivalent AWGN channel.

    With ``d[l] = w[l]^H y[l]`` and weights ``lambda**(T-1-l)``::

        mu    = sum(lam d x*) / sum(lam |x|^2)
        zeta2 = sum(lam |d|^2) / sum(lam) - |mu|^2 sum(lam |x|^2) / sum(lam)

    Parameters
    ----------
    w_history : ndarray, shape (L,) or (T, L)
        One filter for the whole history, or one per time step.
    y_history : ndarray, shape (T, L)
    x_history : ndarray, shape (T,)
        Reference symbols (true or decided).

    Returns
    -------
    GaussianMoments
    """
    y = np.atleast_2d(np.asarray(y_history, dtype=np.complex128))
    x = np.asarray(x_history, dtype=np.complex128).reshape(-1)
    w = np.asarray(w_history, dtype=np.complex128)
    if w.ndim == 1:
        w = np.broadcast_to(w, y.shape)
    if not (w.shape == y.shape and x.size == y.shape[0]):
        raise ValueError("w, y and x histories must be aligned in time")
    T = x.size
    lam = lambda_ ** np.arange(T - 1, -1, -1, dtype=np.float64)
    d = np.sum(w.conj() * y, axis=1)
    ex = np.sum(lam * np.abs(x) ** 2)
    W = lam.sum()
    if ex == 0:
        return GaussianMoments(0.0, ZETA2_FLOOR)
    mu = np.sum(lam * d * x.conj()) / ex
    zeta2 = np.sum(lam * np.abs(d) ** 2) / W - np.abs(mu) ** 2 * ex / W
    return GaussianMoments(mu, zeta2)


def extrinsic_llr(d_soft, moments, priors, alphabet=None):
    """Bit LLRs of the filter output minus the a-priori bit LLRs.

    For bit ``z`` the a-posteriori LLR is::

        log sum_{x: bit z = 0} P(x) exp(-|d - mu x|^2 / zeta2)
      - log sum_{x: bit z = 1} P(x) exp(-|d - mu x|^2 / zeta2)

    over the nonzero symbols, evaluated with the Jacobian logarithm.  The
    a-priori LLR of bit ``z`` is the same ratio without the likelihood.

    Parameters
    ----------
    d_soft : array_like
    moments : GaussianMoments
        Broadcastable to ``d_soft``.
    priors : array_like, shape (..., |A0|)

    Returns
    -------
    ndarray, shape d_soft.shape + (bits,)
    """
    alphabet = AugmentedAlphabet.qpsk() if alphabet is None else alphabet
    d = np.asarray(d_soft, dtype=np.complex128)
    mu = np.broadcast_to(moments.mu, d.shape)
    z2 = np.broadcast_to(moments.zeta2, d.shape)
    P = np.broadcast_to(np.asarray(priors, dtype=np.float64), d.shape + (alphabet.size,))[..., 1:]
    with np.errstate(divide="ignore"):
        log_prior = np.log(P)
    # rows with no nonzero prior mass give -inf - -inf; mapped to 0 below
    pts = alphabet.constellation
    log_like = -np.abs(d[..., None] - mu[..., None] * pts) ** 2 / z2[..., None]
    log_post = log_like + log_prior
    labels = alphabet.labels
    out = np.empty(d.shape + (alphabet.bits_per_symbol,))
    with np.errstate(invalid="ignore"):
        for z in range(alphabet.bits_per_symbol):
            zero = labels[:, z] == 0
            post = np.logaddexp.reduce(log_post[..., zero], axis=-1) - np.logaddexp.reduce(log_post[..., ~zero], axis=-1)
            apri = np.logaddexp.reduce(log_prior[..., zero], axis=-1) - np.logaddexp.reduce(log_prior[..., ~zero], axis=-1)
            out[..., z] = post - apri
    return np.nan_to_num(out, nan=0.0)


@dataclass
class IddResult:
    """Outcome of the detection/decoding loop for one slot.

    Attributes
    ----------
    decoded_bits : list of ndarray
        Per iteration, (N, k) information bits (zeros for devices declared silent).
    declared_active : list of ndarray
        Per iteration, the activity decision for each device.
    bit_errors : list of int
        Information-bit errors over the truly active devices, per iteration.
    n_bits : int
        Information bits sent by the active devices.
    uncoded_bit_errors : float
        Coded-bit errors of the first detector pass, a zero decision counting
        as half the bits of the symbol.
    n_coded_bits : int
    frames : list of LlrFrame
    """

    decoded_bits: list
    declared_active: list
    bit_errors: list
    n_bits: int
    uncoded_bit_errors: float
    n_coded_bits: int
    frames: list

    def ber(self, iteration=-1):
        return self.bit_errors[iteration] / self.n_bits if self.n_bits else 0.0


def uncoded_bit_errors(d_hard, data_bits, alphabet=None):
    """Bit errors of hard decisions against the sent coded bits; a zero decision counts ``bits/2``."""
    alphabet = AugmentedAlphabet.qpsk() if alphabet is None else alphabet
    d_hard = np.asarray(d_hard)
    bits = np.asarray(data_bits).reshape(d_hard.shape + (alphabet.bits_per_symbol,))
    zero = d_hard == 0
    idx = alphabet.index_of(np.where(zero, alphabet.points[1], d_hard)) - 1
    dec = alphabet.labels[idx]
    err = np.sum(dec != bits, axis=-1).astype(np.float64)
    err[zero] = alphabet.bits_per_symbol / 2.0
    return float(err.sum())


def idd_loop(slot, H_hat, profiles, config, code, n_iterations=2, alphabet=None):
    """Alternate detection and LDPC decoding on one slot.

    Pass 1 runs the detector with activity-only priors.  Each pass turns the
    filter outputs of the devices declared active (more than half of their
    decisions nonzero) into extrinsic bit LLRs, clips them and decodes one
    codeword per device.  Devices whose decoder reached a valid codeword
    then get symbol priors from the decoder extrinsics, mixed with their
    observed activity (fraction of nonzero decisions), and the next pass
    takes MAP decisions for them.  Decoders that did not converge feed
    nothing back.

    ``config.zero_llr`` selects how positions decided as zero enter the
    decoder: ``"soft"`` keeps the LLR of the filter output, ``"erase"``
    sets it to zero.

    Parameters
    ----------
    slot : SlotRealization
        Must carry ``info_bits`` and ``data_bits`` (generated with ``code``).
    H_hat : ndarray, shape (M, N)
    code : ParityMatrix
        Code length equal to ``tau_x * bits_per_symbol``.

    Returns
    -------
    IddResult
    """
    alphabet = AugmentedAlphabet.qpsk() if alphabet is None else alphabet
    if slot.info_bits is None:
        raise ValueError("slot was generated without a code")
    N = slot.delta.size
    tau_x = slot.Y_x.shape[1]
    bps = alphabet.bits_per_symbol
    if code.n != tau_x * bps:
        raise ValueError("code length must equal the data bits of one slot")
    clip = config.llr_clip
    rho = profiles.rho
    active_true = slot.delta.astype(bool)

    priors = None
    prior_mask = None
    decoded, declared, errors, frames = [], [], [], []
    uncoded = 0.0
    for it in range(n_iterations):
        res = detect_slot(slot, H_hat, profiles, config, priors=priors, prior_mask=prior_mask)
        if it == 0:
            uncoded = uncoded_bit_errors(res.d_hard[active_true], slot.data_bits[active_true], alphabet)
        is_active = np.mean(res.d_hard != 0, axis=1) > 0.5
        cur_priors = priors if priors is not None else symbol_priors(
            np.zeros((N, tau_x, bps)), rho[:, None], config.prior_placement, alphabet
        )
        L = extrinsic_llr(res.d_soft, GaussianMoments(res.mu, res.zeta2), cur_priors, alphabet)
        if config.zero_llr == "erase":
            L[res.d_hard == 0] = 0.0
        L[~is_active] = 0.0
        L = np.clip(L, -clip, clip)
        dec_ext = np.zeros_like(L)
        bits = np.zeros((N, code.k), dtype=np.int8)
        conv = np.zeros(N, dtype=bool)
        for n in np.flatnonzero(is_active):
            out = spa_decode(L[n].reshape(-1), code, config.spa_iters)
            conv[n] = out.converged
            dec_ext[n] = np.clip(out.extrinsic, -clip, clip).reshape(tau_x, bps)
            bits[n] = code.extract_info(out.hard_bits)
        frames.append(LlrFrame(channel=L, extrinsic=dec_ext, clip=clip))
        decoded.append(bits)
        declared.append(is_active)
        errors.append(int(np.sum(bits[active_true] != slot.info_bits[active_true])))
        activity = np.mean(res.d_hard != 0, axis=1)
        priors = symbol_priors(dec_ext, activity[:, None], config.prior_placement, alphabet)
        prior_mask = is_active & conv
    n_bits = int(active_true.sum() * code.k)
    return IddResult(
        decoded_bits=decoded,
        declared_active=declared,
        bit_errors=errors,
        n_bits=n_bits,
        uncoded_bit_errors=uncoded,
        n_coded_bits=int(active_true.sum() * code.n),
        frames=frames,
    )
