"""Orthogonal metadata codebook, collision bookkeeping and LMMSE channel estimation."""
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from ._validation import check_complex_array


@dataclass(frozen=True)
class MetadataCodebook:
    """``tau_phi`` orthonormal metadata sequences stored as rows."""

    sequences: np.ndarray

    @property
    def tau_phi(self):
        return self.sequences.shape[0]

    def gram(self):
        return self.sequences @ self.sequences.conj().T


def build_codebook(tau_phi):
    """Unitary DFT basis: row ``k`` is ``exp(-2j pi k t / tau_phi) / sqrt(tau_phi)``."""
    tau_phi = int(tau_phi)
    if tau_phi < 1:
        raise ValueError("tau_phi must be >= 1")
    t = np.arange(tau_phi)
    return MetadataCodebook(np.exp(-2j * np.pi * np.outer(t, t) / tau_phi) / np.sqrt(tau_phi))


def collision_probability(c, K, tau_phi):
    """Probability that ``c`` of the other ``K - 1`` active devices picked the same sequence."""
    c = np.asarray(c)
    if np.any((c < 0) | (c > K - 1)):
        raise ValueError(f"c must lie in [0, {K - 1}]")
    q = 1.0 / tau_phi
    return comb(K - 1, c) * q**c * (1.0 - q) ** (K - 1 - c)


@dataclass(frozen=True)
class CollisionReport:
    """Contaminator sets ``{i: C_i}`` for every active device ``i``."""

    sets: dict

    def count(self, i):
        return len(self.sets[i])

    def counts(self):
        return {i: len(s) for i, s in self.sets.items()}


def collision_report(assignment, delta):
    active = np.flatnonzero(delta)
    sets = {}
    for i in active:
        same = active[(assignment[active] == assignment[i]) & (active != i)]
        sets[int(i)] = frozenset(int(j) for j in same)
    return CollisionReport(sets)


@dataclass
class ChannelEstimate:
    """LMMSE channel estimate ``H_hat`` (M x N) and per-device error variance."""

    H_hat: np.ndarray
    err_var: np.ndarray


def lmmse_channel_estimate(Y_phi, codebook, assignment, profiles, sigma_v2, tau_phi=None, active=None):
    """Correlate the metadata block with each device's sequence and apply the LMMSE gain.

    For device ``n`` with sequence ``a_n`` the correlator output is
    ``y_n = Y_phi @ phi_{a_n}^H`` and the estimate is
    ``h_hat_n = eta_n sqrt(tau b_n) / D_n * y_n`` with
    ``D_n = sum_{n' sharing a_n} tau b_n' eta_n' + sigma_v2``.

    ``active`` (a 0/1 mask) restricts the sharers to active devices and zeroes
    the columns of inactive ones (error variance ``eta_n``).  With
    ``active=None`` the receiver does not know who transmitted: every device is
    estimated and the sharer sum runs over all devices holding the sequence.
    Colliding devices reuse the same correlator output, so their estimates are
    contaminated by each other's channels.
    """
    seqs = codebook.sequences
    tau_phi = seqs.shape[0] if tau_phi is None else int(tau_phi)
    Y_phi = check_complex_array(Y_phi, "Y_phi", ndim=2, shape=(None, tau_phi))
    assignment = np.asarray(assignment, dtype=np.int64)
    b, eta = profiles.b, profiles.eta
    N = assignment.size

    corr = Y_phi @ seqs.conj().T  # (M, tau_phi): one correlator per sequence
    mask = np.ones(N, dtype=bool) if active is None else np.asarray(active).astype(bool)
    power = tau_phi * b * eta
    shared = np.zeros(seqs.shape[0])
    np.add.at(shared, assignment[mask], power[mask])

    denom = shared[assignment] + sigma_v2
    if active is not None:
        # unused for inactive columns, kept finite for the error-variance formula
        denom = np.where(mask, denom, power + sigma_v2)
    gain = eta * np.sqrt(tau_phi * b) / denom
    H_hat = corr[:, assignment] * gain[None, :]
    err_var = eta - tau_phi * b * eta**2 / denom
    if active is not None:
        H_hat[:, ~mask] = 0.0
        err_var = np.where(mask, err_var, eta)
    return ChannelEstimate(H_hat=H_hat, err_var=err_var)
