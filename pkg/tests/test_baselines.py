import numpy as np
import pytest

from mmtc_linksim import LinearMMSE, SystemConfig, build_codebook, lmmse_detect, oracle_lmmse_detect
from mmtc_linksim.baselines import aa_rls_df_detect, aa_rls_linear_detect, lmmse_filter
from mmtc_linksim.metadata import lmmse_channel_estimate
from mmtc_linksim.modulation import AugmentedAlphabet
from mmtc_linksim.traffic import draw_profiles, generate_slot

A0 = AugmentedAlphabet.qpsk()


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def test_lmmse_filter_formula():
    rng = np.random.default_rng(0)
    H = crandn(rng, 4, 3)
    amp = np.array([0.5, 1.0, 2.0])
    W = lmmse_filter(H, amp, 0.3)
    G = H @ np.diag(amp)
    np.testing.assert_allclose(W, np.linalg.inv(G @ G.conj().T + 0.3 * np.eye(4)) @ G)
    # a diagonal matrix is accepted in place of the vector
    np.testing.assert_allclose(lmmse_filter(H, np.diag(amp), 0.3), W)


def test_oracle_lmmse_noiseless_is_exact():
    rng = np.random.default_rng(1)
    H = crandn(rng, 6, 5)
    delta = np.array([1, 0, 1, 1, 0])
    X = A0.constellation[rng.integers(4, size=(5, 20))] * delta[:, None]
    soft, hard = oracle_lmmse_detect(H @ X, H, delta, np.ones(5), 1e-12)
    np.testing.assert_allclose(hard, X)
    assert not soft[delta == 0].any()


def test_oracle_empty_support():
    soft, hard = oracle_lmmse_detect(np.ones((2, 3)), np.ones((2, 2)), np.zeros(2), np.ones(2), 1.0)
    assert not hard.any()


def test_lmmse_detect_decisions_on_augmented_alphabet():
    rng = np.random.default_rng(2)
    H = crandn(rng, 4, 6)
    soft, hard = lmmse_detect(crandn(rng, 4, 10), H, np.ones(6), 0.5)
    A0.index_of(hard)
    assert soft.shape == hard.shape == (6, 10)


def test_estimator_wraps_functions():
    rng = np.random.default_rng(3)
    H = crandn(rng, 4, 3)
    Y = crandn(rng, 4, 8)
    est = LinearMMSE(sigma_v2=0.2).fit(H, np.full(3, 0.5))
    np.testing.assert_array_equal(est.predict(Y), lmmse_detect(Y, H, np.full(3, 0.5), 0.2)[1])
    oracle = LinearMMSE(sigma_v2=0.2).fit(H, np.full(3, 0.5), support=np.array([1, 0, 1]))
    np.testing.assert_array_equal(oracle.predict(Y), oracle_lmmse_detect(Y, H, np.array([1, 0, 1]), np.full(3, 0.5), 0.2)[1])


def test_estimator_not_fitted():
    from mmtc_linksim import NotFittedError

    with pytest.raises(NotFittedError):
        LinearMMSE().predict(np.zeros((2, 2)))


def test_adaptive_baselines_structure():
    cfg = SystemConfig(snr_db=20.0)
    prof = draw_profiles(cfg, 0)
    cb = build_codebook(cfg.tau_phi)
    slot = generate_slot(cfg, prof, cb, rng=4)
    H_hat = lmmse_channel_estimate(slot.Y_phi, cb, slot.assignment, prof, slot.sigma_v2).H_hat
    lin = aa_rls_linear_detect(slot, H_hat, prof, cfg)
    df = aa_rls_df_detect(slot, H_hat, prof, cfg)
    # neither uses the group list
    assert not lin.nu.any() and not df.nu.any()
    assert lin.d_hard.shape == df.d_hard.shape == slot.data_symbols.shape
