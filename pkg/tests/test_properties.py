import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mmtc_linksim import (
    GaussianMoments,
    ParameterError,
    SystemConfig,
    beta_binomial_pmf,
    diversity_order,
    extrinsic_llr,
    flop_count,
    sinr_perfect,
    symbol_priors,
)
from mmtc_linksim.analysis import ALGORITHMS
from mmtc_linksim.modulation import qpsk_demap_hard, qpsk_map

finite = st.floats(-50, 50, allow_nan=False)
shape_param = st.floats(0.05, 60)


@given(N=st.integers(0, 1024), a=shape_param, b=shape_param)
@settings(max_examples=60, deadline=None)
def test_beta_binomial_normalised(N, a, b):
    p = beta_binomial_pmf(np.arange(N + 1), N, a, b)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-12
    assert abs(np.sum(np.arange(N + 1) * p) - N * a / (a + b)) < 1e-9 * max(N, 1)


@given(bits=arrays(np.int8, st.integers(1, 40).map(lambda k: 2 * k), elements=st.integers(0, 1)))
def test_qpsk_round_trip(bits):
    np.testing.assert_array_equal(qpsk_demap_hard(qpsk_map(bits)), bits)


@given(L=arrays(np.float64, (3, 2), elements=finite), rho=st.floats(0, 1))
def test_symbol_priors_are_distributions(L, rho):
    p = symbol_priors(L, rho)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0)
    np.testing.assert_allclose(p[:, 0], 1 - rho)


@given(
    re=finite, im=finite, mu=st.floats(0.05, 3), z2=st.floats(1e-3, 10),
    prior=arrays(np.float64, 5, elements=st.floats(1e-6, 1)),
)
def test_extrinsic_llr_finite_and_flat_prior_symmetric(re, im, mu, z2, prior):
    prior = prior / prior.sum()
    out = extrinsic_llr(np.array([complex(re, im)]), GaussianMoments(mu, z2), prior[None, :])
    assert np.all(np.isfinite(out))
    # mirroring the observation flips the bit LLRs under a flat prior
    flat = np.full(5, 0.2)
    a = extrinsic_llr(np.array([complex(re, im)]), GaussianMoments(mu, z2), flat)
    b = extrinsic_llr(np.array([complex(-re, -im)]), GaussianMoments(mu, z2), flat)
    np.testing.assert_allclose(a, -b, atol=1e-9)


@given(data=st.data())
def test_diversity_flip_property(data):
    K = data.draw(st.integers(1, 64))
    M = K + data.draw(st.integers(0, 64))
    card = data.draw(st.sampled_from([2, 4, 16]))
    th = np.array(data.draw(st.lists(st.integers(0, 1), min_size=K, max_size=K)))
    zeros = np.flatnonzero(th == 0)
    if zeros.size == 0:
        return
    j = data.draw(st.sampled_from(list(zeros)))
    flipped = th.copy()
    flipped[j] = 1
    d0 = diversity_order(M, K, th, card)
    assert d0 >= M - K
    assert diversity_order(M, K, flipped, card) - d0 == card - 1


@given(alg=st.sampled_from(ALGORITHMS), M=st.integers(1, 256), N=st.integers(1, 256), G=st.integers(0, 10))
def test_flops_integer_and_vgl_contains_df(alg, M, N, G):
    v = flop_count(alg, M, N, 5, 0, G)
    assert isinstance(v, int) and v >= 0
    assert flop_count("AA-VGL-DF", M, N, 5, 0, 0) == flop_count("AA-RLS-DF", M, N)


@given(seed=st.integers(0, 2**32 - 1), scale=st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3))
def test_sinr_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    b = rng.uniform(0.1, 0.3, 3)
    assert sinr_perfect(w * scale, H, 0, b) == pytest.approx(sinr_perfect(w, H, 0, b), rel=1e-9)


@given(lam=st.one_of(st.floats(-5, 0), st.floats(1.0000001, 5)))
def test_config_rejects_lambda_outside_range(lam):
    with pytest.raises(ParameterError):
        SystemConfig(lambda_=lam)
