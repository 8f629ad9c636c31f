import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from admean.audit import random_invertible, replay_cov_transcript
from admean.covsafe import CovNoise, CovTranscript, covsafe, loo_covariance, pair_transform
from admean.errors import IndexOutOfRange, NoiseLenMismatch, OddSampleSize
from admean.mechanisms import Rng, laplace_vec
from admean.psd import min_eig_difference

X4 = np.array([[1.0], [-1.0], [0.0], [0.0]])


def test_pair_transform_examples():
    assert pair_transform([[1.0], [0.0]]).tolist() == [[1.0]]
    x = np.ones((6, 2))
    assert not pair_transform(x).any()


def test_pair_transform_identity():
    x = np.random.default_rng(0).standard_normal((10, 3))
    xt = pair_transform(x)
    np.testing.assert_allclose(xt + x[5:], x[:5], rtol=0, atol=1e-15)


def test_pair_transform_odd():
    with pytest.raises(OddSampleSize):
        pair_transform(np.zeros((5, 2)))


def test_no_prune_trace():
    res = covsafe(X4, 4.0, 1.0, CovNoise.zero(4))
    assert res.transcript.T == 1
    assert res.transcript.n_removed == 0
    assert res.sigma_hat.entries[0, 0] == pytest.approx(0.5)


def test_prune_all_aborts():
    res = covsafe(X4, 1.0, 1.0, CovNoise.zero(4), early_stop=False)
    tr = res.transcript
    assert res.sigma_hat is None
    assert tr.removed(1).tolist() == [0, 1]
    assert tr.T == 2 and tr.removed(2).tolist() == [0, 1]


def test_prune_all_aborts_early_stop():
    res = covsafe(X4, 1.0, 1.0, CovNoise.zero(4))
    assert res.sigma_hat is None and res.transcript.truncated and res.transcript.T == 1


def test_identical_halves_never_pruned():
    x = np.vstack([np.arange(6.0).reshape(3, 2)] * 2)
    res = covsafe(x, 0.5, 0.0, CovNoise.zero(6))
    assert res.transcript.n_removed == 0
    np.testing.assert_array_equal(res.sigma_hat.entries, np.zeros((2, 2)))


def test_loo_examples():
    res = covsafe(X4, 4.0, 1.0, CovNoise.zero(4))
    xt = pair_transform(X4)
    assert loo_covariance(res, xt, 0).entries[0, 0] == pytest.approx(0.25)
    aborted = covsafe(X4, 1.0, 1.0, CovNoise.zero(4))
    assert loo_covariance(aborted, xt, 0) is None
    with pytest.raises(IndexOutOfRange):
        loo_covariance(res, xt, 2)


def test_loo_of_removed_index_is_unchanged():
    x = np.array([[10.0], [1.0], [-1.0], [0.0], [0.0], [0.0]])
    res = covsafe(x, 4.0, 1.0, CovNoise.zero(6))
    assert res.transcript.removed().tolist() == [0]
    assert res.sigma_hat.entries[0, 0] == pytest.approx(1 / 3)
    assert loo_covariance(res, pair_transform(x), 0) is res.sigma_hat


def test_noise_length_checked():
    with pytest.raises(NoiseLenMismatch):
        covsafe(X4, 1.0, 1.0, CovNoise(np.zeros(2), 0.0))


def test_max_iters_without_convergence_aborts():
    x = np.array([[100.0], [10.0], [1.0], [0.5], [0.0], [0.0], [0.0], [0.0]])
    full = covsafe(x, 2.5, 10.0, CovNoise.zero(8))
    assert full.transcript.T >= 2 and full.sigma_hat is not None
    capped = covsafe(x, 2.5, 10.0, CovNoise.zero(8), max_iters=1)
    assert capped.sigma_hat is None and not capped.transcript.converged


def _random_run(seed):
    gen = np.random.default_rng(seed)
    n = 2 * int(gen.integers(2, 33))
    d = int(gen.integers(1, 5))
    x = gen.standard_normal((n, d)) * np.exp(gen.uniform(-1, 1, d))
    x[: int(gen.integers(0, 4))] *= 20
    B = float(np.exp(gen.uniform(-1, 3)))
    m = float(gen.uniform(0, 6))
    noise = CovNoise.draw(n, float(gen.uniform(0.05, 1)), 1.0, Rng(seed))
    return x, B, m, noise


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31))
def test_transcript_replays(seed):
    x, B, m, noise = _random_run(seed)
    res = covsafe(x, B, m, noise, early_stop=False)
    assert replay_cov_transcript(x, B, m, noise, res) == []
    tr = res.transcript
    assert tr.T <= x.shape[0] // 2 + 1
    for a, b in zip(tr.covariances, tr.covariances[1:]):
        assert min_eig_difference(a, b) >= -1e-9 * max(1.0, np.abs(a.entries).max())
    assert (res.sigma_hat is not None) == (tr.n_removed <= m + noise.w)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31))
def test_early_stop_matches_full_run(seed):
    x, B, m, noise = _random_run(seed)
    full = covsafe(x, B, m, noise, early_stop=False)
    fast = covsafe(x, B, m, noise)
    assert (full.sigma_hat is None) == (fast.sigma_hat is None)
    if full.sigma_hat is not None:
        np.testing.assert_array_equal(full.transcript.removed(), fast.transcript.removed())
    assert fast.transcript.T <= max(0, math.ceil(m + noise.w)) + 1


def test_affine_invariance():
    r = Rng(77)
    for trial in range(30):
        x, B, m, noise = _random_run(1000 + trial)
        t = random_invertible(x.shape[1], r)
        a = covsafe(x, B, m, noise, early_stop=False).transcript
        b = covsafe(x @ t.T, B, m, noise, early_stop=False).transcript
        assert a.T == b.T
        np.testing.assert_array_equal(a.removal_round, b.removal_round)


def test_transcript_json_round_trip():
    x, B, m, noise = _random_run(5)
    tr = covsafe(x, B, m, noise, early_stop=False).transcript
    back = CovTranscript.from_json(tr.to_json(include_sigma=True), x.shape[0] // 2)
    np.testing.assert_array_equal(back.removal_round, tr.removal_round)
    assert back.T == tr.T
    for a, b in zip(back.covariances, tr.covariances):
        np.testing.assert_array_equal(a.entries, b.entries)


def test_draw_shapes():
    noise = CovNoise.draw(10, 0.5, 2.0, Rng(0))
    assert noise.z.shape == (6,)
    assert isinstance(noise.w, float)
    np.testing.assert_array_equal(noise.z, CovNoise.draw(10, 0.5, 2.0, Rng(0)).z)
    assert laplace_vec(0.5, 6, Rng(0))[0] == noise.z[0]
