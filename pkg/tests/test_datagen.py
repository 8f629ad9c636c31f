import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from admean.datagen import (C1_MIN, DistSpec, check_concentration, check_concentration_whitened, err_sigma,
                            estimate_M_sq, paired_cov, sample)
from admean.errors import BadC1, BadSpec, DimMismatch, OddSampleSize
from admean.mechanisms import Rng


def test_zero_covariance_gives_copies_of_mu():
    x = sample(DistSpec.gaussian([1.0, -2.0], np.zeros((2, 2))), 50, Rng(0))
    assert np.array_equal(x, np.tile([1.0, -2.0], (50, 1)))


def test_singular_covariance_support():
    x = sample(DistSpec.gaussian([0.0, 3.0], np.diag([1.0, 0.0])), 200, Rng(0))
    assert np.all(x[:, 1] == 3.0) and x[:, 0].std() > 0.5


def test_gaussian_empirical_covariance():
    sig = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 0.5]])
    x = sample(DistSpec.gaussian(np.zeros(3), sig), 10**6, Rng(1))
    assert np.linalg.norm(np.cov(x.T) - sig) <= 0.02 * np.linalg.norm(sig)


@pytest.mark.parametrize("spec", [DistSpec.student_t(np.zeros(2), np.diag([1.0, 4.0]), 8.0),
                                  DistSpec("scaled_gaussian_mixture", np.zeros(2), np.diag([1.0, 4.0]))])
def test_heavy_families_have_target_covariance(spec):
    x = sample(spec, 4 * 10**5, Rng(2))
    assert np.linalg.norm(np.cov(x.T) - spec.sigma.entries) <= 0.05 * np.linalg.norm(spec.sigma.entries)


def test_student_t_fourth_moment_stabilizes():
    spec = DistSpec.student_t(np.zeros(2), np.eye(2), 6.0)
    m = [np.mean(np.sum(sample(spec, n, Rng(3)) ** 2, axis=1) ** 2) for n in (10**5, 4 * 10**5)]
    assert m[1] == pytest.approx(m[0], rel=0.2)


def test_spec_validation():
    with pytest.raises(BadSpec):
        DistSpec("cauchy", [0.0], [[1.0]])
    with pytest.raises(BadSpec):
        DistSpec.student_t([0.0], [[1.0]], 2.0)
    with pytest.raises(BadSpec):
        DistSpec.gaussian([0.0, 0.0], [[1.0]])
    with pytest.raises(BadSpec):
        DistSpec.gaussian([0.0], [[-1.0]])


def test_paired_cov_examples():
    v = np.array([1.0, 2.0])
    np.testing.assert_allclose(paired_cov(np.array([v, -v])).entries, 2 * np.outer(v, v))
    assert not paired_cov(np.vstack([np.eye(3), np.eye(3)])).entries.any()
    with pytest.raises(OddSampleSize):
        paired_cov(np.zeros((3, 2)))


def test_paired_cov_unbiased():
    sig = np.array([[1.0, 0.3], [0.3, 0.5]])
    spec = DistSpec.gaussian(np.zeros(2), sig)
    r = Rng(4)
    avg = np.mean([paired_cov(sample(spec, 16, r)).entries for _ in range(10**4)], axis=0)
    assert np.linalg.norm(avg - sig) <= 0.02 * np.linalg.norm(sig)


def test_err_sigma_examples():
    assert err_sigma([1.0, 2.0], [1.0, 2.0], np.eye(2)) == 0.0
    assert err_sigma([1.0, 2.0], [0.0, 0.0], np.eye(2)) == pytest.approx(5.0)
    assert err_sigma([0.0, 1.0], [0.0, 0.0], np.diag([1.0, 0.0])) == math.inf
    with pytest.raises(DimMismatch):
        err_sigma([0.0], [0.0, 1.0], np.eye(2))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_err_sigma_affine_invariant(seed):
    gen = np.random.default_rng(seed)
    d = int(gen.integers(1, 6))
    q = gen.standard_normal((d, d))
    sig = q @ q.T + 0.1 * np.eye(d)
    t = gen.standard_normal((d, d)) + 2 * np.eye(d)
    a, b = gen.standard_normal(d), gen.standard_normal(d)
    tst = t @ sig @ t.T
    assert err_sigma(t @ a, t @ b, 0.5 * (tst + tst.T)) == pytest.approx(err_sigma(a, b, sig), rel=1e-6)


def test_concentration_degenerate():
    x = np.tile([1.0, 1.0], (10, 1))
    assert check_concentration(x, [1.0, 1.0], np.zeros((2, 2)), 0.0).holds


def test_concentration_outlier():
    x = np.array([[0.0], [0.1], [-0.1], [1e4]])
    rep = check_concentration(x, [0.0], [[1.0]], 10.0)
    assert rep.max_whitened_norm_sq > 10.0**2 / C1_MIN and not rep.holds


def test_concentration_bad_c1():
    with pytest.raises(BadC1):
        check_concentration(np.zeros((4, 1)), [0.0], [[1.0]], 1.0, c1=1.0)


def test_concentration_frequency_gaussian():
    d, n, beta, seeds = 4, 10**4, 0.1, 40
    # chi-square tail bound for the maximum of n squared norms, union over rows
    L = math.log(n / beta)
    M = math.sqrt(C1_MIN * (d + 2 * math.sqrt(d * L) + 2 * L))
    held = sum(check_concentration(Rng(s).gen.standard_normal((n, d)), np.zeros(d), np.eye(d), M).holds
               for s in range(seeds))
    assert held / seeds >= 1 - beta


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(8, 40))
def test_whitened_equivalence(seed, half):
    gen = np.random.default_rng(seed)
    d = int(gen.integers(1, 4))
    q = gen.standard_normal((d, d))
    sig = q @ q.T + 0.2 * np.eye(d)
    mu = gen.standard_normal(d)
    root = np.linalg.cholesky(sig)
    z = gen.standard_normal((2 * half, d))
    x = mu + z @ root.T
    M = math.sqrt(C1_MIN * float(gen.uniform(1, 12)))
    a = check_concentration(x, mu, sig, M)
    b = check_concentration_whitened(z, M)
    assert a.max_whitened_norm_sq == pytest.approx(b.max_whitened_norm_sq, rel=1e-8)
    assert a.holds == b.holds


def test_estimate_m_sq():
    x = np.array([[1.0], [-1.0], [0.0], [0.0]])
    # paired covariance is 0.5 and the sample mean is 0
    assert estimate_M_sq(x) == pytest.approx(C1_MIN * 2.0)
