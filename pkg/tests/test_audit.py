import math

import numpy as np
import pytest

from admean import audit as au
from admean.errors import DimNotOne, PreconditionUnsatisfied
from admean.mechanisms import PrivacyBudget, Rng, laplace


def test_report_json_round_trip():
    rep = au.probabilistic_report("x", 100, 3, 0.02, 7, {"a": 1}, {"b": [1, 2]})
    out = rep.to_json()
    assert set(out) >= {"name", "trials", "violations", "bound", "slack", "pass", "seed", "config"}
    assert au.AuditReport.from_json(out) == rep


def test_binomial_slack():
    assert au.binomial_slack(0.25, 10000) == pytest.approx(3 * math.sqrt(0.25 * 0.75 / 10000))
    assert au.binomial_slack(0.0, 100) == 0.0
    assert au.hard_report("h", 10, 0).passed and not au.hard_report("h", 10, 1).passed


def test_group_composition_symbolic():
    assert au.group_composition([1.0], [0.1]) == (1.0, 0.1)
    eps, delta = au.group_composition([1.0, 2.0], [0.01, 0.02])
    assert eps == 3.0
    assert delta == pytest.approx(math.exp(2.0) * 0.01 + 0.02, rel=1e-15)
    eps, delta = au.group_composition([0.5] * 3, [1e-3] * 3)
    assert eps == 1.5
    assert delta == pytest.approx((math.exp(1.0) + math.exp(0.5) + 1) * 1e-3, rel=1e-15)


def test_adjacent_pair_modes():
    x = np.arange(12.0).reshape(6, 2)
    raw = au.AdjacentPair.raw_row(x, 2, [0.0, 0.0])
    assert raw.is_valid() and raw.x_prime[2].tolist() == [0.0, 0.0]
    z = au.AdjacentPair.zeroed(x, 1)
    assert z.is_valid() and np.array_equal(z.x_prime[4], x[1])
    with pytest.raises(ValueError):
        au.AdjacentPair(x, x[:4], 0, "raw_row")


def test_linear_algebra_audits_small():
    assert au.audit_downdate_bound(30, Rng(0)).violations == 0
    assert au.audit_matrix_stability(30, Rng(1)).violations == 0
    assert au.audit_log_norm_sensitivity(30, Rng(2)).violations == 0


def test_audits_replayable():
    a = au.audit_cov_characterization(20, Rng(3)).to_json()
    b = au.audit_cov_characterization(20, Rng(3)).to_json()
    assert a == b


def test_internal_stability_vacuous_when_aborting():
    x = np.random.default_rng(0).standard_normal((64, 2))
    rep = au.audit_internal_stability(x, 0.01, 0.0, 0.5, 20, Rng(0))
    assert rep.violations == 0


def test_internal_stability_small_noise_clean_data():
    x = np.random.default_rng(1).standard_normal((4096, 2))
    rep = au.audit_internal_stability(x, 40.0, 10.0, 1e-3, 30, Rng(1))
    assert rep.violations == 0


def test_removal_relations_identity_baseline():
    x = np.random.default_rng(2).standard_normal((64, 2))
    x[32] = x[0]
    pair = au.AdjacentPair.zeroed(x, 0)
    assert np.array_equal(pair.x, pair.x_prime)
    rep = au.audit_removal_relations(pair, 64 / (4 * math.sqrt(math.e)), 64.0, Rng(2), 20)
    assert rep.violations == 0


def test_removal_relations_precondition():
    x = np.zeros((8, 1))
    with pytest.raises(PreconditionUnsatisfied):
        au.audit_removal_relations(au.AdjacentPair.zeroed(x, 0), 10.0, 1.0, Rng(0), 1)


def test_removal_relations_cases_reached():
    gen = np.random.default_rng(3)
    x = gen.standard_normal((64, 2))
    x[:4] *= 6
    B = 64 / (2 * math.sqrt(math.e)) / 2
    rep = au.audit_removal_relations(au.AdjacentPair.zeroed(x, 0), B, 64.0, Rng(3), 40)
    assert rep.violations == 0
    assert all(v > 0 for v in rep.details["checked"].values())


def test_diameter_sampling_small():
    rep = au.audit_diameter_sampling(64, 16, 100, Rng(4))
    assert rep.passed


def test_diameter_violation_detector():
    y = np.array([[0.0], [1.0], [10.0], [11.0]])
    from admean.mechanisms import Partition
    tight = Partition((np.array([0, 1]), np.array([2, 3])), 2)
    mixed = Partition((np.array([0, 2]), np.array([1, 3])), 2)
    assert au.diameter_sampling_violation(y, tight)
    assert not au.diameter_sampling_violation(y, mixed)


def test_histogram_epsilon_identical_pair():
    gen = np.random.default_rng(5)
    eps_hat, slack = au.histogram_epsilon(gen.laplace(size=10**5), gen.laplace(size=10**5), 64)
    assert eps_hat <= slack


def test_epsilon_laplace_baseline():
    x = np.zeros((2, 1))
    pair = au.AdjacentPair.raw_row(x, 0, [1.0])

    def mech(data, r):
        return float(data[0, 0] + laplace(1.0, r))

    rep = au.audit_epsilon_1d(mech, pair, PrivacyBudget(1.0, 1e-3), 64, 10**5, Rng(0), delta_corr=0.0)
    assert 0.7 <= rep.details["eps_hat"] <= 1.3


def test_epsilon_audit_needs_one_dimension():
    pair = au.AdjacentPair.raw_row(np.zeros((4, 2)), 0, [1.0, 1.0])
    with pytest.raises(DimNotOne):
        au.audit_epsilon_1d(lambda d, r: 0.0, pair, PrivacyBudget(1.0, 1e-3), 8, 10, Rng(0))


def test_epsilon_privmean_smoke():
    x = np.random.default_rng(6).standard_normal((8192, 1))
    pair = au.AdjacentPair.raw_row(x, 0, [3.0])
    rep = au.audit_epsilon_1d("privmean", pair, PrivacyBudget(2.0, 1e-3), 16, 10**4, Rng(6), B=40.0)
    assert rep.passed, rep.details
