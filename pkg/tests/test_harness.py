import json
import math
import time
import warnings

import numpy as np
import pytest

from admean import harness
from admean.datagen import sample, DistSpec
from admean.mechanisms import Rng


@pytest.fixture(autouse=True)
def _quiet_large_eps():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", "privacy guarantee is stated", RuntimeWarning)
        yield


def test_csv_round_trip_is_bit_exact(tmp_path):
    x = np.random.default_rng(0).standard_normal((20, 3)) * 1e-7
    path = tmp_path / "x.csv"
    harness.write_csv(path, x, header=["a", "b", "c"])
    back = harness.read_csv(path, header=True)
    assert np.array_equal(back, x)


def test_csv_ragged_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3\n")
    with pytest.raises(ValueError, match="differing"):
        harness.read_csv(path)


def test_config_validation():
    harness.ExperimentConfig("sweep", eps=2.0, delta=1e-3).validate()
    with pytest.raises(ValueError):
        harness.ExperimentConfig("serve").validate()
    with pytest.raises(ValueError):
        harness.ExperimentConfig("estimate", bound=-1.0).validate()
    with pytest.raises(ValueError):
        harness.ExperimentConfig("estimate", delta=1.5).validate()


def test_resolve_threads(monkeypatch):
    monkeypatch.setenv(harness.THREADS_ENV, "3")
    assert harness.resolve_threads(None) == 3
    assert harness.resolve_threads(2) == 2
    monkeypatch.delenv(harness.THREADS_ENV)
    assert harness.resolve_threads(None) == 1


def _small_sweep(threads, bound=600.0):
    return harness.run_sweep([1024, 2048], 2, 1000.0, 1e-6, [0, 1, 2], bound=bound, threads=threads)


def test_sweep_parallel_matches_serial():
    a, b = _small_sweep(1), _small_sweep(2)
    strip = lambda res: [{k: v for k, v in r.items() if k != "wall_ms"} for c in res.cells for r in c["runs"]]
    assert strip(a) == strip(b)
    assert a.cells[0]["err_xbar"] == b.cells[0]["err_xbar"]


def test_sweep_no_prune_identity_gap():
    res = _small_sweep(1)
    gaps = [c["max_identity_gap"] for c in res.cells if c["max_identity_gap"] is not None]
    assert gaps and max(gaps) < 1e-10


def test_sweep_all_abort_cell_has_null_stats():
    res = _small_sweep(1, bound=0.05)
    for c in res.cells:
        assert c["abort_rate"] == 1.0 and c["err_xbar"] is None and c["err_mu"] is None


def test_sweep_failed_cell_is_reported():
    res = harness.run_sweep([64], 2, 2.0, 1e-3, [0], bound=2.0)
    cell = res.cells[0]
    assert cell["fail_rate"] == 1.0 and "InsufficientSample" in cell["errors"][0]


def test_sweep_rejects_empty_grid():
    with pytest.raises(ValueError):
        harness.run_sweep([], 2, 1.0, 1e-3, [0])


def test_sweep_write(tmp_path):
    res = _small_sweep(1)
    res.write(str(tmp_path / "sweep"))
    data = json.loads((tmp_path / "sweep.json").read_text())
    assert data["config"]["seeds"] == [0, 1, 2] and data["config"]["ns"] == [1024, 2048]
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("n,d,eps") and len(lines) == 3


def test_zero_variance_sweep_error_path():
    # zero-variance data: estimate is x_1 plus the Gaussian shaped by a zero matrix
    x = sample(DistSpec.gaussian([1.0, 2.0], np.zeros((2, 2))), 1024, Rng(0))
    from admean.estimator import privmean
    from admean.mechanisms import PrivacyBudget
    est, _ = privmean(x, 600.0, PrivacyBudget(1000.0, 1e-6), Rng(0))
    assert np.array_equal(est, x[0])


def test_fit_exponent():
    xs = np.array([16, 32, 64])
    assert harness.fit_exponent(xs, 3.0 * xs**2.0) == pytest.approx(2.0)


def test_bench_trivial_is_fast():
    t0 = time.perf_counter()
    out = harness.run_bench(100, [2], eps=1000.0, delta=0.5, repeats=1)
    assert time.perf_counter() - t0 < 0.05
    assert out["rows"][0]["n"] == 100


@pytest.mark.slow
def test_bench_linear_in_n():
    def best(n):
        return min(harness.time_phases(n, 16, 2.0, 1e-3, s)["total_s"] for s in range(3))

    ratio = best(2 * 10**5) / best(10**5)
    assert 1.7 <= ratio <= 2.6, ratio
