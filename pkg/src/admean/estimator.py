"""Parameter schedule and the top-level private mean estimators."""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from admean.covsafe import CovNoise, covsafe
from admean.errors import InsufficientSample, OddSampleSize
from admean.meansafe import MeanNoise, meansafe
from admean.mechanisms import PrivacyBudget, Rng

SQRT_E = math.sqrt(math.e)

# Stream ids for the two phases, so each phase's noise can be replayed alone.
COV_STREAM = 1
MEAN_STREAM = 2


@dataclass(frozen=True)
class PrivMeanParams:
    n: int
    d: int
    B: float
    eps: float
    delta: float
    m: float
    m_max: float
    sigma_z: float
    sigma_w_cov: float
    b: int
    k: int
    sigma_top: float
    sigma_gauss: float
    sigma_w_mean: float

    @property
    def budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.eps, self.delta)

    def to_json(self) -> dict:
        return asdict(self)


def _log1pexp(a: float) -> float:
    """``log(1 + e^a)`` without overflow."""
    return float(np.logaddexp(0.0, a))


def delta_prime(eps: float, delta: float) -> float:
    """Achieved failure probability for a run scheduled with ``(eps, delta)``."""
    with np.errstate(over="ignore"):
        e = np.exp(np.array([0.75, 0.25, 0.5]) * eps)
    return float((e[0] + e[1]) * delta + 2.0 * (e[2] + 1.0) * delta)


def privacy_sample_requirement(n: int, B: float, eps: float, delta: float) -> float:
    """Right-hand side of the sample-size condition under which privacy is proved."""
    m = 16.0 / eps * math.log(1.0 / delta)
    tail = 16.0 / eps * (_log1pexp(eps / 4.0) - math.log(delta))
    lead = 128.0 * SQRT_E * B * (math.log(n) + _log1pexp(eps / 4.0) - math.log(delta)) / eps
    return lead * (m + 1.0 + tail)


def privacy_diagnostics(n: int, B: float, eps: float, delta: float) -> dict:
    """Report (but do not enforce) the conditions of the privacy guarantee."""
    need = privacy_sample_requirement(n, B, eps, delta)
    return {
        "delta_le_1_over_n": delta <= 1.0 / n,
        "n_required": need,
        "n_sufficient": n >= need,
        "eps_le_8": eps <= 8.0,
        "delta_prime": delta_prime(eps, delta),
    }


def schedule(n: int, d: int, B: float, budget: PrivacyBudget) -> PrivMeanParams:
    """Compute every noise scale and size parameter for one run.

    Raises:
        InsufficientSample: if ``n <= B sqrt(e)``, ``b < 4`` or
            ``2 b (k + 1) > n``; the message names the failing inequality.
        OddSampleSize: if ``n`` is odd.
    """
    if n % 2:
        raise OddSampleSize(f"sample size must be even, got {n}")
    if B <= 0:
        raise ValueError("B must be positive")
    eps, delta = budget.eps, budget.delta
    if eps > 8:
        warnings.warn("privacy guarantee is stated for eps <= 8", RuntimeWarning, stacklevel=2)
    m = 16.0 / eps * math.log(1.0 / delta)
    m_max = m + 16.0 / eps * (_log1pexp(eps / 4.0) - math.log(delta))
    sigma_z = 32.0 * SQRT_E * B * (m_max + 1.0) / (n * eps)
    sigma_w_cov = 16.0 / eps
    b = int(math.ceil(1.0 + math.log2(6.0 * n * n / delta)))
    k = max(1, int(math.ceil(24.0 / eps * math.log(3.0 / delta) - 3.0)))
    if not n > B * SQRT_E:
        raise InsufficientSample(f"need n > B*sqrt(e): n={n}, B*sqrt(e)={B * SQRT_E:.6g}")
    if b < 4:
        raise InsufficientSample(f"need b >= 4, got b={b}")
    if 2 * b * (k + 1) > n:
        raise InsufficientSample(f"need 2*b*(k+1) <= n: 2*{b}*({k}+1)={2 * b * (k + 1)} > n={n}")
    ratio = B * SQRT_E / n
    sigma_top = 8.0 * k / (n * eps) * B * SQRT_E / (1.0 - ratio)
    log_gauss = math.log(20.0 * b * math.sqrt(B) / (n * eps)) + 3.0 * sigma_top * math.log(12.0 * n / (b * delta))
    if log_gauss > math.log(np.finfo(np.float64).max):
        raise InsufficientSample(f"Gaussian noise scale exp({log_gauss:.4g}) is not finite in double precision")
    sigma_gauss = math.exp(log_gauss)
    return PrivMeanParams(n=n, d=d, B=float(B), eps=float(eps), delta=float(delta), m=m, m_max=m_max,
                          sigma_z=sigma_z, sigma_w_cov=sigma_w_cov, b=b, k=k, sigma_top=sigma_top,
                          sigma_gauss=sigma_gauss, sigma_w_mean=8.0 / eps)


@dataclass
class RunRecord:
    seed: int
    params: Optional[PrivMeanParams]
    estimate: Optional[np.ndarray]
    cov: dict = field(default_factory=dict)
    mean: dict = field(default_factory=dict)
    wall_ms: float = 0.0
    stream_id: int = 0
    # full transcripts and noise, kept only on request
    cov_result: object = field(default=None, repr=False)
    mean_transcript: object = field(default=None, repr=False)
    mean_noise: object = field(default=None, repr=False)

    def to_json(self) -> dict:
        p = self.params
        return {
            "seed": self.seed,
            "stream_id": self.stream_id,
            "eps": p.eps if p else None,
            "delta": p.delta if p else None,
            "B": p.B if p else None,
            "n": p.n if p else None,
            "d": p.d if p else None,
            "estimate": None if self.estimate is None else [float(v) for v in self.estimate],
            "cov": self.cov,
            "mean": self.mean,
            "wall_ms": self.wall_ms,
            "params": p.to_json() if p else None,
        }


def _as_data(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("data must be a 2-d array of shape (n, d)")
    return x


def privmean(x, B: float, budget: PrivacyBudget, rng: Rng, *, keep_transcripts: bool = False):
    """Covariance-adaptive private mean with threshold ``B``.

    Noise for the covariance phase comes from ``rng.child(1)`` and for the mean
    phase from ``rng.child(2)``, so runs are replayable from the seed.

    Returns:
        ``(estimate, record)``; ``estimate`` is ``None`` on abort.
    """
    x = _as_data(x)
    n, d = x.shape
    p = schedule(n, d, B, budget)
    t0 = time.perf_counter()
    cov_noise = CovNoise.draw(n, p.sigma_z, p.sigma_w_cov, rng.child(COV_STREAM))
    cres = covsafe(x, p.B, p.m, cov_noise)
    rec = RunRecord(rng.seed, p, None, stream_id=rng.stream_id)
    rec.cov = {"T": cres.transcript.T, "n_removed": cres.transcript.n_removed, "aborted": cres.aborted}
    if keep_transcripts:
        rec.cov_result = cres
    if cres.aborted:
        rec.mean = {"t": None, "n_removed": None, "aborted": None}
        rec.wall_ms = 1e3 * (time.perf_counter() - t0)
        return None, rec
    mnoise = MeanNoise.draw(n, d, p.b, p.sigma_top, p.sigma_w_mean, p.sigma_gauss, rng.child(MEAN_STREAM))
    est, mtr = meansafe(x, cres.sigma_hat, p.B, p.b, p.k, mnoise)
    rec.mean = {"t": mtr.t, "n_removed": mtr.n_removed, "aborted": est is None}
    if keep_transcripts:
        rec.mean_transcript = mtr
        rec.mean_noise = mnoise
    rec.estimate = est
    rec.wall_ms = 1e3 * (time.perf_counter() - t0)
    return est, rec


def round_budget(budget: PrivacyBudget, t: int) -> PrivacyBudget:
    return PrivacyBudget(budget.eps / t**2, budget.delta / t**2)


def adamean(x, budget: PrivacyBudget, rng: Rng, t_max: int = 64):
    """Doubling search over ``B = d * 2**(t-1)`` with budgets ``(eps/t^2, delta/t^2)``.

    Returns the first non-abort estimate with the records of every round run.

    Raises:
        InsufficientSample: when some round's schedule is infeasible; the
            records of the rounds already run are attached as ``.records``.
    """
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    x = _as_data(x)
    d = x.shape[1]
    records = []
    for t in range(1, t_max + 1):
        B = d * 2.0 ** (t - 1)
        try:
            est, rec = privmean(x, B, round_budget(budget, t), rng.child(1000 + t))
        except InsufficientSample as exc:
            raise InsufficientSample(f"round {t} (B={B:g}): {exc}", records) from exc
        rec.mean["round"] = t
        records.append(rec)
        if est is not None:
            return est, records
    return None, records


def spent_budget(records) -> tuple[float, float]:
    """Sum of per-round ``(eps, delta)`` across adaptive records."""
    return (math.fsum(r.params.eps for r in records), math.fsum(r.params.delta for r in records))
