"""Stable covariance estimation by iterative pruning of paired differences.

Indices are 0-based throughout: pair ``i`` is ``x[i] - x[n//2 + i]`` and the
shared noise coordinate is ``z[n//2]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from admean.errors import IndexOutOfRange, NoiseLenMismatch, OddSampleSize
from admean.psd import PsdMatrix, ext_log, mahalanobis_sq_batch


def pair_transform(x) -> np.ndarray:
    """Differences ``x[i] - x[n/2 + i]`` for ``i < n/2``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2 or n % 2:
        raise OddSampleSize(f"need an even sample size of at least 2, got {n}")
    h = n // 2
    return x[:h] - x[h:]


def second_moment(x_tilde: np.ndarray, n: int, keep: Optional[np.ndarray] = None) -> PsdMatrix:
    """``(1/n) * sum_{i in keep} x_tilde_i x_tilde_i^T``."""
    rows = x_tilde if keep is None else x_tilde[keep]
    s = rows.T @ rows / n
    return PsdMatrix(0.5 * (s + s.T))


@dataclass(frozen=True)
class CovNoise:
    """Explicit randomness for one covariance run: ``z`` has length n/2 + 1."""

    z: np.ndarray
    w: float

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=np.float64).ravel())
        object.__setattr__(self, "w", float(self.w))

    @classmethod
    def draw(cls, n: int, sigma_z: float, sigma_w: float, rng) -> "CovNoise":
        from admean.mechanisms import laplace, laplace_vec

        return cls(laplace_vec(sigma_z, n // 2 + 1, rng), laplace(sigma_w, rng))

    @classmethod
    def zero(cls, n: int) -> "CovNoise":
        return cls(np.zeros(n // 2 + 1), 0.0)


@dataclass
class CovTranscript:
    """Execution record of a covariance run.

    ``removal_round[i]`` is the iteration at which pair ``i`` was pruned and
    ``0`` if it never was, so ``R_t = {i : 0 < removal_round[i] <= t}``.
    ``covariances[t]`` is ``Sigma_t`` for ``t = 0..T``.
    """

    removal_round: np.ndarray
    covariances: list
    T: int
    converged: bool = True
    truncated: bool = False

    def removed(self, t: Optional[int] = None) -> np.ndarray:
        """Sorted indices of ``R_t`` (``R_T`` by default)."""
        t = self.T if t is None else t
        r = self.removal_round
        return np.flatnonzero((r > 0) & (r <= t))

    @property
    def removed_sets(self) -> list:
        return [self.removed(t) for t in range(self.T + 1)]

    @property
    def n_removed(self) -> int:
        return int(np.count_nonzero(self.removal_round))

    def to_json(self, include_sigma: bool = False) -> dict:
        out = {
            "T": self.T,
            "removed": [s.tolist() for s in self.removed_sets],
            "converged": self.converged,
            "truncated": self.truncated,
        }
        if include_sigma:
            out["sigma_trace"] = [np.asarray(s).tolist() for s in self.covariances]
        return out

    @classmethod
    def from_json(cls, data: dict, n_pairs: int) -> "CovTranscript":
        rounds = np.zeros(n_pairs, dtype=np.int64)
        prev: set = set()
        for t, rem in enumerate(data["removed"]):
            for i in set(rem) - prev:
                rounds[i] = t
            prev = set(rem)
        covs = [PsdMatrix(s) for s in data.get("sigma_trace", [])]
        return cls(rounds, covs, int(data["T"]), data.get("converged", True), data.get("truncated", False))


@dataclass
class CovResult:
    sigma_hat: Optional[PsdMatrix]
    transcript: CovTranscript
    m: float = 0.0
    w: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def aborted(self) -> bool:
        return self.sigma_hat is None


def covsafe(x, B: float, m: float, noise: CovNoise, max_iters: Optional[int] = None,
            early_stop: bool = True) -> CovResult:
    """Run the pruning loop and gate the result on the number of removed pairs.

    Args:
        x: ``(n, d)`` data with ``n`` even.
        B: Threshold on noisy squared Mahalanobis norms of paired differences.
        m: Nominal number of tolerated removals.
        noise: Laplace noise ``z`` (length n/2 + 1) and threshold noise ``w``.
        max_iters: Optional cap on iterations. Hitting the cap before
            convergence returns ``None`` (the abort symbol).
        early_stop: Stop as soon as more than ``m + w`` pairs are removed;
            the result is then ``None`` exactly as for a full run.

    Returns:
        CovResult whose ``sigma_hat`` is ``None`` on abort.
    """
    if B <= 0:
        raise ValueError("B must be positive")
    xt = pair_transform(x)
    n = 2 * xt.shape[0]
    h = xt.shape[0]
    z = noise.z
    if z.size != h + 1:
        raise NoiseLenMismatch(f"expected {h + 1} noise entries, got {z.size}")
    gate = m + noise.w
    log_b = math.log(B)
    # noise part of each test, precomputed: prune when log-norm > log B - z_i - z_last
    cutoff = log_b - z[:h] - z[h]

    rounds = np.zeros(h, dtype=np.int64)
    alive = np.ones(h, dtype=bool)
    sigma = second_moment(xt, n)
    covs = [sigma]
    t = 0
    converged = truncated = False
    n_removed = 0
    while True:
        t += 1
        idx = np.flatnonzero(alive)
        if idx.size:
            lognorm = ext_log(mahalanobis_sq_batch(xt[idx], sigma))
            hit = idx[lognorm > cutoff[idx]]
        else:
            hit = idx
        rounds[hit] = t
        alive[hit] = False
        n_removed += hit.size
        if hit.size == 0:
            converged = True
        else:
            sigma = second_moment(xt, n, alive)
        covs.append(sigma)
        if converged:
            break
        if early_stop and n_removed > gate:
            truncated = True
            break
        if max_iters is not None and t >= max_iters:
            break

    transcript = CovTranscript(rounds, covs, t, converged, truncated)
    out = None if (n_removed > gate or not converged) else sigma
    return CovResult(out, transcript, float(m), float(noise.w))


def loo_covariance(result: CovResult, x_tilde, i: int) -> Optional[PsdMatrix]:
    """Leave-one-out covariance: drop pair ``i``'s term when it survived."""
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    if x_tilde.ndim == 1:
        x_tilde = x_tilde[:, None]
    h = x_tilde.shape[0]
    if not 0 <= i < h:
        raise IndexOutOfRange(f"pair index {i} outside [0, {h})")
    if result.sigma_hat is None:
        return None
    alive = result.transcript.removal_round == 0
    if not alive[i]:
        return result.sigma_hat
    keep = alive.copy()
    keep[i] = False
    return second_moment(x_tilde, 2 * h, keep)
