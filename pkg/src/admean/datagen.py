"""Synthetic distributions, empirical moments and the concentration event."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from admean.errors import BadC1, BadSpec, DimMismatch, OddSampleSize
from admean.psd import PsdMatrix, as_psd, mahalanobis_sq, mahalanobis_sq_batch

C1_MIN = 64.0 * math.e
KINDS = ("gaussian", "scaled_gaussian_mixture", "student_t")


@dataclass(frozen=True)
class DistSpec:
    """A location-scale family with mean ``mu`` and covariance ``sigma``.

    ``extra`` holds ``dof`` for ``student_t`` and ``scales``/``weights`` for
    ``scaled_gaussian_mixture`` (component scales are renormalized so the
    mixture covariance equals ``sigma``).
    """

    kind: str
    mu: np.ndarray
    sigma: PsdMatrix
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadSpec(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        object.__setattr__(self, "mu", mu)
        try:
            sig = as_psd(self.sigma)
            sig.spectrum
        except ValueError as exc:
            raise BadSpec(f"invalid covariance: {exc}") from exc
        object.__setattr__(self, "sigma", sig)
        if sig.dim != mu.size:
            raise BadSpec(f"mean has length {mu.size} but covariance is {sig.dim}x{sig.dim}")
        if self.kind == "student_t":
            dof = self.extra.get("dof")
            if dof is None or not dof > 2:
                raise BadSpec("student_t needs dof > 2 for a finite covariance")
        if self.kind == "scaled_gaussian_mixture":
            scales = np.asarray(self.extra.get("scales", (0.5, 2.0)), dtype=np.float64)
            weights = np.asarray(self.extra.get("weights", np.full(scales.size, 1.0 / scales.size)))
            if scales.shape != weights.shape or np.any(scales <= 0) or np.any(weights < 0) \
                    or not math.isclose(weights.sum(), 1.0):
                raise BadSpec("mixture needs positive scales and weights summing to 1")

    @property
    def dim(self) -> int:
        return self.mu.size

    @classmethod
    def gaussian(cls, mu, sigma) -> "DistSpec":
        return cls("gaussian", mu, sigma)

    @classmethod
    def student_t(cls, mu, sigma, dof: float) -> "DistSpec":
        return cls("student_t", mu, sigma, {"dof": float(dof)})


def _standard_rows(spec: DistSpec, n: int, gen: np.random.Generator) -> np.ndarray:
    """Rows with mean zero and identity covariance."""
    d = spec.dim
    g = gen.standard_normal((n, d))
    if spec.kind == "gaussian":
        return g
    if spec.kind == "student_t":
        dof = spec.extra["dof"]
        chi = gen.chisquare(dof, size=n)
        return g * np.sqrt((dof - 2.0) / chi)[:, None]
    scales = np.asarray(spec.extra.get("scales", (0.5, 2.0)), dtype=np.float64)
    weights = np.asarray(spec.extra.get("weights", np.full(scales.size, 1.0 / scales.size)))
    norm = math.sqrt(float(np.sum(weights * scales**2)))
    comp = gen.choice(scales.size, size=n, p=weights)
    return g * (scales[comp] / norm)[:, None]


def sample(spec: DistSpec, n: int, rng) -> np.ndarray:
    """Draw ``n`` i.i.d. rows ``mu + sigma^{1/2} z``."""
    if n < 1:
        raise BadSpec("n must be positive")
    gen = rng.gen if hasattr(rng, "gen") else rng
    z = _standard_rows(spec, n, gen)
    return spec.mu + z @ spec.sigma.sqrt


def paired_cov(x) -> PsdMatrix:
    """``(1/n) * sum_i (x_i - x_{n/2+i})(x_i - x_{n/2+i})^T``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n % 2 or n < 2:
        raise OddSampleSize(f"need an even sample size, got {n}")
    diff = x[: n // 2] - x[n // 2:]
    s = diff.T @ diff / n
    return PsdMatrix(0.5 * (s + s.T))


def err_sigma(mu_hat, mu, sigma) -> float:
    """Squared error in the covariance geometry, ``inf`` off the column space."""
    mu_hat = np.atleast_1d(np.asarray(mu_hat, dtype=np.float64))
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    if mu_hat.shape != mu.shape:
        raise DimMismatch(f"shapes {mu_hat.shape} and {mu.shape} differ")
    return mahalanobis_sq(mu_hat - mu, sigma)


@dataclass(frozen=True)
class ConcentrationReport:
    max_whitened_norm_sq: float
    cov_sandwich_ok: bool
    M_required: float
    M: float
    c1: float

    @property
    def holds(self) -> bool:
        return self.max_whitened_norm_sq <= self.M**2 / self.c1 and self.cov_sandwich_ok


def _sandwich_ok(sigma: PsdMatrix, sbar: PsdMatrix) -> bool:
    if sigma.rank == 0:
        return bool(np.all(np.abs(sbar.entries) <= 1e-12))
    u = sigma.basis
    # empirical covariance outside Col(sigma) is a violation
    outside = sbar.entries - sigma.projector @ sbar.entries @ sigma.projector
    if np.max(np.abs(outside), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(sbar.entries))):
        return False
    w = u / np.sqrt(sigma.positive_values)
    ev = np.linalg.eigvalsh(w.T @ sbar.entries @ w)
    return bool(ev[0] >= 0.5 and ev[-1] <= 1.5)


def check_concentration(x, mu, sigma, M: float, c1: float = C1_MIN) -> ConcentrationReport:
    """Evaluate both clauses of the sample-concentration event."""
    if c1 < C1_MIN:
        raise BadC1(f"c1 must be at least 64e = {C1_MIN:.6f}, got {c1}")
    x = np.asarray(x, dtype=np.float64)
    sigma = as_psd(sigma)
    norms = mahalanobis_sq_batch(x - np.asarray(mu, dtype=np.float64), sigma)
    mx = float(norms.max()) if norms.size else 0.0
    ok = _sandwich_ok(sigma, paired_cov(x))
    return ConcentrationReport(mx, ok, math.sqrt(c1 * mx), float(M), float(c1))


def check_concentration_whitened(z, M: float, c1: float = C1_MIN) -> ConcentrationReport:
    """The same event stated for whitened rows ``z_i = sigma^{-1/2}(x_i - mu)``."""
    if c1 < C1_MIN:
        raise BadC1(f"c1 must be at least 64e = {C1_MIN:.6f}, got {c1}")
    z = np.asarray(z, dtype=np.float64)
    mx = float(np.max(np.einsum("ij,ij->i", z, z)))
    sz = paired_cov(z).entries
    ok = bool(np.linalg.norm(sz - np.eye(z.shape[1]), 2) <= 0.5)
    return ConcentrationReport(mx, ok, math.sqrt(c1 * mx), float(M), float(c1))


def estimate_M_sq(x, mu=None, sigma=None, c1: float = C1_MIN) -> float:
    """``c1 * max_i ||x_i - mu||_sigma^2`` using empirical moments when not given.

    This is a non-private convenience for experiments only.
    """
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=0) if mu is None else np.asarray(mu, dtype=np.float64)
    sigma = paired_cov(x) if sigma is None else as_psd(sigma)
    return c1 * float(np.max(mahalanobis_sq_batch(x - mu, sigma)))
