"""Coupled-execution checks of the stability properties behind the privacy argument.

Deterministic properties are audited with a zero-violation requirement;
probabilistic ones are compared against their bound plus three binomial
standard deviations.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from admean.covsafe import CovNoise, CovResult, covsafe, loo_covariance, pair_transform
from admean.errors import DimNotOne, PreconditionUnsatisfied
from admean.estimator import SQRT_E, delta_prime, privmean
from admean.meansafe import MeanNoise, block_log_diameters, meansafe
from admean.mechanisms import Partition, PrivacyBudget, Rng, laplace_vec, sample_partition
from admean.psd import (PsdMatrix, d_psd, ext_log, mahalanobis_sq, mahalanobis_sq_batch,
                        min_eig_difference, rank_one_downdate)

MODES = ("raw_row", "paired_diff", "zeroed")


@dataclass
class AdjacentPair:
    x: np.ndarray
    x_prime: np.ndarray
    i: int
    mode: str

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.x = np.asarray(self.x, dtype=np.float64)
        self.x_prime = np.asarray(self.x_prime, dtype=np.float64)
        if self.x.shape != self.x_prime.shape:
            raise ValueError("adjacent datasets must have equal shapes")

    @classmethod
    def raw_row(cls, x, i: int, new_row) -> "AdjacentPair":
        xp = np.array(x, dtype=np.float64, copy=True)
        xp[i] = new_row
        return cls(x, xp, i, "raw_row")

    @classmethod
    def zeroed(cls, x, i: int) -> "AdjacentPair":
        """Copy ``x`` and set row ``n/2 + i`` equal to row ``i``."""
        xp = np.array(x, dtype=np.float64, copy=True)
        h = xp.shape[0] // 2
        xp[h + i] = xp[i]
        return cls(x, xp, i, "zeroed")

    def is_valid(self) -> bool:
        diff_rows = np.flatnonzero(np.any(self.x != self.x_prime, axis=1))
        if self.mode == "raw_row":
            return diff_rows.size <= 1 and (diff_rows.size == 0 or diff_rows[0] == self.i)
        xt, xtp = pair_transform(self.x), pair_transform(self.x_prime)
        others = np.delete(np.arange(xt.shape[0]), self.i)
        same = np.array_equal(xt[others], xtp[others])
        if self.mode == "paired_diff":
            return same
        return same and not np.any(xtp[self.i])


@dataclass
class AuditReport:
    name: str
    trials: int
    violations: int
    bound: float
    slack: float
    seed: Optional[int] = None
    config: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def rate(self) -> float:
        return self.violations / self.trials if self.trials else 0.0

    @property
    def passed(self) -> bool:
        return self.rate <= self.bound + self.slack

    def to_json(self) -> dict:
        out = asdict(self)
        out["pass"] = self.passed
        return out

    @classmethod
    def from_json(cls, data: dict) -> "AuditReport":
        data = dict(data)
        data.pop("pass", None)
        return cls(**data)


def binomial_slack(bound: float, trials: int) -> float:
    """Three standard deviations of a Bernoulli(bound) frequency."""
    if trials <= 0 or bound <= 0:
        return 0.0
    p = min(bound, 1.0)
    return 3.0 * math.sqrt(p * (1.0 - p) / trials)


def probabilistic_report(name, trials, violations, bound, seed=None, config=None, details=None):
    return AuditReport(name, int(trials), int(violations), float(bound),
                       binomial_slack(bound, trials), seed, config or {}, details or {})


def hard_report(name, trials, violations, seed=None, config=None, details=None):
    return AuditReport(name, int(trials), int(violations), 0.0, 0.0, seed, config or {}, details or {})


# ---------------------------------------------------------------------------
# random instances


def random_psd(d: int, rank: int, rng: Rng, log_spread: float = 3.0) -> PsdMatrix:
    """PSD matrix with a random eigenbasis and eigenvalues ``exp(U(-s, s))``."""
    q, _ = np.linalg.qr(rng.gen.standard_normal((d, d)))
    vals = np.exp(rng.gen.uniform(-log_spread, log_spread, size=rank))
    return PsdMatrix.from_spectrum(vals, q[:, :rank])


def random_in_col(a: PsdMatrix, rng: Rng, size=None) -> np.ndarray:
    """Random vectors in ``Col(a)`` (rows when ``size`` is given)."""
    shape = (a.rank,) if size is None else (size, a.rank)
    return rng.gen.standard_normal(shape) @ a.basis.T


def random_invertible(d: int, rng: Rng, max_cond: float = 1e3) -> np.ndarray:
    """Random ``U diag(s) V^T`` whose condition number is at most ``max_cond``."""
    u, _ = np.linalg.qr(rng.gen.standard_normal((d, d)))
    v, _ = np.linalg.qr(rng.gen.standard_normal((d, d)))
    s = np.exp(rng.gen.uniform(0.0, math.log(max_cond), size=d))
    return (u * s) @ v.T


# ---------------------------------------------------------------------------
# linear-algebra observations


def audit_downdate_bound(trials: int, rng: Rng, max_dim: int = 8, max_norm: float = 0.9,
                         tol: float = 1e-8) -> AuditReport:
    """``d_psd(A, A - a a^T) <= r / (1 - r)`` with ``r = ||a||_A^2 <= max_norm``."""
    bad = 0
    worst = -math.inf
    for _ in range(trials):
        d = int(rng.gen.integers(1, max_dim + 1))
        r = int(rng.gen.integers(1, d + 1))
        a = random_psd(d, r, rng)
        v = random_in_col(a, rng)
        target = rng.gen.uniform(0.0, max_norm)
        v *= math.sqrt(target / mahalanobis_sq(v, a))
        ratio = mahalanobis_sq(v, a)
        c = rank_one_downdate(a, v, 1.0)
        gap = d_psd(a, c) - ratio / (1.0 - ratio)
        worst = max(worst, gap)
        bad += not gap <= tol
    return hard_report("downdate_bound", trials, bad, rng.seed, {"max_dim": max_dim}, {"worst_gap": worst})


def audit_matrix_stability(trials: int, rng: Rng, vectors: int = 20, max_dim: int = 8,
                           tol: float = 1e-9) -> AuditReport:
    """``Sigma - alpha u u^T >= Sigma/2`` and log-norm shifts at most ``2 alpha ||u||^2``."""
    bad = 0
    for _ in range(trials):
        d = int(rng.gen.integers(1, max_dim + 1))
        r = int(rng.gen.integers(1, d + 1))
        sigma = random_psd(d, r, rng)
        u = random_in_col(sigma, rng)
        level = rng.gen.uniform(0.0, 0.5)
        alpha = level / mahalanobis_sq(u, sigma)
        bound = 2.0 * alpha * mahalanobis_sq(u, sigma)
        sp = rank_one_downdate(sigma, u, alpha)
        scale = float(sigma.positive_values[0])
        ok = min_eig_difference(sp, 0.5 * sigma.entries) >= -tol * scale
        vs = random_in_col(sigma, rng, vectors)
        lhs = np.abs(ext_log(mahalanobis_sq_batch(vs, sigma)) - ext_log(mahalanobis_sq_batch(vs, sp)))
        ok &= bool(np.all(lhs <= bound + tol))
        bad += not ok
    return hard_report("matrix_stability", trials, bad, rng.seed, {"vectors": vectors})


def audit_log_norm_sensitivity(trials: int, rng: Rng, vectors: int = 20, max_dim: int = 8,
                               tol: float = 1e-8) -> AuditReport:
    """``|log||v||_A - log||v||_A'| <= d_psd(A, A') / 2`` for ``v`` in ``Col(A)``."""
    bad = 0
    for _ in range(trials):
        d = int(rng.gen.integers(1, max_dim + 1))
        r = int(rng.gen.integers(1, d + 1))
        a = random_psd(d, r, rng)
        # perturb inside Col(A): A' = A^{1/2} (I + E) A^{1/2} with ||E||_op < 1
        e = rng.gen.standard_normal((r, r))
        e = 0.5 * (e + e.T)
        e *= rng.gen.uniform(0.0, 0.9) / max(np.linalg.norm(e, 2), 1e-300)
        # build A' from an explicit factorization to keep Col(A') = Col(A)
        root = np.sqrt(a.positive_values)
        w, q = np.linalg.eigh(root[:, None] * (np.eye(r) + e) * root[None, :])
        ap = PsdMatrix.from_spectrum(w, a.basis @ q)
        gamma = d_psd(a, ap)
        vs = random_in_col(a, rng, vectors)
        lhs = 0.5 * np.abs(ext_log(mahalanobis_sq_batch(vs, a)) - ext_log(mahalanobis_sq_batch(vs, ap)))
        bad += not bool(np.all(lhs <= gamma / 2.0 + tol))
    return hard_report("log_norm_sensitivity", trials, bad, rng.seed, {"vectors": vectors})


def audit_laplace_sum_tail(scale: float, c: float, draws: int, rng: Rng) -> AuditReport:
    """Empirical ``P(X + Y > c)`` against ``exp(-c / (2 scale))``."""
    x = laplace_vec(scale, draws, rng)
    y = laplace_vec(scale, draws, rng)
    hits = int(np.count_nonzero(x + y > c))
    bound = math.exp(-c / (2.0 * scale))
    return probabilistic_report("laplace_sum_tail", draws, hits, bound, rng.seed, {"scale": scale, "c": c})


# ---------------------------------------------------------------------------
# covariance-phase properties


def replay_cov_transcript(x, B: float, m: float, noise: CovNoise, result: CovResult,
                          tol: float = 1e-9) -> list:
    """Re-derive every pruning decision from the stored covariances.

    Returns a list of human-readable violation strings (empty when consistent).
    """
    xt = pair_transform(x)
    n = 2 * xt.shape[0]
    h = xt.shape[0]
    z = noise.z
    s = z[:h] + z[h]
    tr = result.transcript
    covs = tr.covariances
    log_b = math.log(B)
    out = []
    if tr.removed(0).size:
        out.append("R_0 is not empty")
    for t in range(tr.T):
        test = ext_log(mahalanobis_sq_batch(xt, covs[t])) + s > log_b
        in_next = np.zeros(h, dtype=bool)
        in_next[tr.removed(t + 1)] = True
        if not np.array_equal(test, in_next):
            out.append(f"prune-iteration mismatch at t={t}")
        keep = np.ones(h, dtype=bool)
        keep[tr.removed(t)] = False
        direct = xt[keep].T @ xt[keep] / n
        if np.max(np.abs(direct - covs[t].entries), initial=0.0) > tol * max(1.0, np.abs(direct).max(initial=0)):
            out.append(f"Sigma_{t} differs from survivor sum")
        scale = max(1.0, float(np.abs(covs[t].entries).max(initial=0.0)))
        if min_eig_difference(covs[t], covs[t + 1]) < -tol * scale:
            out.append(f"Sigma_{t + 1} not below Sigma_{t}")
    if tr.converged:
        if tr.T >= 1 and not np.array_equal(tr.removed(tr.T - 1), tr.removed(tr.T)):
            out.append("R_{T-1} != R_T at convergence")
        survive = ext_log(mahalanobis_sq_batch(xt, covs[tr.T])) + s <= log_b
        alive = np.ones(h, dtype=bool)
        alive[tr.removed()] = False
        if not np.array_equal(survive, alive):
            out.append("prune-ever mismatch")
    gate_ok = tr.n_removed <= m + noise.w
    if tr.converged and (result.sigma_hat is not None) != gate_ok:
        out.append("cardinality gate mismatch")
    if tr.truncated and result.sigma_hat is not None:
        out.append("truncated run released a covariance")
    return out


def audit_cov_characterization(trials: int, rng: Rng, max_n: int = 64, max_dim: int = 4) -> AuditReport:
    """Replay random covariance runs against the iff characterizations."""
    bad = 0
    msgs = []
    for _ in range(trials):
        n = 2 * int(rng.gen.integers(2, max_n // 2 + 1))
        d = int(rng.gen.integers(1, max_dim + 1))
        x = rng.gen.standard_normal((n, d)) * np.exp(rng.gen.uniform(-1, 1, size=d))
        n_out = int(rng.gen.integers(0, max(1, n // 8) + 1))
        x[rng.gen.choice(n, size=n_out, replace=False)] *= rng.gen.uniform(3, 30)
        B = math.exp(rng.gen.uniform(math.log(0.5), math.log(4.0 * n)))
        sigma = rng.gen.uniform(0.01, 1.0)
        noise = CovNoise(laplace_vec(sigma, n // 2 + 1, rng), laplace_vec(4.0, 1, rng)[0])
        m = rng.gen.uniform(0, n / 4)
        res = covsafe(x, B, m, noise, early_stop=False)
        issues = replay_cov_transcript(x, B, m, noise, res)
        early = covsafe(x, B, m, noise, early_stop=True)
        if (early.sigma_hat is None) != (res.sigma_hat is None):
            issues.append("early stop changed the outcome")
        elif res.sigma_hat is not None and not np.array_equal(early.sigma_hat.entries, res.sigma_hat.entries):
            issues.append("early stop changed the covariance")
        if issues:
            bad += 1
            msgs.extend(issues[:3])
    return hard_report("cov_characterization", trials, bad, rng.seed, {"max_n": max_n, "max_dim": max_dim},
                       {"messages": msgs[:20]})


def audit_internal_stability(x, B: float, m: float, sigma_z: float, trials: int, rng: Rng,
                             w: float = 0.0) -> AuditReport:
    """Frequency of a large leave-one-out change, against ``exp(-1 / (4 sigma_z))``.

    Each trial draws fresh Laplace noise and a uniformly random pair index.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    xt = pair_transform(x)
    h = xt.shape[0]
    ratio = B * SQRT_E / n
    if ratio >= 1:
        raise PreconditionUnsatisfied("need n > B*sqrt(e) for the stability bound")
    radius = ratio / (1.0 - ratio)
    bad = aborted = 0
    for _ in range(trials):
        noise = CovNoise(laplace_vec(sigma_z, h + 1, rng), w)
        res = covsafe(x, B, m, noise)
        if res.sigma_hat is None:
            aborted += 1
            continue
        i = int(rng.gen.integers(0, h))
        loo = loo_covariance(res, xt, i)
        bad += d_psd(res.sigma_hat, loo) > radius
    bound = math.exp(-1.0 / (4.0 * sigma_z))
    return probabilistic_report("internal_stability", trials, bad, bound, rng.seed,
                                {"n": n, "B": B, "m": m, "sigma_z": sigma_z, "w": w},
                                {"aborted": aborted, "radius": radius})


def _removed_minus(res: CovResult, i: int) -> set:
    return set(res.transcript.removed().tolist()) - {i}


def check_removal_relations(x, x_prime, i: int, B: float, m: float, z, z_prime, w: float) -> dict:
    """Evaluate the four removal inclusions for one coupled pair of runs.

    Returns a dict mapping each case to ``None`` (precondition fails) or a
    bool (whether the inclusion held).
    """
    n = np.asarray(x).shape[0]
    h = n // 2
    c = 2.0 * B * SQRT_E / n
    res = covsafe(x, B, m, CovNoise(z, w), early_stop=False)
    resp = covsafe(x_prime, B, m, CovNoise(z_prime, w), early_stop=False)
    R, Rp = _removed_minus(res, i), _removed_minus(resp, i)
    s = np.asarray(z)[:h] + z[h]
    sp = np.asarray(z_prime)[:h] + z_prime[h]
    others = set(range(h)) - {i}
    # small relative slack so that constructed equalities survive rounding
    eps = 1e-12 * (1.0 + np.abs(s))
    up = sp >= s - eps
    down = sp <= s - c + eps
    extra = n >= 2.0 * B * SQRT_E and s[i] >= -0.5
    out = {}
    out["a"] = (R <= Rp) if all(up[j] for j in R) else None
    out["b"] = (R <= Rp) if all(up[j] for j in others - Rp) else None
    out["c"] = (Rp <= R) if extra and all(down[j] for j in Rp) else None
    out["d"] = (Rp <= R) if extra and all(down[j] for j in others - R) else None
    return out


def removal_noise_constructions(x, x_prime, i: int, B: float, m: float, z, w: float):
    """The shifted-noise couplings under which the inclusions are expected.

    Yields ``(label, z_for_x, z_for_x_prime)``.
    """
    n = np.asarray(x).shape[0]
    h = n // 2
    c = 2.0 * B * SQRT_E / n
    z = np.asarray(z, dtype=np.float64)
    yield "identity", z, z.copy()
    res = covsafe(x, B, m, CovNoise(z, w), early_stop=False)
    S = sorted(_removed_minus(res, i))
    zp = z.copy()
    zp[S] += c
    zp[h] -= c
    yield "shift_on_R", z, zp
    resp = covsafe(x_prime, B, m, CovNoise(z, w), early_stop=False)
    Sp = sorted(_removed_minus(resp, i))
    zz = z.copy()
    zz[Sp] += c
    yield "shift_on_R_prime", zz, z
    zp = z.copy()
    zp[h] -= c
    yield "shared_down", z, zp
    zp = z.copy()
    zp[h] += c
    yield "shared_up", z, zp


def audit_removal_relations(pair: AdjacentPair, B: float, m: float, rng: Rng, trials: int,
                            sigma: float = 0.3, w: float = 0.0) -> AuditReport:
    """Coupled runs on a zeroed pair; any failed inclusion is a violation."""
    if pair.mode != "zeroed":
        raise ValueError("removal relations need a zeroed adjacent pair")
    n = pair.x.shape[0]
    if n < 2.0 * B * SQRT_E:
        raise PreconditionUnsatisfied(f"need n >= 2*B*sqrt(e): n={n}, 2*B*sqrt(e)={2 * B * SQRT_E:.4g}")
    bad = 0
    checked = {k: 0 for k in "abcd"}
    for _ in range(trials):
        z = laplace_vec(sigma, n // 2 + 1, rng)
        for label, za, zb in removal_noise_constructions(pair.x, pair.x_prime, pair.i, B, m, z, w):
            res = check_removal_relations(pair.x, pair.x_prime, pair.i, B, m, za, zb, w)
            for case, ok in res.items():
                if ok is None:
                    continue
                checked[case] += 1
                bad += not ok
            if label == "identity" and pair.is_valid() and np.array_equal(pair.x, pair.x_prime):
                r1 = covsafe(pair.x, B, m, CovNoise(za, w), early_stop=False).transcript.removed()
                r2 = covsafe(pair.x_prime, B, m, CovNoise(zb, w), early_stop=False).transcript.removed()
                bad += not np.array_equal(r1, r2)
    return hard_report("removal_relations", trials, bad, rng.seed, {"n": n, "B": B, "m": m, "i": pair.i},
                       {"checked": checked})


# ---------------------------------------------------------------------------
# mean-phase properties


def d_sym(a, b) -> int:
    a, b = set(np.asarray(a).tolist()), set(np.asarray(b).tolist())
    return max(len(a - b), len(b - a))


def set_diameter(points, A) -> float:
    """Largest pairwise ``A``-distance of a finite set (0 for fewer than two points)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 2:
        return 0.0
    part = Partition((np.arange(pts.shape[0]),), pts.shape[0])
    return float(np.exp(block_log_diameters(pts, A, part)[0]))


def sens_delta(n: int, b: int, B: float, sigma_top: float, gamma: float) -> float:
    return 5.0 * b * math.sqrt(B) / (2.0 * n) * math.exp(3.0 * sigma_top * math.log(2.0 * n / (b * gamma)))


def audit_mean_stability(pair: AdjacentPair, A, B: float, b: int, k: int, noise_scales,
                         trials: int, rng: Rng, gamma: Optional[float] = None,
                         check_triangle: bool = True) -> AuditReport:
    """Coupled trimmed-mean runs sharing all noise.

    Hard checks: ``|t - t'| <= 1``, ``d_sym(R, R') <= b_max`` and, when both
    runs release and ``|R u R'| <= n/2``, the triangle bound on the means.
    The sensitivity event is reported in ``details['sens']``.

    Args:
        noise_scales: ``(sigma_top, sigma_w, sigma_gauss)``.
        gamma: Failure level in the sensitivity radius; defaults to ``1/n``.
    """
    if pair.mode != "raw_row":
        raise ValueError("mean stability needs a raw_row adjacent pair")
    A = A if isinstance(A, PsdMatrix) else PsdMatrix(A)
    x, xp = pair.x, pair.x_prime
    n, d = x.shape
    sigma_top, sigma_w, sigma_gauss = noise_scales
    gamma = 1.0 / n if gamma is None else gamma
    delta_sens = sens_delta(n, b, B, sigma_top, gamma)
    bad = tri_checked = sens_bad = 0
    worst_tri = -math.inf
    for _ in range(trials):
        noise = MeanNoise.draw(n, d, b, sigma_top, sigma_w, sigma_gauss, rng)
        bmax = noise.partition.max_block_size
        est, tr = meansafe(x, A, B, b, k, noise)
        estp, trp = meansafe(xp, A, B, b, k, noise)
        ok = abs(tr.t - trp.t) <= 1 and d_sym(tr.R, trp.R) <= bmax
        both = tr.mu_hat is not None and trp.mu_hat is not None
        if both:
            gap = math.sqrt(mahalanobis_sq(tr.mu_hat - trp.mu_hat, A))
        if check_triangle and est is not None and estp is not None \
                and len(set(tr.R.tolist()) | set(trp.R.tolist())) <= n // 2:
            keep = np.setdiff1d(np.arange(n), tr.R)
            keepp = np.setdiff1d(np.arange(n), trp.R)
            rhs = 4.0 * (bmax + 1) / n * max(set_diameter(x[keep], A), set_diameter(xp[keepp], A))
            tri_checked += 1
            worst_tri = max(worst_tri, gap - rhs)
            ok &= gap <= rhs * (1.0 + 1e-12) + 1e-300
        if both and max(tr.t, trp.t) < k and gap > delta_sens:
            sens_bad += 1
        bad += not ok
    sens_bound = gamma + n * n * 2.0 ** (1 - b)
    sens = probabilistic_report("mean_sensitivity", trials, sens_bad, sens_bound, rng.seed,
                                {"Delta": delta_sens, "gamma": gamma})
    return hard_report("mean_stability", trials, bad, rng.seed,
                       {"n": n, "B": B, "b": b, "k": k, "noise_scales": list(noise_scales)},
                       {"triangle_checked": tri_checked, "worst_triangle_gap": worst_tri,
                        "sens": sens.to_json()})


def nested_mean_gap(y, S, S_prime, norm: Callable[[np.ndarray], float]) -> float:
    """``bound - ||mu_S - mu_S'||`` for nested index sets (nonnegative when the bound holds)."""
    y = np.asarray(y, dtype=np.float64)
    S, Sp = np.asarray(S), np.asarray(S_prime)
    mu_s, mu_sp = y[S].mean(axis=0), y[Sp].mean(axis=0)
    diam = max((norm(y[a] - y[b]) for a in Sp for b in Sp), default=0.0)
    bound = (Sp.size - S.size) * diam / Sp.size
    return bound - norm(mu_s - mu_sp)


def diameter_sampling_violation(y, partition: Partition) -> bool:
    """Whether some union of blocks has diameter above twice its largest block diameter.

    It suffices to check unions of two blocks: the diameter of any union is
    attained by a pair lying in at most two of its blocks.
    """
    y = np.asarray(y, dtype=np.float64)
    diff = y[:, None, :] - y[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    owner = partition.block_of()
    g = len(partition)
    block_diam = np.array([dist[np.ix_(blk, blk)].max() for blk in partition.blocks])
    cross = np.zeros((g, g))
    np.maximum.at(cross, (owner[:, None], owner[None, :]), dist)
    limit = 2.0 * np.maximum(block_diam[:, None], block_diam[None, :])
    return bool(np.any(cross > limit * (1.0 + 1e-12)))


def adversarial_points(n: int, d: int, rng: Rng, kind: str = "two_clusters") -> np.ndarray:
    """Point sets meant to stress the diameter-sampling claim."""
    if kind == "two_clusters":
        y = 1e-3 * rng.gen.standard_normal((n, d))
        y[: n // 2, 0] += 1.0
        return y
    if kind == "single_outlier":
        y = 1e-3 * rng.gen.standard_normal((n, d))
        y[0, 0] += 1.0
        return y
    if kind == "line":
        y = np.zeros((n, d))
        y[:, 0] = np.arange(n, dtype=float)
        return y
    if kind == "geometric":
        y = np.zeros((n, d))
        y[:, 0] = 2.0 ** np.arange(n)
        return y
    raise ValueError(f"unknown point-set kind {kind!r}")


def audit_diameter_sampling(n: int, b: int, draws: int, rng: Rng, d: int = 2,
                            kinds: Sequence[str] = ("two_clusters", "single_outlier", "line", "geometric"),
                            ) -> AuditReport:
    """Frequency of the diameter-sampling failure over random partitions."""
    bad = 0
    total = 0
    per_kind = {}
    for kind in kinds:
        y = adversarial_points(n, d, rng, kind)
        hits = sum(diameter_sampling_violation(y, sample_partition(n, b, rng)) for _ in range(draws))
        per_kind[kind] = int(hits)
        bad += hits
        total += draws
    bound = n * n * 2.0 ** (-b)
    reports = {k: probabilistic_report("diameter_sampling", draws, v, bound).passed for k, v in per_kind.items()}
    rep = probabilistic_report("diameter_sampling", total, bad, bound, rng.seed, {"n": n, "b": b, "d": d},
                               {"per_kind": per_kind, "per_kind_pass": reports})
    return rep


# ---------------------------------------------------------------------------
# accounting and smoke tests


def group_composition(eps: Sequence[float], delta: Sequence[float]) -> tuple[float, float]:
    """Chain ``X_1 ~ X_2 ~ ... `` with per-link ``(eps_i, delta_i)``.

    Returns ``(sum eps_i, sum_i exp(eps_{>i}) delta_i)`` where ``eps_{>i}`` sums
    the later links.
    """
    eps = [float(e) for e in eps]
    delta = [float(v) for v in delta]
    if len(eps) != len(delta):
        raise ValueError("eps and delta must have equal lengths")
    total = math.fsum(eps)
    out = math.fsum(math.exp(math.fsum(eps[i + 1:])) * delta[i] for i in range(len(eps)))
    return total, out


def histogram_epsilon(p_out, q_out, bins: int, delta: float = 0.0, min_count: int = 50):
    """Largest binwise log-ratio of two output samples, with a ``None`` bin.

    Bin edges are equal-mass quantiles of the pooled non-abort outputs.

    Returns:
        ``(eps_hat, slack)`` where ``slack`` is three delta-method standard
        errors of the maximizing log-ratio.
    """
    def split(vals):
        vals = list(vals)
        bot = sum(v is None for v in vals)
        return np.array([float(v) for v in vals if v is not None]), bot, len(vals)

    p, p_bot, np_ = split(p_out)
    q, q_bot, nq = split(q_out)
    pooled = np.concatenate([p, q])
    if pooled.size:
        edges = np.unique(np.quantile(pooled, np.linspace(0, 1, bins + 1)))
        edges[0], edges[-1] = -np.inf, np.inf
        cp = np.histogram(p, edges)[0]
        cq = np.histogram(q, edges)[0]
    else:
        cp = cq = np.zeros(0, dtype=int)
    cp = np.append(cp, p_bot)
    cq = np.append(cq, q_bot)
    best, slack = 0.0, 0.0
    for a, na, bq, nb in ((cp, np_, cq, nq), (cq, nq, cp, np_)):
        for ca, cb in zip(a, bq):
            if ca < min_count or cb < min_count:
                continue
            num = ca / na - delta
            if num <= 0:
                continue
            val = math.log(num / (cb / nb))
            if val > best:
                best = val
                slack = 3.0 * math.sqrt(1.0 / ca + 1.0 / cb)
    return best, slack


def audit_epsilon_1d(mechanism, pair: AdjacentPair, budget: PrivacyBudget, bins: int, trials: int,
                     rng: Rng, delta_corr: Optional[float] = None, B: Optional[float] = None) -> AuditReport:
    """Histogram smoke test of the privacy loss on a one-dimensional pair.

    Args:
        mechanism: ``"privmean"`` or a callable ``(x, rng) -> float | None``.
        delta_corr: Additive correction per bin; defaults to the achieved
            failure probability of the scheduled run for ``"privmean"``.
        B: Threshold for ``"privmean"``.
    """
    if pair.x.ndim != 2 or pair.x.shape[1] != 1:
        raise DimNotOne("the histogram audit works on one-dimensional data only")
    if mechanism == "privmean":
        if B is None:
            raise ValueError("privmean audit needs B")

        def mech(x, r):
            est, _ = privmean(x, B, budget, r)
            return None if est is None else float(est[0])

        if delta_corr is None:
            delta_corr = delta_prime(budget.eps, budget.delta)
    else:
        mech = mechanism
    delta_corr = 0.0 if delta_corr is None else delta_corr
    outs_p = [mech(pair.x, rng.child(2 * t)) for t in range(trials)]
    outs_q = [mech(pair.x_prime, rng.child(2 * t + 1)) for t in range(trials)]
    eps_hat, slack = histogram_epsilon(outs_p, outs_q, bins, delta_corr)
    ok = eps_hat <= budget.eps + slack
    return hard_report("epsilon_1d", trials, int(not ok), rng.seed,
                       {"bins": bins, "eps": budget.eps, "delta": budget.delta, "delta_corr": delta_corr},
                       {"eps_hat": eps_hat, "slack": slack})
