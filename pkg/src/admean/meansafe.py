"""Group-diameter trimmed mean released with covariance-shaped Gaussian noise."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from admean.errors import DimMismatch, EmptySurvivorSet, NoiseLenMismatch
from admean.mechanisms import Partition, TopkOutput, topk
from admean.psd import COL_TOL, PsdMatrix, as_psd, ext_log

# Upper bound on the number of float64 entries in one batched Gram block.
_CHUNK_ENTRIES = 1 << 22


def _ext_to_json(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return None
    return float(v)


def _ext_from_json(v) -> float:
    if v is None:
        return float("nan")
    return float(v)


def _block_sq_diameters(coords: np.ndarray, residual: Optional[np.ndarray],
                        raw: np.ndarray) -> np.ndarray:
    """Squared diameters of equal-size groups.

    Args:
        coords: ``(g, s, r)`` whitened coordinates.
        residual: ``(g, s, d)`` components outside the column space, or None
            when the matrix has full rank.
        raw: ``(g, s, d)`` original points, used to scale the residual test.
    """
    # centering on the first point keeps the Gram expansion well conditioned
    c = coords - coords[:, :1, :]
    gram = c @ np.swapaxes(c, 1, 2)
    sq = np.einsum("gii->gi", gram)
    dist = sq[:, :, None] + sq[:, None, :] - 2.0 * gram
    out = np.maximum(dist, 0.0).max(axis=(1, 2))
    if residual is not None:
        dr = np.linalg.norm(residual - residual[:, :1, :], axis=2)
        dx = np.linalg.norm(raw - raw[:, :1, :], axis=2)
        escaped = np.any(dr > COL_TOL * dx, axis=1)
        out[escaped] = np.inf
    return out


def block_log_diameters(x, A, partition: Partition) -> np.ndarray:
    """``log diam_A`` of each block, in block order."""
    a = as_psd(A)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != a.dim:
        raise DimMismatch(f"data of shape {x.shape} does not match dim {a.dim}")
    coords, residual = a.whiten(x)
    full_rank = a.rank == a.dim
    g = len(partition)
    sizes = partition.sizes
    out = np.empty(g)
    for s in np.unique(sizes):
        which = np.flatnonzero(sizes == s)
        idx = np.stack([partition.blocks[j] for j in which])
        per_block = max(1, int(s) * int(s) * max(coords.shape[1], 1))
        step = max(1, _CHUNK_ENTRIES // per_block)
        for lo in range(0, which.size, step):
            sel = idx[lo:lo + step]
            res = None if full_rank else residual[sel]
            out[which[lo:lo + step]] = _block_sq_diameters(coords[sel], res, x[sel])
    return 0.5 * ext_log(out)


def group_log_diameter(points, A) -> float:
    """Log of the largest pairwise ``A``-distance within one group."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    a = as_psd(A)
    if pts.shape[1] != a.dim:
        raise DimMismatch(f"points of dim {pts.shape[1]} vs matrix dim {a.dim}")
    part = Partition((np.arange(pts.shape[0]),), pts.shape[0])
    return float(block_log_diameters(pts, a, part)[0])


def diameter(points, A) -> float:
    """Largest pairwise ``A``-distance (``inf`` outside the column space)."""
    return float(np.exp(group_log_diameter(points, A)))


@dataclass(frozen=True)
class MeanNoise:
    """Explicit randomness for one trimmed-mean run."""

    partition: Partition
    z: np.ndarray
    z_prime: np.ndarray
    w: float
    z_gauss: np.ndarray

    def __post_init__(self):
        for name in ("z", "z_prime", "z_gauss"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64).ravel())
        object.__setattr__(self, "w", float(self.w))
        g = len(self.partition)
        if self.z.size != g or self.z_prime.size != g:
            raise NoiseLenMismatch(f"need {g} TOPk noise entries per vector")

    @classmethod
    def draw(cls, n: int, d: int, b: int, sigma_top: float, sigma_w: float,
             sigma_gauss: float, rng) -> "MeanNoise":
        from admean.mechanisms import gaussian_vec, laplace, laplace_vec, sample_partition

        part = sample_partition(n, b, rng)
        g = len(part)
        z = laplace_vec(sigma_top, g, rng)
        zp = laplace_vec(sigma_top, g, rng)
        w = laplace(sigma_w, rng)
        return cls(part, z, zp, w, gaussian_vec(sigma_gauss, d, rng))

    def permuted(self, order) -> "MeanNoise":
        order = np.asarray(order)
        return MeanNoise(self.partition.permuted(order), self.z[order],
                         self.z_prime[order], self.w, self.z_gauss)


@dataclass
class MeanTranscript:
    D: np.ndarray
    D_tilde: TopkOutput
    pruned_blocks: np.ndarray
    R: np.ndarray
    t: int
    mu_hat: Optional[np.ndarray]
    aborted: bool
    extras: dict = field(default_factory=dict)

    @property
    def n_removed(self) -> int:
        return int(self.R.size)

    def to_json(self) -> dict:
        return {
            "D": [_ext_to_json(v) for v in self.D],
            "pruned_blocks": self.pruned_blocks.tolist(),
            "t": self.t,
            "aborted": self.aborted,
        }


def meansafe(x, A, B: float, b: int, k: int, noise: MeanNoise):
    """Prune high-diameter groups picked by TOPk, then release a noisy mean.

    Args:
        x: ``(n, d)`` data.
        A: PSD matrix defining distances and the noise shape.
        B: Threshold; a selected block is pruned when its noisy log-diameter
            exceeds ``log(sqrt(B) / 4)``.
        b: Nominal block size (the partition in ``noise`` is authoritative).
        k: Number of blocks TOPk selects; the abort test is ``t > 2k/3 + w``.
        noise: Partition, TOPk noise, threshold noise and Gaussian noise.

    Returns:
        ``(estimate, transcript)`` where ``estimate`` is ``None`` on abort.
    """
    a = as_psd(A)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if d != a.dim:
        raise DimMismatch(f"data dim {d} vs matrix dim {a.dim}")
    if noise.partition.n != n:
        raise DimMismatch(f"partition covers {noise.partition.n} points, data has {n}")
    if noise.z_gauss.size != d:
        raise NoiseLenMismatch(f"Gaussian noise must have length {d}")
    k = int(k)
    if k < 1:
        raise ValueError("k must be a positive integer")

    D = block_log_diameters(x, a, noise.partition)
    dt = topk(D, k, noise.z, noise.z_prime)
    thresh = math.log(math.sqrt(B) / 4.0)
    prune = dt.mask.copy()
    prune[dt.mask] = dt.values[dt.mask] > thresh
    pruned_blocks = np.flatnonzero(prune)
    t = int(pruned_blocks.size)
    if t:
        R = np.sort(np.concatenate([noise.partition.blocks[j] for j in pruned_blocks]))
    else:
        R = np.empty(0, dtype=np.int64)
    keep = np.ones(n, dtype=bool)
    keep[R] = False
    mu_hat = x[keep].mean(axis=0) if keep.any() else None

    aborted = t > 2.0 * k / 3.0 + noise.w
    transcript = MeanTranscript(D, dt, pruned_blocks, R, t, mu_hat, aborted)
    if aborted:
        return None, transcript
    if mu_hat is None:
        transcript.extras["empty_survivors"] = True
        return None, transcript
    return mu_hat + a.sqrt @ noise.z_gauss, transcript


def meansafe_strict(x, A, B, b, k, noise: MeanNoise):
    """Like :func:`meansafe` but raises when every block was pruned without abort."""
    est, tr = meansafe(x, A, B, b, k, noise)
    if tr.extras.get("empty_survivors"):
        raise EmptySurvivorSet("all blocks pruned but the abort test passed")
    return est, tr
