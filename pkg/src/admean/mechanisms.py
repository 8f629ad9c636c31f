"""Noise sources, calibration formulas, TOPk selection and random partitions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from admean.errors import BadBlockSize, BadScale, DimMismatch

_TWO_53 = float(2**53)


class Rng:
    """Counter-based random stream identified by ``(seed, stream_id)``.

    Backed by numpy's Philox generator, keyed through ``SeedSequence`` so
    distinct stream ids give independent streams and :meth:`child` can split
    further without coordination.
    """

    def __init__(self, seed: int, stream_id: int = 0, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._path = _path
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, *_path))
        self.gen = np.random.Generator(np.random.Philox(ss))

    def child(self, key: int) -> "Rng":
        return Rng(self.seed, self.stream_id, self._path + (int(key),))

    def uniform_open(self, size) -> np.ndarray:
        """Uniforms in the open interval (0, 1) from 53-bit integers."""
        ints = self.gen.integers(0, 2**53, size=size, dtype=np.int64)
        return (ints.astype(np.float64) + 0.5) / _TWO_53

    def __repr__(self):
        return f"Rng(seed={self.seed}, stream_id={self.stream_id}, path={self._path})"


@dataclass(frozen=True)
class PrivacyBudget:
    eps: float
    delta: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


def laplace_vec(scale: float, size, rng: Rng) -> np.ndarray:
    """I.i.d. Laplace(scale) draws by inverse CDF."""
    if not scale > 0:
        raise BadScale(f"Laplace scale must be positive, got {scale}")
    u = rng.uniform_open(size) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace(scale: float, rng: Rng) -> float:
    return float(laplace_vec(scale, 1, rng)[0])


def gaussian_vec(sigma: float, size, rng: Rng) -> np.ndarray:
    if sigma < 0:
        raise BadScale(f"Gaussian sigma must be nonnegative, got {sigma}")
    z = rng.gen.standard_normal(size)
    return sigma * z


@dataclass(frozen=True)
class TopkOutput:
    """Selected indices (0-based, ascending) and released values.

    ``values[j]`` is NaN (the abort symbol) exactly when ``j`` was not
    selected; use :attr:`mask` rather than testing for NaN.
    """

    selected: np.ndarray
    values: np.ndarray
    mask: np.ndarray = field(repr=False)


def topk(x, k: int, xi1, xi2) -> TopkOutput:
    x = np.asarray(x, dtype=np.float64)
    xi1 = np.asarray(xi1, dtype=np.float64)
    xi2 = np.asarray(xi2, dtype=np.float64)
    if not (x.shape == xi1.shape == xi2.shape) or x.ndim != 1:
        raise DimMismatch("x, xi1 and xi2 must be vectors of equal length")
    if k < 1:
        raise ValueError("k must be a positive integer")
    p = x.size
    y1 = x + xi1
    # stable sort on -y1: ties resolved toward the lowest index, -inf last
    order = np.argsort(-y1, kind="stable")
    selected = np.sort(order[: min(int(k), p)])
    mask = np.zeros(p, dtype=bool)
    mask[selected] = True
    values = np.full(p, np.nan)
    values[mask] = x[mask] + xi2[mask]
    return TopkOutput(selected, values, mask)


def topk_noise_scale(k: int, gamma: float, eps: float) -> float:
    if not eps > 0:
        raise ValueError("eps must be positive")
    return 2.0 * k * gamma / eps


def gauss_mean_sigma(rho: float, eps: float, delta: float) -> float:
    """Noise multiplier making Gaussians with Mahalanobis-separated means close."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if not eps > 0 or not 0 < delta < 1:
        raise ValueError("need eps > 0 and delta in (0, 1)")
    if rho == 0:
        return 0.0
    if eps <= 1:
        return rho / eps * math.sqrt(2.0 * math.log(5.0 / (4.0 * delta)))
    root = math.sqrt(2.0 * math.log(1.0 / delta))
    return rho / (math.sqrt(2.0 * math.log(1.0 / delta) + 2.0 * eps) - root)


def gauss_cov_eps(gamma: float, delta: float) -> float:
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return 6.0 * gamma * math.log(2.0 / delta)


def laplace_ratio_bound(eta, scale: float) -> float:
    """Log density-ratio bound ``||eta||_1 / scale`` for shifted Laplace vectors."""
    return float(np.sum(np.abs(eta))) / scale


@dataclass(frozen=True)
class Partition:
    """Ordered disjoint blocks covering ``range(n)``."""

    blocks: tuple[np.ndarray, ...]
    block_size_nominal: int

    @property
    def n(self) -> int:
        return int(sum(b.size for b in self.blocks))

    @property
    def sizes(self) -> np.ndarray:
        return np.array([b.size for b in self.blocks])

    @property
    def max_block_size(self) -> int:
        return int(self.sizes.max())

    def __len__(self):
        return len(self.blocks)

    def block_of(self) -> np.ndarray:
        """Map from point index to block index."""
        owner = np.empty(self.n, dtype=np.int64)
        for j, blk in enumerate(self.blocks):
            owner[blk] = j
        return owner

    def permuted(self, order) -> "Partition":
        return Partition(tuple(self.blocks[j] for j in order), self.block_size_nominal)


def sample_partition(n: int, b: int, rng: Rng) -> Partition:
    """Uniform ordered partition of ``range(n)`` into ``n // b`` blocks.

    Blocks are consecutive chunks of a uniform permutation; sizes differ by at
    most one, the larger blocks first.
    """
    if b < 1:
        raise BadBlockSize("block size must be positive")
    if b > n:
        raise BadBlockSize(f"block size {b} exceeds sample size {n}")
    g = n // b
    perm = rng.gen.permutation(n)
    return Partition(tuple(np.array_split(perm, g)), int(b))
