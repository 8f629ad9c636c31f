"""Extended-value Mahalanobis geometry on positive semidefinite matrices.

Norms against a PSD matrix ``A`` take the value ``+inf`` for vectors that leave
the column space of ``A``.  Extended reals are plain Python/numpy floats with
``inf`` and ``-inf``; :func:`ext_log` maps ``0`` to ``-inf`` without warnings.
"""
from __future__ import annotations

from functools import cached_property
from typing import NamedTuple

import numpy as np

from admean.errors import DimMismatch, NonSymmetric, NotDowndatable, NotPsd

UNIT_ROUNDOFF = np.finfo(np.float64).eps / 2
SYM_TOL = 1e-10
PSD_TOL = 1e-10
COL_TOL = 1e-8


def ext_log(x):
    """Natural log with ``log(0) = -inf`` and ``log(inf) = inf``, no warnings."""
    with np.errstate(divide="ignore"):
        return np.log(x)


class Spectrum(NamedTuple):
    values: np.ndarray  # descending, clamped at zero
    vectors: np.ndarray  # columns are orthonormal eigenvectors
    rank: int


def _rank_of(values: np.ndarray, dim: int) -> int:
    lam_max = float(values[0]) if values.size else 0.0
    if lam_max <= 0.0:
        return 0
    return int(np.count_nonzero(values > dim * UNIT_ROUNDOFF * lam_max))


class PsdMatrix:
    """Immutable symmetric PSD matrix with a cached spectral factorization.

    Symmetry is validated on construction.  Positive semidefiniteness is
    validated when the factorization is first needed; eigenvalues in
    ``[-PSD_TOL * lam_max, 0)`` are clamped to zero and anything more negative
    raises :class:`NotPsd`.
    """

    def __init__(self, entries, *, _spectrum: Spectrum | None = None):
        a = np.array(entries, dtype=np.float64, copy=True)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimMismatch(f"expected a square matrix, got shape {a.shape}")
        scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
        if not np.all(np.isfinite(a)):
            raise NotPsd("matrix has non-finite entries")
        if np.max(np.abs(a - a.T), initial=0.0) > SYM_TOL * scale:
            raise NonSymmetric("matrix is not symmetric within tolerance")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        self._a = a
        if _spectrum is not None:
            self.__dict__["spectrum"] = _spectrum

    @classmethod
    def from_spectrum(cls, values, vectors) -> "PsdMatrix":
        """Build ``V diag(values) V^T`` keeping the given factorization exactly."""
        values = np.asarray(values, dtype=np.float64)
        vectors = np.asarray(vectors, dtype=np.float64)
        order = np.argsort(-values, kind="stable")
        values = np.maximum(values[order], 0.0)
        vectors = np.ascontiguousarray(vectors[:, order])
        dim = vectors.shape[0]
        full_vals = np.zeros(dim)
        full_vals[: values.size] = values
        if values.size < dim:
            # complete the basis so the cached spectrum is square
            q, _ = np.linalg.qr(np.hstack([vectors, np.eye(dim)]))
            comp = q[:, values.size:dim]
            vectors = np.hstack([vectors, comp])
        entries = (vectors[:, : values.size] * values) @ vectors[:, : values.size].T
        spec = Spectrum(full_vals, vectors, _rank_of(full_vals, dim))
        return cls(0.5 * (entries + entries.T), _spectrum=spec)

    @classmethod
    def zeros(cls, dim: int) -> "PsdMatrix":
        return cls(np.zeros((dim, dim)))

    @property
    def dim(self) -> int:
        return self._a.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._a

    def __array__(self, dtype=None, copy=None):
        return self._a if dtype is None else self._a.astype(dtype)

    def __repr__(self):
        return f"PsdMatrix(dim={self.dim}, rank={self.rank})"

    @cached_property
    def spectrum(self) -> Spectrum:
        vals, vecs = np.linalg.eigh(self._a)
        # reversed views have negative strides, which keep BLAS out of later products
        vals, vecs = np.ascontiguousarray(vals[::-1]), np.ascontiguousarray(vecs[:, ::-1])
        scale = float(np.max(np.abs(vals))) if vals.size else 0.0
        if vals.size and vals[-1] < -PSD_TOL * scale:
            raise NotPsd(f"eigenvalue {vals[-1]:.3e} is negative beyond tolerance")
        vals = np.maximum(vals, 0.0)
        return Spectrum(vals, vecs, _rank_of(vals, self.dim))

    @property
    def rank(self) -> int:
        return self.spectrum.rank

    @property
    def basis(self) -> np.ndarray:
        """Orthonormal basis of the column space, shape ``(dim, rank)``."""
        s = self.spectrum
        if s.rank == self.dim:
            return s.vectors
        return np.ascontiguousarray(s.vectors[:, : s.rank])

    @property
    def positive_values(self) -> np.ndarray:
        s = self.spectrum
        return s.values[: s.rank]

    @cached_property
    def projector(self) -> np.ndarray:
        u = self.basis
        return u @ u.T

    def _spectral_fn(self, fn) -> np.ndarray:
        u = self.basis
        return (u * fn(self.positive_values)) @ u.T

    @cached_property
    def sqrt(self) -> np.ndarray:
        return self._spectral_fn(np.sqrt)

    @cached_property
    def pinv(self) -> np.ndarray:
        return self._spectral_fn(lambda v: 1.0 / v)

    @cached_property
    def pinv_sqrt(self) -> np.ndarray:
        return self._spectral_fn(lambda v: 1.0 / np.sqrt(v))

    def whiten(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Whitened coordinates and column-space residuals of row vectors.

        Returns ``(coords, residual)`` where ``coords`` has shape ``(n, rank)``
        with ``||coords_i||^2 = v_i^T A^+ v_i`` and ``residual`` is the
        ``(n, dim)`` component of each row orthogonal to ``Col(A)``.  When
        ``A`` has full rank the residual is exactly zero.
        """
        x = np.asarray(points, dtype=np.float64)
        u = self.basis
        proj = x @ u
        coords = proj / np.sqrt(self.positive_values)
        if self.rank == self.dim:
            residual = np.zeros_like(x)
        else:
            residual = x - proj @ u.T
        return coords, residual


def as_psd(a) -> PsdMatrix:
    return a if isinstance(a, PsdMatrix) else PsdMatrix(a)


def _check_dim(v: np.ndarray, a: PsdMatrix):
    if v.shape[-1] != a.dim:
        raise DimMismatch(f"vector length {v.shape[-1]} does not match dim {a.dim}")


def pinv(a) -> PsdMatrix:
    """Moore-Penrose pseudoinverse by spectral inversion."""
    a = as_psd(a)
    if a.rank == 0:
        return PsdMatrix.zeros(a.dim)
    return PsdMatrix.from_spectrum(1.0 / a.positive_values, a.basis)


def pinv_sqrt(a) -> np.ndarray:
    return as_psd(a).pinv_sqrt


def psd_sqrt(a) -> np.ndarray:
    return as_psd(a).sqrt


def mahalanobis_sq_batch(points, a) -> np.ndarray:
    """Squared extended Mahalanobis norms of each row of ``points``.

    A row whose column-space residual exceeds ``COL_TOL`` times its length
    gets ``+inf``; the zero vector always has norm zero.
    """
    a = as_psd(a)
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    _check_dim(x, a)
    coords, residual = a.whiten(x)
    out = np.einsum("ij,ij->i", coords, coords)
    if a.rank < a.dim:
        res_norm = np.linalg.norm(residual, axis=1)
        out[res_norm > COL_TOL * np.linalg.norm(x, axis=1)] = np.inf
    return out


def mahalanobis_sq(v, a) -> float:
    """``v^T A^+ v`` when ``v`` lies in ``Col(A)``, else ``+inf``."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimMismatch("expected a single vector")
    return float(mahalanobis_sq_batch(v[None, :], a)[0])


def nuclear_norm(m) -> float:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if m.size == 0:
        return 0.0
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def same_column_space(a: PsdMatrix, b: PsdMatrix) -> bool:
    if a.rank != b.rank:
        return False
    if a.rank == 0:
        return True
    # residual of each basis projected onto the other
    ra = b.basis - a.projector @ b.basis
    rb = a.basis - b.projector @ a.basis
    return max(np.linalg.norm(ra, 2), np.linalg.norm(rb, 2)) <= COL_TOL


def _relative_nuclear(a: PsdMatrix, b: PsdMatrix) -> float:
    # ||A^{+/2} (B - A) A^{+/2}||_* computed in A's whitened coordinates
    u = a.basis
    w = u / np.sqrt(a.positive_values)
    m = w.T @ (b.entries - a.entries) @ w
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (m + m.T)))))


def d_psd(a, b) -> float:
    """Symmetric relative nuclear-norm discrepancy; ``inf`` if column spaces differ."""
    a, b = as_psd(a), as_psd(b)
    if a.dim != b.dim:
        raise DimMismatch(f"dims {a.dim} and {b.dim} differ")
    if not same_column_space(a, b):
        return float("inf")
    if a.rank == 0:
        return 0.0
    return max(_relative_nuclear(a, b), _relative_nuclear(b, a))


def rank_one_downdate(a, vec, alpha: float, tol: float = 1e-12) -> PsdMatrix:
    """Return ``A - alpha * vec vec^T`` for ``alpha * ||vec||_A^2 < 1``.

    The result is assembled inside ``Col(A)`` so it is PSD with exactly the
    same column space as ``A``.
    """
    a = as_psd(a)
    vec = np.asarray(vec, dtype=np.float64)
    _check_dim(vec, a)
    if alpha < 0:
        raise NotDowndatable("alpha must be nonnegative")
    norm_sq = mahalanobis_sq(vec, a)
    if alpha * norm_sq >= 1.0 - tol:
        raise NotDowndatable(f"alpha * ||a||_A^2 = {alpha * norm_sq:.6g} is not below 1")
    if a.rank == 0:
        return PsdMatrix.zeros(a.dim)
    u = a.basis
    c = u.T @ vec
    small = np.diag(a.positive_values) - alpha * np.outer(c, c)
    vals, vecs = np.linalg.eigh(0.5 * (small + small.T))
    return PsdMatrix.from_spectrum(vals, u @ vecs)


def min_eig_difference(a, b) -> float:
    """Smallest eigenvalue of ``A - B``; nonnegative iff ``B <= A`` (Loewner)."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.linalg.eigvalsh(0.5 * (diff + diff.T))[0])
