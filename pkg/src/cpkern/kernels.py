"""Operator-valued positive definite kernels on finite point sets."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, NotPSDError, ValidationError
from .matrix_core import (
    DEFAULT_PSD_TOL,
    DEFAULT_RANK_TOL,
    RESIDUAL_TOL,
    as_matrix,
    hermitian_eigen,
    matrix_from_wire,
    matrix_to_wire,
    op_norm,
    pinv,
    psd_check,
)

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PDKernel:
    """Kernel values ``K(x_i, x_j)`` stored as an ``(n, n, d, d)`` block array."""

    points: tuple
    fiber_dim: int
    blocks: np.ndarray

    def __post_init__(self):
        points = tuple(self.points)
        blocks = np.asarray(self.blocks, dtype=np.complex128)
        n, d = len(points), int(self.fiber_dim)
        if len(set(points)) != n:
            raise DimensionMismatchError("point ids must be distinct")
        if n == 0 or d <= 0:
            raise DimensionMismatchError("kernel needs at least one point and d >= 1")
        if blocks.shape != (n, n, d, d):
            raise DimensionMismatchError(
                f"blocks have shape {blocks.shape}, expected {(n, n, d, d)}"
            )
        if not np.all(np.isfinite(blocks)):
            raise DimensionMismatchError("kernel blocks contain non-finite entries")
        blocks.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "fiber_dim", d)
        object.__setattr__(self, "blocks", blocks)

    @property
    def n(self):
        return len(self.points)

    def index(self, x):
        try:
            return self.points.index(x)
        except ValueError:
            raise DimensionMismatchError(f"unknown point {x!r}") from None

    def block(self, x, y):
        return self.blocks[self.index(x), self.index(y)]

    def with_blocks(self, blocks):
        return PDKernel(self.points, self.fiber_dim, blocks)

    @classmethod
    def from_gram(cls, points, fiber_dim, G):
        points = tuple(points)
        n, d = len(points), int(fiber_dim)
        G = as_matrix(G)
        if G.shape != (n * d, n * d):
            raise DimensionMismatchError(f"Gram shape {G.shape} != {(n * d, n * d)}")
        blocks = G.reshape(n, d, n, d).transpose(0, 2, 1, 3)
        return cls(points, d, blocks)

    @classmethod
    def single(cls, block, point="x"):
        B = as_matrix(block)
        return cls((point,), B.shape[0], B[None, None])

    def to_wire(self):
        return {
            "points": list(self.points),
            "fiber_dim": self.fiber_dim,
            "blocks": [[matrix_to_wire(b) for b in row] for row in self.blocks],
        }

    @classmethod
    def from_wire(cls, obj):
        try:
            points = obj["points"]
            d = int(obj["fiber_dim"])
            rows = obj["blocks"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"kernel fragment missing field: {exc}") from None
        if len(rows) != len(points) or any(len(r) != len(points) for r in rows):
            raise DimensionMismatchError("kernel blocks must be an n x n array")
        blocks = np.array([[matrix_from_wire(b) for b in row] for row in rows])
        return cls(tuple(points), d, blocks)


def gram(K):
    """The ``(n*d, n*d)`` block matrix ``[K(x_i, x_j)]``."""
    n, d = K.n, K.fiber_dim
    return K.blocks.transpose(0, 2, 1, 3).reshape(n * d, n * d).copy()


@dataclass(frozen=True)
class ValidationReport:
    hermitian_residual: float
    min_eig: float
    psd: bool
    cauchy_schwarz_ok: bool
    cauchy_schwarz_excess: float
    passed: bool
    error: str | None = None


def validate(K, tol=DEFAULT_PSD_TOL):
    """Check Hermitian symmetry, Gram positivity and the block Cauchy-Schwarz bound.

    Failures are reported in the returned record, never raised.
    """
    B = K.blocks
    herm = float(np.abs(B - B.transpose(1, 0, 3, 2).conj()).max())
    psd, min_eig = psd_check(gram(K), tol)
    diag_norms = np.array([op_norm(B[i, i]) for i in range(K.n)])
    excess = -np.inf
    for i in range(K.n):
        for j in range(K.n):
            bound = np.sqrt(diag_norms[i] * diag_norms[j])
            excess = max(excess, op_norm(B[i, j]) - bound)
    cs_ok = bool(excess <= tol)
    passed = bool(herm <= HERMITIAN_TOL * max(1.0, np.abs(B).max()) and psd and cs_ok)
    error = None if passed else ("ErrNotPSD" if not psd else "ErrNotHermitian" if cs_ok else "ErrCauchySchwarz")
    return ValidationReport(herm, min_eig, psd, cs_ok, float(excess), passed, error)


@dataclass(frozen=True, eq=False)
class KolmogorovFactor:
    """Feature map ``W`` with ``W* W = gram(K)``; ``V_x`` is the column slice at ``x``."""

    W: np.ndarray
    rank: int
    source_dims: tuple
    rank_tol_used: float
    source: PDKernel = field(repr=False)

    @property
    def points(self):
        return self.source.points

    def V(self, x):
        d = self.source.fiber_dim
        i = self.source.index(x)
        return self.W[:, i * d:(i + 1) * d]

    def W_pinv(self):
        return pinv(self.W, self.rank_tol_used)[0]


def kolmogorov(K, rank_tol=DEFAULT_RANK_TOL, tol=DEFAULT_PSD_TOL):
    """Rank-truncated factor ``W = diag(sqrt(lambda)) U*`` of the Gram matrix.

    Raises
    ------
    NotPSDError
        If ``K`` fails validation or the reconstruction residual exceeds 1e-8.
    """
    report = validate(K, tol)
    if not report.passed:
        raise NotPSDError(
            f"kernel failed validation ({report.error}, min eig {report.min_eig:.3e})",
            min_eig=report.min_eig,
        )
    G = gram(K)
    eig = hermitian_eigen(G)
    top = max(float(eig.values[-1]), 0.0)
    keep = eig.values > rank_tol * top if top > 0 else np.zeros(eig.values.size, bool)
    # descending, ties kept in eigh order so K = I gives W = I
    order = np.argsort(-eig.values[keep], kind="stable")
    vals = eig.values[keep][order]
    vecs = eig.vectors[:, keep][:, order]
    W = np.sqrt(vals)[:, None] * vecs.conj().T
    scale = max(1.0, op_norm(G))
    if op_norm(W.conj().T @ W - G) > RESIDUAL_TOL * scale:
        raise NotPSDError("Kolmogorov reconstruction residual too large")
    return KolmogorovFactor(W, int(W.shape[0]), (K.n, K.fiber_dim), rank_tol, K)


def scalar_lift(kf, x, a, y, b):
    """``<V_x a, V_y b> = <a, K(x, y) b>`` on the feature space."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    d = kf.source.fiber_dim
    if a.shape != (d,) or b.shape != (d,):
        raise DimensionMismatchError(f"vectors must have length {d}")
    return complex(np.vdot(kf.V(x) @ a, kf.V(y) @ b))


def _check_same_shape(K, L):
    if K.points != L.points or K.fiber_dim != L.fiber_dim:
        raise DimensionMismatchError("kernels live on different points or fibers")


def dominates(K, L, tol=DEFAULT_PSD_TOL):
    """Kernel order ``L <= K``: returns ``(flag, min eig of gram(K) - gram(L))``."""
    _check_same_shape(K, L)
    return psd_check(gram(K) - gram(L), tol)


def range_residual(K, L, rank_tol=DEFAULT_RANK_TOL):
    """Relative distance of the columns of ``gram(L)`` from ``range(gram(K))``."""
    _check_same_shape(K, L)
    GK, GL = gram(K), gram(L)
    P = GK @ pinv(GK, rank_tol)[0]
    return op_norm(GL - P @ GL) / max(1.0, op_norm(GL))
