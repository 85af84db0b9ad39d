"""Dense complex matrix primitives with residual-checked contracts.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Hermitian
operations symmetrize their input first, which removes the drift that
accumulates over long chains of CP applications.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NotPSDError, NumericalError

EIGEN_UNITARY_TOL = 1e-10
RESIDUAL_TOL = 1e-8
DEFAULT_PSD_TOL = 1e-9
DEFAULT_RANK_TOL = 1e-10


def as_matrix(M):
    """Return ``M`` as a finite 2-D complex128 array."""
    A = np.asarray(M, dtype=np.complex128)
    if A.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NumericalError("matrix has non-finite entries")
    return A


def _square(M):
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {A.shape}")
    return A


def hermitian_part(M):
    A = _square(M)
    return 0.5 * (A + A.conj().T)


def op_norm(M):
    """Largest singular value (0 for empty matrices)."""
    A = as_matrix(M)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


@dataclass(frozen=True)
class HermitianEigen:
    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self):
        V = self.vectors
        return (V * self.values) @ V.conj().T


def hermitian_eigen(M):
    """Eigendecomposition of the Hermitian part of ``M``, values ascending.

    Raises
    ------
    NumericalError
        If the eigenvectors are not unitary to 1e-10 or the reconstruction
        residual exceeds ``1e-8 * max(1, ||M||)``.
    """
    H = hermitian_part(M)
    if H.shape[0] == 0:
        return HermitianEigen(np.zeros(0), np.zeros((0, 0), dtype=np.complex128))
    values, vectors = np.linalg.eigh(H)
    eig = HermitianEigen(values, vectors)
    n = H.shape[0]
    unitary_err = np.abs(vectors.conj().T @ vectors - np.eye(n)).max()
    scale = max(1.0, float(np.abs(values).max()))
    residual = op_norm(H - eig.reconstruct())
    if unitary_err > EIGEN_UNITARY_TOL or residual > RESIDUAL_TOL * scale:
        raise NumericalError(
            "Hermitian eigendecomposition failed its residual contract",
            unitary_err=unitary_err, residual=residual,
        )
    return eig


def psd_check(M, tol=DEFAULT_PSD_TOL):
    """Return ``(is_psd, min_eig)``; the tolerance is relative to ``max(1, ||M||)``."""
    values = hermitian_eigen(M).values
    if values.size == 0:
        return True, 0.0
    min_eig = float(values[0])
    scale = max(1.0, float(np.abs(values).max()))
    return min_eig >= -tol * scale, min_eig


def psd_sqrt(M, tol=DEFAULT_PSD_TOL):
    """Hermitian PSD square root, clamping tolerated negative eigenvalues to 0."""
    ok, min_eig = psd_check(M, tol)
    if not ok:
        raise NotPSDError(f"matrix is not PSD (min eigenvalue {min_eig:.3e})", min_eig=min_eig)
    eig = hermitian_eigen(M)
    roots = np.sqrt(np.clip(eig.values, 0.0, None))
    S = (eig.vectors * roots) @ eig.vectors.conj().T
    return 0.5 * (S + S.conj().T)


def pinv(M, rank_tol=DEFAULT_RANK_TOL):
    """Moore-Penrose pseudo-inverse with relative rank cutoff.

    Singular values ``<= rank_tol * sigma_max`` are treated as zero.

    Returns
    -------
    Mplus : ndarray
    rank : int
    """
    A = as_matrix(M)
    rows, cols = A.shape
    if A.size == 0:
        return np.zeros((cols, rows), dtype=np.complex128), 0
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros((cols, rows), dtype=np.complex128), 0
    keep = s > rank_tol * s[0]
    rank = int(keep.sum())
    Mplus = (Vh[:rank].conj().T / s[:rank]) @ U[:, :rank].conj().T
    return Mplus, rank


def moore_penrose_residuals(M, Mplus):
    """The four Moore-Penrose identity residuals in operator norm."""
    A = as_matrix(M)
    P = as_matrix(Mplus)
    return (
        op_norm(A @ P @ A - A),
        op_norm(P @ A @ P - P),
        op_norm((A @ P).conj().T - A @ P),
        op_norm((P @ A).conj().T - P @ A),
    )


# Wire format: complex scalars are [re, im] pairs; matrices are row-major
# nested lists of such pairs.

def complex_to_wire(z):
    z = complex(z)
    return [z.real, z.imag]


def complex_from_wire(pair):
    if isinstance(pair, (int, float)) and not isinstance(pair, bool):
        return complex(pair)
    if not isinstance(pair, (list, tuple)) or len(pair) != 2:
        raise DimensionMismatchError(f"complex scalar must be [re, im], got {pair!r}")
    return complex(float(pair[0]), float(pair[1]))


def matrix_to_wire(M):
    A = np.asarray(M, dtype=np.complex128)
    return [[[float(z.real), float(z.imag)] for z in row] for row in A]


def matrix_from_wire(rows):
    if not isinstance(rows, (list, tuple)) or not rows:
        raise DimensionMismatchError("matrix must be a non-empty list of rows")
    width = None
    out = []
    for row in rows:
        if not isinstance(row, (list, tuple)):
            raise DimensionMismatchError("matrix rows must be lists")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DimensionMismatchError(
                f"ragged matrix: row length {len(row)} != {width}"
            )
        out.append([complex_from_wire(z) for z in row])
    return as_matrix(out)


def vector_from_wire(items):
    return np.array([complex_from_wire(z) for z in items], dtype=np.complex128)
