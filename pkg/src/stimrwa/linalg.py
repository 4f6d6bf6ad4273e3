"""Small dense complex linear algebra.

Everything here works on plain ``numpy`` arrays of shape ``(N, N)``. The
design envelope is N <= 10; nothing is optimised for large matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_RTOL = 1e-12


class NotHermitianError(ValueError):
    """Raised when a matrix that must be Hermitian is not."""

    def __init__(self, defect: float, scale: float):
        self.defect = defect
        self.scale = scale
        super().__init__(
            f"matrix is not Hermitian: max|A - A^H| = {defect:.3e} "
            f"(scale {scale:.3e}, allowed {HERMITIAN_RTOL * scale:.3e})"
        )


def dagger(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def max_norm(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def hermitian_defect(a: np.ndarray) -> float:
    return max_norm(a - dagger(a))


def unitarity_defect(u: np.ndarray) -> float:
    """``max |U^H U - I|``; broadcasts over leading axes and returns the worst."""
    u = np.asarray(u)
    n = u.shape[-1]
    return max_norm(dagger(u) @ u - np.eye(n))


def is_hermitian(a: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    return hermitian_defect(a) <= rtol * max(max_norm(a), np.finfo(float).tiny)


def check_hermitian(a: np.ndarray, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max_norm(a)
    defect = hermitian_defect(a)
    if defect > rtol * scale:
        raise NotHermitianError(defect, scale)
    return a


def fix_column_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real and positive.

    Ties in magnitude go to the first (lowest-index) entry.
    """
    v = np.array(vectors, dtype=complex)
    for j in range(v.shape[1]):
        i = int(np.argmax(np.abs(v[:, j])))
        pivot = v[i, j]
        if pivot != 0:
            v[:, j] *= np.conj(pivot) / abs(pivot)
            v[i, j] = abs(v[i, j])
    return v


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues and unitary eigenvector matrix (eigenvectors as columns)."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.values)

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ dagger(self.vectors)

    def to_basis(self, a: np.ndarray) -> np.ndarray:
        """Express ``a`` in this eigenbasis: ``V^H a V``."""
        return dagger(self.vectors) @ a @ self.vectors

    def from_basis(self, a: np.ndarray) -> np.ndarray:
        return self.vectors @ a @ dagger(self.vectors)

    def permuted(self, order) -> "EigenSystem":
        order = np.asarray(order)
        return EigenSystem(self.values[order].copy(), self.vectors[:, order].copy())


def eig_hermitian(a: np.ndarray) -> EigenSystem:
    """Eigendecomposition of a Hermitian matrix.

    Eigenvalues come back ascending and the eigenvectors follow
    :func:`fix_column_phases`, so repeated calls give identical gauges.

    Raises
    ------
    NotHermitianError
        If ``max|A - A^H|`` exceeds ``1e-12 * max|A|``.
    """
    a = check_hermitian(a)
    # symmetrise so LAPACK sees exactly Hermitian input
    values, vectors = np.linalg.eigh(0.5 * (a + dagger(a)))
    return EigenSystem(values, fix_column_phases(vectors))


def expm_hermitian_times(a: np.ndarray, t: float | np.ndarray) -> np.ndarray:
    """``exp(-i A t)`` for Hermitian ``A`` via its eigendecomposition.

    ``t`` may be an array, in which case the result has shape ``t.shape + (N, N)``.
    """
    eig = a if isinstance(a, EigenSystem) else eig_hermitian(a)
    v = eig.vectors
    t = np.asarray(t, dtype=float)
    phases = np.exp(-1j * np.multiply.outer(t, eig.values))
    return (v * phases[..., None, :]) @ dagger(v)


def random_hermitian(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (x + dagger(x))


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR with the diagonal phase fix."""
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))
