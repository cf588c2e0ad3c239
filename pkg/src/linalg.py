"""Dense linear algebra for the small matrices this package works with.

Metrics are at most a few dozen rows square, so the symmetric eigensolver is a
plain cyclic Jacobi sweep rather than a call into LAPACK.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NonPositiveDefiniteError, NonPsdError, SingularMetricError

Matrix = np.ndarray
SymMatrix = np.ndarray

PSD_TOL = 1e-10
MAX_SWEEPS = 100


@dataclass(frozen=True)
class EigenPairs:
    """Ascending eigenvalues with matching orthonormal eigenvector columns"""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def max_vector(self) -> np.ndarray:
        return self.eigenvectors[:, -1]

    @property
    def min_vector(self) -> np.ndarray:
        return self.eigenvectors[:, 0]


def as_symmetric(m: np.ndarray) -> SymMatrix:
    """Validate a square finite matrix and remove round-off asymmetry"""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise InvalidInputError(f"expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("matrix has non-finite entries")
    norm = np.linalg.norm(m)
    if np.linalg.norm(m - m.T) > 1e-9 * max(norm, 1.0):
        raise InvalidInputError("matrix is not symmetric")
    return 0.5 * (m + m.T)


def sym_eig(m: SymMatrix) -> EigenPairs:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations"""
    a = as_symmetric(m).copy()
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)

    for _ in range(MAX_SWEEPS):
        off = math.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= 1e-14 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                h = float(a[q, q] - a[p, p])
                if abs(h) + 100.0 * abs(apq) == abs(h):
                    # rotation angle below float resolution: t ~ apq / h
                    t = float(apq) / h
                else:
                    theta = 0.5 * h / float(apq)
                    t = 1.0 / (abs(theta) + math.hypot(theta, 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q

    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues, kind="stable")
    return EigenPairs(eigenvalues=eigenvalues[order], eigenvectors=v[:, order])


def psd_eig(m: SymMatrix) -> EigenPairs:
    """sym_eig for metrics: tiny negative eigenvalues clamp to 0, larger ones raise"""
    m = as_symmetric(m)
    pairs = sym_eig(m)
    tol = PSD_TOL * max(np.linalg.norm(m), np.finfo(float).tiny)
    if pairs.eigenvalues[0] < -tol:
        raise NonPsdError(f"metric has eigenvalue {pairs.eigenvalues[0]:.3e} below -{tol:.3e}")
    return EigenPairs(
        eigenvalues=np.maximum(pairs.eigenvalues, 0.0),
        eigenvectors=pairs.eigenvectors,
    )


def log_sqrt_det(m: SymMatrix) -> float:
    """Half the sum of log eigenvalues, i.e. log sqrt(det m)"""
    eigenvalues = sym_eig(m).eigenvalues
    if eigenvalues[0] <= 0.0:
        raise NonPositiveDefiniteError(f"smallest eigenvalue {eigenvalues[0]:.3e} is not positive")
    return 0.5 * float(np.sum(np.log(eigenvalues)))


def condition_number(m: SymMatrix) -> float:
    """Ratio of largest to smallest eigenvalue of a PSD matrix"""
    eigenvalues = psd_eig(m).eigenvalues
    if eigenvalues[0] <= 0.0:
        raise SingularMetricError("metric is singular (smallest eigenvalue is 0)")
    return float(eigenvalues[-1] / eigenvalues[0])


def quadratic_form(m: SymMatrix, v: np.ndarray) -> float:
    return float(v @ m @ v)
