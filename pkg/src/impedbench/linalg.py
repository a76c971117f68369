"""Dense complex linear algebra with inner products given by Gram matrices.

Everything here is plain LAPACK behind small wrappers that validate inputs,
attach residual checks, and speak the workbench error taxonomy. Matrices are
numpy arrays; sizes are desk scale (a few thousand at most).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, NumericalFailureError

__all__ = [
    "as_complex_matrix",
    "GramMatrix",
    "svd",
    "solve_pencil",
    "PencilEigens",
    "numerical_rank",
    "gram_operator_norm",
]

# Dense solves get slow and memory-hungry past this edge length.
DENSE_DIM_CAP = 4096

DEFAULT_RANK_TOL = 1e-8


def as_complex_matrix(a, what: str = "matrix") -> np.ndarray:
    """Validate and convert to a 2-d complex ndarray with finite entries."""
    m = np.asarray(a, dtype=complex)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise InvalidInputError(f"{what}: expected a 2-d array, got ndim={m.ndim}")
    if m.size == 0:
        raise InvalidInputError(f"{what}: empty matrix")
    if max(m.shape) > DENSE_DIM_CAP:
        raise InvalidInputError(
            f"{what}: dimension {max(m.shape)} exceeds dense cap {DENSE_DIM_CAP}"
        )
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{what}: entries must be finite")
    return m


class GramMatrix:
    """Hermitian positive definite matrix of an inner product, with cached Cholesky.

    The convention throughout the package is (u|v) = v^H G u: linear in the
    first argument, conjugate linear in the second.
    """

    def __init__(self, matrix):
        g = as_complex_matrix(matrix, "gram matrix")
        n, m = g.shape
        if n != m:
            raise InvalidInputError(f"gram matrix must be square, got {n}x{m}")
        scale = max(float(np.linalg.norm(g)), np.finfo(float).tiny)
        if np.linalg.norm(g - g.conj().T) > 1e-12 * scale:
            raise InvalidInputError("gram matrix is not Hermitian to 1e-12 relative tolerance")
        g = 0.5 * (g + g.conj().T)
        try:
            # Upper factor R with G = R^H R, so ||x||_G = ||R x||_2.
            r = sla.cholesky(g, lower=False)
        except sla.LinAlgError as exc:
            raise InvalidInputError("gram matrix is not positive definite") from exc
        self.matrix = g
        self.dim = n
        self.chol_upper = r

    @classmethod
    def identity(cls, dim: int) -> "GramMatrix":
        if dim < 1:
            raise InvalidInputError("gram dimension must be positive")
        return cls(np.eye(dim))

    @property
    def is_identity(self) -> bool:
        return bool(np.allclose(self.matrix, np.eye(self.dim), atol=1e-14))

    def inner(self, u, v) -> complex:
        """(u|v) = v^H G u."""
        u = np.asarray(u, dtype=complex).reshape(-1)
        v = np.asarray(v, dtype=complex).reshape(-1)
        return complex(v.conj() @ (self.matrix @ u))

    def norm_of(self, v) -> float:
        v = np.asarray(v, dtype=complex).reshape(-1)
        return float(np.linalg.norm(self.chol_upper @ v))

    def solve(self, rhs) -> np.ndarray:
        """G^{-1} rhs via the cached factor."""
        y = sla.solve_triangular(self.chol_upper, rhs, trans="C", lower=False)
        return sla.solve_triangular(self.chol_upper, y, lower=False)

    def orthonormalize(self, basis) -> np.ndarray:
        """Columns spanning the same space, orthonormal in this inner product."""
        b = np.atleast_2d(np.asarray(basis, dtype=complex))
        q, _ = np.linalg.qr(self.chol_upper @ b)
        return sla.solve_triangular(self.chol_upper, q, lower=False)


def svd(m):
    """Economy SVD (u, s, vh). Raises NumericalFailureError on non-convergence."""
    a = as_complex_matrix(m, "svd input")
    try:
        return sla.svd(a, full_matrices=False, lapack_driver="gesdd")
    except sla.LinAlgError:
        pass
    try:
        return sla.svd(a, full_matrices=False, lapack_driver="gesvd")
    except sla.LinAlgError as exc:
        raise NumericalFailureError("SVD iteration failed to converge") from exc


@dataclass
class PencilEigens:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    cond_b: float


def solve_pencil(a, b, residual_tol: float = 1e-8, cond_cap: float = 1e12) -> PencilEigens:
    """Eigenpairs of a x = lambda b x for invertible b.

    Eigenvalues come back sorted lexicographically by (Re, Im) so repeated
    runs are bit-stable. Each returned pair satisfies
    ||a x - lambda b x|| / (||a|| + |lambda| ||b||) <= residual_tol for unit x,
    otherwise NumericalFailureError is raised.
    """
    a = as_complex_matrix(a, "pencil lhs")
    b = as_complex_matrix(b, "pencil rhs")
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"pencil matrices must be square and matched, got {a.shape} vs {b.shape}")
    sb = sla.svdvals(b)
    if sb[-1] == 0.0 or sb[0] / sb[-1] > cond_cap:
        cond = np.inf if sb[-1] == 0.0 else sb[0] / sb[-1]
        raise InvalidInputError(f"pencil rhs is numerically singular (condition estimate {cond:.3e})")
    cond_b = float(sb[0] / sb[-1])
    w, v = sla.eig(a, b)
    order = np.lexsort((w.imag, w.real))
    w, v = w[order], v[:, order]
    v = v / np.linalg.norm(v, axis=0, keepdims=True)
    na, nb = np.linalg.norm(a, 2), np.linalg.norm(b, 2)
    res = np.linalg.norm(a @ v - (b @ v) * w[None, :], axis=0) / (na + np.abs(w) * nb)
    if np.any(res > residual_tol):
        raise NumericalFailureError(
            f"pencil eigenpair residual {res.max():.3e} exceeds {residual_tol:.1e}"
        )
    return PencilEigens(values=w, vectors=v, residuals=res, cond_b=cond_b)


def numerical_rank(m, tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above tol times the largest."""
    if tol <= 0:
        raise InvalidInputError("rank tolerance must be positive")
    a = as_complex_matrix(m, "rank input")
    s = sla.svdvals(a)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def gram_operator_norm(m, gram_in: GramMatrix, gram_out: GramMatrix) -> float:
    """Operator norm of m mapping (C^n, gram_in) into (C^m, gram_out).

    Computed as the largest singular value of R_out m R_in^{-1} with R the
    upper Cholesky factors, i.e. the norm after both spaces are isometrically
    flattened to Euclidean coordinates.
    """
    a = as_complex_matrix(m, "operator")
    if a.shape[1] != gram_in.dim or a.shape[0] != gram_out.dim:
        raise InvalidInputError(
            f"operator shape {a.shape} does not match grams ({gram_out.dim}, {gram_in.dim})"
        )
    x = gram_out.chol_upper @ a
    # Right-multiply by R_in^{-1}: solve R_in^T Y^T = X^T (plain transpose).
    y = sla.solve_triangular(gram_in.chol_upper, x.T, trans="T", lower=False).T
    s = sla.svdvals(y)
    return float(s[0]) if s.size else 0.0
