"""Matrix-calculus operators: vec/vech, commutation, selection and elimination
matrices, Gaussian fourth moments, and Gram-matrix orthonormalization.

Vectorization is column-major throughout, so ``vec(A)[j * n + i] == A[i, j]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from gap.errors import NotSPD, NotSquare

__all__ = [
    "OperatorMatrices",
    "build_operator_matrices",
    "gram_orthonormal_coeffs",
    "isserlis_fourth_moment",
    "kron",
    "unvech",
    "vec",
    "vech",
]

DENSE_LIMIT = 16
COND_LIMIT = 1e12


def vec(a) -> np.ndarray:
    """Stack the columns of ``a`` into one vector."""
    return np.asarray(a, dtype=float).reshape(-1, order="F")


def _square(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {a.shape}")
    return a


def vech(a) -> np.ndarray:
    """Column-major stacking of the lower triangle (diagonal included)."""
    a = _square(a)
    # rows of a.T restricted to the upper triangle == columns of a below the diagonal
    return a.T[np.triu_indices(a.shape[0])].copy()


def unvech(v, n: int) -> np.ndarray:
    """Inverse of :func:`vech` onto lower-triangular matrices."""
    v = np.asarray(v, dtype=float)
    if v.shape != (n * (n + 1) // 2,):
        raise ValueError(f"vech of an {n}x{n} matrix has {n * (n + 1) // 2} entries, got {v.shape}")
    out = np.zeros((n, n))
    out.T[np.triu_indices(n)] = v
    return out


def kron(a, b) -> np.ndarray:
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


@dataclass(frozen=True)
class OperatorMatrices:
    """Commutation ``T_{D,D}``, diagonal selector ``R_D`` and elimination ``S_D``.

    The operators are held as index maps; the dense matrices are materialized on
    request and only for ``dim <= 16``.
    """

    dim: int

    @cached_property
    def transpose_perm(self) -> np.ndarray:
        """``(T x)[k] == x[transpose_perm[k]]``."""
        d = self.dim
        j, i = np.divmod(np.arange(d * d), d)
        return i * d + j

    @cached_property
    def diag_index(self) -> np.ndarray:
        d = self.dim
        return np.arange(d) * (d + 1)

    @cached_property
    def vech_index(self) -> np.ndarray:
        """Positions in ``vec(A)`` of the entries of ``vech(A)``."""
        d = self.dim
        j, i = np.triu_indices(d)
        return j * d + i

    def _dense_guard(self) -> None:
        if self.dim > DENSE_LIMIT:
            raise MemoryError(f"dense operator matrices are only built for D <= {DENSE_LIMIT}")

    @cached_property
    def t_dd(self) -> np.ndarray:
        self._dense_guard()
        n = self.dim**2
        out = np.zeros((n, n))
        out[np.arange(n), self.transpose_perm] = 1.0
        return out

    @cached_property
    def r_d(self) -> np.ndarray:
        self._dense_guard()
        n = self.dim**2
        out = np.zeros((n, n))
        out[self.diag_index, self.diag_index] = 1.0
        return out

    @cached_property
    def s_d(self) -> np.ndarray:
        self._dense_guard()
        m = self.dim * (self.dim + 1) // 2
        out = np.zeros((m, self.dim**2))
        out[np.arange(m), self.vech_index] = 1.0
        return out

    def apply_t(self, x: np.ndarray) -> np.ndarray:
        """Left-multiply by ``T_{D,D}`` along the first axis."""
        return np.asarray(x)[self.transpose_perm]

    def apply_r(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[self.diag_index] = x[self.diag_index]
        return out

    def apply_s(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self.vech_index]


def build_operator_matrices(dim: int) -> OperatorMatrices:
    if dim < 1:
        raise ValueError("dimension must be at least 1")
    return OperatorMatrices(int(dim))


def _require_spd(sigma: np.ndarray, what: str = "matrix") -> None:
    if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-12):
        raise NotSPD(f"{what} is not symmetric")
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NotSPD(f"{what} is not positive definite") from exc


def isserlis_fourth_moment(sigma) -> np.ndarray:
    """``E[(x x^T) kron (x x^T)]`` for ``x ~ N(0, sigma)``.

    Entry ``(i*n + k, j*n + l)`` equals
    ``s_ij s_kl + s_ik s_jl + s_il s_jk``.
    """
    s = _square(sigma)
    _require_spd(s, "covariance")
    n = s.shape[0]
    m = (
        np.einsum("ij,kl->ikjl", s, s)
        + np.einsum("ik,jl->ikjl", s, s)
        + np.einsum("il,jk->ikjl", s, s)
    )
    return m.reshape(n * n, n * n)


def _minor_coeffs(g: np.ndarray) -> np.ndarray:
    """Determinant/minor expansion of classical Gram-Schmidt.

    Row j of the result holds ``(-1)^(j+i) M_{j,i} / sqrt(D_{j-1} D_j)``, where
    ``D_j`` is the j-th leading principal minor and ``M_{j,i}`` is the minor of the
    j-th leading block with row j and column i deleted.
    """
    k = g.shape[0]
    c = np.zeros((k, k))
    d_prev = 1.0
    for j in range(1, k + 1):
        block = g[:j, :j]
        d_j = np.linalg.det(block)
        if not d_j > 0.0:
            raise NotSPD(f"leading principal minor {j} is not positive ({d_j:g})")
        norm = np.sqrt(d_prev * d_j)
        for i in range(1, j + 1):
            sub = np.delete(np.delete(block, j - 1, axis=0), i - 1, axis=1)
            minor = np.linalg.det(sub) if sub.size else 1.0
            c[j - 1, i - 1] = (-1) ** (j + i) * minor / norm
        d_prev = d_j
    return c


def gram_orthonormal_coeffs(gram, method: str = "cholesky") -> np.ndarray:
    """Lower-triangular ``C`` with ``C @ gram @ C.T == I`` and positive diagonal.

    ``w_j = sum_i C[j, i] v_i`` is the Gram-Schmidt orthonormalization of basis
    vectors ``v`` whose inner products are ``gram``.

    Args:
        gram: Symmetric positive-definite Gram matrix.
        method: ``"cholesky"`` (inverse of the lower Cholesky factor, the default)
            or ``"minors"`` (explicit determinant expansion; slow, kept for
            cross-checking).

    Raises:
        NotSPD: ``gram`` is not symmetric positive definite, or its condition
            number exceeds 1e12.
    """
    g = _square(gram)
    if not np.allclose(g, g.T, rtol=1e-10, atol=1e-14):
        raise NotSPD("Gram matrix is not symmetric")
    if not np.all(np.isfinite(g)):
        raise NotSPD("Gram matrix has non-finite entries")
    eig = np.linalg.eigvalsh(g)
    if eig[0] <= 0.0 or eig[-1] / eig[0] > COND_LIMIT:
        raise NotSPD(f"Gram matrix is singular or ill-conditioned (eigenvalues {eig[0]:.3g}..{eig[-1]:.3g})")
    if method == "cholesky":
        low = np.linalg.cholesky(g)
        return linalg.solve_triangular(low, np.eye(g.shape[0]), lower=True)
    if method == "minors":
        return _minor_coeffs(g)
    raise ValueError(f"unknown orthonormalization method {method!r}")
