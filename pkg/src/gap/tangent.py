"""Closed-form tangent-space machinery for the Gaussian family ``(mu, vech(L))``.

The tangent vectors at ``theta0 = (mu0, L0)`` are ``v_mu = q0 * 1/2 Sigma0^{-1}(z - mu0)``
and ``v_l = q0 * W(z) U V`` with

    W(z) = -1/4 vec(Sigma0^{-1})^T + 1/4 (x^T kron x^T)(Sigma0^{-1} kron Sigma0^{-1}),  x = z - mu0
    U    = I + T^T - R^T
    V    = [(I kron L0) T + (L0 kron I)] S^T

Their Gram matrices are ``A = Sigma0^{-1} / 4`` and ``B = V^T U^T E[W^T W] U V``, and the
two blocks are mutually orthogonal.

``U`` applies a symmetric-matrix derivative correction.  Because ``V`` already maps
a factor perturbation to both off-diagonal entries of ``Sigma``, this doubles the
off-diagonal part of ``W`` for ``D >= 2``: the ``v_l`` still span the tangent space
but are not the exact partial derivatives ``dq/dl``.  The ``"chain"`` basis uses
``U = I`` instead and gives the exact derivatives.  Both agree at ``D = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from gap.core import GaussianModel
from gap.errors import NotSPD, RankDeficient
from gap.matops import (
    OperatorMatrices,
    build_operator_matrices,
    gram_orthonormal_coeffs,
    isserlis_fourth_moment,
    kron,
    vec,
)

__all__ = [
    "TangentGram",
    "build_tangent_gram",
    "build_uv",
    "cov_features",
    "expected_wtw",
    "gram_cov_block",
    "gram_mean_block",
    "mean_features",
    "orthonormal_coefficients",
]

B_EIG_FLOOR = 1e-10
BASES = ("symmetrized", "chain")


@dataclass(frozen=True, eq=False)
class TangentGram:
    a: np.ndarray
    b: np.ndarray
    u: np.ndarray
    v: np.ndarray
    coeff_mu: Optional[np.ndarray] = None
    coeff_l: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def uv(self) -> np.ndarray:
        return self.u @ self.v


def gram_mean_block(model: GaussianModel) -> np.ndarray:
    """``A = Sigma^{-1} / 4``."""
    return 0.25 * model.precision()


def build_uv(model: GaussianModel, ops: OperatorMatrices | None = None,
             basis: str = "symmetrized") -> tuple[np.ndarray, np.ndarray]:
    """The symmetrization operator ``U_D`` and the Jacobian ``V_D = d vec(L L^T) / d vech(L)``.

    ``basis="chain"`` replaces ``U_D`` by the identity.
    """
    if basis not in BASES:
        raise ValueError(f"basis must be one of {BASES}, got {basis!r}")
    d = model.dim
    ops = ops or build_operator_matrices(d)
    eye = np.eye(d)
    t, r, s = ops.t_dd, ops.r_d, ops.s_d
    u = np.eye(d * d) + t.T - r.T if basis == "symmetrized" else np.eye(d * d)
    v = (kron(eye, model.chol) @ t + kron(model.chol, eye)) @ s.T
    m = d * (d + 1) // 2
    if np.linalg.matrix_rank(v) < m:
        raise RankDeficient("V has deficient column rank; L is singular")
    return u, v


def expected_wtw(model: GaussianModel) -> np.ndarray:
    """``E[W^T W]`` under ``z ~ N(mu0, Sigma0)``, from Isserlis' theorem."""
    sigma = model.cov
    prec = model.precision()
    vp = vec(prec)[:, None]
    vs = vec(sigma)[:, None]
    pp = kron(prec, prec)
    fourth = isserlis_fourth_moment(0.5 * (sigma + sigma.T))
    out = (vp @ vp.T - vp @ vs.T @ pp - pp @ vs @ vp.T + pp @ fourth @ pp) / 16.0
    return 0.5 * (out + out.T)


def gram_cov_block(model: GaussianModel, ops: OperatorMatrices | None = None,
                   basis: str = "symmetrized") -> np.ndarray:
    """``B = V^T U^T E[W^T W] U V``, symmetrized.

    Raises:
        NotSPD: smallest eigenvalue below ``1e-10 * ||B||``.
    """
    u, v = build_uv(model, ops, basis)
    return _cov_gram(u @ v, model)


def _cov_gram(uv: np.ndarray, model: GaussianModel) -> np.ndarray:
    b = uv.T @ expected_wtw(model) @ uv
    b = 0.5 * (b + b.T)
    eig = np.linalg.eigvalsh(b)
    if eig[0] < B_EIG_FLOOR * np.linalg.norm(b, 2):
        raise NotSPD("covariance-direction Gram matrix is numerically singular")
    return b


def orthonormal_coefficients(gram: TangentGram, method: str = "cholesky") -> TangentGram:
    return replace(
        gram,
        coeff_mu=gram_orthonormal_coeffs(gram.a, method),
        coeff_l=gram_orthonormal_coeffs(gram.b, method),
    )


def build_tangent_gram(model: GaussianModel, ops: OperatorMatrices | None = None,
                       method: str = "cholesky", basis: str = "symmetrized") -> TangentGram:
    """Both Gram blocks, ``U``, ``V`` and the orthonormalization coefficients at ``model``."""
    ops = ops or build_operator_matrices(model.dim)
    u, v = build_uv(model, ops, basis)
    b = _cov_gram(u @ v, model)
    gram = TangentGram(a=gram_mean_block(model), b=b, u=u, v=v)
    return orthonormal_coefficients(gram, method)


def mean_features(model: GaussianModel, z: np.ndarray) -> np.ndarray:
    """Rows ``1/2 Sigma^{-1}(z_t - mu)``: ``v_mu / q`` at each sample, shape ``(n, D)``."""
    z = np.atleast_2d(z)
    return 0.5 * (z - model.mean) @ model.precision()


def cov_features(model: GaussianModel, z: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Rows ``W(z_t) U V``: ``v_l / q`` at each sample, shape ``(n, D(D+1)/2)``."""
    z = np.atleast_2d(z)
    prec = model.precision()
    y = (z - model.mean) @ prec
    n, d = y.shape
    # (x^T kron x^T)(P kron P) = (Px)^T kron (Px)^T, laid out as index i*D + k
    outer = (y[:, :, None] * y[:, None, :]).reshape(n, d * d)
    w = 0.25 * (outer - vec(prec)[None, :])
    return w @ uv
