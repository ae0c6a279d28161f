"""Shared domain types: Gaussian points on the model manifold, targets, optimizer
configuration, and the per-iteration trace."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg

from gap.errors import DimensionMismatch, NotLowerTriangular, ZeroDiagonal
from gap.matops import unvech, vech

DIAG_FLOOR = 1e-12
LOG_2PI = math.log(2.0 * math.pi)


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def validate_gaussian(model) -> None:
    """Check the invariants of a Gaussian point ``(mean, chol)``.

    Works on anything with ``mean`` and ``chol`` attributes, so it can vet raw
    parameters before a :class:`GaussianModel` is built from them.

    Raises:
        DimensionMismatch: ``chol`` is not ``D x D`` for ``D = len(mean)``.
        NotLowerTriangular: ``chol`` has a nonzero entry above the diagonal.
        ZeroDiagonal: some ``|L_ii| < 1e-12``.
    """
    mean = np.asarray(model.mean, dtype=float)
    chol = np.asarray(model.chol, dtype=float)
    if mean.ndim != 1 or mean.size < 1:
        raise DimensionMismatch(f"mean must be a nonempty vector, got shape {mean.shape}")
    d = mean.size
    if chol.shape != (d, d):
        raise DimensionMismatch(f"chol must be {d}x{d}, got shape {chol.shape}")
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(chol))):
        raise ValueError("Gaussian parameters must be finite")
    if np.any(np.triu(chol, k=1) != 0.0):
        raise NotLowerTriangular("chol has nonzero entries above the diagonal")
    if np.any(np.abs(np.diag(chol)) < DIAG_FLOOR):
        raise ZeroDiagonal(f"some |L_ii| is below {DIAG_FLOOR:g}")


@dataclass(frozen=True, eq=False)
class GaussianModel:
    """``N(mean, L L^T)`` parameterized by its mean and a lower-triangular factor.

    The diagonal of ``chol`` may take either sign; only ``L L^T`` matters for the
    density.
    """

    mean: np.ndarray
    chol: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(np.atleast_1d(self.mean)))
        object.__setattr__(self, "chol", _frozen(np.atleast_2d(self.chol)))
        validate_gaussian(self)

    @classmethod
    def from_vech(cls, mean, vech_chol) -> "GaussianModel":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls(mean, unvech(vech_chol, mean.size))

    @classmethod
    def from_cov(cls, mean, cov) -> "GaussianModel":
        return cls(mean, np.linalg.cholesky(np.atleast_2d(np.asarray(cov, dtype=float))))

    @classmethod
    def standard(cls, dim: int) -> "GaussianModel":
        return cls(np.zeros(dim), np.eye(dim))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def cov(self) -> np.ndarray:
        return self.chol @ self.chol.T

    @property
    def vech_chol(self) -> np.ndarray:
        return vech(self.chol)

    @property
    def log_det_cov(self) -> float:
        return 2.0 * float(np.sum(np.log(np.abs(np.diag(self.chol)))))

    def precision(self) -> np.ndarray:
        """``Sigma^{-1}`` via two triangular solves."""
        linv = linalg.solve_triangular(self.chol, np.eye(self.dim), lower=True)
        return linv.T @ linv

    def whiten(self, z) -> np.ndarray:
        """``L^{-1} (z - mean)`` for ``z`` of shape ``(D,)`` or ``(n, D)``."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise DimensionMismatch(f"point has dimension {z.shape[-1]}, model has {self.dim}")
        diff = z - self.mean
        return linalg.solve_triangular(self.chol, diff.T, lower=True).T

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "chol": self.chol.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianModel":
        return cls(np.asarray(data["mean"], dtype=float), np.asarray(data["chol"], dtype=float))

    def __repr__(self) -> str:
        return f"GaussianModel(mean={self.mean.tolist()}, chol={self.chol.tolist()})"


def gaussian_log_sqrt_density(model: GaussianModel, z) -> np.ndarray | float:
    """``log q(z)``, the log square-root density of ``model``.

    Equals ``-(D/4) log 2pi - (1/4) log|Sigma| - (1/4) (z-mu)^T Sigma^{-1} (z-mu)``.
    Accepts a single point ``(D,)`` or a batch ``(n, D)``.
    """
    u = model.whiten(z)
    quad = np.sum(u * u, axis=-1)
    out = -0.25 * model.dim * LOG_2PI - 0.25 * model.log_det_cov - 0.25 * quad
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ScalarGaussian:
    """1-D Gaussian with a signed scale; the variance is ``sigma**2``."""

    mean: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "sigma", float(self.sigma))
        if not (math.isfinite(self.mean) and math.isfinite(self.sigma)):
            raise ValueError("ScalarGaussian parameters must be finite")
        if abs(self.sigma) < DIAG_FLOOR:
            raise ZeroDiagonal(f"|sigma| is below {DIAG_FLOOR:g}")

    @property
    def variance(self) -> float:
        return self.sigma * self.sigma

    def to_model(self) -> GaussianModel:
        return GaussianModel([self.mean], [[self.sigma]])

    def log_sqrt_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -0.25 * LOG_2PI - 0.25 * math.log(self.variance) - (x - self.mean) ** 2 / (4.0 * self.variance)


@dataclass(frozen=True)
class TargetDensity:
    """A (possibly unnormalized) target ``p0`` known through ``log sqrt p0``.

    ``log_sqrt`` is vectorized: it maps an array of shape ``(..., dim)`` to shape
    ``(...)``.  When ``normalized`` is false the normalizer is unknown unless
    ``log_normalizer`` is given; it is never folded into ``log_sqrt``.
    ``bounds`` optionally gives an interval holding essentially all the mass of a
    1-D target, for quadrature.
    """

    dim: int
    log_sqrt: Callable[[np.ndarray], np.ndarray]
    normalized: bool = True
    log_normalizer: Optional[float] = None
    name: str = "target"
    bounds: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("target dimension must be positive")

    def log_sqrt_at(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise DimensionMismatch(f"point has dimension {z.shape[-1]}, target has {self.dim}")
        return np.asarray(self.log_sqrt(z), dtype=float)

    def density_1d(self, x) -> np.ndarray:
        """``p0`` at scalar nodes ``x`` of a 1-D target (normalized if possible)."""
        if self.dim != 1:
            raise DimensionMismatch("density_1d needs a 1-D target")
        x = np.asarray(x, dtype=float)
        logp = 2.0 * self.log_sqrt_at(x[..., None])
        if not self.normalized and self.log_normalizer is not None:
            logp = logp - self.log_normalizer
        return np.exp(logp)


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for the gradient-descent loop.

    ``step_mu`` / ``step_l`` are per-block step sizes; either may also be a
    sequence giving one step per coordinate.  With ``early_stop`` off the loop
    always runs ``max_iters`` iterations.  ``basis`` picks the covariance-direction
    tangent basis (``"symmetrized"`` or ``"chain"``, see :mod:`gap.tangent`).
    """

    step_mu: float | Sequence[float] = 0.1
    step_l: float | Sequence[float] = 0.1
    mc_samples: int = 10_000
    max_iters: int = 1000
    grad_tol: float = 1e-3
    dist_tol: float = 1e-4
    window: int = 25
    overlap_clamp: float = 1e-9
    seed: int = 0
    workers: int = 1
    early_stop: bool = True
    basis: str = "symmetrized"

    def __post_init__(self):
        for name in ("step_mu", "step_l"):
            steps = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if steps.size == 0 or np.any(~(steps > 0)):
                raise ValueError(f"{name} must be positive")
        if self.mc_samples < 2:
            raise ValueError("mc_samples must be at least 2")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not (self.grad_tol > 0 and self.dist_tol > 0):
            raise ValueError("grad_tol and dist_tol must be positive")
        if not (0 < self.overlap_clamp <= 1e-3):
            raise ValueError("overlap_clamp must lie in (0, 1e-3]")
        if self.window < 1 or self.workers < 1:
            raise ValueError("window and workers must be positive")
        if self.basis not in ("symmetrized", "chain"):
            raise ValueError(f"basis must be 'symmetrized' or 'chain', got {self.basis!r}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")

    def steps(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        """Broadcast the step sizes to the ``D`` mean and ``D(D+1)/2`` factor coordinates."""
        m = dim * (dim + 1) // 2
        mu = np.broadcast_to(np.asarray(self.step_mu, dtype=float), (dim,)).copy()
        sl = np.broadcast_to(np.asarray(self.step_l, dtype=float), (m,)).copy()
        return mu, sl


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    mean: np.ndarray
    vech_chol: np.ndarray
    overlap: float
    distance: float
    grad_norm: float


@dataclass(frozen=True)
class GapTrace:
    records: tuple[TraceRecord, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def distances(self) -> np.ndarray:
        return np.array([r.distance for r in self.records])

    @property
    def overlaps(self) -> np.ndarray:
        return np.array([r.overlap for r in self.records])

    @property
    def grad_norms(self) -> np.ndarray:
        return np.array([r.grad_norm for r in self.records])

    @property
    def means(self) -> np.ndarray:
        return np.array([r.mean for r in self.records])

    @property
    def vech_chols(self) -> np.ndarray:
        return np.array([r.vech_chol for r in self.records])
