"""Geometry of the unit sphere of square-root densities.

Densities ``p`` map to ``q = sqrt(p)`` on the unit sphere of L^2.  The great-circle
distance there is ``arccos <q, q'>`` and the overlap ``<q, q'>`` is the
Bhattacharyya coefficient.  Everything 1-D here works on uniform or nonuniform
grids with trapezoid quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gap.core import GaussianModel, ScalarGaussian
from gap.errors import AntipodalOrEqual, DimensionMismatch, GridMismatch

__all__ = [
    "GridDensity",
    "GridFunction",
    "bhattacharyya_overlap_gaussians",
    "clamp_overlap",
    "default_grid",
    "directional_derivative",
    "gaussian_tangent_1d",
    "geodesic_from_velocity",
    "geodesic_point",
    "hellinger_distance",
    "negative_gradient_scale",
    "overlap_quadrature_1d",
    "spherical_fisher_distance",
]

DEFAULT_CLAMP = 1e-9
DEFAULT_NODES = 4001
GEODESIC_GUARD = 1e-9


def _check_grid(grid: np.ndarray) -> None:
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must be a 1-D array with at least two nodes")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A signed function sampled on a grid; used for square-root densities and
    tangent vectors."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        _check_grid(grid)
        if values.shape != grid.shape:
            raise GridMismatch("values and grid differ in length")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def inner(self, other: "GridFunction") -> float:
        _same_grid(self.grid, other.grid)
        return float(np.trapezoid(self.values * other.values, self.grid))

    def norm(self) -> float:
        return math.sqrt(self.inner(self))


@dataclass(frozen=True, eq=False)
class GridDensity:
    """A density ``p`` tabulated on a strictly increasing grid."""

    grid: np.ndarray
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        _check_grid(grid)
        if values.shape != grid.shape:
            raise GridMismatch("values and grid differ in length")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite and nonnegative")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if self.normalized and abs(self.mass() - 1.0) > 1e-4:
            raise ValueError(f"density flagged normalized integrates to {self.mass():.6f}")

    @classmethod
    def from_callable(cls, pdf, grid, normalized: bool = False) -> "GridDensity":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.asarray(pdf(grid), dtype=float), normalized)

    @classmethod
    def gaussian(cls, mean: float, variance: float, grid) -> "GridDensity":
        grid = np.asarray(grid, dtype=float)
        vals = np.exp(-((grid - mean) ** 2) / (2 * variance)) / math.sqrt(2 * math.pi * variance)
        return cls(grid, vals)

    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.grid))

    def sqrt(self) -> GridFunction:
        return GridFunction(self.grid, np.sqrt(self.values))


def _same_grid(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape or not np.array_equal(a, b):
        raise GridMismatch("functions live on different grids")


def default_grid(*models: ScalarGaussian | tuple[float, float], nodes: int = DEFAULT_NODES,
                 width: float = 12.0) -> np.ndarray:
    """Uniform grid covering ``mean +- width * sd`` of every given 1-D Gaussian.

    Models may be :class:`ScalarGaussian` or ``(mean, variance)`` pairs.
    """
    lo, hi = math.inf, -math.inf
    for m in models:
        mean, var = (m.mean, m.variance) if isinstance(m, ScalarGaussian) else m
        sd = math.sqrt(var)
        lo, hi = min(lo, mean - width * sd), max(hi, mean + width * sd)
    return np.linspace(lo, hi, nodes)


def overlap_quadrature_1d(p: GridDensity, p2: GridDensity) -> float:
    """Trapezoid estimate of ``int sqrt(p p2)``."""
    _same_grid(p.grid, p2.grid)
    return float(np.trapezoid(np.sqrt(p.values * p2.values), p.grid))


def clamp_overlap(overlap: float, clamp: float = DEFAULT_CLAMP) -> float:
    return min(max(float(overlap), -1.0 + clamp), 1.0 - clamp)


def spherical_fisher_distance(overlap: float, clamp: float = DEFAULT_CLAMP) -> float:
    """Great-circle distance ``arccos`` of the clamped overlap."""
    return math.acos(clamp_overlap(overlap, clamp))


def hellinger_distance(overlap: float) -> float:
    """``H = sqrt(1 - overlap)``, so that ``arccos(1 - H^2)`` is the spherical distance."""
    return math.sqrt(max(0.0, 1.0 - overlap))


def bhattacharyya_overlap_gaussians(g1: GaussianModel | ScalarGaussian,
                                    g2: GaussianModel | ScalarGaussian) -> float:
    """Closed-form ``int sqrt(p1 p2)`` for two Gaussians."""
    if isinstance(g1, ScalarGaussian):
        g1 = g1.to_model()
    if isinstance(g2, ScalarGaussian):
        g2 = g2.to_model()
    if g1.dim != g2.dim:
        raise DimensionMismatch(f"dimensions differ: {g1.dim} vs {g2.dim}")
    s1, s2 = g1.cov, g2.cov
    sbar = 0.5 * (s1 + s2)
    cbar = np.linalg.cholesky(sbar)
    diff = np.linalg.solve(cbar, g1.mean - g2.mean)
    logdet_bar = 2.0 * np.sum(np.log(np.diag(cbar)))
    log_bc = -0.125 * float(diff @ diff) - 0.5 * (logdet_bar - 0.5 * (g1.log_det_cov + g2.log_det_cov))
    return math.exp(log_bc)


def geodesic_from_velocity(q0: GridFunction, f: GridFunction, t: float) -> GridFunction:
    """``q0 cos t + f sin t`` for a unit tangent ``f`` at ``q0``."""
    _same_grid(q0.grid, f.grid)
    return GridFunction(q0.grid, q0.values * math.cos(t) + f.values * math.sin(t))


def geodesic_point(q: GridFunction, q2: GridFunction, t: float) -> GridFunction:
    """Point at arclength ``t`` on the great circle from ``q`` towards ``q2``.

    Raises:
        AntipodalOrEqual: ``|<q, q2>| >= 1 - 1e-9``.
    """
    c = q.inner(q2)
    if abs(c) >= 1.0 - GEODESIC_GUARD:
        raise AntipodalOrEqual(f"overlap {c:.12f} leaves no canonical direction")
    residual = q2.values - c * q.values
    direction = GridFunction(q.grid, residual)
    direction = GridFunction(q.grid, residual / direction.norm())
    return geodesic_from_velocity(q, direction, t)


def negative_gradient_scale(overlap: float, clamp: float = DEFAULT_CLAMP) -> float:
    """``1 / sqrt(1 - c^2)`` for the clamped overlap ``c``."""
    c = clamp_overlap(overlap, clamp)
    return 1.0 / math.sqrt(1.0 - c * c)


def directional_derivative(overlap: float, tangent_overlap: float, clamp: float = DEFAULT_CLAMP) -> float:
    """Derivative of ``arccos <theta, sqrt p0>`` along a tangent ``theta_dot``.

    Args:
        overlap: ``<theta, sqrt p0>``.
        tangent_overlap: ``<theta_dot, sqrt p0>``.
    """
    return -tangent_overlap * negative_gradient_scale(overlap, clamp)


def gaussian_tangent_1d(model: ScalarGaussian, grid) -> tuple[GridFunction, GridFunction, GridFunction]:
    """``q`` and its derivatives in ``mu`` and ``sigma`` on a grid.

    Returns ``(q, dq/dmu, dq/dsigma)``.
    """
    grid = np.asarray(grid, dtype=float)
    q = np.exp(model.log_sqrt_density(grid))
    u = grid - model.mean
    s = model.sigma
    v_mu = q * u / (2.0 * s * s)
    v_sigma = q * (-0.5 / s + 0.5 * u * u / s**3)
    return GridFunction(grid, q), GridFunction(grid, v_mu), GridFunction(grid, v_sigma)
