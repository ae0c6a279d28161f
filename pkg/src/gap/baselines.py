"""Comparison methods: the Laplace approximation and 1-D divergence minimizers.

Divergences follow the convention ``D(p || p')`` with ``p`` the target and ``p'``
the Gaussian approximation.  The alpha family

    D_alpha(p || p') = int alpha p + (1 - alpha) p' - p^alpha p'^(1 - alpha) dx / (alpha (1 - alpha))

tends to ``KL(p' || p)`` as ``alpha -> 0`` and to ``KL(p || p')`` as ``alpha -> 1``;
``D_0.5 = 4 H^2``.  All integrals are trapezoid quadrature on a grid adapted to
both the target and the current Gaussian.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from gap.core import GaussianModel, ScalarGaussian, TargetDensity
from gap.errors import DimensionMismatch, GridMismatch, IndefiniteHessian, NoConvergence
from gap.geometry import GridDensity

__all__ = [
    "DivergenceKind",
    "alpha_divergence_1d",
    "divergence_1d",
    "divergence_to_target",
    "fd_gradient",
    "fd_hessian",
    "kl_divergence_1d",
    "laplace_approx",
    "minimize_divergence_1d",
    "quadrature_grid",
]

FD_REL_STEP = 1e-5
GRAD_TOL = 1e-6
NM_MAX_EVALS = 2000
NM_DIAMETER_TOL = 1e-6
GRID_NODES = 4001
GRID_WIDTH = 12.0


class _Kind(str, enum.Enum):
    ALPHA = "alpha"
    KL = "kl"
    REVERSE_KL = "reverse_kl"
    HELLINGER = "hellinger"


@dataclass(frozen=True)
class DivergenceKind:
    """Which divergence to minimize.

    ``KL`` is ``KL(p' || p)`` (approximation first, zero-forcing) and
    ``REVERSE_KL`` is ``KL(p || p')`` (target first, mass-covering).  Use the
    constructors rather than building instances by hand.
    """

    kind: _Kind
    alpha: float | None = None

    Kind = _Kind

    def __post_init__(self):
        object.__setattr__(self, "kind", _Kind(self.kind))
        if self.kind is _Kind.ALPHA:
            if self.alpha is None or not math.isfinite(self.alpha):
                raise ValueError("alpha divergence needs a finite alpha")
            if self.alpha in (0.0, 1.0):
                raise ValueError("alpha in {0, 1} is a KL limit; use DivergenceKind.kl or reverse_kl")
        elif self.alpha is not None:
            raise ValueError(f"{self.kind.value} takes no alpha")

    @classmethod
    def alpha_div(cls, alpha: float) -> "DivergenceKind":
        return cls(_Kind.ALPHA, float(alpha))

    @classmethod
    def kl(cls) -> "DivergenceKind":
        return cls(_Kind.KL)

    @classmethod
    def reverse_kl(cls) -> "DivergenceKind":
        return cls(_Kind.REVERSE_KL)

    @classmethod
    def hellinger(cls) -> "DivergenceKind":
        return cls(_Kind.HELLINGER)

    @property
    def name(self) -> str:
        if self.kind is _Kind.ALPHA:
            return f"alpha_{self.alpha:g}"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "DivergenceKind":
        """Inverse of :attr:`name`: ``"kl"``, ``"reverse_kl"``, ``"hellinger"`` or ``"alpha_<a>"``."""
        text = text.strip().lower()
        if text.startswith("alpha_"):
            return cls.alpha_div(float(text[len("alpha_"):]))
        return cls(_Kind(text))


# --- divergences on grids ---------------------------------------------------------


def _logs(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(values)


def _check_pair(p: GridDensity, p2: GridDensity) -> None:
    if p.grid.shape != p2.grid.shape or not np.array_equal(p.grid, p2.grid):
        raise GridMismatch("densities live on different grids")


def _kl_from_logs(grid, log_a, log_b) -> float:
    """``int a log(a / b)`` with ``0 log 0 = 0``; infinite where ``a > 0 = b``."""
    a = np.exp(log_a)
    live = a > 0
    if np.any(live & np.isneginf(log_b)):
        return math.inf
    integrand = np.where(live, a * (log_a - np.where(live, log_b, 0.0)), 0.0)
    return float(np.trapezoid(integrand, grid))


def _alpha_from_logs(grid, log_p, log_q, alpha: float) -> float:
    p, q = np.exp(log_p), np.exp(log_q)
    with np.errstate(invalid="ignore"):
        cross = np.exp(alpha * log_p + (1.0 - alpha) * log_q)
    cross = np.where(np.isnan(cross), 0.0, cross)
    integrand = alpha * p + (1.0 - alpha) * q - cross
    return float(np.trapezoid(integrand, grid)) / (alpha * (1.0 - alpha))


def _hellinger_sq_from_logs(grid, log_p, log_q) -> float:
    return 1.0 - float(np.trapezoid(np.exp(0.5 * (log_p + log_q)), grid))


def kl_divergence_1d(p: GridDensity, p2: GridDensity) -> float:
    """``KL(p || p2)`` by trapezoid quadrature."""
    _check_pair(p, p2)
    return _kl_from_logs(p.grid, _logs(p.values), _logs(p2.values))


def alpha_divergence_1d(p: GridDensity, p2: GridDensity, alpha: float) -> float:
    """``D_alpha(p || p2)`` by trapezoid quadrature.

    Raises:
        ValueError: ``alpha`` is 0 or 1; use :func:`kl_divergence_1d` for those limits.
        GridMismatch: the densities live on different grids.
    """
    if alpha in (0.0, 1.0):
        raise ValueError("alpha in {0, 1} is a KL limit; use kl_divergence_1d")
    _check_pair(p, p2)
    return _alpha_from_logs(p.grid, _logs(p.values), _logs(p2.values), alpha)


def _divergence_from_logs(grid, log_p, log_q, kind: DivergenceKind) -> float:
    if kind.kind is _Kind.HELLINGER:
        return _hellinger_sq_from_logs(grid, log_p, log_q)
    if kind.kind is _Kind.KL:
        return _kl_from_logs(grid, log_q, log_p)
    if kind.kind is _Kind.REVERSE_KL:
        return _kl_from_logs(grid, log_p, log_q)
    return _alpha_from_logs(grid, log_p, log_q, kind.alpha)


def divergence_1d(p: GridDensity, p2: GridDensity, kind: DivergenceKind) -> float:
    """``D(p || p2)`` for any :class:`DivergenceKind`; Hellinger returns ``H^2``."""
    _check_pair(p, p2)
    return _divergence_from_logs(p.grid, _logs(p.values), _logs(p2.values), kind)


# --- quadrature against a target -------------------------------------------------


def quadrature_grid(target: TargetDensity, model: ScalarGaussian, nodes: int = GRID_NODES,
                    width: float = GRID_WIDTH) -> np.ndarray:
    """Nonuniform grid covering the target's bounds and ``mean +- width * sd``.

    Combines a uniform grid over the Gaussian's bulk, a uniform grid over the
    target's bounds when they are moderate, and ``sinh``-spaced nodes centered on
    the Gaussian that stretch out to the full range (for heavy tails).
    """
    sd = abs(model.sigma)
    mlo, mhi = model.mean - width * sd, model.mean + width * sd
    lo, hi = mlo, mhi
    parts = [np.linspace(mlo, mhi, nodes)]
    if target.bounds is not None:
        tlo, thi = target.bounds
        lo, hi = min(lo, tlo), max(hi, thi)
        if thi - tlo <= 1e3 * max(sd, 1.0):
            parts.append(np.linspace(tlo, thi, nodes))
    u = np.linspace(np.arcsinh((lo - model.mean) / sd), np.arcsinh((hi - model.mean) / sd), nodes)
    parts.append(model.mean + sd * np.sinh(u))
    grid = np.unique(np.concatenate(parts))
    return grid[(grid >= lo) & (grid <= hi)]


def _target_logs(target: TargetDensity, grid: np.ndarray) -> np.ndarray:
    logp = 2.0 * target.log_sqrt_at(grid[:, None])
    if target.normalized:
        return logp
    if target.log_normalizer is not None:
        return logp - target.log_normalizer
    top = float(np.max(logp))
    return logp - top - math.log(float(np.trapezoid(np.exp(logp - top), grid)))


def divergence_to_target(target: TargetDensity, model: ScalarGaussian, kind: DivergenceKind,
                         nodes: int = GRID_NODES) -> float:
    """``D(p0 || N(mean, sigma^2))`` by quadrature on :func:`quadrature_grid`."""
    if target.dim != 1:
        raise DimensionMismatch("divergence_to_target needs a 1-D target")
    grid = quadrature_grid(target, model, nodes)
    log_q = 2.0 * model.log_sqrt_density(grid)
    return _divergence_from_logs(grid, _target_logs(target, grid), log_q, kind)


def minimize_divergence_1d(target: TargetDensity, kind: DivergenceKind, init: ScalarGaussian,
                           nodes: int = GRID_NODES) -> ScalarGaussian:
    """Gaussian minimizing ``D(p0 || N(mu, sigma^2))`` over ``(mu, log sigma)``.

    Nelder-Mead from ``init``; the quadrature grid follows the current iterate.
    The returned ``sigma`` is positive.

    Raises:
        NoConvergence: the simplex is still wider than 1e-6 after 2000 evaluations.
    """
    if target.dim != 1:
        raise DimensionMismatch("minimize_divergence_1d needs a 1-D target")

    def objective(x):
        if not (abs(x[1]) < 50):
            return math.inf
        value = divergence_to_target(target, ScalarGaussian(x[0], math.exp(x[1])), kind, nodes)
        return value if math.isfinite(value) else math.inf

    x0 = np.array([init.mean, math.log(abs(init.sigma))])
    res = minimize(objective, x0, method="Nelder-Mead",
                   options={"xatol": 1e-9, "fatol": 1e-14, "maxfev": NM_MAX_EVALS})
    simplex = res.final_simplex[0]
    diameter = max(np.linalg.norm(a - b) for a in simplex for b in simplex)
    if diameter > NM_DIAMETER_TOL:
        raise NoConvergence(f"simplex diameter {diameter:.3g} after {res.nfev} evaluations")
    return ScalarGaussian(res.x[0], math.exp(res.x[1]))


# --- Laplace ---------------------------------------------------------------------


def _steps(x: np.ndarray) -> np.ndarray:
    return FD_REL_STEP * (1.0 + np.abs(x))


def fd_gradient(f: Callable[[np.ndarray], float], x) -> np.ndarray:
    """Central-difference gradient with step ``1e-5 (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    h = _steps(x)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h[i])
    return g


def fd_hessian(f: Callable[[np.ndarray], float], x) -> np.ndarray:
    """Central-difference Hessian with step ``1e-5 (1 + |x_i|)``, symmetrized."""
    x = np.asarray(x, dtype=float)
    h = _steps(x)
    n = x.size
    f0 = f(x)
    hess = np.empty((n, n))
    basis = np.diag(h)
    for i in range(n):
        ei = basis[i]
        hess[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / (h[i] * h[i])
        for j in range(i):
            ej = basis[j]
            hess[i, j] = hess[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * h[i] * h[j])
    return hess


def laplace_approx(target: TargetDensity, init, max_newton: int = 100) -> GaussianModel:
    """Gaussian at the mode of ``p0`` with covariance ``(-grad^2 log p0)^{-1}``.

    The mode is found by damped Newton on ``-log p0 = -2 log sqrt p0`` with
    finite-difference derivatives and a backtracking line search.

    Raises:
        NoConvergence: the gradient norm is still above 1e-6 after ``max_newton`` steps.
        IndefiniteHessian: the negative log-density is not convex at the mode.
    """
    x = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    if x.size != target.dim:
        raise DimensionMismatch(f"init has dimension {x.size}, target has {target.dim}")

    def f(z):
        return -2.0 * float(target.log_sqrt_at(z))

    fx = f(x)
    g = fd_gradient(f, x)
    for _ in range(max_newton):
        if np.linalg.norm(g) < GRAD_TOL:
            break
        hess = fd_hessian(f, x)
        evals, evecs = np.linalg.eigh(hess)
        # Levenberg-style floor keeps the direction a descent direction.
        evals = np.maximum(evals, max(1e-8, 1e-6 * float(np.max(np.abs(evals)))))
        direction = -evecs @ ((evecs.T @ g) / evals)
        slope = float(g @ direction)
        t = 1.0
        slack = 1e-12 * (1.0 + abs(fx))
        while t > 1e-12:
            f_new = f(x + t * direction)
            if f_new <= fx + 1e-4 * t * slope + slack:
                break
            t *= 0.5
        x = x + t * direction
        fx = f(x)
        g = fd_gradient(f, x)
    if np.linalg.norm(g) >= GRAD_TOL:
        raise NoConvergence(f"gradient norm {np.linalg.norm(g):.3g} after {max_newton} Newton steps")
    hess = fd_hessian(f, x)
    if np.min(np.linalg.eigvalsh(hess)) <= 0:
        raise IndefiniteHessian("log density is not locally concave at the mode")
    return GaussianModel.from_cov(x, np.linalg.inv(hess))
