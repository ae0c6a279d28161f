"""Target densities: Cauchy, Gaussian mixtures, and the Bayesian logistic-regression
posterior, plus synthetic logistic data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from gap.core import LOG_2PI, GaussianModel, TargetDensity, gaussian_log_sqrt_density
from gap.errors import BadCorrelation, DimensionMismatch, InvalidSpec, NotSPD
from gap.rng import STREAM_DATA_X, STREAM_DATA_Y, normals, uniforms

__all__ = [
    "LogisticDataset",
    "MixtureSpec",
    "gaussian_target",
    "generate_logistic_data",
    "logistic_log_posterior_grad",
    "logistic_posterior_target",
    "mixture_target",
    "softplus",
    "student_t1_target",
]

LOG_PI = math.log(math.pi)
DEFAULT_PRIOR_VAR = 100.0


def softplus(u):
    """``log(1 + exp(u))`` without overflow."""
    u = np.asarray(u, dtype=float)
    return np.maximum(u, 0.0) + np.log1p(np.exp(-np.abs(u)))


def student_t1_target() -> TargetDensity:
    """Standard Cauchy, ``sqrt p0(x) = pi^(-1/2) (1 + x^2)^(-1/2)``."""

    def log_sqrt(z):
        x = np.asarray(z, dtype=float)[..., 0]
        return -0.5 * LOG_PI - 0.5 * np.log1p(x * x)

    return TargetDensity(dim=1, log_sqrt=log_sqrt, normalized=True, name="t1", bounds=(-1e4, 1e4))


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    weights: tuple[float, ...]
    means: tuple[float, ...]
    variances: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        m = tuple(float(v) for v in self.means)
        s = tuple(float(v) for v in self.variances)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", s)
        if not (len(w) == len(m) == len(s) >= 1):
            raise InvalidSpec("weights, means and variances must have the same nonzero length")
        if any(v <= 0 for v in w):
            raise InvalidSpec("mixture weights must be positive")
        if abs(sum(w) - 1.0) > 1e-12:
            raise InvalidSpec(f"mixture weights sum to {sum(w)!r}, not 1")
        if any(not v > 0 for v in s):
            raise InvalidSpec("component variances must be positive")

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for w, m, v in zip(self.weights, self.means, self.variances):
            out += w * np.exp(-((x - m) ** 2) / (2 * v)) / math.sqrt(2 * math.pi * v)
        return out

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "means": list(self.means), "variances": list(self.variances)}


def mixture_target(spec: MixtureSpec) -> TargetDensity:
    """1-D Gaussian mixture; ``log sqrt p0`` is evaluated with log-sum-exp."""
    if not isinstance(spec, MixtureSpec):
        spec = MixtureSpec(**spec)
    log_w = np.log(np.asarray(spec.weights))
    means = np.asarray(spec.means)
    var = np.asarray(spec.variances)

    def log_sqrt(z):
        x = np.asarray(z, dtype=float)[..., 0, None]
        comp = log_w - 0.5 * LOG_2PI - 0.5 * np.log(var) - (x - means) ** 2 / (2 * var)
        return 0.5 * logsumexp(comp, axis=-1)

    sd = np.sqrt(var)
    bounds = (float(np.min(means - 12 * sd)), float(np.max(means + 12 * sd)))
    return TargetDensity(dim=1, log_sqrt=log_sqrt, normalized=True, name="mixture", bounds=bounds)


def gaussian_target(model: GaussianModel, scale: float = 1.0) -> TargetDensity:
    """``scale * q^2`` for a Gaussian ``model``; unnormalized unless ``scale == 1``."""
    half_log_scale = 0.5 * math.log(scale)

    def log_sqrt(z):
        return gaussian_log_sqrt_density(model, z) + half_log_scale

    bounds = None
    if model.dim == 1:
        sd = abs(float(model.chol[0, 0]))
        bounds = (float(model.mean[0]) - 12 * sd, float(model.mean[0]) + 12 * sd)
    return TargetDensity(dim=model.dim, log_sqrt=log_sqrt, normalized=scale == 1.0,
                         log_normalizer=math.log(scale), name="gaussian", bounds=bounds)


@dataclass(frozen=True, eq=False)
class LogisticDataset:
    """Design matrix (first column the intercept), 0/1 labels and a Gaussian prior."""

    X: np.ndarray
    y: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        mu = np.atleast_1d(np.asarray(self.prior_mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.prior_cov, dtype=float))
        d = mu.size
        if X.shape == (1, 0):
            X = np.zeros((0, d))
        if X.shape[1] != d or cov.shape != (d, d):
            raise DimensionMismatch(f"design has {X.shape[1]} columns, prior has dimension {d}")
        if X.shape[0] != y.size:
            raise DimensionMismatch("X and y disagree on the number of observations")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        if not np.allclose(cov, cov.T):
            raise NotSPD("prior covariance is not symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise NotSPD("prior covariance is not positive definite") from exc
        for name, val in (("X", X), ("y", y), ("prior_mean", mu), ("prior_cov", cov)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.prior_mean.size

    def to_csv(self, path: str | Path) -> None:
        """Write ``y,x1,x2,...`` (the intercept column is implied)."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y"] + [f"x{j}" for j in range(1, self.dim)])
            for yi, xi in zip(self.y, self.X):
                w.writerow([int(yi)] + [repr(float(v)) for v in xi[1:]])

    @classmethod
    def from_csv(cls, path: str | Path, prior_mean=None, prior_cov=None) -> "LogisticDataset":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if not header or header[0] != "y":
            raise ValueError("dataset CSV must start with a 'y' column")
        d = len(header)
        data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(-1, d)
        X = np.column_stack([np.ones(len(data)), data[:, 1:]])
        if prior_mean is None:
            prior_mean = np.zeros(d)
        if prior_cov is None:
            prior_cov = DEFAULT_PRIOR_VAR * np.eye(d)
        return cls(X, data[:, 0], prior_mean, prior_cov)


def logistic_posterior_target(data: LogisticDataset) -> TargetDensity:
    """Unnormalized posterior of a Bayesian logistic regression.

    ``log sqrt p0(b) = 1/2 [sum_i (y_i x_i.b - log(1 + exp(x_i.b))) + log N(b; mu*, Sigma*)]``;
    the evidence ``p(y)`` is unknown and left out.
    """
    prior = GaussianModel.from_cov(data.prior_mean, data.prior_cov)
    X, y = data.X, data.y

    def log_sqrt(z):
        b = np.asarray(z, dtype=float)
        eta = b @ X.T
        loglik = np.sum(y * eta - softplus(eta), axis=-1)
        return 0.5 * loglik + gaussian_log_sqrt_density(prior, b)

    return TargetDensity(dim=data.dim, log_sqrt=log_sqrt, normalized=False, name="logistic")


def logistic_log_posterior_grad(data: LogisticDataset, beta) -> np.ndarray:
    """Gradient of ``2 log sqrt p0`` (the unnormalized log posterior) at ``beta``."""
    beta = np.asarray(beta, dtype=float)
    eta = data.X @ beta
    prob = np.exp(-softplus(-eta))
    prior_term = np.linalg.solve(data.prior_cov, data.prior_mean - beta)
    return data.X.T @ (data.y - prob) + prior_term


def generate_logistic_data(n: int, beta, rho: float, seed: int,
                           prior_mean=None, prior_cov=None) -> LogisticDataset:
    """Synthetic data: ``(x1, x2)`` standard bivariate normal with correlation ``rho``,
    ``y ~ Bernoulli(sigmoid(b0 + b1 x1 + b2 x2))``.

    Deterministic in ``seed``; labels use the inverse CDF of a counter-based uniform.
    """
    beta = np.asarray(beta, dtype=float)
    if n < 1:
        raise ValueError("n must be positive")
    if beta.shape != (3,):
        raise DimensionMismatch("beta must have three entries (intercept, x1, x2)")
    if not abs(rho) < 1:
        raise BadCorrelation(f"correlation must lie in (-1, 1), got {rho}")
    z = normals(seed, STREAM_DATA_X, (n, 2))
    x1 = z[:, 0]
    x2 = rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1]
    X = np.column_stack([np.ones(n), x1, x2])
    prob = np.exp(-softplus(-(X @ beta)))
    y = (uniforms(seed, STREAM_DATA_Y, n) < prob).astype(float)
    if prior_mean is None:
        prior_mean = np.zeros(3)
    if prior_cov is None:
        prior_cov = DEFAULT_PRIOR_VAR * np.eye(3)
    return LogisticDataset(X, y, prior_mean, prior_cov)
