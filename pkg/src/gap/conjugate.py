"""Normal-Gamma analytic ground truth.

For ``x_i ~ N(mu, 1/tau)`` with prior ``mu | tau ~ N(mu0, 1/(lambda0 tau))``,
``tau ~ Gamma(alpha0, beta0)`` and a Normal-Gamma candidate
``(mu_N, lambda_N, alpha_N, beta_N)``, the overlap ``int sqrt(p p')`` is proportional
to ``g(mu_N, lambda_N, alpha_N, beta_N)``.  Maximizing ``log g`` recovers the
conjugate posterior, which makes it an exact check on overlap-based fitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln, psi

from gap.errors import DomainError

__all__ = [
    "GaussianDataSummary",
    "NormalGammaParams",
    "digamma",
    "ng_log_g",
    "ng_maximize_log_g",
    "ng_posterior",
    "ng_star_params",
    "ng_stationarity_residuals",
]


@dataclass(frozen=True)
class NormalGammaParams:
    mu: float
    lam: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("mu", "lam", "alpha", "beta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.lam > 0 and self.alpha > 0 and self.beta > 0):
            raise DomainError(f"lambda, alpha and beta must be positive: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.lam, self.alpha, self.beta])

    def to_dict(self) -> dict:
        return {"mu": self.mu, "lambda": self.lam, "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class GaussianDataSummary:
    """Sufficient statistics: count, sample mean and ``S = sum (x_i - xbar)^2``."""

    n: int
    xbar: float
    s: float

    def __post_init__(self):
        if self.n < 0 or self.s < 0:
            raise DomainError("n and S must be nonnegative")
        if self.n <= 1 and self.s != 0:
            raise DomainError("S must be zero with fewer than two observations")

    @classmethod
    def from_data(cls, x) -> "GaussianDataSummary":
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size == 0:
            return cls(0, 0.0, 0.0)
        xbar = float(x.mean())
        return cls(x.size, xbar, float(np.sum((x - xbar) ** 2)))


def digamma(x):
    return psi(x)


def ng_posterior(prior: NormalGammaParams, data: GaussianDataSummary) -> NormalGammaParams:
    n, xbar, s = data.n, data.xbar, data.s
    lam0 = prior.lam
    return NormalGammaParams(
        mu=(n * xbar + lam0 * prior.mu) / (n + lam0),
        lam=lam0 + n,
        alpha=prior.alpha + n / 2.0,
        beta=prior.beta + s / 2.0 + n * lam0 * (xbar - prior.mu) ** 2 / (2.0 * (n + lam0)),
    )


def ng_star_params(prior: NormalGammaParams, cand: NormalGammaParams,
                   data: GaussianDataSummary) -> NormalGammaParams:
    """Parameters of the Normal-Gamma density proportional to ``sqrt(p p')``."""
    n, xbar, s = data.n, data.xbar, data.s
    lam0, lamn = prior.lam, cand.lam
    k = n + lam0 + lamn
    quad = (n * lam0 * (xbar - prior.mu) ** 2
            + n * lamn * (xbar - cand.mu) ** 2
            + lam0 * lamn * (prior.mu - cand.mu) ** 2)
    return NormalGammaParams(
        mu=(n * xbar + lam0 * prior.mu + lamn * cand.mu) / k,
        lam=k / 2.0,
        alpha=n / 4.0 + (prior.alpha + cand.alpha) / 2.0,
        beta=s / 4.0 + (prior.beta + cand.beta) / 2.0 + quad / (4.0 * k),
    )


def ng_log_g(prior: NormalGammaParams, cand: NormalGammaParams, data: GaussianDataSummary) -> float:
    """``log g``: the candidate-dependent part of the log overlap with the posterior."""
    st = ng_star_params(prior, cand, data)
    return float(
        0.5 * cand.alpha * math.log(cand.beta)
        - 0.5 * gammaln(cand.alpha)
        + 0.25 * math.log(cand.lam)
        + gammaln(st.alpha)
        - st.alpha * math.log(st.beta)
        - 0.5 * math.log(st.lam)
    )


def ng_stationarity_residuals(prior: NormalGammaParams, cand: NormalGammaParams,
                              data: GaussianDataSummary) -> np.ndarray:
    """Partial derivatives of ``log g`` in ``(mu_N, lambda_N, alpha_N, beta_N)``."""
    n, xbar = data.n, data.xbar
    lam0, mu0 = prior.lam, prior.mu
    st = ng_star_params(prior, cand, data)
    k = n + lam0 + cand.lam
    dbeta_dmu = (cand.lam * cand.mu * (n + lam0) - cand.lam * (n * xbar + lam0 * mu0)) / (2.0 * k)
    dbeta_dlam = (n * (cand.mu - xbar) + lam0 * (cand.mu - mu0)) ** 2 / (4.0 * k * k)
    ratio = st.alpha / st.beta
    return np.array([
        -ratio * dbeta_dmu,
        0.25 / cand.lam - 0.25 / st.lam - ratio * dbeta_dlam,
        0.5 * (math.log(cand.beta) - math.log(st.beta)) - 0.5 * (digamma(cand.alpha) - digamma(st.alpha)),
        0.5 * (cand.alpha / cand.beta - st.alpha / st.beta),
    ])


def _log_g_raw(prior: NormalGammaParams, data: GaussianDataSummary,
               mu: float, lam: float, alpha: float, beta: float) -> float:
    # Float-only twin of ng_log_g for the optimizer's inner loop.
    n, xbar, s = data.n, data.xbar, data.s
    k = n + prior.lam + lam
    quad = (n * prior.lam * (xbar - prior.mu) ** 2 + n * lam * (xbar - mu) ** 2
            + prior.lam * lam * (prior.mu - mu) ** 2)
    a_st = n / 4.0 + (prior.alpha + alpha) / 2.0
    b_st = s / 4.0 + (prior.beta + beta) / 2.0 + quad / (4.0 * k)
    return (0.5 * alpha * math.log(beta) - 0.5 * math.lgamma(alpha) + 0.25 * math.log(lam)
            + math.lgamma(a_st) - a_st * math.log(b_st) - 0.5 * math.log(k / 2.0))


def _unpack(x: np.ndarray) -> NormalGammaParams:
    return NormalGammaParams(x[0], math.exp(x[1]), math.exp(x[2]), math.exp(x[3]))


def ng_maximize_log_g(prior: NormalGammaParams, data: GaussianDataSummary,
                      start: NormalGammaParams | None = None, restarts: int = 2) -> NormalGammaParams:
    """Maximize ``log g`` with Nelder-Mead over ``(mu, log lambda, log alpha, log beta)``.

    Each restart begins from the previous optimum with a fresh simplex.
    """
    start = start or prior
    x = np.array([start.mu, math.log(start.lam), math.log(start.alpha), math.log(start.beta)])

    def objective(v):
        if abs(v[1]) > 700 or abs(v[2]) > 700 or abs(v[3]) > 700:
            return math.inf
        return -_log_g_raw(prior, data, float(v[0]), math.exp(v[1]), math.exp(v[2]), math.exp(v[3]))

    for _ in range(restarts):
        res = minimize(objective, x, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxfev": 4000, "adaptive": True})
        x = res.x
    return _unpack(x)
