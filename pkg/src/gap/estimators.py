"""Monte Carlo estimates of the projections of ``sqrt p0`` onto the tangent basis.

All expectations are taken under ``q0^2 = N(mu0, Sigma0)`` with the importance ratio
``r(z) = sqrt(p0(z)) / q0(z)``:

    <theta0, sqrt p0> = E[r]
    a_i               = E[r * (1/2 Sigma0^{-1}(z - mu0))_i]
    b_i               = E[r * (W(z) U V)_i]

Ratios are handled in log space and rescaled by their maximum before
exponentiation.  For an unnormalized target every estimate is divided by
``sqrt(Z_hat)`` with ``Z_hat = E[r^2]`` from the same batch.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from gap.core import GaussianModel, TargetDensity, gaussian_log_sqrt_density
from gap.errors import DegenerateWeights, DimensionMismatch
from gap.geometry import DEFAULT_CLAMP, clamp_overlap
from gap.rng import normals
from gap.tangent import TangentGram, cov_features, mean_features

__all__ = [
    "MCEstimates",
    "draw_samples",
    "estimate_a",
    "estimate_all",
    "estimate_b",
    "estimate_normalizer",
    "estimate_overlap",
    "log_weight",
    "project_onto_orthobasis",
]

LOG_TINY = math.log(1e-300)


@dataclass(frozen=True, eq=False)
class MCEstimates:
    a: np.ndarray
    b: np.ndarray
    overlap: float
    overlap_raw: float
    norm_est: Optional[float]
    log_norm_est: Optional[float]
    se_a: np.ndarray
    se_b: np.ndarray
    se_overlap: float
    n_samples: int


def draw_samples(model: GaussianModel, n: int, seed: int, stream: int = 0) -> np.ndarray:
    """``n`` draws from ``N(mu, L L^T)`` as ``mu + L xi``; row ``t`` depends only on
    ``(seed, stream, t)``."""
    if n < 2:
        raise ValueError("need at least two samples")
    xi = normals(seed, stream, (n, model.dim))
    return model.mean + xi @ model.chol.T


def log_weight(model: GaussianModel, target: TargetDensity, z, workers: int = 1) -> np.ndarray:
    """``log sqrt p0(z) - log q0(z)`` for one point or a batch.

    With ``workers > 1`` the target is evaluated on contiguous chunks in a thread
    pool; the result is identical to the single-threaded one.
    """
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != model.dim or target.dim != model.dim:
        raise DimensionMismatch("target, model and points must share one dimension")
    if workers <= 1 or z.ndim == 1 or len(z) < 2 * workers:
        log_p = target.log_sqrt_at(z)
    else:
        chunks = np.array_split(z, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            log_p = np.concatenate(list(pool.map(target.log_sqrt_at, chunks)))
    return log_p - gaussian_log_sqrt_density(model, z)


def _weighted_means(logw: np.ndarray, feats: np.ndarray, self_normalize: bool):
    """Means of ``r * feats`` (divided by ``sqrt(mean r^2)`` when self-normalizing).

    Returns ``(estimate, standard_error, log_Z_hat)``; the standard error of the
    self-normalized ratio comes from the delta method.
    """
    t = logw.size
    top = float(np.max(logw))
    if not np.isfinite(top):
        raise DegenerateWeights("importance log-weights are not finite")
    r = np.exp(logw - top)
    y = r[:, None] * feats
    ybar = y.mean(axis=0)
    r2 = r * r
    zbar = float(r2.mean())
    log_z = 2.0 * top + math.log(zbar)
    if self_normalize:
        root = math.sqrt(zbar)
        est = ybar / root
        infl = (y - ybar) / root - 0.5 * np.outer(r2 - zbar, ybar) / zbar**1.5
        se = infl.std(axis=0, ddof=1) / math.sqrt(t)
        return est, se, log_z
    if top < LOG_TINY:
        raise DegenerateWeights("all importance weights are below 1e-300")
    scale = math.exp(top)
    return ybar * scale, y.std(axis=0, ddof=1) * scale / math.sqrt(t), log_z


def _self_normalize(target: TargetDensity) -> bool:
    return not target.normalized


def estimate_normalizer(model: GaussianModel, target: TargetDensity, samples, workers: int = 1) -> float:
    """``Z_hat``: the mean of ``p0~(z) / q0(z)^2`` over the batch."""
    logw = log_weight(model, target, samples, workers)
    log_z = float(logsumexp(2.0 * logw) - math.log(logw.size))
    if log_z < 2.0 * LOG_TINY:
        raise DegenerateWeights("all importance weights are below 1e-300")
    return math.exp(log_z)


def estimate_overlap(model: GaussianModel, target: TargetDensity, samples,
                     clamp: float = DEFAULT_CLAMP, workers: int = 1) -> tuple[float, float]:
    """``<theta0, sqrt p0>`` (clamped) and its standard error."""
    logw = log_weight(model, target, samples, workers)
    est, se, _ = _weighted_means(logw, np.ones((logw.size, 1)), _self_normalize(target))
    return clamp_overlap(est[0], clamp), float(se[0])


def estimate_a(model: GaussianModel, target: TargetDensity, samples, workers: int = 1):
    """Mean-direction projections ``a`` (length ``D``) and their standard errors."""
    samples = np.atleast_2d(samples)
    logw = log_weight(model, target, samples, workers)
    est, se, _ = _weighted_means(logw, mean_features(model, samples), _self_normalize(target))
    return est, se


def estimate_b(model: GaussianModel, target: TargetDensity, samples, gram: TangentGram, workers: int = 1):
    """Factor-direction projections ``b`` (length ``D(D+1)/2``) and their standard errors."""
    samples = np.atleast_2d(samples)
    logw = log_weight(model, target, samples, workers)
    est, se, _ = _weighted_means(logw, cov_features(model, samples, gram.uv), _self_normalize(target))
    return est, se


def estimate_all(model: GaussianModel, target: TargetDensity, samples, gram: TangentGram,
                 clamp: float = DEFAULT_CLAMP, workers: int = 1) -> MCEstimates:
    """Overlap, ``a`` and ``b`` from one shared batch of samples."""
    samples = np.atleast_2d(samples)
    d = model.dim
    logw = log_weight(model, target, samples, workers)
    feats = np.hstack([
        np.ones((logw.size, 1)),
        mean_features(model, samples),
        cov_features(model, samples, gram.uv),
    ])
    self_norm = _self_normalize(target)
    est, se, log_z = _weighted_means(logw, feats, self_norm)
    return MCEstimates(
        a=est[1:1 + d],
        b=est[1 + d:],
        overlap=clamp_overlap(est[0], clamp),
        overlap_raw=float(est[0]),
        norm_est=math.exp(log_z) if self_norm and log_z < 700 else None,
        log_norm_est=log_z if self_norm else None,
        se_a=se[1:1 + d],
        se_b=se[1 + d:],
        se_overlap=float(se[0]),
        n_samples=int(logw.size),
    )


def project_onto_orthobasis(est: MCEstimates, gram: TangentGram) -> tuple[np.ndarray, np.ndarray]:
    """``<w_j, sqrt p0> = sum_i C[j, i] a_i`` for both blocks."""
    return gram.coeff_mu @ est.a, gram.coeff_l @ est.b
