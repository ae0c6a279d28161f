"""Gradient descent on the spherical distance between a Gaussian and the target.

Each iteration projects ``sqrt p0`` onto an orthonormal basis ``w`` of the tangent
space at the current Gaussian, divides by ``sqrt(1 - <theta, sqrt p0>^2)`` and
moves every parameter by its own coordinate of that vector times a step size.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from gap.core import (
    DIAG_FLOOR,
    GapTrace,
    GaussianModel,
    OptimizerConfig,
    ScalarGaussian,
    TargetDensity,
    TraceRecord,
)
from gap.errors import GapError, NoConvergence, StepProducedSingularL
from gap.estimators import (
    MCEstimates,
    _weighted_means,
    draw_samples,
    estimate_all,
    log_weight,
    project_onto_orthobasis,
)
from gap.geometry import clamp_overlap
from gap.matops import OperatorMatrices, build_operator_matrices
from gap.rng import normals
from gap.tangent import TangentGram, build_tangent_gram

__all__ = [
    "GapResult",
    "StepResult",
    "StopReason",
    "gap1d_run",
    "gap1d_step",
    "gap_run",
    "gap_step",
    "gradient_scale",
]

log = logging.getLogger(__name__)

MAX_HALVINGS = 5
GRAD_PATIENCE = 3


class StopReason(str, enum.Enum):
    GRAD_TOL = "GradTol"
    DIST_TOL = "DistTol"
    MAX_ITERS = "MaxIters"


@dataclass(frozen=True, eq=False)
class StepResult:
    new_model: GaussianModel
    record: TraceRecord
    proj_mu: np.ndarray
    proj_l: np.ndarray
    scale: float
    se_update: np.ndarray
    estimates: Optional[MCEstimates] = None


@dataclass(frozen=True, eq=False)
class GapResult:
    final_model: GaussianModel
    trace: GapTrace
    converged: bool
    stop_reason: StopReason

    @property
    def scalar(self) -> ScalarGaussian:
        if self.final_model.dim != 1:
            raise ValueError("scalar view needs a 1-D model")
        return ScalarGaussian(self.final_model.mean[0], self.final_model.chol[0, 0])

    def tail_mean(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Average ``(mean, vech(L))`` over the last ``n`` trace records."""
        recs = self.trace.records[-n:]
        return (np.mean([r.mean for r in recs], axis=0), np.mean([r.vech_chol for r in recs], axis=0))


def gradient_scale(overlap: float, proj_norm: float, clamp: float) -> float:
    """Factor turning tangent projections into the negative-gradient vector.

    Nominally ``1 / sqrt(1 - c^2)``.  Since ``sqrt p0`` has unit norm and the tangent
    space is orthogonal to ``theta``, ``|proj|^2 + c^2 <= 1``; Monte Carlo noise can
    break that near an in-family optimum, so the denominator is never allowed
    below ``|proj|`` and the resulting vector never exceeds unit length.
    """
    c = clamp_overlap(overlap, clamp)
    return 1.0 / max(math.sqrt(1.0 - c * c), proj_norm)


def _apply_update(mean: np.ndarray, vech_l: np.ndarray, d_mean: np.ndarray, d_l: np.ndarray,
                  rebuild: Callable[[np.ndarray, np.ndarray], GaussianModel]) -> GaussianModel:
    factor = 1.0
    for _ in range(MAX_HALVINGS + 1):
        try:
            return rebuild(mean + factor * d_mean, vech_l + factor * d_l)
        except GapError:
            factor *= 0.5
    raise StepProducedSingularL(f"update left the factor singular after {MAX_HALVINGS} halvings")


def _diag_ok(model: GaussianModel) -> bool:
    return bool(np.all(np.abs(np.diag(model.chol)) >= DIAG_FLOOR))


def gap_step(model: GaussianModel, target: TargetDensity, gram: TangentGram, config: OptimizerConfig,
             iteration: int) -> StepResult:
    """One descent step from ``model``; samples come from stream ``iteration``.

    The trace record carries the pre-update parameters and distance.
    """
    samples = draw_samples(model, config.mc_samples, config.seed, stream=iteration)
    est = estimate_all(model, target, samples, gram, config.overlap_clamp, config.workers)
    proj_mu, proj_l = project_onto_orthobasis(est, gram)
    norm = math.sqrt(float(proj_mu @ proj_mu + proj_l @ proj_l))
    scale = gradient_scale(est.overlap, norm, config.overlap_clamp)
    step_mu, step_l = config.steps(model.dim)
    d_mean = step_mu * proj_mu * scale
    d_l = step_l * proj_l * scale
    new_model = _apply_update(model.mean, model.vech_chol, d_mean, d_l, GaussianModel.from_vech)
    se_proj = np.concatenate([
        np.sqrt((gram.coeff_mu**2) @ est.se_a**2),
        np.sqrt((gram.coeff_l**2) @ est.se_b**2),
    ])
    record = TraceRecord(
        iter=iteration,
        mean=model.mean.copy(),
        vech_chol=model.vech_chol,
        overlap=est.overlap,
        distance=math.acos(est.overlap),
        grad_norm=norm * scale,
    )
    return StepResult(new_model, record, proj_mu, proj_l, scale,
                      np.concatenate([step_mu, step_l]) * se_proj * scale, est)


class _Stopper:
    """Stopping rules: small gradient on ``GRAD_PATIENCE`` consecutive iterations,
    distance below ``dist_tol``, or window-averaged distance changing by less than
    ``dist_tol`` between two consecutive windows."""

    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.small_grad = 0
        self.distances: list[float] = []

    def before_update(self, record: TraceRecord) -> Optional[StopReason]:
        if not self.config.early_stop:
            return None
        if record.distance < self.config.dist_tol:
            return StopReason.DIST_TOL
        return None

    def after_update(self, record: TraceRecord) -> Optional[StopReason]:
        self.distances.append(record.distance)
        if not self.config.early_stop:
            return None
        self.small_grad = self.small_grad + 1 if record.grad_norm < self.config.grad_tol else 0
        if self.small_grad >= GRAD_PATIENCE:
            return StopReason.GRAD_TOL
        w = self.config.window
        if len(self.distances) >= 2 * w:
            recent = np.mean(self.distances[-w:])
            previous = np.mean(self.distances[-2 * w:-w])
            if abs(recent - previous) < self.config.dist_tol:
                return StopReason.DIST_TOL
        return None


def _run(init_model: GaussianModel, step_fn, config: OptimizerConfig,
         callback: Optional[Callable[[StepResult], None]]) -> GapResult:
    model = init_model
    records: list[TraceRecord] = []
    stopper = _Stopper(config)
    reason = StopReason.MAX_ITERS
    for it in range(config.max_iters):
        try:
            step = step_fn(model, it)
        except GapError as exc:
            partial = GapResult(model, GapTrace(tuple(records)), False, StopReason.MAX_ITERS)
            raise NoConvergence(f"iteration {it}: {exc}", partial=partial) from exc
        records.append(step.record)
        if callback is not None:
            callback(step)
        stop = stopper.before_update(step.record)
        if stop is not None:
            reason = stop
            break
        model = step.new_model
        stop = stopper.after_update(step.record)
        if stop is not None:
            reason = stop
            break
    log.debug("stopped after %d iterations: %s", len(records), reason.value)
    return GapResult(model, GapTrace(tuple(records)), reason is not StopReason.MAX_ITERS, reason)


def gap_run(init: GaussianModel, target: TargetDensity, config: OptimizerConfig,
            callback: Optional[Callable[[StepResult], None]] = None,
            ops: OperatorMatrices | None = None) -> GapResult:
    """Iterate :func:`gap_step` from ``init`` until a stopping rule fires.

    Raises:
        NoConvergence: a step failed; the exception's ``partial`` attribute holds
            the result up to the failing iteration.
    """
    ops = ops or build_operator_matrices(init.dim)

    def step_fn(model, it):
        return gap_step(model, target, build_tangent_gram(model, ops, basis=config.basis), config, it)

    return _run(init, step_fn, config, callback)


def _scalar_c_moments(model: ScalarGaussian, target: TargetDensity, x: np.ndarray, workers: int):
    """``c1, c2, c3``: weighted moments ``E[(x - mu)^k r] / kappa`` for ``k = 2, 1, 0``,
    with ``kappa = (pi / (2 sigma^2))^(-1/4)``, plus their standard errors."""
    gm = model.to_model()
    logw = log_weight(gm, target, x[:, None], workers)
    u = x - model.mean
    feats = np.column_stack([u * u, u, np.ones_like(u)])
    est, se, _ = _weighted_means(logw, feats, not target.normalized)
    kappa = (math.pi / (2.0 * model.variance)) ** -0.25
    return est / kappa, se / kappa, kappa


def gap1d_step(model: ScalarGaussian, target: TargetDensity, config: OptimizerConfig,
               iteration: int) -> tuple[ScalarGaussian, TraceRecord, dict]:
    """One update of ``(mu, sigma)`` using the closed-form 1-D orthonormal basis
    ``w_mu = q (x - mu) / |sigma|``, ``w_sigma = sign(sigma) q (((x - mu)/sigma)^2 - 1) / sqrt 2``."""
    if target.dim != 1:
        raise ValueError("gap1d needs a 1-D target")
    xi = normals(config.seed, iteration, (config.mc_samples, 1))[:, 0]
    x = model.mean + model.sigma * xi
    (c1, c2, c3), _, kappa = _scalar_c_moments(model, target, x, config.workers)
    var = model.variance
    root2 = math.sqrt(2.0)
    proj_mu = kappa * c2 / math.sqrt(var)
    proj_sigma = math.copysign(1.0, model.sigma) * kappa * (root2 * c1 / (2.0 * var) - root2 * c3 / 2.0)
    overlap = clamp_overlap(kappa * c3, config.overlap_clamp)
    norm = math.hypot(proj_mu, proj_sigma)
    scale = gradient_scale(overlap, norm, config.overlap_clamp)
    step_mu, step_l = config.steps(1)

    def rebuild(mean, sig):
        return GaussianModel(mean, sig.reshape(1, 1))

    new = _apply_update(np.array([model.mean]), np.array([model.sigma]),
                        step_mu * proj_mu * scale, step_l * proj_sigma * scale, rebuild)
    record = TraceRecord(
        iter=iteration,
        mean=np.array([model.mean]),
        vech_chol=np.array([model.sigma]),
        overlap=overlap,
        distance=math.acos(overlap),
        grad_norm=norm * scale,
    )
    info = {"c": (c1, c2, c3), "kappa": kappa, "proj": (proj_mu, proj_sigma), "scale": scale}
    return ScalarGaussian(new.mean[0], new.chol[0, 0]), record, info


def gap1d_run(init: ScalarGaussian, target: TargetDensity, config: OptimizerConfig,
              callback: Optional[Callable[[StepResult], None]] = None) -> GapResult:
    """1-D variant updating ``(mu, sigma)`` directly."""

    def step_fn(model: GaussianModel, it: int) -> StepResult:
        scalar = ScalarGaussian(model.mean[0], model.chol[0, 0])
        new, record, info = gap1d_step(scalar, target, config, it)
        return StepResult(new.to_model(), record, np.array([info["proj"][0]]),
                          np.array([info["proj"][1]]), info["scale"], np.zeros(2))

    return _run(init.to_model(), step_fn, config, callback)
