import dataclasses
import math

import numpy as np
import pytest

from gap.core import GaussianModel, OptimizerConfig, ScalarGaussian, TargetDensity
from gap.errors import NoConvergence, StepProducedSingularL
from gap.optimizer import (
    GapResult,
    StopReason,
    _apply_update,
    gap1d_run,
    gap1d_step,
    gap_run,
    gap_step,
    gradient_scale,
)
from gap.targets import gaussian_target, student_t1_target
from gap.tangent import build_tangent_gram

FAST = OptimizerConfig(step_mu=0.1, step_l=0.1, mc_samples=2000, max_iters=400, early_stop=False, seed=1)


class TestGradientScale:
    def test_nominal(self):
        assert gradient_scale(0.6, 0.1, 1e-9) == pytest.approx(1.25)

    def test_capped_by_projection_norm(self):
        assert gradient_scale(0.999, 0.5, 1e-9) == pytest.approx(2.0)

    def test_overlap_one_is_clamped(self):
        assert math.isfinite(gradient_scale(1.0, 0.0, 1e-9))


class TestApplyUpdate:
    def test_halves_until_valid(self):
        calls = []

        def rebuild(mean, l):
            calls.append(l[0])
            return GaussianModel(mean, l.reshape(1, 1))

        new = _apply_update(np.zeros(1), np.array([1.0]), np.zeros(1), np.array([-1.0]), rebuild)
        assert calls == [0.0, 0.5]
        assert new.chol[0, 0] == 0.5

    def test_gives_up(self):
        with pytest.raises(StepProducedSingularL):
            _apply_update(np.zeros(1), np.array([1.0]), np.zeros(1), np.array([-1.0]),
                          lambda m, l: GaussianModel(m, np.zeros((1, 1))))


class TestSingleStep:
    def test_t1_first_step_direction(self):
        cfg = OptimizerConfig(step_mu=0.1, step_l=5.0, mc_samples=10_000)
        new, record, info = gap1d_step(ScalarGaussian(10.0, 5.0), student_t1_target(), cfg, 0)
        assert new.mean < 10.0
        assert new.sigma > 5.0
        assert record.mean[0] == 10.0 and record.vech_chol[0] == 5.0
        assert 0 < record.overlap < 1

    def test_general_and_scalar_paths_agree(self):
        t = student_t1_target()
        cfg = OptimizerConfig(step_mu=0.1, step_l=5.0, mc_samples=5000, seed=3)
        model = GaussianModel([4.0], [[2.0]])
        step = gap_step(model, t, build_tangent_gram(model), cfg, 7)
        new, record, _ = gap1d_step(ScalarGaussian(4.0, 2.0), t, cfg, 7)
        assert step.new_model.mean[0] == pytest.approx(new.mean, rel=1e-10)
        assert step.new_model.chol[0, 0] == pytest.approx(new.sigma, rel=1e-10)
        assert step.record.overlap == pytest.approx(record.overlap, rel=1e-12)

    def test_update_vector_bounded_by_step(self, rng):
        model = GaussianModel.standard(2)
        t = gaussian_target(GaussianModel([5.0, -5.0], np.eye(2) * 0.5))
        step = gap_step(model, t, build_tangent_gram(model), FAST, 0)
        assert step.record.grad_norm <= 1.0 + 1e-12
        delta = np.concatenate([step.new_model.mean - model.mean, step.new_model.vech_chol - model.vech_chol])
        assert np.linalg.norm(delta) <= 0.1 + 1e-12


class TestConvergence:
    def test_recovers_gaussian_target_1d(self):
        t = gaussian_target(GaussianModel([3.0], [[math.sqrt(2.0)]]))
        mean, l = gap_run(GaussianModel([0.0], [[1.0]]), t, FAST).tail_mean(100)
        assert mean[0] == pytest.approx(3.0, abs=0.05)
        assert l[0] ** 2 == pytest.approx(2.0, abs=0.1)

    def test_scalar_path_matches_general_path(self):
        t = gaussian_target(GaussianModel([3.0], [[math.sqrt(2.0)]]))
        a = gap_run(GaussianModel([0.0], [[1.0]]), t, dataclasses.replace(FAST, max_iters=50))
        b = gap1d_run(ScalarGaussian(0.0, 1.0), t, dataclasses.replace(FAST, max_iters=50))
        np.testing.assert_allclose(a.trace.means, b.trace.means, rtol=1e-9)
        np.testing.assert_allclose(a.trace.vech_chols, b.trace.vech_chols, rtol=1e-9)

    @pytest.mark.parametrize("basis", ["symmetrized", "chain"])
    def test_recovers_unnormalized_gaussian_2d(self, basis):
        truth = GaussianModel([1.0, -1.0], [[1.0, 0.0], [0.5, 0.8]])
        res = gap_run(GaussianModel.standard(2), gaussian_target(truth, scale=5.0),
                      dataclasses.replace(FAST, basis=basis))
        mean, l = res.tail_mean(100)
        np.testing.assert_allclose(mean, truth.mean, atol=0.05)
        np.testing.assert_allclose(l, truth.vech_chol, atol=0.05)

    def test_distance_decreases(self):
        res = gap1d_run(ScalarGaussian(10.0, 5.0), student_t1_target(),
                        OptimizerConfig(step_mu=0.1, step_l=5.0, mc_samples=2000, max_iters=300, early_stop=False))
        d = res.trace.distances
        assert d[-50:].mean() < d[0] - 0.5


class TestStopping:
    def test_max_iters_without_early_stop(self):
        res = gap1d_run(ScalarGaussian(0.0, 1.0), student_t1_target(), dataclasses.replace(FAST, max_iters=30))
        assert len(res.trace) == 30
        assert res.stop_reason is StopReason.MAX_ITERS and not res.converged

    def test_stops_at_exact_fit(self):
        truth = GaussianModel([0.5], [[1.2]])
        cfg = dataclasses.replace(FAST, early_stop=True)
        res = gap_run(truth, gaussian_target(truth), cfg)
        assert res.converged and res.stop_reason is StopReason.DIST_TOL
        assert len(res.trace) == 1
        assert res.final_model is truth

    def test_distance_plateau(self):
        t = gaussian_target(GaussianModel([0.3], [[1.0]]))
        cfg = OptimizerConfig(step_mu=0.02, step_l=0.02, mc_samples=20_000, max_iters=1000, window=10, dist_tol=1e-3)
        res = gap_run(GaussianModel([0.0], [[1.0]]), t, cfg)
        assert res.converged and len(res.trace) < 1000

    def test_deterministic(self):
        t = student_t1_target()
        cfg = dataclasses.replace(FAST, max_iters=20)
        a = gap1d_run(ScalarGaussian(2.0, 1.0), t, cfg)
        b = gap1d_run(ScalarGaussian(2.0, 1.0), t, dataclasses.replace(cfg, workers=3))
        np.testing.assert_array_equal(a.trace.means, b.trace.means)
        np.testing.assert_array_equal(a.trace.distances, b.trace.distances)

    def test_callback_sees_every_step(self):
        seen = []
        gap1d_run(ScalarGaussian(0.0, 1.0), student_t1_target(), dataclasses.replace(FAST, max_iters=5),
                  callback=lambda s: seen.append(s.record.iter))
        assert seen == [0, 1, 2, 3, 4]


class TestFailure:
    def test_partial_result_on_failure(self):
        calls = {"n": 0}

        def log_sqrt(z):
            calls["n"] += 1
            out = -0.5 * np.sum(z * z, axis=-1) / 2
            return out if calls["n"] <= 3 else np.full(out.shape, -np.inf)

        t = TargetDensity(dim=1, log_sqrt=log_sqrt)
        with pytest.raises(NoConvergence) as info:
            gap_run(GaussianModel([1.0], [[1.0]]), t, FAST)
        partial = info.value.partial
        assert isinstance(partial, GapResult)
        assert len(partial.trace) == 3
        assert not partial.converged
