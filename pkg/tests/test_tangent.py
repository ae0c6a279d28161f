import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gap.core import GaussianModel, gaussian_log_sqrt_density
from gap.errors import RankDeficient
from gap.matops import build_operator_matrices, unvech, vec
from gap.tangent import (
    build_tangent_gram,
    build_uv,
    cov_features,
    expected_wtw,
    gram_cov_block,
    gram_mean_block,
    mean_features,
)

from conftest import random_model


def fd_features(model, z, h=1e-6):
    """Central differences of ``q(z) / q(z)`` in ``(mu, vech L)``: exact ``d log q``."""
    theta = np.concatenate([model.mean, model.vech_chol])
    d = model.dim
    cols = []
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        plus = GaussianModel.from_vech((theta + e)[:d], (theta + e)[d:])
        minus = GaussianModel.from_vech((theta - e)[:d], (theta - e)[d:])
        cols.append((gaussian_log_sqrt_density(plus, z) - gaussian_log_sqrt_density(minus, z)) / (2 * h))
    return np.column_stack(cols)


class TestClosedForms:
    def test_mean_block(self, rng):
        m = random_model(rng, 3)
        np.testing.assert_allclose(gram_mean_block(m), 0.25 * np.linalg.inv(m.cov), rtol=1e-10)

    def test_one_dimensional_blocks(self):
        m = GaussianModel([0.4], [[1.7]])
        g = build_tangent_gram(m)
        np.testing.assert_allclose(g.a, [[1 / (4 * 1.7**2)]])
        np.testing.assert_allclose(g.b, [[1 / (2 * 1.7**2)]])
        np.testing.assert_allclose(g.coeff_mu, [[2 * 1.7]])
        np.testing.assert_allclose(g.coeff_l, [[np.sqrt(2) * 1.7]])

    def test_bases_agree_in_one_dimension(self):
        m = GaussianModel([0.0], [[0.8]])
        np.testing.assert_allclose(gram_cov_block(m, basis="symmetrized"), gram_cov_block(m, basis="chain"))

    def test_v_is_jacobian_of_covariance(self, rng):
        m = random_model(rng, 3)
        _, v = build_uv(m)
        h = 1e-6
        base = m.vech_chol
        fd = np.empty_like(v)
        for k in range(base.size):
            e = np.zeros_like(base)
            e[k] = h
            lp, lm = unvech(base + e, 3), unvech(base - e, 3)
            fd[:, k] = (vec(lp @ lp.T) - vec(lm @ lm.T)) / (2 * h)
        np.testing.assert_allclose(v, fd, atol=1e-8)

    def test_u_action(self, rng):
        u, _ = build_uv(random_model(rng, 3))
        a = rng.normal(size=(3, 3))
        np.testing.assert_allclose(u @ vec(a), 2 * vec(a) - vec(a * np.eye(3)) + vec(a.T) - vec(a), atol=1e-12)
        sym = a + a.T
        np.testing.assert_allclose(u @ vec(sym), 2 * vec(sym) - vec(sym * np.eye(3)), atol=1e-12)

    def test_unknown_basis(self, rng):
        with pytest.raises(ValueError):
            build_uv(random_model(rng, 2), basis="other")

    def test_singular_factor(self):
        m = GaussianModel([0.0, 0.0], [[1.0, 0.0], [0.5, 1.0]])
        # bypass validation to reach the rank check
        object.__setattr__(m, "chol", np.array([[1.0, 0.0], [0.5, 0.0]]))
        with pytest.raises(RankDeficient):
            build_uv(m)


class TestFeatures:
    def test_mean_features_are_log_derivatives(self, rng):
        m = random_model(rng, 2)
        z = m.mean + rng.normal(size=(5, 2))
        np.testing.assert_allclose(mean_features(m, z), fd_features(m, z)[:, :2], atol=1e-7)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_chain_basis_gives_exact_derivatives(self, rng, d):
        m = random_model(rng, d)
        z = m.mean + rng.normal(size=(6, d))
        g = build_tangent_gram(m, basis="chain")
        np.testing.assert_allclose(cov_features(m, z, g.uv), fd_features(m, z)[:, d:], atol=1e-6)

    def test_symmetrized_basis_doubles_off_diagonal(self, rng):
        m = random_model(rng, 2)
        z = m.mean + rng.normal(size=(6, 2))
        g = build_tangent_gram(m, basis="symmetrized")
        assert not np.allclose(cov_features(m, z, g.uv), fd_features(m, z)[:, 2:], atol=1e-3)

    def test_symmetrized_basis_spans_same_space(self, rng):
        m = random_model(rng, 3)
        z = m.mean + rng.normal(size=(40, 3))
        sym = cov_features(m, z, build_tangent_gram(m, basis="symmetrized").uv)
        chain = cov_features(m, z, build_tangent_gram(m, basis="chain").uv)
        coef, *_ = np.linalg.lstsq(chain, sym, rcond=None)
        np.testing.assert_allclose(chain @ coef, sym, atol=1e-10)


class TestGramMonteCarlo:
    @pytest.mark.parametrize("d", [1, 2, 3])
    @pytest.mark.parametrize("basis", ["symmetrized", "chain"])
    def test_blocks_match_sample_moments(self, rng, d, basis):
        m = random_model(rng, d)
        n = 200_000
        z = m.mean + rng.normal(size=(n, d)) @ m.chol.T
        g = build_tangent_gram(m, basis=basis)
        feats = np.hstack([mean_features(m, z), cov_features(m, z, g.uv)])
        prods = feats[:, :, None] * feats[:, None, :]
        mc = prods.mean(axis=0)
        se = prods.std(axis=0, ddof=1) / np.sqrt(n)
        exact = np.zeros_like(mc)
        exact[:d, :d] = g.a
        exact[d:, d:] = g.b
        assert np.all(np.abs(mc - exact) <= 4 * se + 1e-12)

    def test_expected_wtw(self, rng):
        m = random_model(rng, 2)
        n = 400_000
        z = m.mean + rng.normal(size=(n, 2)) @ m.chol.T
        w = cov_features(m, z, np.eye(4))
        prods = w[:, :, None] * w[:, None, :]
        se = prods.std(axis=0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(prods.mean(axis=0) - expected_wtw(m)) <= 4 * se + 1e-12)


class TestOrthonormalization:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 2**32 - 1), st.sampled_from(["cholesky", "minors"]))
    def test_whitening(self, d, seed, method):
        m = random_model(np.random.default_rng(seed), d)
        g = build_tangent_gram(m, method=method)
        np.testing.assert_allclose(g.coeff_mu @ g.a @ g.coeff_mu.T, np.eye(d), atol=1e-9)
        k = d * (d + 1) // 2
        np.testing.assert_allclose(g.coeff_l @ g.b @ g.coeff_l.T, np.eye(k), atol=1e-8)

    def test_methods_agree(self, rng):
        m = random_model(rng, 3)
        a = build_tangent_gram(m, method="cholesky")
        b = build_tangent_gram(m, method="minors")
        np.testing.assert_allclose(a.coeff_l, b.coeff_l, atol=1e-8)

    def test_reuses_operator_matrices(self, rng):
        m = random_model(rng, 2)
        ops = build_operator_matrices(2)
        np.testing.assert_array_equal(build_tangent_gram(m, ops).b, build_tangent_gram(m).b)
