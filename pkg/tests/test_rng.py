import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gap.rng import normals, uniforms


class TestUniforms:
    def test_deterministic(self):
        np.testing.assert_array_equal(uniforms(7, 3, 100), uniforms(7, 3, 100))

    def test_streams_differ(self):
        assert not np.array_equal(uniforms(7, 3, 10), uniforms(7, 4, 10))
        assert not np.array_equal(uniforms(7, 3, 10), uniforms(8, 3, 10))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1), st.integers(0, 200), st.integers(1, 50))
    def test_random_access(self, seed, stream, start, n):
        full = uniforms(seed, stream, start + n)
        np.testing.assert_array_equal(uniforms(seed, stream, n, start=start), full[start:])

    def test_open_interval_and_uniformity(self):
        u = uniforms(1, 0, 200_000)
        assert u.min() > 0.0 and u.max() < 1.0
        assert stats.kstest(u, "uniform").pvalue > 1e-3

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            uniforms(0, 0, -1)


class TestNormals:
    def test_shape_and_layout(self):
        z = normals(5, 2, (4, 3))
        np.testing.assert_array_equal(z.ravel(), normals(5, 2, 12))

    def test_moments(self):
        z = normals(11, 0, 500_000)
        assert abs(z.mean()) < 4 / np.sqrt(len(z))
        assert abs(z.var() - 1.0) < 4 * np.sqrt(2 / len(z))
        assert stats.kstest(z, "norm").pvalue > 1e-3
