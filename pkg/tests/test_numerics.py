import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cltta.harness.verify import naive_percentile
from cltta.numerics import LOG_EPS, clamped_log, column_percentiles, percentile, seeded_rng, softmax


class TestSoftmax:
    def test_rows_sum_to_one(self, rng):
        p = softmax(rng.normal(size=(7, 5)))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-15)

    def test_large_logits_are_stable(self):
        p = softmax(np.array([[1000.0, 0.0, -1000.0]]))
        assert np.all(np.isfinite(p))
        assert p[0, 0] == pytest.approx(1.0)

    def test_shift_invariance(self, rng):
        z = rng.normal(size=(3, 4))
        np.testing.assert_allclose(softmax(z), softmax(z + 17.0), atol=1e-15)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            softmax(np.array([[0.0, np.nan]]))


class TestClampedLog:
    def test_zero_is_clamped(self):
        assert clamped_log(0.0) == pytest.approx(math.log(LOG_EPS))

    def test_array(self):
        np.testing.assert_allclose(clamped_log(np.array([1.0, 0.5])), [0.0, math.log(0.5)])

    @pytest.mark.parametrize("eps", [0.0, 1.0, -1e-3])
    def test_bad_eps(self, eps):
        with pytest.raises(ValueError):
            clamped_log(0.5, eps)


class TestPercentile:
    def test_interpolates(self):
        assert percentile([0.9, 0.8, 0.7, 0.6], 75) == pytest.approx(0.825)

    def test_endpoints(self):
        v = [3.0, 1.0, 2.0]
        assert percentile(v, 0) == 1.0
        assert percentile(v, 100) == 3.0

    def test_single_value(self):
        assert percentile([0.4], 37.5) == 0.4

    def test_rejects_empty_and_out_of_range(self):
        with pytest.raises(ValueError):
            percentile([], 50)
        with pytest.raises(ValueError):
            percentile([1.0], 101)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.floats(0, 100))
    def test_matches_naive_oracle(self, values, t):
        assert percentile(values, t) == naive_percentile(values, t)

    def test_columns(self):
        m = np.array([[0.9, 0.1], [0.8, 0.2], [0.7, 0.3], [0.6, 0.4]])
        np.testing.assert_allclose(column_percentiles(m, 75), [0.825, 0.325])


class TestSeededRng:
    def test_reproducible(self):
        assert np.array_equal(seeded_rng(3, 1).random(5), seeded_rng(3, 1).random(5))

    def test_streams_differ(self):
        assert not np.array_equal(seeded_rng(3, 1).random(5), seeded_rng(3, 2).random(5))

    def test_negative_seed(self):
        with pytest.raises(ValueError):
            seeded_rng(-1)
