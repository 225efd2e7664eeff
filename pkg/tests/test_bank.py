import numpy as np
import pytest

from cltta.bank import MemoryBank, ThresholdPolicy, default_fixed_threshold, policy_thresholds, push_batch

ROWS = np.array([[0.9, 0.1], [0.8, 0.2], [0.7, 0.3], [0.6, 0.4]])


class TestMemoryBank:
    def test_thresholds(self):
        np.testing.assert_allclose(MemoryBank(2, 10).push(ROWS).thresholds(75), [0.825, 0.325])

    def test_single_row(self):
        b = MemoryBank(2, 10).push(ROWS[:1])
        for t in (0, 33, 100):
            np.testing.assert_array_equal(b.thresholds(t), ROWS[0])

    def test_minimum_at_zero(self):
        np.testing.assert_array_equal(MemoryBank(2, 10).push(ROWS).thresholds(0), [0.6, 0.1])

    def test_fifo_keeps_newest(self):
        b = MemoryBank(2, 3)
        push_batch(b, ROWS[:2])
        push_batch(b, ROWS[2:])
        np.testing.assert_array_equal(b.rows, ROWS[1:])

    def test_oversized_push(self):
        np.testing.assert_array_equal(MemoryBank(2, 2).push(ROWS).rows, ROWS[2:])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            MemoryBank(2, 5).thresholds()

    def test_clear(self):
        b = MemoryBank(2, 5).push(ROWS)
        b.clear()
        assert len(b.rows) == 0

    def test_width_checked(self):
        with pytest.raises(ValueError):
            MemoryBank(3, 5).push(ROWS)


class TestPolicy:
    def test_cold_start_uses_batch(self):
        th = policy_thresholds(ThresholdPolicy.dynamic(75), MemoryBank(2, 10), ROWS)
        np.testing.assert_allclose(th, [0.825, 0.325])

    def test_bank_used_when_nonempty(self):
        b = MemoryBank(2, 10).push(ROWS[:1])
        np.testing.assert_array_equal(policy_thresholds(ThresholdPolicy.dynamic(), b, ROWS), ROWS[0])

    def test_fixed(self):
        th = policy_thresholds(ThresholdPolicy.fixed(0.05), MemoryBank(2, 10).push(ROWS), ROWS)
        np.testing.assert_array_equal(th, [0.05, 0.05])
        assert default_fixed_threshold(10) == pytest.approx(0.05)

    def test_clipped_below_one(self):
        th = policy_thresholds(ThresholdPolicy.dynamic(100), MemoryBank(2, 10), np.array([[1.0, 0.0]] * 2))
        assert th.max() < 1.0

    @pytest.mark.parametrize("kw", [dict(t=-1), dict(t=101), dict(capacity=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ThresholdPolicy.dynamic(**kw)
