import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossbag.errors import ContractViolation
from crossbag.numeric import (
    GradCheckReport,
    SeededRng,
    cosine,
    cosine_backward,
    grad_check,
    softmax,
    softmax_backward,
    softmax_rows,
)

# Oracle: direct e^x / sum e^x at low dimension. softmax([0.9, 0.1])[0]
# equals 1 / (1 + e^{-0.8}).
SOFTMAX_09_01 = [1.0 / (1.0 + math.exp(-0.8)), 1.0 - 1.0 / (1.0 + math.exp(-0.8))]


class TestSoftmax:
    def test_uniform_inputs(self):
        np.testing.assert_allclose(softmax([0.0, 0.0, 0.0]), [1 / 3] * 3, atol=1e-15)

    def test_two_point_value(self):
        out = softmax([0.9, 0.1])
        np.testing.assert_allclose(out, SOFTMAX_09_01, atol=1e-12)
        np.testing.assert_allclose(out, [0.68997, 0.31003], atol=1e-4)

    def test_large_inputs_do_not_overflow(self):
        out = softmax([1000.0, 0.0])
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(1.0)
        assert out[1] == pytest.approx(0.0, abs=1e-300)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            softmax(np.array([]))

    def test_order_preserving(self):
        v = np.array([0.3, -1.2, 2.0, 0.3001])
        out = softmax(v)
        assert list(np.argsort(out)) == list(np.argsort(v))

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12),
           st.floats(-30, 30))
    @settings(max_examples=200, deadline=None)
    def test_sums_to_one_and_shift_invariant(self, values, shift):
        v = np.array(values)
        out = softmax(v)
        assert abs(out.sum() - 1.0) <= 1e-12
        np.testing.assert_allclose(out, softmax(v + shift), atol=1e-12)

    def test_rows_variant_matches_per_row(self):
        rng = np.random.default_rng(3)
        m = rng.normal(size=(5, 7))
        rows = softmax_rows(m)
        for j in range(5):
            np.testing.assert_allclose(rows[j], softmax(m[j]), atol=1e-15)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        s = rng.normal(size=6)
        w = rng.normal(size=6)  # project softmax output to a scalar
        y = softmax(s)
        ds = softmax_backward(y, w)
        eps = 1e-6
        for i in range(6):
            sp, sm = s.copy(), s.copy()
            sp[i] += eps
            sm[i] -= eps
            num = (np.dot(w, softmax(sp)) - np.dot(w, softmax(sm))) / (2 * eps)
            assert ds[i] == pytest.approx(num, abs=1e-8)


class TestCosine:
    def test_orthogonal(self):
        assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_parallel(self):
        assert cosine(np.array([2.0, 2.0]), np.array([1.0, 1.0])) == pytest.approx(1.0)

    def test_hand_value(self):
        # 24 / 25 by hand: (3*4 + 4*3) / (5 * 5)
        assert cosine(np.array([3.0, 4.0]), np.array([4.0, 3.0])) == pytest.approx(0.96)

    def test_zero_vector_convention(self):
        assert cosine(np.zeros(3), np.array([1.0, 2.0, 3.0])) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cosine(np.ones(2), np.ones(3))

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=8),
           st.lists(st.floats(-10, 10), min_size=2, max_size=8),
           st.floats(0.01, 100))
    @settings(max_examples=200, deadline=None)
    def test_symmetry_scale_invariance_bounds(self, xs, ys, c):
        n = min(len(xs), len(ys))
        a, b = np.array(xs[:n]), np.array(ys[:n])
        s = cosine(a, b)
        assert -1.0 <= s <= 1.0
        assert s == pytest.approx(cosine(b, a), abs=1e-12)
        assert s == pytest.approx(cosine(c * a, b), abs=1e-9)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=7)
        b = rng.normal(size=7)
        da, db = cosine_backward(a, b, 1.0)
        eps = 1e-6
        for i in range(7):
            ap, am = a.copy(), a.copy()
            ap[i] += eps
            am[i] -= eps
            num = (cosine(ap, b) - cosine(am, b)) / (2 * eps)
            assert da[i] == pytest.approx(num, abs=1e-8)
            bp, bm = b.copy(), b.copy()
            bp[i] += eps
            bm[i] -= eps
            num = (cosine(a, bp) - cosine(a, bm)) / (2 * eps)
            assert db[i] == pytest.approx(num, abs=1e-8)

    def test_backward_zero_vector_is_zero(self):
        da, db = cosine_backward(np.zeros(3), np.ones(3), 1.0)
        assert not da.any() and not db.any()


class TestSeededRng:
    def test_bit_reproducible(self):
        a = SeededRng(12345)
        b = SeededRng(12345)
        assert [a.next_u64() for _ in range(100)] == [b.next_u64() for _ in range(100)]
        assert [a.random() for _ in range(50)] == [b.random() for _ in range(50)]
        assert [a.normal() for _ in range(51)] == [b.normal() for _ in range(51)]

    def test_known_stream_frozen(self):
        # Frozen first draws for seed 42; guards against accidental
        # algorithm changes that would silently break stored checkpoints.
        rng = SeededRng(42)
        first = [rng.next_u64() for _ in range(3)]
        assert first == [1546998764402558742, 6990951692964543102, 12544586762248559009]

    def test_seeds_differ(self):
        assert SeededRng(1).next_u64() != SeededRng(2).next_u64()

    def test_random_in_unit_interval(self):
        rng = SeededRng(7)
        draws = [rng.random() for _ in range(1000)]
        assert all(0.0 <= d < 1.0 for d in draws)

    def test_shuffle_deterministic(self):
        items1 = list(range(10))
        items2 = list(range(10))
        SeededRng(9).shuffle(items1)
        SeededRng(9).shuffle(items2)
        assert items1 == items2
        assert sorted(items1) == list(range(10))

    def test_bernoulli_mask_rate(self):
        rng = SeededRng(3)
        mask = rng.bernoulli_mask(10000, 0.5)
        assert set(np.unique(mask)) <= {0.0, 1.0}
        assert 0.45 < mask.mean() < 0.55

    def test_sample_indices_distinct_and_sorted(self):
        rng = SeededRng(4)
        idx = rng.sample_indices(100, 20)
        assert len(idx) == 20 == len(set(idx))
        assert idx == sorted(idx)
        assert rng.sample_indices(5, 10) == [0, 1, 2, 3, 4]

    def test_normal_moments(self):
        rng = SeededRng(8)
        draws = np.array([rng.normal() for _ in range(20000)])
        assert abs(draws.mean()) < 0.03
        assert abs(draws.std() - 1.0) < 0.03


class TestGradCheck:
    def _quadratic(self, params):
        return 0.5 * sum(float(np.sum(p * p)) for p in params.values())

    def test_exact_gradient_passes(self):
        rng = np.random.default_rng(0)
        params = {"w": rng.normal(size=(4, 3)), "b": rng.normal(size=5)}
        analytic = {k: v.copy() for k, v in params.items()}
        report = grad_check(self._quadratic, params, analytic, eps=1e-5, tol=1e-7)
        assert report.passed
        assert report.max_rel_err <= 1e-7

    def test_corrupted_gradient_fails(self):
        rng = np.random.default_rng(1)
        params = {"w": rng.normal(size=6)}
        analytic = {"w": 2.0 * params["w"]}
        report = grad_check(self._quadratic, params, analytic, tol=1e-4)
        assert not report.passed

    def test_params_restored(self):
        rng = np.random.default_rng(2)
        params = {"w": rng.normal(size=8)}
        before = params["w"].copy()
        grad_check(self._quadratic, params, {"w": params["w"].copy()})
        np.testing.assert_array_equal(params["w"], before)

    def test_nondeterministic_loss_rejected(self):
        state = {"calls": 0}

        def noisy(params):
            state["calls"] += 1
            return float(params["w"].sum()) + 0.001 * state["calls"]

        with pytest.raises(ContractViolation):
            grad_check(noisy, {"w": np.ones(3)}, {"w": np.ones(3)})

    def test_eps_bounds_enforced(self):
        with pytest.raises(ValueError):
            grad_check(self._quadratic, {"w": np.ones(2)}, {"w": np.ones(2)}, eps=1e-2)

    def test_report_is_printable(self):
        params = {"w": np.ones(3)}
        report = grad_check(self._quadratic, params, {"w": np.ones(3)})
        text = str(report)
        assert "PASS" in text and "w:" in text
        assert isinstance(report, GradCheckReport)
