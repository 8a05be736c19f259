import numpy as np
import pytest
from hypothesis import given, strategies as st

from rriokr.evalbench.metrics import (MetricError, f1_example_based, label_sets,
                                      label_threshold_decode, mse_explicit, mse_kernel,
                                      mse_output_space, mse_projected, topk_accuracy)
from rriokr.kernels import KernelSpec, gram, kernel_diag
from rriokr.regression import fit_krr
from rriokr.subspace import fit_supervised_projection

LIN = KernelSpec.linear()


class TestMse:
    def test_perfect(self, rng):
        Y = rng.standard_normal((6, 3))
        assert mse_output_space(Y, Y) == 0.0

    def test_zero_predictor(self, rng):
        Y = rng.standard_normal((6, 3))
        np.testing.assert_allclose(mse_output_space(np.zeros_like(Y), Y), np.mean(np.sum(Y ** 2, axis=1)))

    def test_kernel_trick_matches_explicit(self, rng):
        n, d = 10, 4
        Ztr = rng.standard_normal((n, d))
        Zte = rng.standard_normal((7, d))
        alpha = rng.standard_normal((n, 7))
        explicit = mse_explicit(alpha.T @ Ztr, Zte)
        np.testing.assert_allclose(mse_output_space(alpha, Zte, LIN, Ztr), explicit, rtol=1e-8)

    def test_projected_matches_explicit(self, rng):
        n, d = 25, 5
        X = rng.standard_normal((n, 3))
        Y = rng.standard_normal((n, d))
        Kx, Kz = gram(LIN, X).entries, gram(LIN, Y).entries
        m = fit_krr(Kx, 0.1)
        proj = fit_supervised_projection(m, Kx, Kz, 2)
        Xt, Yt = rng.standard_normal((8, 3)), rng.standard_normal((8, d))
        alpha = m.predict_coefficients(gram(LIN, X, Xt).entries)
        coords = alpha.T @ proj.UY_train
        tgt = proj.coordinates(gram(LIN, Y, Yt).entries)
        # explicit P h(x): P = V V^T with V = Y^T G
        V = Y.T @ proj.output_coeffs
        ph = (alpha.T @ Y) @ V @ V.T
        np.testing.assert_allclose(mse_projected(coords, tgt, kernel_diag(LIN, Yt)),
                                   mse_explicit(ph, Yt), rtol=1e-8)

    def test_count_mismatch(self, rng):
        with pytest.raises(MetricError):
            mse_explicit(np.zeros((3, 2)), np.zeros((4, 2)))
        with pytest.raises(MetricError):
            mse_kernel(np.zeros((3, 2)), np.eye(3), np.zeros((3, 2)), np.zeros(3))

    def test_kernel_needs_training_outputs(self):
        with pytest.raises(MetricError):
            mse_output_space(np.zeros((2, 1)), np.zeros((1, 2)), LIN)


class TestF1:
    def test_exact(self):
        T = [{1, 2}, {0}, {3, 4, 5}]
        assert f1_example_based(T, T) == 1.0

    def test_hand_count(self):
        np.testing.assert_allclose(f1_example_based([{1, 3}], [{1}]), 2 / 3)

    def test_both_empty(self):
        assert f1_example_based([set()], [set()]) == 1.0

    def test_one_empty(self):
        assert f1_example_based([set()], [{1}]) == 0.0
        assert f1_example_based([{2}], [set()]) == 0.0

    def test_mismatch(self):
        with pytest.raises(MetricError):
            f1_example_based([{1}], [{1}, {2}])

    def test_label_sets(self):
        assert label_sets(np.array([[1, 0, 1], [0, 0, 0]])) == [{0, 2}, set()]


@given(st.lists(st.tuples(st.sets(st.integers(0, 6)), st.sets(st.integers(0, 6))), min_size=1, max_size=20))
def test_f1_bounds_and_symmetry(pairs):
    T = [a for a, _ in pairs]
    P = [b for _, b in pairs]
    v = f1_example_based(T, P)
    assert 0.0 <= v <= 1.0
    assert v == f1_example_based(P, T)


class TestTopk:
    def test_k_covers_all(self):
        ranked = [[2, 0, 1], [1, 2, 0]]
        assert topk_accuracy(ranked, [1, 0], 3) == 1.0

    def test_top1_correct(self):
        assert topk_accuracy([[4, 1], [0, 3]], [4, 0], 1) == 1.0

    def test_hand_count(self):
        ranked = [[7, 1, 2, 3, 4], [1, 7, 2, 3, 4], [1, 2, 3, 4, 7]]
        np.testing.assert_allclose(topk_accuracy(ranked, [7, 7, 7], 2), 2 / 3)

    def test_bad_k(self):
        with pytest.raises(MetricError):
            topk_accuracy([[1]], [1], 0)


class TestThreshold:
    def test_all_one(self):
        assert label_threshold_decode([[1.0, 1.0, 1.0]]) == [{0, 1, 2}]

    def test_all_zero(self):
        assert label_threshold_decode([[0.0, 0.0]]) == [set()]

    def test_mixed(self):
        assert label_threshold_decode([[0.6, 0.4]], 0.5) == [{0}]
