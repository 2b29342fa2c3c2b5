import numpy as np
import pytest

from app.core.exceptions import InvalidArgumentError
from app.services.tensor_ops import (
    fold,
    frobenius_norm,
    mode_n_product,
    multi_mode_product,
    outer_product3,
    unfold,
)


def _indexed_tensor() -> np.ndarray:
    # * a_ijk = 4i + 2j + k
    t = np.zeros((2, 2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                t[i, j, k] = 4 * i + 2 * j + k
    return t


class TestOuterProduct:
    """
    * test suite for rank-1 outer products
    """

    def test_basis_vectors(self):
        """
        * e1 o e1 o e1 has a single one at the origin
        """
        e1 = np.array([1.0, 0.0])
        t = outer_product3(e1, e1, e1)
        expected = np.zeros((2, 2, 2))
        expected[0, 0, 0] = 1.0
        np.testing.assert_array_equal(t, expected)

    def test_hand_expanded_entries(self):
        """
        * a=(1,2), b=(3), c=(1,1)
        """
        t = outer_product3([1.0, 2.0], [3.0], [1.0, 1.0])
        assert t.shape == (2, 1, 2)
        assert t[0, 0, 0] == 3.0
        assert t[0, 0, 1] == 3.0
        assert t[1, 0, 0] == 6.0
        assert t[1, 0, 1] == 6.0

    def test_norm_is_multiplicative(self):
        """
        * ||a o b o c|| = ||a|| ||b|| ||c||
        """
        rng = np.random.default_rng(0)
        a, b, c = rng.normal(size=5), rng.normal(size=8), rng.normal(size=4)
        expected = np.linalg.norm(a) * np.linalg.norm(b) * np.linalg.norm(c)
        assert frobenius_norm(outer_product3(a, b, c)) == pytest.approx(expected, rel=1e-12)

    def test_empty_vector_rejected(self):
        """
        * empty input is an invalid argument
        """
        with pytest.raises(InvalidArgumentError, match="nonempty"):
            outer_product3([], [1.0], [1.0])


class TestFrobeniusNorm:
    """
    * test suite for the tensor norm
    """

    def test_all_ones(self):
        assert frobenius_norm(np.ones((2, 2, 2))) == pytest.approx(np.sqrt(8.0))

    def test_zeros(self):
        assert frobenius_norm(np.zeros((3, 2, 2))) == 0.0

    def test_matches_loop_oracle(self):
        """
        * scalar triple-loop sum of squares
        """
        t = np.random.default_rng(1).normal(size=(3, 4, 2))
        total = 0.0
        for i in range(3):
            for j in range(4):
                for k in range(2):
                    total += t[i, j, k] ** 2
        assert frobenius_norm(t) ** 2 == pytest.approx(total, rel=1e-12)


class TestUnfoldFold:
    """
    * test suite for unfolding column order and fold inverse
    """

    def test_mode1_column_order(self):
        """
        * row i = (a_i00, a_i01, a_i10, a_i11)
        """
        t = _indexed_tensor()
        m = unfold(t, 1)
        np.testing.assert_array_equal(m, [[0, 1, 2, 3], [4, 5, 6, 7]])

    def test_mode2_and_mode3_column_order(self):
        """
        * first remaining mode varies slowest
        """
        t = _indexed_tensor()
        np.testing.assert_array_equal(unfold(t, 2), [[0, 1, 4, 5], [2, 3, 6, 7]])
        np.testing.assert_array_equal(unfold(t, 3), [[0, 2, 4, 6], [1, 3, 5, 7]])

    @pytest.mark.parametrize("mode", [1, 2, 3])
    def test_fold_inverts_unfold(self, mode):
        t = np.random.default_rng(2).normal(size=(3, 4, 5))
        np.testing.assert_array_equal(fold(unfold(t, mode), mode, t.shape), t)

    @pytest.mark.parametrize("mode", [1, 2, 3])
    def test_unfolding_keeps_norm(self, mode):
        t = np.random.default_rng(3).normal(size=(3, 4, 5))
        assert np.linalg.norm(unfold(t, mode)) == pytest.approx(frobenius_norm(t), rel=1e-12)

    def test_degenerate_single_entry(self):
        t = np.full((1, 1, 1), 4.5)
        np.testing.assert_array_equal(fold(unfold(t, 2), 2, (1, 1, 1)), t)

    def test_invalid_mode(self):
        with pytest.raises(InvalidArgumentError, match="mode"):
            unfold(np.ones((2, 2, 2)), 4)

    def test_fold_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError, match="cannot fold"):
            fold(np.ones((2, 3)), 1, (2, 2, 2))


class TestModeProduct:
    """
    * test suite for n-mode products
    """

    @pytest.mark.parametrize("mode", [1, 2, 3])
    def test_identity_law(self, mode):
        t = np.random.default_rng(4).normal(size=(3, 4, 2))
        out = mode_n_product(t, np.eye(t.shape[mode - 1]), mode)
        np.testing.assert_allclose(out, t, rtol=0, atol=1e-14)

    def test_distinct_modes_commute(self):
        rng = np.random.default_rng(5)
        t = rng.normal(size=(3, 4, 2))
        a, b = rng.normal(size=(5, 3)), rng.normal(size=(2, 4))
        left = mode_n_product(mode_n_product(t, a, 1), b, 2)
        right = mode_n_product(mode_n_product(t, b, 2), a, 1)
        np.testing.assert_allclose(left, right, atol=1e-10)

    def test_hand_sum_over_mode1(self):
        """
        * all-ones x_1 [[1, 1]] is a 1x2x2 tensor of twos
        """
        out = mode_n_product(np.ones((2, 2, 2)), np.array([[1.0, 1.0]]), 1)
        np.testing.assert_array_equal(out, np.full((1, 2, 2), 2.0))

    def test_matches_einsum(self):
        rng = np.random.default_rng(6)
        t = rng.normal(size=(3, 4, 2))
        m = rng.normal(size=(6, 4))
        np.testing.assert_allclose(mode_n_product(t, m, 2), np.einsum("ijk,rj->irk", t, m), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError, match="columns"):
            mode_n_product(np.ones((2, 3, 4)), np.ones((2, 2)), 2)

    def test_multi_mode_skip(self):
        rng = np.random.default_rng(7)
        t = rng.normal(size=(3, 4, 2))
        mats = [rng.normal(size=(2, 3)), rng.normal(size=(2, 4)), rng.normal(size=(2, 2))]
        out = multi_mode_product(t, mats, skip=2)
        expected = mode_n_product(mode_n_product(t, mats[0], 1), mats[2], 3)
        np.testing.assert_allclose(out, expected, atol=1e-12)


class TestRandomizedLaws:
    """
    * test suite for algebraic laws over random shapes and values
    """

    @staticmethod
    def _tensor(seed: int):
        rng = np.random.default_rng(1000 + seed)
        dims = tuple(int(d) for d in rng.integers(1, 6, size=3))
        return rng, rng.normal(size=dims)

    @pytest.mark.parametrize("seed", range(100))
    def test_identity_law(self, seed):
        _, t = self._tensor(seed)
        for mode in (1, 2, 3):
            out = mode_n_product(t, np.eye(t.shape[mode - 1]), mode)
            np.testing.assert_allclose(out, t, rtol=0, atol=1e-14)

    @pytest.mark.parametrize("seed", range(100))
    def test_distinct_modes_commute(self, seed):
        rng, t = self._tensor(seed)
        mats = [rng.normal(size=(int(rng.integers(1, 5)), d)) for d in t.shape]
        for m, n in ((1, 2), (1, 3), (2, 3)):
            left = mode_n_product(mode_n_product(t, mats[m - 1], m), mats[n - 1], n)
            right = mode_n_product(mode_n_product(t, mats[n - 1], n), mats[m - 1], m)
            np.testing.assert_allclose(left, right, rtol=1e-10, atol=1e-10)

    @pytest.mark.parametrize("seed", range(100))
    def test_fold_inverts_unfold(self, seed):
        _, t = self._tensor(seed)
        for mode in (1, 2, 3):
            m = unfold(t, mode)
            assert m.shape == (t.shape[mode - 1], t.size // t.shape[mode - 1])
            np.testing.assert_array_equal(fold(m, mode, t.shape), t)

    @pytest.mark.parametrize("seed", range(100))
    def test_norm_matches_loop_and_unfoldings(self, seed):
        _, t = self._tensor(seed)
        total = 0.0
        for idx in np.ndindex(t.shape):
            total += t[idx] ** 2
        norm = frobenius_norm(t)
        assert norm**2 == pytest.approx(total, rel=1e-12)
        for mode in (1, 2, 3):
            assert np.linalg.norm(unfold(t, mode)) == pytest.approx(norm, rel=1e-12)
