import numpy as np
import pytest

from fsrcnn import tensor


class TestNewFilled:
    def test_zeros(self):
        t = tensor.new_filled((1, 1, 2, 2), 0.0)
        assert t.shape == (1, 1, 2, 2)
        assert t.dtype == np.float32
        assert np.all(t == 0.0)

    def test_constant(self):
        t = tensor.new_filled((2, 3, 4, 5), 1.5)
        assert t.size == 120
        assert np.all(t == 1.5)

    def test_degenerate_extent(self):
        t = tensor.new_filled((1, 0, 5, 5), 7.0)
        assert t.size == 0

    def test_negative_extent(self):
        with pytest.raises(ValueError):
            tensor.new_filled((1, -1, 5, 5), 0.0)

    def test_wrong_rank(self):
        with pytest.raises(ValueError):
            tensor.new_filled((1, 2, 3), 0.0)

    def test_overflow(self):
        with pytest.raises(ValueError):
            tensor.new_filled((1 << 20, 1 << 20, 1 << 20, 1), 0.0)


class TestAxpy:
    def test_alpha_zero_is_identity(self):
        dst = np.array([1.0, 2.0], dtype=np.float32).reshape(1, 1, 1, 2)
        src = np.array([9.0, 9.0], dtype=np.float32).reshape(1, 1, 1, 2)
        tensor.axpy_into(dst, 0.0, src)
        assert dst.reshape(-1).tolist() == [1.0, 2.0]

    def test_plain_addition(self):
        dst = np.array([1.0, 2.0], dtype=np.float32).reshape(1, 1, 1, 2)
        src = np.array([3.0, 4.0], dtype=np.float32).reshape(1, 1, 1, 2)
        tensor.axpy_into(dst, 1.0, src)
        assert dst.reshape(-1).tolist() == [4.0, 6.0]

    def test_negative_alpha(self):
        # scalar-loop oracle: 0 + (-0.5)*2 = -1, 0 + (-0.5)*4 = -2
        dst = np.zeros((1, 1, 1, 2), dtype=np.float32)
        src = np.array([2.0, 4.0], dtype=np.float32).reshape(1, 1, 1, 2)
        tensor.axpy_into(dst, -0.5, src)
        assert dst.reshape(-1).tolist() == [-1.0, -2.0]

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            tensor.axpy_into(np.zeros((1, 1, 2, 2), np.float32), 1.0,
                             np.zeros((1, 1, 2, 3), np.float32))

    @pytest.mark.parametrize("seed", range(5))
    def test_linearity_in_alpha(self, seed):
        rng = np.random.default_rng(seed)
        base = rng.normal(size=(2, 3, 4, 5)).astype(np.float32)
        src = rng.normal(size=(2, 3, 4, 5)).astype(np.float32)
        a, b = rng.normal(), rng.normal()
        two_step = base.copy()
        tensor.axpy_into(two_step, a, src)
        tensor.axpy_into(two_step, b, src)
        one_step = base.copy()
        tensor.axpy_into(one_step, a + b, src)
        np.testing.assert_allclose(two_step, one_step, rtol=0, atol=1e-5)


class TestMse:
    def test_identical(self):
        a = np.full((1, 1, 3, 3), 0.7, dtype=np.float32)
        assert tensor.mse(a, a.copy()) == 0.0

    def test_unit_offset(self):
        a = np.ones((1, 1, 2, 2), dtype=np.float32)
        b = np.zeros((1, 1, 2, 2), dtype=np.float32)
        assert tensor.mse(a, b) == pytest.approx(1.0)

    def test_hand_computed(self):
        # ((1-2)^2 + (3-1)^2) / 2 = 2.5
        a = np.array([1.0, 3.0], dtype=np.float32).reshape(1, 1, 1, 2)
        b = np.array([2.0, 1.0], dtype=np.float32).reshape(1, 1, 1, 2)
        assert tensor.mse(a, b) == pytest.approx(2.5)

    def test_empty(self):
        e = tensor.new_filled((1, 0, 5, 5), 0.0)
        with pytest.raises(ValueError):
            tensor.mse(e, e.copy())

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            tensor.mse(np.zeros((1, 1, 2, 2), np.float32),
                       np.zeros((1, 1, 4, 1), np.float32))

    @pytest.mark.parametrize("seed", range(5))
    def test_symmetric_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(1, 2, 3, 4)).astype(np.float32)
        b = rng.normal(size=(1, 2, 3, 4)).astype(np.float32)
        assert tensor.mse(a, b) == tensor.mse(b, a) > 0.0
        assert tensor.mse(a, a.copy()) == 0.0


class TestLayout:
    @pytest.mark.parametrize("shape", [(1, 1, 2, 2), (2, 3, 4, 5), (3, 1, 7, 2)])
    def test_offset_law(self, shape):
        rng = np.random.default_rng(0)
        t = rng.normal(size=shape).astype(np.float32)
        flat = t.reshape(-1)
        n, c, h, w = shape
        for _ in range(20):
            b, ch, y, x = (rng.integers(0, e) for e in shape)
            offset = ((b * c + ch) * h + y) * w + x
            assert flat[offset] == t[b, ch, y, x]

    def test_flatten_reshape_roundtrip(self):
        rng = np.random.default_rng(1)
        t = rng.normal(size=(2, 3, 4, 5)).astype(np.float32)
        back = t.reshape(-1).reshape(t.shape)
        assert np.array_equal(back, t)
