import numpy as np
import pytest

from causalmec.errors import NumericError
from causalmec.nn import tensor as T
from nn_checks import fd_gradcheck


def param(rng, *shape):
    return T.Tensor(rng.normal(size=shape), requires_grad=True)


class TestForwardValues:
    def test_arithmetic(self):
        a = T.tensor([1.0, 2.0])
        b = T.tensor([3.0, 4.0])
        assert np.allclose((a + b).data, [4, 6])
        assert np.allclose((a * b).data, [3, 8])
        assert np.allclose((a - b).data, [-2, -2])
        assert np.allclose((a / b).data, [1 / 3, 0.5])

    def test_matmul_broadcast(self):
        a = T.tensor(np.ones((2, 3, 4)))
        w = T.tensor(np.ones((4, 5)))
        assert (a @ w).shape == (2, 3, 5)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        x = T.tensor(rng.normal(size=(3, 7)) * 10)
        s = T.softmax(x, axis=-1)
        assert np.abs(s.data.sum(axis=-1) - 1.0).max() < 1e-12

    def test_sigmoid_stable_at_extremes(self):
        x = T.tensor([-1000.0, 0.0, 1000.0])
        s = T.sigmoid(x)
        assert np.allclose(s.data, [0.0, 0.5, 1.0])

    def test_max_reduction(self):
        x = T.tensor([[1.0, 5.0, 3.0], [4.0, 2.0, 6.0]])
        assert np.allclose(T.tmax(x, axis=1).data, [5, 6])

    def test_nonfinite_raises(self):
        with pytest.raises(NumericError):
            T.tensor([1.0, np.inf])
        with pytest.raises(NumericError):
            T.log(T.tensor([0.0]))  # -inf

    def test_embedding_lookup(self):
        table = T.tensor(np.arange(12.0).reshape(4, 3))
        out = T.embedding(table, np.array([[0, 2], [3, 1]]))
        assert out.shape == (2, 2, 3)
        assert np.allclose(out.data[0, 1], [6, 7, 8])


class TestBackwardBasics:
    def test_add_broadcast_grad(self):
        a = T.Tensor(np.ones((2, 3)), requires_grad=True)
        b = T.Tensor(np.ones(3), requires_grad=True)
        T.tsum(a + b).backward()
        assert np.allclose(a.grad, np.ones((2, 3)))
        assert np.allclose(b.grad, [2, 2, 2])

    def test_grad_accumulates_over_reuse(self):
        a = T.Tensor(np.array([2.0]), requires_grad=True)
        (a * a).backward()
        assert np.allclose(a.grad, [4.0])

    def test_masked_entries_get_zero_grad(self):
        a = T.Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        mask = np.array([1.0, 0.0, 1.0])
        T.tsum(T.mul(a, mask)).backward()
        assert np.allclose(a.grad, mask)


class TestGradcheckPrimitives:
    def test_elementwise_chain(self):
        rng = np.random.default_rng(1)
        a = param(rng, 3, 4)
        b = param(rng, 3, 4)

        def forward():
            return T.tsum(T.mul(T.sigmoid(a), T.tanh(b)) + T.exp(T.mul(a, 0.1)))

        fd_gradcheck([a, b], forward)

    def test_gelu(self):
        rng = np.random.default_rng(11)
        a = param(rng, 4, 5)
        const = rng.normal(size=(4, 5))

        def forward():
            return T.tsum(T.mul(T.gelu(a), const))

        fd_gradcheck([a], forward)

    def test_matmul_and_softmax(self):
        rng = np.random.default_rng(2)
        a = param(rng, 2, 3, 4)
        w = param(rng, 4, 4)

        def forward():
            return T.tsum(T.mul(T.softmax(a @ w, axis=-1), rng2_const))

        rng2_const = np.random.default_rng(3).normal(size=(2, 3, 4))
        fd_gradcheck([a, w], forward)

    def test_max_mean_transpose_reshape(self):
        rng = np.random.default_rng(4)
        a = param(rng, 3, 5, 2)

        def forward():
            x = T.transpose(a, (1, 0, 2))
            x = T.reshape(x, (5, 6))
            x = T.tmax(x, axis=0)
            return T.tmean(T.mul(x, x))

        fd_gradcheck([a], forward)

    def test_concat_broadcast_div_sqrt_log(self):
        rng = np.random.default_rng(5)
        a = param(rng, 2, 3)
        b = param(rng, 2, 3)

        def forward():
            cat = T.concat([a, b], axis=-1)
            wide = T.broadcast_to(T.reshape(cat, (1, 2, 6)), (4, 2, 6))
            pos = T.add(T.mul(wide, wide), 0.5)
            return T.tsum(T.log(T.div(T.sqrt(pos), 2.0)))

        fd_gradcheck([a, b], forward)

    def test_embedding_grad(self):
        rng = np.random.default_rng(6)
        table = param(rng, 5, 3)
        idx = np.array([0, 2, 2, 4])
        const = rng.normal(size=(4, 3))

        def forward():
            return T.tsum(T.mul(T.embedding(table, idx), const))

        fd_gradcheck([table], forward)

    def test_clip_interior(self):
        rng = np.random.default_rng(7)
        a = T.Tensor(rng.uniform(0.2, 0.8, size=(4, 4)), requires_grad=True)

        def forward():
            return T.tsum(T.log(T.clip(a, 1e-7, 1 - 1e-7)))

        fd_gradcheck([a], forward)

    def test_pow_neg_sub(self):
        rng = np.random.default_rng(8)
        a = T.Tensor(rng.uniform(0.5, 2.0, size=(3, 3)), requires_grad=True)
        b = param(rng, 3, 3)

        def forward():
            return T.tsum(T.sub(T.pow_(a, 3.0), T.neg(b)))

        fd_gradcheck([a, b], forward)


def test_backward_requires_scalar():
    a = T.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        (a * 2).backward()
