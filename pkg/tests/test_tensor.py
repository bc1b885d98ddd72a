"""Tensor engine: forward values against loop oracles, gradients
against central finite differences."""

import numpy as np
import pytest

from stancenet.errors import GradientError, NumericError, ShapeError
from stancenet import tensor as T
from stancenet.tensor import Tensor, backward

from _oracles import finite_difference, loop_matmul, relative_error


class TestMatmul:
    def test_identity_passthrough(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(T.matmul(a, b).data, b.data)

    def test_hand_case_against_loop_oracle(self):
        a = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        b = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        got = T.matmul(Tensor(a), Tensor(b)).data
        np.testing.assert_array_equal(got, [[4.0, 5.0], [10.0, 11.0]])
        np.testing.assert_array_equal(got, loop_matmul(a, b))

    def test_zeros_times_anything(self):
        rng = np.random.default_rng(0)
        z = T.matmul(Tensor(np.zeros((2, 3))), Tensor(rng.normal(size=(3, 4))))
        np.testing.assert_array_equal(z.data, np.zeros((2, 4)))

    def test_random_against_loop_oracle(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            a = rng.normal(size=(4, 6))
            b = rng.normal(size=(6, 3))
            got = T.matmul(Tensor(a), Tensor(b)).data
            np.testing.assert_allclose(got, loop_matmul(a, b), atol=1e-12)

    def test_batched_against_per_slice_loops(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(3, 2, 4))
        b = rng.normal(size=(3, 4, 5))
        got = T.matmul(Tensor(a), Tensor(b)).data
        want = np.stack([loop_matmul(a[i], b[i]) for i in range(3)])
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_inner_dim_mismatch_reports_both_shapes(self):
        with pytest.raises(ShapeError) as err:
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
        assert "(2, 3)" in str(err.value) and "(4, 2)" in str(err.value)


class TestSoftmax:
    def test_uniform_logits(self):
        out = T.softmax(Tensor([0.0, 0.0, 0.0])).data
        np.testing.assert_allclose(out, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)

    def test_shift_invariance(self):
        a = T.softmax(Tensor([1.0, 2.0])).data
        b = T.softmax(Tensor([11.0, 12.0])).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_log3_ratio(self):
        out = T.softmax(Tensor([0.0, np.log(3.0)])).data
        np.testing.assert_allclose(out, [0.25, 0.75], atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(5, 7)) * 10
        out = T.softmax(Tensor(x), axis=-1).data
        np.testing.assert_allclose(out.sum(axis=-1), np.ones(5), atol=1e-6)

    def test_masked_positions_get_zero(self):
        mask = np.array([1, 1, 0, 1])
        out = T.softmax(Tensor([1.0, 2.0, 50.0, 3.0]), mask=mask).data
        assert out[2] == 0.0
        np.testing.assert_allclose(out.sum(), 1.0, atol=1e-12)

    def test_fully_masked_row_is_zero(self):
        out = T.softmax(Tensor([[1.0, 2.0]]), mask=np.array([[0, 0]])).data
        np.testing.assert_array_equal(out, [[0.0, 0.0]])

    def test_axis_out_of_range(self):
        with pytest.raises(ShapeError):
            T.softmax(Tensor([1.0, 2.0]), axis=3)


class TestPointwise:
    def test_abs_diff_hand_case(self):
        out = T.abs_diff(Tensor([1.0, -2.0]), Tensor([3.0, 1.0])).data
        np.testing.assert_array_equal(out, [2.0, 3.0])

    def test_abs_diff_symmetric_exactly(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=8), rng.normal(size=8)
        ab = T.abs_diff(Tensor(a), Tensor(b)).data
        ba = T.abs_diff(Tensor(b), Tensor(a)).data
        np.testing.assert_array_equal(ab, ba)

    def test_l2_normalize_345(self):
        out = T.l2_normalize(Tensor([3.0, 4.0])).data
        np.testing.assert_allclose(out, [0.6, 0.8], atol=1e-15)

    def test_l2_normalize_tiny_norm_gives_zeros(self):
        out = T.l2_normalize(Tensor([0.0, 0.0, 0.0])).data
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_mean_pool_axis0(self):
        out = T.mean_pool(Tensor([[1.0, 2.0], [3.0, 4.0]]), axis=0).data
        np.testing.assert_allclose(out, [2.0, 3.0], atol=1e-15)

    def test_concat_slice_roundtrip_bit_exact(self):
        rng = np.random.default_rng(5)
        parts = [rng.normal(size=(2, w)) for w in (3, 1, 4)]
        joined = T.concat([Tensor(p) for p in parts], axis=-1)
        offsets = [0, 3, 4, 8]
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            back = T.slice_axis(joined, -1, lo, hi).data
            np.testing.assert_array_equal(back, p)

    def test_dropout_eval_is_identity(self):
        x = Tensor(np.random.default_rng(2).normal(size=(4, 4)))
        out = T.dropout(x, 0.5, training=False)
        np.testing.assert_array_equal(out.data, x.data)

    def test_dropout_train_scales_survivors(self):
        rng = np.random.default_rng(9)
        x = Tensor(np.ones((100, 100)))
        out = T.dropout(x, 0.25, training=True, rng=rng).data
        survivors = out[out != 0.0]
        np.testing.assert_allclose(survivors, 1.0 / 0.75)
        # survivor fraction near keep probability
        assert abs(survivors.size / out.size - 0.75) < 0.02

    def test_linear_matches_numpy(self):
        rng = np.random.default_rng(4)
        x, w, b = rng.normal(size=(3, 5)), rng.normal(size=(5, 2)), rng.normal(size=2)
        out = T.linear(Tensor(x), Tensor(w), Tensor(b)).data
        np.testing.assert_allclose(out, x @ w + b, atol=1e-12)

    def test_clamp_min_floors_values(self):
        out = T.clamp_min(Tensor([0.5, 1e-20, -3.0]), 1e-12).data
        np.testing.assert_array_equal(out, [0.5, 1e-12, 1e-12])

    def test_non_finite_input_rejected(self):
        with pytest.raises(NumericError):
            Tensor([1.0, np.inf])
        with pytest.raises(NumericError):
            Tensor([np.nan])


class TestBackwardContract:
    def test_sum_gradient_is_ones(self):
        x = Tensor(np.arange(6, dtype=np.float64).reshape(2, 3), requires_grad=True)
        backward(T.sum_(x))
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_constant_loss_gives_zero_map(self):
        x = Tensor(np.ones(3))  # no grad
        p = Tensor(np.ones(2), requires_grad=True)
        grads = backward(T.sum_(x), params=[p])
        np.testing.assert_array_equal(grads[p], np.zeros(2))

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(GradientError):
            backward(x)

    def test_quadratic_form_matches_finite_differences(self):
        # loss = x^T W x; both x and W probed
        rng = np.random.default_rng(11)
        x = rng.normal(size=(1, 8))
        w = rng.normal(size=(8, 8))
        xt = Tensor(x, requires_grad=True)
        wt = Tensor(w, requires_grad=True)

        def run():
            return T.reshape(T.matmul(T.matmul(xt, wt), T.swap_last_axes(xt)), ())

        loss = run()
        backward(loss)
        numeric = finite_difference(lambda: run().item(), [x, w])
        assert relative_error(xt.grad, numeric[0]) < 1e-5
        assert relative_error(wt.grad, numeric[1]) < 1e-5

    def test_gradient_accumulates_over_reuse(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = T.add(T.mul(x, 3.0), T.mul(x, 4.0))
        backward(T.sum_(y))
        np.testing.assert_allclose(x.grad, [7.0], atol=1e-15)


def _op_cases():
    rng = np.random.default_rng(2024)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(3, 4))
    m1 = rng.normal(size=(3, 4))
    m2 = rng.normal(size=(4, 5))
    cases = {
        "add": ([a, b], lambda ts: T.add(ts[0], ts[1])),
        "sub": ([a, b], lambda ts: T.sub(ts[0], ts[1])),
        "mul": ([a, b], lambda ts: T.mul(ts[0], ts[1])),
        "abs_diff": ([a, b + 0.3], lambda ts: T.abs_diff(ts[0], ts[1])),
        "tanh": ([a], lambda ts: T.tanh(ts[0])),
        "matmul": ([m1, m2], lambda ts: T.matmul(ts[0], ts[1])),
        "softmax": ([a], lambda ts: T.softmax(ts[0], axis=-1)),
        "softmax_masked": ([a], lambda ts: T.softmax(
            ts[0], axis=-1, mask=np.array([[1, 1, 0, 1]] * 3))),
        "l2_normalize": ([a + 2.0], lambda ts: T.l2_normalize(ts[0], axis=-1)),
        "mean_pool": ([a], lambda ts: T.mean_pool(ts[0], axis=0)),
        "concat": ([a, b], lambda ts: T.concat(ts, axis=1)),
        "slice": ([a], lambda ts: T.slice_axis(ts[0], 1, 1, 3)),
        "reshape": ([a], lambda ts: T.reshape(ts[0], (4, 3))),
        "swap": ([a], lambda ts: T.swap_last_axes(ts[0])),
        "log": ([np.abs(a) + 0.5], lambda ts: T.log(ts[0])),
        "clamp_min": ([a], lambda ts: T.clamp_min(ts[0], 0.1)),
        "linear": ([m1, m2, rng.normal(size=5)],
                   lambda ts: T.linear(ts[0], ts[1], ts[2])),
    }
    return cases


@pytest.mark.parametrize("name", sorted(_op_cases()))
def test_op_gradients_match_finite_differences(name):
    arrays, build = _op_cases()[name]
    arrays = [arr.copy() for arr in arrays]
    tensors = [Tensor(arr, requires_grad=True) for arr in arrays]
    rng = np.random.default_rng(hash(name) % (2 ** 31))
    probe_holder = {}

    def run():
        out = build(tensors)
        if "probe" not in probe_holder:
            probe_holder["probe"] = rng.normal(size=out.shape)
        return T.sum_(T.mul(out, Tensor(probe_holder["probe"])))

    loss = run()
    backward(loss)
    numeric = finite_difference(lambda: run().item(), arrays)
    for t, num in zip(tensors, numeric):
        assert relative_error(t.grad, num) < 1e-3, name


def test_embedding_rows_gradient_accumulates_duplicates():
    table = Tensor(np.random.default_rng(0).normal(size=(6, 3)), requires_grad=True)
    ids = np.array([[1, 1, 4]])
    out = T.embedding_rows(table, ids)
    backward(T.sum_(out))
    # row 1 used twice, row 4 once, others untouched
    np.testing.assert_allclose(table.grad[1], 2 * np.ones(3), atol=1e-15)
    np.testing.assert_allclose(table.grad[4], np.ones(3), atol=1e-15)
    np.testing.assert_array_equal(table.grad[0], np.zeros(3))


def test_take_per_row_gradient_hits_selected_cells():
    x = Tensor(np.arange(6, dtype=np.float64).reshape(2, 3), requires_grad=True)
    out = T.take_per_row(x, np.array([2, 0]))
    np.testing.assert_array_equal(out.data, [2.0, 3.0])
    backward(T.sum_(out))
    want = np.zeros((2, 3))
    want[0, 2] = 1.0
    want[1, 0] = 1.0
    np.testing.assert_array_equal(x.grad, want)


def test_dropout_gradient_masks_dropped_units():
    rng_data = np.random.default_rng(3)
    x_arr = rng_data.normal(size=(20, 20))
    x = Tensor(x_arr, requires_grad=True)
    out = T.dropout(x, 0.5, training=True, rng=np.random.default_rng(42))
    backward(T.sum_(out))
    dropped = out.data == 0.0
    np.testing.assert_array_equal(x.grad[dropped], np.zeros(int(dropped.sum())))
    np.testing.assert_allclose(x.grad[~dropped], 2.0, atol=1e-12)
