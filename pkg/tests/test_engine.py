import numpy as np
import pytest

from engine import ops
from engine.errors import ContractError, DegenerateStatisticsError, ShapeError
from engine.gradcheck import gradient_check, relative_error
from engine.interpolate import interpolation_matrix, resize_bilinear
from engine.seeding import rng_stream
from engine.tensor import Graph, Tensor, backward, current_graph

TOLERANCE = 1e-4


def param(rng, *shape, scale=1.0):
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


def naive_conv(x, k, b, stride, padding):
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, c, h, w = xp.shape
    kk, _, kh, kw = k.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    out = np.zeros((n, kk, oh, ow))
    for i in range(n):
        for o in range(kk):
            for r in range(oh):
                for s in range(ow):
                    patch = xp[i, :, r * stride : r * stride + kh, s * stride : s * stride + kw]
                    out[i, o, r, s] = np.sum(patch * k[o]) + b[o]
    return out


# --- tape ----------------------------------------------------------------------


def test_graph_is_active_only_inside_context():
    assert current_graph() is None
    with Graph() as graph:
        assert current_graph() is graph
    assert current_graph() is None


def test_ops_outside_graph_record_nothing(rng):
    a = param(rng, 3)
    out = ops.scale(a, 2.0)
    assert not out._tracked
    np.testing.assert_array_equal(out.data, 2.0 * a.data)


def test_backward_needs_scalar_loss(rng):
    a = param(rng, 3)
    with Graph() as graph:
        out = ops.scale(a, 2.0)
    with pytest.raises(ContractError):
        backward(graph, out)


def test_reductions_stay_scalar(rng):
    x = Tensor(rng.normal(size=(3, 4)))
    assert ops.sum(x).ndim == 0
    assert ops.mse(x, Tensor(np.zeros((3, 4)))).shape == ()
    assert Tensor(np.float64(2.5)).shape == ()
    a = param(rng, 3, 4)
    with Graph() as graph:
        loss = ops.sum(ops.mul(a, x))
    backward(graph, loss)
    np.testing.assert_array_equal(a.grad, x.data)


def test_gradients_accumulate_until_zero_grad(rng):
    a = param(rng, 4)
    for _ in range(2):
        with Graph() as graph:
            loss = ops.sum(ops.scale(a, 3.0))
        backward(graph, loss)
    np.testing.assert_array_equal(a.grad, np.full(4, 6.0))
    a.zero_grad()
    assert a.grad is None


def test_shared_input_gradients_add(rng):
    a = param(rng, 5)
    with Graph() as graph:
        loss = ops.sum(ops.mul(a, a))
    backward(graph, loss)
    np.testing.assert_allclose(a.grad, 2.0 * a.data, atol=1e-15)


# --- forward oracles -------------------------------------------------------------


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_matches_loop_oracle(rng, stride, padding):
    x = rng.normal(size=(2, 3, 7, 6))
    k = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    out = ops.conv2d(Tensor(x), Tensor(k), Tensor(b), stride=stride, padding=padding)
    np.testing.assert_allclose(out.data, naive_conv(x, k, b, stride, padding), atol=1e-12)


def test_conv2d_is_linear_in_input(rng):
    k = Tensor(rng.normal(size=(2, 3, 3, 3)))
    zero = Tensor(np.zeros(2))
    x1, x2 = rng.normal(size=(2, 1, 3, 5, 5))
    lhs = ops.conv2d(Tensor(2.0 * x1 + 3.0 * x2), k, zero, padding=1).data
    rhs = 2.0 * ops.conv2d(Tensor(x1), k, zero, padding=1).data + 3.0 * ops.conv2d(Tensor(x2), k, zero, padding=1).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_conv2d_shape_errors(rng):
    with pytest.raises(ShapeError):
        ops.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))), Tensor(np.zeros(1)))
    with pytest.raises(ShapeError):
        ops.conv2d(Tensor(np.zeros((1, 3, 2, 2))), Tensor(np.zeros((1, 3, 3, 3))), Tensor(np.zeros(1)))


def test_maxpool_ties_go_to_first_element():
    x = Tensor(np.ones((1, 1, 2, 2)))
    out, indices = ops.maxpool2d(x, 2, 2)
    assert out.data.item() == 1.0
    assert indices.item() == 0


def test_maxpool_values_and_indices(rng):
    x = rng.normal(size=(1, 2, 4, 4))
    out, indices = ops.maxpool2d(Tensor(x), 2, 2)
    expected = x.reshape(1, 2, 2, 2, 2, 2).max(axis=(3, 5))
    np.testing.assert_array_equal(out.data, expected)
    np.testing.assert_array_equal(np.take_along_axis(x.reshape(1, 2, 16), indices.reshape(1, 2, 4), axis=2).reshape(1, 2, 2, 2), expected)


def test_ceil_mode_pooling_extents():
    extents = []
    size = 299
    for _ in range(5):
        size = ops.pooled_extent(size, 2, 2, ceil_mode=True)
        extents.append(size)
    assert extents == [150, 75, 38, 19, 10]
    assert ops.pooled_extent(299, 2, 2) == 149


def test_batchnorm_train_normalizes_and_updates_running_stats(rng):
    x = rng.normal(3.0, 2.0, size=(4, 2, 3, 3))
    mean = np.zeros(2)
    var = np.ones(2)
    out = ops.batchnorm2d(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), mean, var, mode="train")
    np.testing.assert_allclose(out.data.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.data.std(axis=(0, 2, 3)), 1.0, atol=1e-5)
    np.testing.assert_allclose(mean, 0.1 * x.mean(axis=(0, 2, 3)), atol=1e-12)
    np.testing.assert_allclose(var, 0.9 + 0.1 * x.var(axis=(0, 2, 3), ddof=1), atol=1e-12)


def test_batchnorm_eval_uses_running_stats(rng):
    x = rng.normal(size=(2, 1, 3, 3))
    mean, var = np.array([0.5]), np.array([4.0])
    out = ops.batchnorm2d(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), mean, var, mode="eval")
    np.testing.assert_allclose(out.data, (x - 0.5) / np.sqrt(4.0 + 1e-5), atol=1e-12)
    np.testing.assert_array_equal(mean, [0.5])


def test_batchnorm_single_element_is_degenerate():
    with pytest.raises(DegenerateStatisticsError):
        ops.batchnorm2d(Tensor(np.ones((1, 1, 1, 1))), Tensor(np.ones(1)), Tensor(np.zeros(1)), np.zeros(1), np.ones(1))


def test_bilinear_upsample_keeps_corners(rng):
    x = rng.normal(size=(1, 1, 3, 4))
    out = ops.bilinear_upsample(Tensor(x), 7, 10).data[0, 0]
    assert out[0, 0] == x[0, 0, 0, 0]
    assert out[-1, -1] == x[0, 0, -1, -1]
    assert out[0, -1] == x[0, 0, 0, -1]
    np.testing.assert_allclose(out[0, 3], (x[0, 0, 0, 1]), atol=1e-12)


def test_interpolation_rows_sum_to_one():
    m = interpolation_matrix(10, 299)
    np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(ShapeError):
        interpolation_matrix(0, 4)


def test_resize_identity():
    a = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(resize_bilinear(a, 3, 4), a)


def test_softmax_rows_sum_to_one(rng):
    probs = ops.softmax(Tensor(rng.normal(size=(5, 7)) * 50)).data
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_cross_entropy_values():
    probs = Tensor(np.array([[0.7, 0.2, 0.1]]))
    assert ops.cross_entropy(probs, [0]).item() == pytest.approx(-np.log(0.7), abs=1e-12)
    uniform = Tensor(np.full((1, 120), 1.0 / 120))
    assert ops.cross_entropy(uniform, [17]).item() == pytest.approx(np.log(120), abs=1e-12)
    with pytest.raises(ContractError):
        ops.cross_entropy(probs, [3])


def test_cross_entropy_clamps_zero_probability():
    value = ops.cross_entropy(Tensor(np.array([[1.0, 0.0]])), [1]).item()
    assert value == pytest.approx(-np.log(1e-12))


def test_concat_shape_error():
    with pytest.raises(ShapeError):
        ops.concat([Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((1, 1, 5, 4)))])


def test_relu_softmax_linear_examples():
    np.testing.assert_array_equal(ops.relu(Tensor(np.array([-1.0, 0.0, 2.0]))).data, [0.0, 0.0, 2.0])
    np.testing.assert_allclose(ops.softmax(Tensor(np.zeros((1, 4)))).data, np.full((1, 4), 0.25), atol=1e-15)
    logits = np.array([[1.0, 2.0, 3.0]])
    np.testing.assert_allclose(ops.softmax(Tensor(logits + 100.0)).data, ops.softmax(Tensor(logits)).data, atol=1e-12)
    x = np.array([[1.5, -2.0, 0.25]])
    identity = ops.linear(Tensor(x), Tensor(np.eye(3)), Tensor(np.zeros(3))).data
    np.testing.assert_array_equal(identity, x)
    shifted = ops.linear(Tensor(x), Tensor(np.eye(3)), Tensor(np.array([1.0, 2.0, 3.0]))).data
    np.testing.assert_array_equal(shifted, x + [1.0, 2.0, 3.0])


def test_linear_and_upsample_are_linear(rng):
    weight, zero = Tensor(rng.normal(size=(4, 6))), Tensor(np.zeros(4))
    x1, x2 = rng.normal(size=(2, 3, 6))
    lhs = ops.linear(Tensor(2.0 * x1 - 0.5 * x2), weight, zero).data
    rhs = 2.0 * ops.linear(Tensor(x1), weight, zero).data - 0.5 * ops.linear(Tensor(x2), weight, zero).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    m1, m2 = rng.normal(size=(2, 1, 2, 3, 3))
    lhs = ops.bilinear_upsample(Tensor(2.0 * m1 - 0.5 * m2), 7, 8).data
    rhs = 2.0 * ops.bilinear_upsample(Tensor(m1), 7, 8).data - 0.5 * ops.bilinear_upsample(Tensor(m2), 7, 8).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_upsample_one_by_two_to_three():
    out = ops.bilinear_upsample(Tensor(np.array([[[[0.0, 1.0]]]])), 1, 3).data
    np.testing.assert_allclose(out[0, 0], [[0.0, 0.5, 1.0]], atol=1e-15)


def test_upsample_ten_to_299_matches_pixel_oracle(rng):
    x = rng.normal(size=(10, 10))
    out = ops.bilinear_upsample(Tensor(x[None, None]), 299, 299).data[0, 0]

    def sample(i, j):
        r, c = i * 9 / 298, j * 9 / 298
        r0, c0 = min(int(np.floor(r)), 8), min(int(np.floor(c)), 8)
        fr, fc = r - r0, c - c0
        top = (1 - fc) * x[r0, c0] + fc * x[r0, c0 + 1]
        bottom = (1 - fc) * x[r0 + 1, c0] + fc * x[r0 + 1, c0 + 1]
        return (1 - fr) * top + fr * bottom

    for i, j in [(0, 0), (0, 298), (298, 0), (298, 298), (149, 149), (33, 201), (100, 7), (297, 150)]:
        assert out[i, j] == pytest.approx(sample(i, j), abs=1e-12)
    every = np.array([[sample(i, j) for j in range(0, 299, 13)] for i in range(0, 299, 13)])
    np.testing.assert_allclose(out[::13, ::13], every, atol=1e-12)


def test_maxpool_gradient_on_constant_map_goes_to_window_corners():
    x = Tensor(np.full((1, 1, 4, 4), 0.5), requires_grad=True)
    with Graph() as graph:
        loss = ops.sum(ops.maxpool2d(x, 2, 2)[0])
    backward(graph, loss)
    expected = np.zeros((4, 4))
    expected[::2, ::2] = 1.0
    np.testing.assert_array_equal(x.grad[0, 0], expected)


# --- gradients ---------------------------------------------------------------------


def test_relative_error_is_zero_for_vanishing_gradients():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0


def check(loss_fn, tensors):
    errors = gradient_check(loss_fn, tensors)
    for name, error in errors.items():
        assert error < TOLERANCE, f"{name}: relative error {error}"


def test_conv2d_gradients(rng):
    x, k, b = param(rng, 2, 3, 5, 5), param(rng, 4, 3, 3, 3), param(rng, 4)
    w = rng.normal(size=(2, 4, 3, 3))
    check(lambda: ops.sum(ops.mul(ops.conv2d(x, k, b, stride=2, padding=1), Tensor(w))), {"x": x, "k": k, "b": b})


def test_maxpool_gradients(rng):
    x = param(rng, 2, 2, 5, 5)
    w = rng.normal(size=(2, 2, 3, 3))
    check(lambda: ops.sum(ops.mul(ops.maxpool2d(x, 2, 2, ceil_mode=True)[0], Tensor(w))), {"x": x})


def test_batchnorm_gradients(rng):
    x, gamma, beta = param(rng, 3, 2, 3, 3), param(rng, 2), param(rng, 2)
    w = rng.normal(size=(3, 2, 3, 3))

    def loss():
        out = ops.batchnorm2d(x, gamma, beta, np.zeros(2), np.ones(2), mode="train")
        return ops.sum(ops.mul(out, Tensor(w)))

    check(loss, {"x": x, "gamma": gamma, "beta": beta})


def test_bilinear_upsample_gradients(rng):
    x = param(rng, 1, 2, 3, 4)
    w = rng.normal(size=(1, 2, 8, 9))
    check(lambda: ops.sum(ops.mul(ops.bilinear_upsample(x, 8, 9), Tensor(w))), {"x": x})


def test_dense_softmax_cross_entropy_gradients(rng):
    x, weight, bias = param(rng, 4, 6), param(rng, 3, 6), param(rng, 3)
    targets = np.array([0, 2, 1, 2])
    check(lambda: ops.cross_entropy(ops.softmax(ops.linear(ops.relu(x), weight, bias)), targets), {"x": x, "weight": weight, "bias": bias})


def test_mse_and_concat_gradients(rng):
    a, b = param(rng, 2, 1, 3, 3), param(rng, 2, 2, 3, 3)
    target = Tensor(rng.normal(size=(2, 3, 3, 3)))
    check(lambda: ops.mse(ops.concat([a, b], axis=1), target), {"a": a, "b": b})


# --- seeding -------------------------------------------------------------------------


def test_named_streams_are_reproducible_and_independent():
    a = rng_stream(7, "shuffle").integers(0, 1 << 30, size=4)
    b = rng_stream(7, "shuffle").integers(0, 1 << 30, size=4)
    c = rng_stream(7, "augment").integers(0, 1 << 30, size=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
