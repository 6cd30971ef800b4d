import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vtfn.autodiff import ops
from vtfn.autodiff.ops import ShapeError
from vtfn.autodiff.reference import conv3d_naive

from conftest import central_diff, max_rel_err


def random_conv_config(rng):
    c_in, c_out = rng.integers(1, 5, 2)
    k = tuple(int(v) for v in rng.integers(1, 4, 3))
    s = tuple(int(v) for v in rng.integers(1, 3, 3))
    p = tuple(int(v) for v in rng.integers(0, 2, 3))
    dims = tuple(int(max(ki, v)) for ki, v in zip(k, rng.integers(1, 8, 3)))
    x = rng.normal(size=(c_in,) + dims).astype(np.float32)
    w = rng.normal(size=(c_out, c_in) + k).astype(np.float32)
    b = rng.normal(size=c_out).astype(np.float32)
    return x, w, b, s, p


def test_conv_matches_loop_reference_on_random_configs():
    rng = np.random.default_rng(7)
    for _ in range(50):
        x, w, b, s, p = random_conv_config(rng)
        y, _ = ops.conv3d_forward(x, w, b, s, p)
        ref = conv3d_naive(x, w, b, s, p)
        assert y.shape == ref.shape
        np.testing.assert_allclose(y, ref, atol=1e-5, rtol=0)


def test_conv_documented_example_against_reference(rng):
    x = rng.normal(size=(2, 4, 6, 6)).astype(np.float32)
    w = rng.normal(size=(3, 2, 2, 2, 2)).astype(np.float32)
    b = rng.normal(size=3).astype(np.float32)
    y, _ = ops.conv3d_forward(x, w, b, stride=(2, 1, 2), padding=(1, 0, 1))
    np.testing.assert_allclose(y, conv3d_naive(x, w, b, (2, 1, 2), (1, 0, 1)), atol=1e-5)


def test_conv_all_ones_sums_to_27():
    y, _ = ops.conv3d_forward(np.ones((1, 3, 3, 3)), np.ones((1, 1, 3, 3, 3)), np.zeros(1))
    assert y.shape == (1, 1, 1, 1)
    assert y.item() == 27.0


def test_conv1_output_dims():
    assert ops.output_dims((5, 112, 112), (3, 3, 3), 1, 1) == (5, 112, 112)


@pytest.mark.parametrize("in_dims,k,s,p,out", [
    ((5, 112, 112), (1, 2, 2), (1, 2, 2), 0, (5, 56, 56)),
    ((5, 56, 56), (2, 2, 2), (2, 2, 2), 0, (2, 28, 28)),
    ((2, 28, 28), (2, 2, 2), (2, 2, 2), 0, (1, 14, 14)),
    ((1, 7, 7), (1, 2, 2), (1, 2, 2), (0, 1, 1), (1, 4, 4)),
])
def test_floor_mode_extents(in_dims, k, s, p, out):
    assert ops.output_dims(in_dims, k, s, p) == out


def test_shape_error_names_dimension():
    with pytest.raises(ShapeError, match="dim H"):
        ops.output_dims((3, 2, 8), (1, 3, 1), 1, 0)
    x = np.zeros((2, 3, 4, 4))
    with pytest.raises(ShapeError, match="dim C"):
        ops.conv3d_forward(x, np.zeros((1, 3, 1, 1, 1)), np.zeros(1))


def test_pool_shapes_from_reference_rows():
    y, _ = ops.maxpool3d_forward(np.zeros((64, 5, 112, 112), np.float32), (1, 2, 2))
    assert y.shape == (64, 5, 56, 56)
    y, _ = ops.maxpool3d_forward(np.zeros((128, 5, 56, 56), np.float32), (2, 2, 2))
    assert y.shape == (128, 2, 28, 28)


def test_pool_constant_input_routes_each_grad_to_first_cell():
    x = np.full((2, 4, 4, 4), 3.0)
    y, cache = ops.maxpool3d_forward(x, (2, 2, 2))
    assert np.all(y == 3.0)
    g = ops.maxpool3d_backward(np.ones_like(y), cache)
    assert g.sum() == y.size
    # lowest flat index of each 2x2x2 block is its (even, even, even) corner
    assert np.all(g[:, ::2, ::2, ::2] == 1)
    assert np.count_nonzero(g) == y.size


def test_pool_padding_never_wins():
    x = -np.ones((1, 1, 3, 3))
    y, _ = ops.maxpool3d_forward(x, (1, 2, 2), (1, 2, 2), (0, 1, 1))
    assert np.all(y == -1)


def test_pool_window_in_padding_rejected():
    with pytest.raises(ShapeError):
        ops.maxpool3d_forward(np.zeros((1, 1, 2, 2)), (1, 1, 1), (1, 3, 3), (0, 1, 1))


def test_conv_backward_zero_grad(rng):
    x, w, b, s, p = random_conv_config(rng)
    y, cache = ops.conv3d_forward(x, w, b, s, p)
    gx, gw, gb = ops.conv3d_backward(np.zeros_like(y), cache, w)
    assert not gx.any() and not gw.any() and not gb.any()


def test_conv_backward_is_linear(rng):
    x, w, b, s, p = random_conv_config(rng)
    x, w = x.astype(np.float64), w.astype(np.float64)
    y, cache = ops.conv3d_forward(x, w, b, s, p)
    g1, g2 = rng.normal(size=y.shape), rng.normal(size=y.shape)
    a, c = 0.7, -1.3
    combo = ops.conv3d_backward(a * g1 + c * g2, cache, w)
    one = ops.conv3d_backward(g1, cache, w)
    two = ops.conv3d_backward(g2, cache, w)
    for k in range(3):
        np.testing.assert_allclose(combo[k], a * one[k] + c * two[k], atol=1e-10)


def test_pool_backward_is_linear(rng):
    x = rng.normal(size=(3, 4, 6, 6))
    y, cache = ops.maxpool3d_forward(x, (2, 2, 2))
    g1, g2 = rng.normal(size=y.shape), rng.normal(size=y.shape)
    np.testing.assert_allclose(ops.maxpool3d_backward(2 * g1 - g2, cache),
                               2 * ops.maxpool3d_backward(g1, cache) - ops.maxpool3d_backward(g2, cache))


def test_grad_kernel_of_sum_is_sum_of_patches(rng):
    x = rng.normal(size=(1, 2, 4, 4))
    w = rng.normal(size=(1, 1, 2, 2, 2))
    b = np.zeros(1)
    y, cache = ops.conv3d_forward(x, w, b)
    _, gw, gb = ops.conv3d_backward(np.ones_like(y), cache, w)
    num = central_diff(lambda: ops.conv3d_forward(x, w, b)[0].sum(), w, h=1e-3)
    assert max_rel_err(gw, num) < 1e-4
    patches = np.zeros_like(w)
    for dt in range(2):
        for dh in range(2):
            for dw in range(2):
                patches[0, 0, dt, dh, dw] = x[0, dt:dt + 1, dh:dh + 3, dw:dw + 3].sum()
    np.testing.assert_allclose(gw, patches)
    assert gb[0] == y.size


def test_two_stacked_convs_gradients(rng):
    x = rng.normal(size=(2, 3, 5, 5))
    w1, b1 = rng.normal(size=(3, 2, 3, 3, 3)), rng.normal(size=3)
    w2, b2 = rng.normal(size=(2, 3, 2, 2, 2)), rng.normal(size=2)
    r = rng.normal(size=(2, 2, 4, 4))

    def loss():
        h, _ = ops.conv3d_forward(x, w1, b1, 1, 1)
        y, _ = ops.conv3d_forward(h, w2, b2, 1, 0)
        return float((y * r).sum())

    h, c1 = ops.conv3d_forward(x, w1, b1, 1, 1)
    y, c2 = ops.conv3d_forward(h, w2, b2, 1, 0)
    gh, gw2, gb2 = ops.conv3d_backward(r, c2, w2)
    gx, gw1, gb1 = ops.conv3d_backward(gh, c1, w1)
    for analytic, p in [(gw1, w1), (gb1, b1), (gw2, w2), (gb2, b2), (gx, x)]:
        assert max_rel_err(analytic, central_diff(loss, p, h=1e-5)) < 1e-4


def test_relu_idempotent_and_grad():
    x = np.array([-2.0, -1e-3, 0.5, 3.0])
    y, mask = ops.relu_forward(x)
    assert np.array_equal(ops.relu_forward(y)[0], y)
    assert np.array_equal(ops.relu_backward(np.ones(4), mask), [0, 0, 1, 1])


def test_single_relu_gradcheck_away_from_kink(rng):
    x = rng.normal(size=10)
    x[np.abs(x) < 0.1] += 0.5  # nudge off the kink
    r = rng.normal(size=10)
    _, mask = ops.relu_forward(x)
    num = central_diff(lambda: float((ops.relu_forward(x)[0] * r).sum()), x)
    assert max_rel_err(ops.relu_backward(r, mask), num) < 1e-6


def test_linear_identity():
    x = np.arange(5.0)
    np.testing.assert_array_equal(ops.linear_forward(x, np.eye(5), np.zeros(5)), x)


def test_linear_fan_in_mismatch():
    with pytest.raises(ShapeError, match="fan-in"):
        ops.linear_forward(np.zeros(8192), np.zeros((4096, 8191)), np.zeros(4096))


def test_linear_gradients(rng):
    x, W, b = rng.normal(size=7), rng.normal(size=(5, 7)), rng.normal(size=5)
    r = rng.normal(size=5)
    gx, gW, gb = ops.linear_backward(r, x, W)
    f = lambda: float(ops.linear_forward(x, W, b) @ r)  # noqa: E731
    for analytic, p in [(gx, x), (gW, W), (gb, b)]:
        assert max_rel_err(analytic, central_diff(f, p)) < 1e-4


def test_softmax_xent_uniform():
    loss, grad = ops.softmax_xent(np.zeros(3), 1)
    assert loss == pytest.approx(np.log(3))
    np.testing.assert_allclose(grad, [1 / 3, -2 / 3, 1 / 3])


def test_softmax_xent_large_logit_is_stable():
    loss, grad = ops.softmax_xent(np.array([1000.0, 0.0, 0.0]), 0)
    assert loss == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.isfinite(grad))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=3, max_size=3), st.integers(0, 2))
def test_softmax_xent_gradient(logits, label):
    z = np.array(logits)
    _, grad = ops.softmax_xent(z, label)
    num = central_diff(lambda: ops.softmax_xent(z, label)[0], z, h=1e-6)
    np.testing.assert_allclose(grad, num, atol=1e-6)
    assert grad.sum() == pytest.approx(0.0, abs=1e-12)


def test_conv_backward_on_random_configs():
    # includes configs where whole kernel rows only ever see padding
    rng = np.random.default_rng(11)
    for _ in range(12):
        x, w, b, s, p = random_conv_config(rng)
        x, w, b = x.astype(np.float64), w.astype(np.float64), b.astype(np.float64)
        y, cache = ops.conv3d_forward(x, w, b, s, p)
        r = rng.normal(size=y.shape)
        gx, gw, gb = ops.conv3d_backward(r, cache, w)
        f = lambda: float((ops.conv3d_forward(x, w, b, s, p)[0] * r).sum())  # noqa: E731
        for analytic, param in [(gx, x), (gw, w), (gb, b)]:
            np.testing.assert_allclose(analytic, central_diff(f, param, h=1e-4), atol=1e-6)
