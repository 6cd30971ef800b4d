import numpy as np
import pytest

from vtfn.autodiff import AdamState, LayerSpec, adam_step, xavier_bound, xavier_init
from vtfn.autodiff.ops import ShapeError


def test_xavier_linear_bound_and_samples():
    spec = LayerSpec("linear", "fc1", n_in=8192, n_out=4096)
    assert xavier_bound(spec) == pytest.approx(np.sqrt(6 / 12288))
    assert xavier_bound(spec) == pytest.approx(0.02210, abs=5e-6)
    w, b = xavier_init(spec, np.random.default_rng(0))
    a = xavier_bound(spec)
    assert np.abs(w).max() <= a
    assert np.abs(w).max() > 0.99 * a
    assert abs(w.mean()) < 1e-4
    assert not b.any()


def test_xavier_conv_fans():
    spec = LayerSpec("conv3d", "conv1", kernel=(3, 3, 3), c_in=3, c_out=64)
    assert spec.fans() == (81, 1728)
    assert xavier_bound(spec) == pytest.approx(np.sqrt(6 / 1809))


def test_xavier_deterministic():
    spec = LayerSpec("conv3d", "c", kernel=(3, 3, 3), c_in=4, c_out=8)
    w1, _ = xavier_init(spec, np.random.default_rng(5))
    w2, _ = xavier_init(spec, np.random.default_rng(5))
    assert np.array_equal(w1, w2)


@pytest.mark.parametrize("kw", [dict(stride=(0, 1, 1)), dict(padding=(0, -1, 0))])
def test_layerspec_rejects_bad_geometry(kw):
    with pytest.raises(ShapeError):
        LayerSpec("conv3d", "bad", c_in=1, c_out=1, **kw)


def test_layerspec_unknown_kind():
    with pytest.raises(ValueError):
        LayerSpec("dropout")


def test_conv1_param_count():
    assert LayerSpec("conv3d", "conv1", kernel=(3, 3, 3), c_in=3, c_out=64).param_count() == 5248


def _scalar_state(lr):
    p = {"x": np.array([1.0])}
    return p, AdamState.for_params(p, lr=lr)


def test_adam_first_step_is_lr():
    p, st = _scalar_state(0.1)
    adam_step(p, {"x": np.array([1.0])}, st)
    assert p["x"][0] - 1.0 == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-9)
    assert st.step == 1


def _scalar_adam(x, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    # plain-python reference
    m = v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = 2 * x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
        out.append(x)
    return out


def test_adam_quadratic_matches_reference():
    p, st = _scalar_state(0.1)
    xs = []
    for _ in range(100):
        adam_step(p, {"x": 2 * p["x"]}, st)
        xs.append(p["x"][0])
    ref = _scalar_adam(1.0, 0.1, 100)
    np.testing.assert_allclose(xs, ref, rtol=1e-10, atol=1e-12)
    assert abs(xs[-1]) < 0.5
    assert np.mean(np.abs(xs[50:])) < np.mean(np.abs(xs[:50]))


def test_adam_zero_grad_leaves_param():
    p, st = _scalar_state(0.1)
    adam_step(p, {"x": np.zeros(1)}, st)
    assert p["x"][0] == 1.0


def test_adam_lr_zero_keeps_params_but_tracks_moments(rng):
    p = {"w": rng.normal(size=(70000,)).astype(np.float32)}
    before = p["w"].copy()
    st = AdamState.for_params(p, lr=0.0)
    adam_step(p, {"w": np.ones_like(before)}, st)
    assert np.array_equal(p["w"], before)
    assert np.allclose(st.m["w"], 0.1)


def test_adam_blocked_update_matches_unblocked(rng):
    # larger than one cache block so the split path is exercised
    g = rng.normal(size=(3, 50000))
    p = {"w": rng.normal(size=g.shape)}
    ref_p = p["w"].copy()
    st = AdamState.for_params(p, lr=1e-3)
    for t in range(1, 4):
        adam_step(p, {"w": g}, st)
    m = v = 0
    for t in range(1, 4):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref_p = ref_p - 1e-3 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p["w"], ref_p, rtol=1e-12, atol=1e-14)


def test_adam_shape_mismatch():
    p, st = _scalar_state(0.1)
    with pytest.raises(ValueError):
        adam_step(p, {"x": np.zeros(2)}, st)
