"""Engine unit tests: shapes, partial passes, init, and error contracts."""

import numpy as np
import pytest

from fedd2s import nn
from fedd2s.errors import ConfigError
from fedd2s.models import desk_spec, m1_spec, m2_spec


def small_spec():
    return nn.ModelSpec(
        (4, 4, 1),
        (
            nn.Conv2D(3, 3, 1, 1),
            nn.Conv2D(4, 3, 2, 1),
            nn.Flatten(),
            nn.Dense(6),
            nn.Dense(3, activation="none"),
        ),
    )


def test_layer_shapes_chain():
    spec = small_spec()
    assert nn.layer_shapes(spec) == ((4, 4, 1), (4, 4, 3), (2, 2, 4), (16,), (6,), (3,))
    assert spec.num_layers == 5
    assert spec.num_classes == 3


def test_m1_c3_has_32_channels():
    spec = m1_spec(classes=10)
    rng = np.random.default_rng(0)
    params = nn.init_params(spec, rng)
    x = rng.random((2, 32, 32, 3))
    h = nn.forward_prefix(spec, params, x, 3)
    assert h.shape == (2, 4, 4, 32)


def test_m2_flatten_boundary_yields_62_logits():
    spec = m2_spec(classes=62)
    rng = np.random.default_rng(1)
    params = nn.init_params(spec, rng)
    l = 4  # flatten layer
    h = rng.random((3,) + nn.layer_shapes(spec)[l])
    logits = nn.forward_suffix(spec, params, h, l)
    assert logits.shape == (3, 62)


def test_zero_dense_prefix_is_zero():
    spec = nn.ModelSpec((2, 2, 1), (nn.Flatten(), nn.Dense(3), nn.Dense(2, activation="none")))
    params = nn.init_params(spec, np.random.default_rng(0))
    params[1] = nn.ParamBlock(np.zeros_like(params[1].w), np.zeros_like(params[1].b))
    out = nn.forward_prefix(spec, params, np.random.default_rng(1).random((4, 2, 2, 1)), 2)
    assert np.array_equal(out, np.zeros((4, 3)))


def test_two_layer_compositionality():
    # prefix at l=2 must equal applying the two layers by hand
    spec = nn.ModelSpec((1, 1, 4), (nn.Flatten(), nn.Dense(5), nn.Dense(3, activation="none")))
    rng = np.random.default_rng(7)
    params = nn.init_params(spec, rng)
    x = rng.normal(size=(6, 1, 1, 4))
    manual = np.maximum(x.reshape(6, 4) @ params[1].w + params[1].b, 0.0)
    assert np.array_equal(nn.forward_prefix(spec, params, x, 2), manual)
    manual_logits = manual @ params[2].w + params[2].b
    assert np.array_equal(nn.forward_prefix(spec, params, x, 3), manual_logits)


@pytest.mark.parametrize("builder", [small_spec, desk_spec, lambda: m1_spec(classes=4)])
def test_prefix_suffix_partition_identity(builder):
    spec = builder()
    rng = np.random.default_rng(3)
    params = nn.init_params(spec, rng)
    x = rng.random((3,) + tuple(spec.input_shape))
    full = nn.forward(spec, params, x)
    for l in range(1, spec.num_layers + 1):
        h = nn.forward_prefix(spec, params, x, l)
        assert np.array_equal(nn.forward_suffix(spec, params, h, l), full), f"l={l}"


def test_suffix_at_last_layer_is_identity():
    spec = small_spec()
    rng = np.random.default_rng(4)
    params = nn.init_params(spec, rng)
    logits = rng.normal(size=(2, 3))
    assert np.array_equal(nn.forward_suffix(spec, params, logits, spec.num_layers), logits)


def test_forward_errors():
    spec = small_spec()
    params = nn.init_params(spec, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        nn.forward_prefix(spec, params, np.zeros((1, 5, 5, 1)), 2)
    with pytest.raises(ValueError):
        nn.forward_prefix(spec, params, np.zeros((1, 4, 4, 1)), 0)
    with pytest.raises(ValueError):
        nn.forward_prefix(spec, params, np.zeros((1, 4, 4, 1)), 6)
    with pytest.raises(ValueError):
        nn.forward_suffix(spec, params, np.zeros((1, 7)), 3)  # wrong feature width


def test_spec_validation():
    with pytest.raises(ConfigError):
        nn.ModelSpec((4, 4, 1), ())
    with pytest.raises(ConfigError):  # final layer must emit raw logits
        nn.ModelSpec((4, 4, 1), (nn.Flatten(), nn.Dense(3)))
    with pytest.raises(ConfigError):  # dense before flatten
        nn.ModelSpec((4, 4, 1), (nn.Dense(3, activation="none"),))
    with pytest.raises(ConfigError):  # kernel larger than input
        nn.ModelSpec((2, 2, 1), (nn.Conv2D(2, 5), nn.Flatten(), nn.Dense(2, activation="none")))


def test_backward_without_trace_is_usage_error():
    spec = small_spec()
    params = nn.init_params(spec, np.random.default_rng(0))
    with pytest.raises(RuntimeError):
        nn.backward(spec, params, None, np.zeros((1, 3)))


def test_constant_loss_gives_zero_gradients():
    spec = small_spec()
    rng = np.random.default_rng(5)
    params = nn.init_params(spec, rng)
    x = rng.random((2, 4, 4, 1))
    out, tr = nn.forward_trace(spec, params, x)
    grads, _ = nn.backward(spec, params, tr, np.zeros_like(out))
    for blk in grads:
        if blk is not None:
            assert not blk.w.any() and not blk.b.any()


def test_param_range_restriction_leaves_suffix_none():
    spec = small_spec()
    rng = np.random.default_rng(6)
    params = nn.init_params(spec, rng)
    x = rng.random((2, 4, 4, 1))
    out, tr = nn.forward_trace(spec, params, x)
    grads, _ = nn.backward(spec, params, tr, np.ones_like(out), param_lo=1, param_hi=2)
    assert grads[0] is not None and grads[1] is not None
    assert grads[2] is None and grads[3] is None and grads[4] is None


def test_input_gradient_matches_fd():
    spec = small_spec()
    rng = np.random.default_rng(8)
    params = nn.init_params(spec, rng)
    x = rng.normal(size=(2, 4, 4, 1))
    target = rng.normal(size=(2, 3))

    def loss_at(xv):
        from fedd2s.losses import mse

        return mse(nn.forward(spec, params, xv), target)

    out, tr = nn.forward_trace(spec, params, x)
    from fedd2s.losses import mse_grad

    _, da = mse_grad(out, target)
    _, gx = nn.backward(spec, params, tr, da, need_input_grad=True)
    h = 1e-5
    for _ in range(20):
        i = tuple(rng.integers(0, s) for s in x.shape)
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        fd = (loss_at(xp) - loss_at(xm)) / (2 * h)
        assert abs(fd - gx[i]) < 1e-6 + 1e-4 * abs(fd)


def test_init_is_seeded_and_biases_zero():
    spec = small_spec()
    a = nn.init_params(spec, np.random.default_rng(42))
    b = nn.init_params(spec, np.random.default_rng(42))
    assert nn.params_equal(a, b)
    for blk in a:
        if blk is not None:
            assert not blk.b.any()
    assert a[2] is None  # flatten owns no parameters


def test_outputs_stay_finite():
    spec = small_spec()
    rng = np.random.default_rng(9)
    params = nn.init_params(spec, rng)
    x = rng.random((8, 4, 4, 1))
    out, tr = nn.forward_trace(spec, params, x)
    assert np.isfinite(out).all()
    grads, gx = nn.backward(spec, params, tr, np.ones_like(out), need_input_grad=True)
    assert np.isfinite(gx).all()
    for blk in grads:
        if blk is not None:
            assert np.isfinite(blk.w).all() and np.isfinite(blk.b).all()


def test_average_params_arithmetic():
    spec = nn.ModelSpec((1, 1, 1), (nn.Flatten(), nn.Dense(1, activation="none")))
    mk = lambda v: [None, nn.ParamBlock(np.array([[v]]), np.array([v]))]
    avg = nn.average_params([mk(1.0), mk(2.0), mk(6.0)])
    assert avg[1].w[0, 0] == 3.0 and avg[1].b[0] == 3.0
    sym = nn.average_params([mk(2.0), mk(-2.0)])
    assert sym[1].w[0, 0] == 0.0
